#pragma once

#include <filesystem>
#include <string>

#include "ganinv/spec.hpp"

namespace ganinv {

/// Provenance carried with every checkpoint.
struct ModelMeta {
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  /// For inverters: hash of the generator spec this inverter was trained
  /// against; zero when not applicable.
  uint64_t paired_spec_hash = 0;
};

/// A built network together with the spec that produced it.
struct Model {
  NetworkSpec spec;
  Network<float> net;
  ModelMeta meta;

  uint64_t spec_hash_value() const { return spec_hash(spec); }
};

inline Model build_model(const NetworkSpec& spec, uint64_t seed) {
  Model m{spec, build_network<float>(spec, seed), ModelMeta{seed, 0, 0}};
  return m;
}

/// Feature map of a classifier: all layers except the final logit layer.
inline Tensor<float> classifier_features(const Model& classifier, const Tensor<float>& x) {
  if (classifier.spec.role != Role::Classifier)
    throw SpecError("classifier_features expects a classifier");
  return classifier.net.forward_prefix(x, classifier.net.num_layers() - 1);
}

/// Final layer applied to a feature batch; composes with classifier_features
/// to reproduce logits exactly.
inline Tensor<float> classifier_head(const Model& classifier, const Tensor<float>& features) {
  return classifier.net.forward_suffix(features, classifier.net.num_layers() - 1);
}

struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SpecMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Writes a single-file checkpoint: JSON header (spec + provenance + tensor
/// index) followed by raw little-endian float32 parameter payloads with a
/// CRC32 integrity tag.
void save_checkpoint(Model& model, const std::filesystem::path& path);

/// Rebuilds the model from the embedded spec and restores every parameter
/// bit-exactly. When expected_spec is given, a spec-hash mismatch is
/// rejected with SpecMismatchError. Corrupt or truncated archives raise
/// IntegrityError without producing a partial model.
Model load_checkpoint(const std::filesystem::path& path,
                      const NetworkSpec* expected_spec = nullptr);

}  // namespace ganinv
