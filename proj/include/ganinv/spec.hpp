#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ganinv/nn.hpp"

namespace ganinv {

enum class Role { Generator, Inverter, Discriminator, Classifier };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

/// One entry of a network's layer ladder.
struct LayerSpec {
  std::string kind;  // dense | conv | deconv | act | reshape | flatten
  int64_t out = 0;               // dense
  int64_t out_channels = 0;      // conv / deconv
  int64_t kernel = 0, stride = 1, pad = 0;
  std::string fn;                // act: relu | lrelu | tanh | sigmoid
  double alpha = 0.2;            // lrelu slope
  Shape target;                  // reshape
};

/// Declarative description of a network: role, latent dimension, image shape,
/// and the layer ladder. Serializable to/from JSON.
struct NetworkSpec {
  Role role = Role::Generator;
  int64_t latent_dim = 0;
  std::array<int64_t, 3> image_shape{0, 0, 0};  // h, w, c
  std::vector<LayerSpec> layers;

  Shape input_shape() const;
  Shape output_shape() const;

  /// Checks that shapes chain layer to layer and that role conventions hold
  /// (generator squashes to [-1,1] via a final tanh; inverter output is an
  /// unbounded latent with no final activation). Throws SpecError on the
  /// first offending layer.
  void validate() const;

  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
  std::string canonical_string() const;
};

struct SpecError : std::runtime_error {
  explicit SpecError(const std::string& what, int layer_index = -1)
      : std::runtime_error(what), layer(layer_index) {}
  int layer;
};

/// FNV-1a over the canonical JSON encoding.
uint64_t spec_hash(const NetworkSpec& spec);
uint64_t fnv1a(const std::string& bytes);
std::string hash_hex(uint64_t h);

/// Derives an inverter spec by reversing a generator's layer ladder:
/// deconvs become convs, the latent-side dense is transposed, the final
/// squashing activation is dropped and hidden activations become leaky relu.
NetworkSpec mirror_inverter_spec(const NetworkSpec& generator);

// --- stock architectures ---------------------------------------------------

/// Strided transposed-conv generator for h x w x c images (h, w divisible
/// by 4), latent -> dense -> two stride-2 deconvs -> tanh.
NetworkSpec dcgan_generator_spec(int64_t latent_dim, int64_t h, int64_t w, int64_t c,
                                 int64_t base_channels = 64);
NetworkSpec dcgan_discriminator_spec(int64_t h, int64_t w, int64_t c,
                                     int64_t base_channels = 64);
NetworkSpec conv_classifier_spec(int64_t h, int64_t w, int64_t c, int64_t num_classes,
                                 int64_t base_channels = 16, int64_t feature_dim = 64);

/// Dense generator/inverter/discriminator/classifier for low-dimensional
/// point data (shape [1,1,dim]).
NetworkSpec mlp_generator_spec(int64_t latent_dim, int64_t data_dim, int64_t hidden = 32,
                               int64_t depth = 2);
NetworkSpec mlp_discriminator_spec(int64_t data_dim, int64_t hidden = 32, int64_t depth = 2);
NetworkSpec mlp_classifier_spec(int64_t data_dim, int64_t num_classes, int64_t hidden = 32);

// --- instantiation ----------------------------------------------------------

template <class T>
Network<T> build_network(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  Network<T> net(spec.input_shape());
  Shape cur = spec.input_shape();
  for (const auto& l : spec.layers) {
    if (l.kind == "dense") {
      net.add(std::make_unique<DenseLayer<T>>(shape_numel(cur), l.out));
    } else if (l.kind == "conv") {
      net.add(std::make_unique<Conv2dLayer<T>>(cur[2], l.out_channels, l.kernel, l.stride, l.pad));
    } else if (l.kind == "deconv") {
      net.add(
          std::make_unique<Deconv2dLayer<T>>(cur[2], l.out_channels, l.kernel, l.stride, l.pad));
    } else if (l.kind == "bnorm") {
      net.add(std::make_unique<BatchNormLayer<T>>(cur.back()));
    } else if (l.kind == "act") {
      Act a = l.fn == "relu"      ? Act::Relu
              : l.fn == "lrelu"   ? Act::LeakyRelu
              : l.fn == "tanh"    ? Act::Tanh
                                  : Act::Sigmoid;
      net.add(std::make_unique<ActivationLayer<T>>(a, l.alpha));
    } else if (l.kind == "reshape") {
      net.add(std::make_unique<ReshapeLayer<T>>(l.target));
    } else if (l.kind == "flatten") {
      net.add(std::make_unique<FlattenLayer<T>>());
    } else {
      throw SpecError("unknown layer kind: " + l.kind);
    }
    cur = net.out_shape();
  }
  net.init_params(seed);
  return net;
}

}  // namespace ganinv
