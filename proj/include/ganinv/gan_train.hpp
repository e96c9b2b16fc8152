#pragma once

#include <functional>

#include "ganinv/data.hpp"
#include "ganinv/models.hpp"

namespace ganinv {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

struct GanTrainConfig {
  int64_t iterations = 20000;
  int64_t batch = 64;
  int64_t latent_dim = 64;
  AdamConfig opt;
  uint64_t seed = 0;
  double prob_floor = 1e-6;  // clamp on discriminator probabilities before log
  int64_t log_every = 100;

  void validate() const;
};

struct ClassifierTrainConfig {
  int64_t iterations = 3000;
  int64_t batch = 64;
  AdamConfig opt{1e-3, 0.9, 0.999};
  uint64_t seed = 0;
  int64_t log_every = 100;

  void validate() const;
};

struct GanLogEntry {
  int64_t iter;
  double loss_d;
  double loss_g;
};

struct ClassifierLogEntry {
  int64_t iter;
  double loss;
};

struct TrainError : std::runtime_error {
  TrainError(const std::string& what, int64_t iteration, const std::string& component_name)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ", " +
                           component_name + ")"),
        iter(iteration),
        component(component_name) {}
  int64_t iter;
  std::string component;
};

struct GanTrainResult {
  Model generator;
  Model discriminator;
  std::vector<GanLogEntry> log;
};

struct ClassifierTrainResult {
  Model classifier;
  std::vector<ClassifierLogEntry> log;
};

/// Non-saturating GAN training: one discriminator step (real vs generated)
/// then one generator step per iteration. Aborts with TrainError on
/// non-finite losses.
GanTrainResult train_gan(const LabeledImageSet& data, const GanTrainConfig& cfg,
                         const NetworkSpec& generator_spec,
                         const NetworkSpec& discriminator_spec,
                         const std::function<void(const GanLogEntry&)>& on_log = nullptr);

/// Softmax cross-entropy training of a classifier f = C o Phi.
ClassifierTrainResult train_classifier(
    const LabeledImageSet& data, const ClassifierTrainConfig& cfg,
    const NetworkSpec& classifier_spec,
    const std::function<void(const ClassifierLogEntry&)>& on_log = nullptr);

/// Forward in fixed-size chunks to bound peak memory.
Tensor<float> forward_chunked(const Network<float>& net, const Tensor<float>& x,
                              int64_t chunk = 256);

double classification_accuracy(const Model& classifier, const Tensor<float>& x,
                               const std::vector<int>& labels, int64_t chunk = 256);

/// Mean discriminator output over a batch (diagnostic for equilibrium).
double mean_discriminator_output(const Model& d, const Tensor<float>& x, int64_t chunk = 256);

}  // namespace ganinv
