#pragma once

#include "ganinv/attacks.hpp"
#include "ganinv/inverter_train.hpp"
#include "ganinv/projection.hpp"

namespace ganinv {

/// Purify-then-classify: argmax f(x_proj) with encoder-initialized projection.
std::vector<int> defend_classify(const Model& classifier, const Model& generator,
                                 const Model& inverter, const Tensor<float>& x,
                                 const ProjectionConfig& cfg, int64_t chunk = 250);

/// The purification map alone, batched; useful as the BPDA target.
Tensor<float> purify(const Model& generator, const Model& inverter, const Tensor<float>& x,
                     const ProjectionConfig& cfg, int64_t chunk = 250);

DefenseFn make_defense_fn(const Model& generator, const Model& inverter,
                          const ProjectionConfig& cfg, int64_t chunk = 250);

/// Attack-detection score: feature-space distance between an input and its
/// projection. The image-space variant exists to reproduce the ablation that
/// motivates measuring in feature space.
double detection_score(const Model& classifier, const Tensor<float>& x,
                       const Tensor<float>& x_proj);
std::vector<double> detection_scores(const Model& classifier, const Tensor<float>& x,
                                     const Tensor<float>& x_proj, bool image_space = false,
                                     int64_t chunk = 250);

/// Rank-statistic AUC: probability a random attacked score exceeds a random
/// clean score, ties counted half.
double detection_auc(const std::vector<double>& clean_scores,
                     const std::vector<double>& attacked_scores);

struct MetricsReport {
  double mse_mean = 0;    // per-sample mean over pixels, [-1,1] units
  double mse_std = 0;
  double accuracy = 0;
  double proxy_is = 0;    // inception-style score over the local feature head
  double proxy_fid = 0;   // Frechet distance over the local feature map
  int64_t sample_count = 0;
  bool fid_eigen_clipped = false;  // numerical non-PSD encountered and clipped
};

/// Frechet distance between Gaussians fitted to two feature sets:
/// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). Matrix square root via
/// eigendecomposition of the symmetrized product; negative eigenvalues from
/// roundoff are clipped at zero (reported through *clipped).
double frechet_distance(const Tensor<float>& features_a, const Tensor<float>& features_b,
                        bool* clipped = nullptr);

/// exp(E_x[KL(p(y|x) || p(y))]) from classifier probabilities.
double inception_style_score(const Tensor<float>& probs);

MetricsReport eval_metrics(const Tensor<float>& originals, const Tensor<float>& reconstructions,
                           const std::vector<int>& labels, const Model& classifier,
                           int64_t chunk = 250);

struct AblationPair {
  MetricsReport full;
  MetricsReport ablated;
  bool direction_holds = false;  // ablated MSE <= full MSE and ablated FID >= full FID
};

/// Trains full-objective and adversarial-loss-disabled inverters under the
/// same seed and budget, then compares reconstruction metrics on fresh
/// generator samples (labels taken from the classifier on the originals).
AblationPair ablation_report(const Model& generator, const Model& classifier,
                             const InverterTrainConfig& cfg, int64_t n_eval, uint64_t eval_seed);

}  // namespace ganinv
