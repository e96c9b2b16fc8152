#include "ganinv/defense_eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>

#include "ganinv/gan_train.hpp"

namespace ganinv {

namespace {

Tensor<float> project_chunked(const Model& g, const Model& inv, const Tensor<float>& x,
                              const ProjectionConfig& cfg, int64_t chunk) {
  const int64_t n = x.dim(0);
  Tensor<float> out(x.shape());
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t end = std::min(n, start + chunk);
    auto bp = encoder_project_batch(g, inv, x.slice_rows(start, end), cfg);
    for (int64_t i = start; i < end; ++i)
      out.set_row(i, bp.x_proj.slice_rows(i - start, i - start + 1));
  }
  return out;
}

}  // namespace

Tensor<float> purify(const Model& generator, const Model& inverter, const Tensor<float>& x,
                     const ProjectionConfig& cfg, int64_t chunk) {
  ProjectionConfig c = cfg;
  c.init = ProjectionConfig::Init::Encoder;
  return project_chunked(generator, inverter, x, c, chunk);
}

DefenseFn make_defense_fn(const Model& generator, const Model& inverter,
                          const ProjectionConfig& cfg, int64_t chunk) {
  const Model* g = &generator;
  const Model* inv = &inverter;
  ProjectionConfig c = cfg;
  return [g, inv, c, chunk](const Tensor<float>& x) { return purify(*g, *inv, x, c, chunk); };
}

std::vector<int> defend_classify(const Model& classifier, const Model& generator,
                                 const Model& inverter, const Tensor<float>& x,
                                 const ProjectionConfig& cfg, int64_t chunk) {
  Tensor<float> xp = purify(generator, inverter, x, cfg, chunk);
  Tensor<float> logits = forward_chunked(classifier.net, xp, chunk);
  return argmax_rows(logits);
}

double detection_score(const Model& classifier, const Tensor<float>& x,
                       const Tensor<float>& x_proj) {
  Shape batched = x.shape();
  batched.insert(batched.begin(), 1);
  auto scores = detection_scores(classifier, x.reshaped(batched), x_proj.reshaped(batched));
  return scores[0];
}

std::vector<double> detection_scores(const Model& classifier, const Tensor<float>& x,
                                     const Tensor<float>& x_proj, bool image_space,
                                     int64_t chunk) {
  if (!same_shape(x.shape(), x_proj.shape()))
    throw std::invalid_argument("detection_scores: shape mismatch");
  const int64_t n = x.dim(0);
  std::vector<double> out(n);
  if (image_space) {
    Tensor<float> diff(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) diff[i] = x[i] - x_proj[i];
    return row_l2_norms(diff);
  }
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t end = std::min(n, start + chunk);
    Tensor<float> fa = classifier_features(classifier, x.slice_rows(start, end));
    Tensor<float> fb = classifier_features(classifier, x_proj.slice_rows(start, end));
    Tensor<float> diff(fa.shape());
    for (int64_t i = 0; i < fa.size(); ++i) diff[i] = fa[i] - fb[i];
    auto norms = row_l2_norms(diff);
    for (int64_t i = start; i < end; ++i) out[i] = norms[i - start];
  }
  return out;
}

double detection_auc(const std::vector<double>& clean_scores,
                     const std::vector<double>& attacked_scores) {
  if (clean_scores.empty() || attacked_scores.empty())
    throw std::invalid_argument("detection_auc: empty input");
  // midrank formulation of the Mann-Whitney statistic
  struct Entry {
    double v;
    bool attacked;
  };
  std::vector<Entry> all;
  all.reserve(clean_scores.size() + attacked_scores.size());
  for (double v : clean_scores) all.push_back({v, false});
  for (double v : attacked_scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.v < b.v; });

  const size_t n = all.size();
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && all[j + 1].v == all[i].v) ++j;
    const double mid = (double(i + 1) + double(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) rank[k] = mid;
    i = j + 1;
  }
  double rank_sum_attacked = 0;
  for (size_t k = 0; k < n; ++k)
    if (all[k].attacked) rank_sum_attacked += rank[k];
  const double na = double(attacked_scores.size()), nc = double(clean_scores.size());
  const double u = rank_sum_attacked - na * (na + 1) / 2.0;
  return u / (na * nc);
}

double inception_style_score(const Tensor<float>& probs) {
  const int64_t n = probs.dim(0), c = probs.dim(1);
  std::vector<double> marginal(c, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) marginal[j] += double(probs[i * c + j]) / double(n);
  double kl_sum = 0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      const double p = std::max(1e-12, double(probs[i * c + j]));
      const double q = std::max(1e-12, marginal[j]);
      kl_sum += p * std::log(p / q);
    }
  }
  return std::exp(kl_sum / double(n));
}

namespace {

void fit_gaussian(const Tensor<float>& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  const int64_t n = f.dim(0), d = f.dim(1);
  mu = Eigen::VectorXd::Zero(d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mu[j] += double(f[i * d + j]);
  mu /= double(n);
  cov = Eigen::MatrixXd::Zero(d, d);
  for (int64_t i = 0; i < n; ++i) {
    Eigen::VectorXd x(d);
    for (int64_t j = 0; j < d; ++j) x[j] = double(f[i * d + j]) - mu[j];
    cov.noalias() += x * x.transpose();
  }
  cov /= double(std::max<int64_t>(1, n - 1));
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, bool* clipped) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0) {
      if (ev[i] < -1e-9 && clipped) *clipped = true;
      ev[i] = 0;
    }
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Tensor<float>& features_a, const Tensor<float>& features_b,
                        bool* clipped) {
  if (features_a.dim(1) != features_b.dim(1))
    throw std::invalid_argument("frechet_distance: feature dims differ");
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd s1, s2;
  fit_gaussian(features_a, mu1, s1);
  fit_gaussian(features_b, mu2, s2);

  const Eigen::MatrixXd a = psd_sqrt(s1, clipped);
  const Eigen::MatrixXd inner = a * s2 * a;  // symmetric PSD up to roundoff
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
  double tr_sqrt = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    double ev = es.eigenvalues()[i];
    if (ev < 0) {
      if (ev < -1e-9 && clipped) *clipped = true;
      ev = 0;
    }
    tr_sqrt += std::sqrt(ev);
  }
  return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

MetricsReport eval_metrics(const Tensor<float>& originals, const Tensor<float>& reconstructions,
                           const std::vector<int>& labels, const Model& classifier,
                           int64_t chunk) {
  if (!same_shape(originals.shape(), reconstructions.shape()))
    throw std::invalid_argument("eval_metrics: batch shapes differ");
  const int64_t n = originals.dim(0);
  const int64_t stride = originals.size() / n;

  MetricsReport rep;
  rep.sample_count = n;

  std::vector<double> per_sample_mse(n, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    const float* a = originals.data() + i * stride;
    const float* b = reconstructions.data() + i * stride;
    for (int64_t j = 0; j < stride; ++j) {
      const double d = double(a[j]) - double(b[j]);
      s += d * d;
    }
    per_sample_mse[i] = s / double(stride);
  }
  rep.mse_mean = std::accumulate(per_sample_mse.begin(), per_sample_mse.end(), 0.0) / n;
  double var = 0;
  for (double v : per_sample_mse) var += (v - rep.mse_mean) * (v - rep.mse_mean);
  rep.mse_std = std::sqrt(var / std::max<int64_t>(1, n - 1));

  rep.accuracy = classification_accuracy(classifier, reconstructions, labels, chunk);

  Tensor<float> logits = forward_chunked(classifier.net, reconstructions, chunk);
  rep.proxy_is = inception_style_score(softmax(logits));

  Tensor<float> fa(Shape{n, 0});
  {
    Tensor<float> f1 = classifier_features(classifier, originals.slice_rows(0, std::min(n, chunk)));
    Shape fs = f1.shape();
    fs[0] = n;
    fa = Tensor<float>(fs);
  }
  Tensor<float> fb(fa.shape());
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t end = std::min(n, start + chunk);
    Tensor<float> f1 = classifier_features(classifier, originals.slice_rows(start, end));
    Tensor<float> f2 = classifier_features(classifier, reconstructions.slice_rows(start, end));
    for (int64_t i = start; i < end; ++i) {
      fa.set_row(i, f1.slice_rows(i - start, i - start + 1));
      fb.set_row(i, f2.slice_rows(i - start, i - start + 1));
    }
  }
  rep.proxy_fid = frechet_distance(fa, fb, &rep.fid_eigen_clipped);
  return rep;
}

AblationPair ablation_report(const Model& generator, const Model& classifier,
                             const InverterTrainConfig& cfg, int64_t n_eval, uint64_t eval_seed) {
  InverterTrainConfig full_cfg = cfg;
  full_cfg.disable_adv = false;
  InverterTrainConfig ablated_cfg = cfg;
  ablated_cfg.disable_adv = true;

  auto full = train_inverter(generator, full_cfg);
  auto ablated = train_inverter(generator, ablated_cfg);

  Rng rng(mix_seed(eval_seed, 0xe7a1));
  Tensor<float> z = rng.standard_normal<float>({n_eval, generator.spec.latent_dim});
  Tensor<float> originals = forward_chunked(generator.net, z, 250);
  const auto labels = argmax_rows(forward_chunked(classifier.net, originals, 250));

  auto reconstruct = [&](const Model& inv) {
    Tensor<float> zh = forward_chunked(inv.net, originals, 250);
    return forward_chunked(generator.net, zh, 250);
  };

  AblationPair pair;
  pair.full = eval_metrics(originals, reconstruct(full.inverter), labels, classifier);
  pair.ablated = eval_metrics(originals, reconstruct(ablated.inverter), labels, classifier);
  pair.direction_holds =
      pair.ablated.mse_mean <= pair.full.mse_mean && pair.ablated.proxy_fid >= pair.full.proxy_fid;
  return pair;
}

}  // namespace ganinv
