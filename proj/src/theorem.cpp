#include "ganinv/theorem.hpp"

#include <cmath>

#include "ganinv/rng.hpp"

namespace ganinv {

LatentMap composed_inversion_map(const Model& inverter, const Model& generator, int64_t chunk) {
  const Network<float>* inv = &inverter.net;
  const Network<float>* gen = &generator.net;
  return [inv, gen, chunk](const Tensor<float>& z) {
    Tensor<float> out(z.shape());
    for (int64_t start = 0; start < z.dim(0); start += chunk) {
      const int64_t end = std::min(z.dim(0), start + chunk);
      Tensor<float> zh = inv->forward(gen->forward(z.slice_rows(start, end)));
      for (int64_t i = start; i < end; ++i)
        out.set_row(i, zh.slice_rows(i - start, i - start + 1));
    }
    return out;
  };
}

std::vector<double> inversion_errors(const LatentMap& h, const Tensor<float>& latents) {
  const int64_t n = latents.dim(0), d = latents.dim(1);
  Tensor<float> zh = h(latents);
  std::vector<double> errs(n);
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = double(latents[i * d + j]) - double(zh[i * d + j]);
      s += diff * diff;
    }
    errs[i] = std::sqrt(s);
  }
  return errs;
}

double train_error_epsilon(const LatentMap& h, const Tensor<float>& latents) {
  if (latents.dim(0) == 0) throw std::invalid_argument("train_error_epsilon: empty latent set");
  const auto errs = inversion_errors(h, latents);
  return *std::max_element(errs.begin(), errs.end());
}

double estimate_lipschitz(const LatentMap& h, int64_t d, int64_t n_pairs, uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("estimate_lipschitz: need at least one pair");
  constexpr double kLocalScale = 1e-3;

  // pair i depends only on (seed, i): prefixes of the sequence are nested
  Tensor<float> za(Shape{n_pairs, d}), zb(Shape{n_pairs, d});
  for (int64_t i = 0; i < n_pairs; ++i) {
    Rng rng(mix_seed(seed, 0x11b + static_cast<uint64_t>(i)));
    if (i % 2 == 0) {
      for (int64_t j = 0; j < d; ++j) {
        za[i * d + j] = static_cast<float>(rng.normal());
        zb[i * d + j] = static_cast<float>(rng.normal());
      }
    } else {
      for (int64_t j = 0; j < d; ++j) {
        const double base = rng.normal();
        za[i * d + j] = static_cast<float>(base);
        zb[i * d + j] = static_cast<float>(base + kLocalScale * rng.normal());
      }
    }
  }

  Tensor<float> ha = h(za), hb = h(zb);
  double best = 0;
  for (int64_t i = 0; i < n_pairs; ++i) {
    double dz = 0, dh = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double a = double(za[i * d + j]) - double(zb[i * d + j]);
      const double b = double(ha[i * d + j]) - double(hb[i * d + j]);
      dz += a * a;
      dh += b * b;
    }
    dz = std::sqrt(dz);
    if (dz < 1e-12) continue;  // coincident pair carries no slope information
    best = std::max(best, std::sqrt(dh) / dz);
  }
  return best;
}

namespace {

InversionProbability wilson_interval(int64_t hits, int64_t m) {
  InversionProbability out;
  out.m = m;
  const double p = double(hits) / double(m);
  out.p_hat = p;
  if (hits == 0 || hits == m) {
    // closed-form endpoints avoid roundoff pulling the interval off {0,1}
    constexpr double zz = 1.959963984540054 * 1.959963984540054;
    const double shrink = zz / (double(m) + zz);
    out.ci_low = hits == 0 ? 0.0 : 1.0 - shrink;
    out.ci_high = hits == 0 ? shrink : 1.0;
    return out;
  }
  constexpr double z = 1.959963984540054;  // 97.5th normal percentile
  const double z2 = z * z;
  const double denom = 1.0 + z2 / double(m);
  const double center = (p + z2 / (2.0 * m)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / double(m) + z2 / (4.0 * m * m)) / denom;
  out.ci_low = std::max(0.0, center - half);
  out.ci_high = std::min(1.0, center + half);
  return out;
}

}  // namespace

InversionProbability empirical_inversion_prob(const LatentMap& h, int64_t d, double eps_prime,
                                              int64_t m, uint64_t seed) {
  if (m < 1) throw std::invalid_argument("empirical_inversion_prob: m must be >= 1");
  Rng rng(mix_seed(seed, 0x9e7));
  Tensor<float> z = rng.standard_normal<float>({m, d});
  const auto errs = inversion_errors(h, z);
  int64_t hits = 0;
  for (double e : errs) hits += e < eps_prime;
  return wilson_interval(hits, m);
}

double analytic_bound(int64_t n, int64_t d, double eps, double eps_prime, double lipschitz,
                      bool* regime_flagged) {
  if (!(eps_prime > eps)) throw std::invalid_argument("analytic_bound requires eps' > eps");
  if (lipschitz < 0) throw std::invalid_argument("analytic_bound requires L >= 0");
  if (n < 1 || d < 1) throw std::invalid_argument("analytic_bound requires n, d >= 1");
  const double q = (eps_prime - eps) * (eps_prime - eps) /
                   (4.0 * double(d) * (lipschitz + 1.0) * (lipschitz + 1.0));
  if (regime_flagged) *regime_flagged = q < 1.0;
  const double exponent = -(double(n) * double(d) / 18.0) * (q - 1.0) * (q - 1.0);
  return -std::expm1(exponent);  // 1 - exp(exponent)
}

TheoremReport validate_theorem(const Model& inverter, const Model& generator,
                               const TheoremConfig& cfg) {
  TheoremReport rep;
  rep.d = generator.spec.latent_dim;
  rep.n = cfg.n_train_latents;
  rep.m = cfg.m_fresh;
  rep.seed = cfg.seed;

  const LatentMap h = composed_inversion_map(inverter, generator);

  // frozen surrogate training set for the epsilon hypothesis
  Rng rng(mix_seed(cfg.seed, 0x7e0));
  Tensor<float> train_z = rng.standard_normal<float>({cfg.n_train_latents, rep.d});
  rep.epsilon = train_error_epsilon(h, train_z);
  rep.lipschitz_hat = estimate_lipschitz(h, rep.d, cfg.n_lipschitz_pairs, mix_seed(cfg.seed, 0x11));

  // one shared fresh sample across the sweep: p_hat is exactly monotone in eps'
  Rng fresh_rng(mix_seed(cfg.seed, 0x33));
  Tensor<float> fresh_z = fresh_rng.standard_normal<float>({cfg.m_fresh, rep.d});
  const auto errs = inversion_errors(h, fresh_z);

  const double sqrt_d = std::sqrt(double(rep.d));
  for (double scale : cfg.eps_prime_scale) {
    TheoremRow row;
    row.eps_prime = scale * sqrt_d;
    if (row.eps_prime <= rep.epsilon) continue;  // hypothesis eps' > eps unmet at this point
    int64_t hits = 0;
    for (double e : errs) hits += e < row.eps_prime;
    const auto p = wilson_interval(hits, cfg.m_fresh);
    row.p_hat = p.p_hat;
    row.ci_low = p.ci_low;
    row.ci_high = p.ci_high;
    row.bound = analytic_bound(rep.n, rep.d, rep.epsilon, row.eps_prime, rep.lipschitz_hat,
                               &row.regime_flagged);
    bool flag2 = false;
    row.bound_2l =
        analytic_bound(rep.n, rep.d, rep.epsilon, row.eps_prime, 2.0 * rep.lipschitz_hat, &flag2);
    row.check_applicable = row.bound > 0.5 && !row.regime_flagged;
    row.check_passed = !row.check_applicable || row.ci_low >= row.bound;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace ganinv
