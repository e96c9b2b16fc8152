#pragma once

#include <functional>

#include "ganinv/models.hpp"

namespace ganinv {

/// The composite inversion map h = I o G, viewed as a black box on latents.
using LatentMap = std::function<Tensor<float>(const Tensor<float>&)>;

LatentMap composed_inversion_map(const Model& inverter, const Model& generator,
                                 int64_t chunk = 500);

/// One row of the inversion-guarantee report: everything needed to compare
/// the measured inversion probability against the analytic lower bound at a
/// given test tolerance.
struct TheoremRow {
  double eps_prime = 0;
  double p_hat = 0;          // fraction of fresh latents inverted within eps_prime
  double ci_low = 0;         // 95% Wilson interval
  double ci_high = 0;
  double bound = 0;          // analytic bound at the estimated Lipschitz constant
  double bound_2l = 0;       // sensitivity: bound evaluated at twice the estimate
  bool regime_flagged = false;   // concentration step questionable here
  bool check_applicable = false; // bound non-vacuous and regime clean
  bool check_passed = false;     // ci_low >= bound when applicable
};

struct TheoremReport {
  int64_t n = 0;       // training latent count
  int64_t d = 0;       // latent dimension
  double epsilon = 0;  // max training inversion error
  double lipschitz_hat = 0;  // lower-bound estimate for I o G
  int64_t m = 0;       // fresh evaluation latents
  uint64_t seed = 0;
  std::vector<TheoremRow> rows;

  bool any_violation() const {
    for (const auto& r : rows)
      if (r.check_applicable && !r.check_passed) return true;
    return false;
  }
  bool any_flagged() const {
    for (const auto& r : rows)
      if (r.regime_flagged) return true;
    return false;
  }
};

struct TheoremConfig {
  int64_t n_train_latents = 1000;
  int64_t n_lipschitz_pairs = 2000;
  int64_t m_fresh = 10000;
  std::vector<double> eps_prime_scale = {0.5, 1.0, 2.0, 4.0};  // multiples of sqrt(d)
  uint64_t seed = 0;
};

/// Per-sample inversion errors ||h(z) - z||.
std::vector<double> inversion_errors(const LatentMap& h, const Tensor<float>& latents);

/// Max inversion error over the given latent set.
double train_error_epsilon(const LatentMap& h, const Tensor<float>& latents);

/// Lower-bound Lipschitz estimate from sampled pairs: even-indexed pairs are
/// independent prior draws, odd-indexed pairs are local perturbations. The
/// pair sequence is nested in n_pairs (prefixes reuse the same pairs), so the
/// estimate is non-decreasing in n_pairs. Pairs closer than 1e-12 are skipped.
double estimate_lipschitz(const LatentMap& h, int64_t d, int64_t n_pairs, uint64_t seed);

struct InversionProbability {
  double p_hat;
  double ci_low;   // 95% Wilson score interval
  double ci_high;
  int64_t m;
};

/// Fraction of m fresh prior samples with ||h(z) - z|| < eps_prime.
InversionProbability empirical_inversion_prob(const LatentMap& h, int64_t d, double eps_prime,
                                              int64_t m, uint64_t seed);

/// The analytic lower bound 1 - exp(-(n d / 18) * (q - 1)^2) with
/// q = (eps' - eps)^2 / (4 d (L+1)^2). Requires eps' > eps. *regime_flagged
/// is set when q < 1, where the underlying concentration step is
/// questionable.
double analytic_bound(int64_t n, int64_t d, double eps, double eps_prime, double lipschitz,
                      bool* regime_flagged = nullptr);

/// Full validation: measures epsilon on a frozen latent set, estimates the
/// Lipschitz constant, sweeps eps' on one shared fresh sample (so p_hat is
/// exactly monotone in eps') and compares the empirical probability against
/// the bound wherever it is non-vacuous (> 0.5) and unflagged. Violations are
/// reported in the rows, never thrown.
TheoremReport validate_theorem(const Model& inverter, const Model& generator,
                               const TheoremConfig& cfg);

}  // namespace ganinv
