#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ganinv/tensor.hpp"

namespace ganinv {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic RNG. Gaussian variates come from an explicit Box-Muller
/// transform so that streams are reproducible across platforms and standard
/// library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return (gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; caches the second variate of each pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Normal truncated to two standard deviations.
  double truncated_normal(double stddev) {
    double v = normal();
    while (std::abs(v) > 2.0) v = normal();
    return v * stddev;
  }

  /// Uniform integer in [0, n).
  uint64_t integer(uint64_t n) {
    // rejection sampling keeps the draw unbiased
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  Rng spawn(uint64_t stream) const { return Rng(mix_seed(base_seed_snapshot(), stream)); }

  template <class T>
  void fill_normal(Tensor<T>& t, double mean = 0.0, double stddev = 1.0) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(mean + stddev * normal());
  }

  template <class T>
  void fill_truncated_normal(Tensor<T>& t, double stddev) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(truncated_normal(stddev));
  }

  template <class T>
  Tensor<T> standard_normal(Shape shape) {
    Tensor<T> t(std::move(shape));
    fill_normal(t);
    return t;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  // spawn() derives from the engine state, not the original seed, so repeated
  // spawns with the same stream id from a fresh Rng are stable.
  uint64_t base_seed_snapshot() const {
    std::mt19937_64 copy = gen_;
    return copy();
  }

  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <class T>
std::vector<int64_t> shuffled_indices(int64_t n, Rng& rng) {
  std::vector<int64_t> idx(n);
  for (int64_t i = 0; i < n; ++i) idx[i] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(i + 1)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace ganinv
