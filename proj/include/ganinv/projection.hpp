#pragma once

#include <optional>

#include "ganinv/models.hpp"
#include "ganinv/rng.hpp"

namespace ganinv {

struct ProjectionConfig {
  int64_t steps = 200;  // gradient-descent iterations T
  double alpha = 0.1;   // step size
  int64_t restarts = 10;  // independent chains R; encoder init forces 1
  enum class Init { Random, Encoder } init = Init::Random;
  uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("projection: steps must be >= 0");
    if (restarts < 1) throw std::invalid_argument("projection: restarts must be >= 1");
    if (alpha <= 0) throw std::invalid_argument("projection: alpha must be positive");
  }
  int64_t effective_restarts() const { return init == Init::Encoder ? 1 : restarts; }
};

/// Result of projecting one image onto the generator range.
struct ProjectionResult {
  Tensor<float> z;                  // [d]
  Tensor<float> x_proj;             // G(z), exactly
  std::vector<double> trajectory;   // ||G(z_t) - x||_2, length T+1 (winning chain)
  int64_t effective_iterations;     // R * T
};

/// Batched projection; per-sample winners across restart chains.
struct BatchProjection {
  Tensor<float> z;                      // [B, d]
  Tensor<float> x_proj;                 // [B, ...]
  std::vector<double> final_objective;  // per sample
  std::vector<double> initial_objective;
  int64_t effective_iterations = 0;
};

struct ProjectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-sample objective ||G(z) - x||_2 and, optionally, its z-gradient.
/// At (near-)zero residual the gradient is defined as zero.
template <class T>
std::vector<double> projection_objective(const Network<T>& g, const Tensor<T>& z,
                                         const Tensor<T>& x, Tensor<T>* dz = nullptr) {
  Trace<T> tr;
  Tensor<T> y = dz ? g.forward(z, tr) : g.forward(z);
  Tensor<T> resid(y.shape());
  for (int64_t i = 0; i < y.size(); ++i) resid[i] = y[i] - x[i];
  auto norms = row_l2_norms(resid);
  if (dz) {
    const int64_t b = y.dim(0), stride = y.size() / b;
    Tensor<T> dy(y.shape());
    for (int64_t i = 0; i < b; ++i) {
      if (norms[i] < 1e-12) continue;  // gradient of the norm is singular here
      const double inv = 1.0 / norms[i];
      for (int64_t j = 0; j < stride; ++j)
        dy[i * stride + j] = static_cast<T>(double(resid[i * stride + j]) * inv);
    }
    *dz = g.backward(tr, dy, nullptr);
  }
  return norms;
}

/// Plain gradient descent from a given start; records the objective before
/// each step plus the final value (steps+1 entries per sample).
template <class T>
std::vector<std::vector<double>> project_chain(const Network<T>& g, Tensor<T>& z,
                                               const Tensor<T>& x, int64_t steps, double alpha) {
  const int64_t b = z.dim(0);
  std::vector<std::vector<double>> traj(b);
  for (int64_t t = 0; t < steps; ++t) {
    Tensor<T> dz(z.shape());
    auto norms = projection_objective(g, z, x, &dz);
    for (int64_t i = 0; i < b; ++i) traj[i].push_back(norms[i]);
    axpy(static_cast<T>(-alpha), dz, z);
  }
  auto final_norms = projection_objective(g, z, x);
  for (int64_t i = 0; i < b; ++i) traj[i].push_back(final_norms[i]);
  return traj;
}

/// Runs cfg.restarts independent chains from the given per-chain starts and
/// keeps the per-sample winner. starts[r] is the [B,d] init of chain r.
BatchProjection project_batch_with_starts(const Network<float>& g,
                                          const std::vector<Tensor<float>>& starts,
                                          const Tensor<float>& x, int64_t steps, double alpha);

/// Random-restart projection of an image batch (direct inversion).
BatchProjection direct_invert_batch(const Model& generator, const Tensor<float>& x,
                                    const ProjectionConfig& cfg);

/// Encoder-initialized projection: z0 = I(x), then plain gradient descent.
/// Refuses inverters whose recorded generator spec hash does not match.
BatchProjection encoder_project_batch(const Model& generator, const Model& inverter,
                                      const Tensor<float>& x, const ProjectionConfig& cfg);

/// Single-image wrappers that also return the winning-chain trajectory.
ProjectionResult direct_invert(const Model& generator, const Tensor<float>& x,
                               const ProjectionConfig& cfg);
ProjectionResult encoder_project(const Model& generator, const Model& inverter,
                                 const Tensor<float>& x, const ProjectionConfig& cfg);

}  // namespace ganinv
