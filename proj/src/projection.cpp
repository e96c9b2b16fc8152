#include "ganinv/projection.hpp"

namespace ganinv {

namespace {

/// Extracts the trajectory of a single sample's winning chain by re-running
/// that chain alone (cheap relative to the search itself).
std::vector<double> rerun_single_trajectory(const Network<float>& g, const Tensor<float>& z0,
                                            const Tensor<float>& x, int64_t steps, double alpha) {
  Tensor<float> z = z0;
  auto traj = project_chain<float>(g, z, x, steps, alpha);
  return traj[0];
}

}  // namespace

BatchProjection project_batch_with_starts(const Network<float>& g,
                                          const std::vector<Tensor<float>>& starts,
                                          const Tensor<float>& x, int64_t steps, double alpha) {
  if (starts.empty()) throw ProjectionError("no restart chains supplied");
  const int64_t b = x.dim(0);
  const int64_t d = starts[0].dim(1);

  BatchProjection best;
  best.z = Tensor<float>(Shape{b, d});
  best.final_objective.assign(b, std::numeric_limits<double>::infinity());
  best.initial_objective.assign(b, std::numeric_limits<double>::infinity());
  std::vector<Tensor<float>> best_z_rows(b);

  for (const auto& start : starts) {
    Tensor<float> z = start;
    auto init_obj = projection_objective<float>(g, z, x);
    auto traj = project_chain<float>(g, z, x, steps, alpha);
    for (int64_t i = 0; i < b; ++i) {
      const double fin = traj[i].back();
      if (!std::isfinite(fin)) continue;  // chain disqualified for this sample
      best.initial_objective[i] = std::min(best.initial_objective[i], init_obj[i]);
      if (fin < best.final_objective[i]) {
        best.final_objective[i] = fin;
        best_z_rows[i] = z.slice_rows(i, i + 1);
      }
    }
  }
  for (int64_t i = 0; i < b; ++i) {
    if (!std::isfinite(best.final_objective[i]))
      throw ProjectionError("all restart chains diverged for sample " + std::to_string(i));
    best.z.set_row(i, best_z_rows[i]);
  }
  best.x_proj = g.forward(best.z);
  best.effective_iterations = static_cast<int64_t>(starts.size()) * steps;
  return best;
}

BatchProjection direct_invert_batch(const Model& generator, const Tensor<float>& x,
                                    const ProjectionConfig& cfg) {
  cfg.validate();
  const int64_t d = generator.spec.latent_dim;
  std::vector<Tensor<float>> starts;
  starts.reserve(cfg.restarts);
  for (int64_t r = 0; r < cfg.restarts; ++r) {
    Rng rng(mix_seed(cfg.seed, 0x70 + static_cast<uint64_t>(r)));
    starts.push_back(rng.standard_normal<float>({x.dim(0), d}));
  }
  return project_batch_with_starts(generator.net, starts, x, cfg.steps, cfg.alpha);
}

BatchProjection encoder_project_batch(const Model& generator, const Model& inverter,
                                      const Tensor<float>& x, const ProjectionConfig& cfg) {
  cfg.validate();
  if (inverter.meta.paired_spec_hash != 0 &&
      inverter.meta.paired_spec_hash != spec_hash(generator.spec))
    throw SpecMismatchError("inverter was trained against a different generator (spec hash " +
                            hash_hex(inverter.meta.paired_spec_hash) + " vs " +
                            hash_hex(spec_hash(generator.spec)) + ")");
  std::vector<Tensor<float>> starts{inverter.net.forward(x)};
  return project_batch_with_starts(generator.net, starts, x, cfg.steps, cfg.alpha);
}

ProjectionResult direct_invert(const Model& generator, const Tensor<float>& x,
                               const ProjectionConfig& cfg) {
  Shape batched = x.shape();
  batched.insert(batched.begin(), 1);
  const Tensor<float> xb = x.reshaped(batched);
  auto bp = direct_invert_batch(generator, xb, cfg);

  // identify the winning chain's start to reproduce its trajectory
  ProjectionResult res;
  res.z = bp.z.slice_rows(0, 1).reshaped({generator.spec.latent_dim});
  res.x_proj = bp.x_proj.slice_rows(0, 1).reshaped(x.shape());
  res.effective_iterations = bp.effective_iterations;

  double best_final = std::numeric_limits<double>::infinity();
  for (int64_t r = 0; r < cfg.restarts; ++r) {
    Rng rng(mix_seed(cfg.seed, 0x70 + static_cast<uint64_t>(r)));
    Tensor<float> z0 = rng.standard_normal<float>({1, generator.spec.latent_dim});
    auto traj = rerun_single_trajectory(generator.net, z0, xb, cfg.steps, cfg.alpha);
    if (std::isfinite(traj.back()) && traj.back() < best_final) {
      best_final = traj.back();
      res.trajectory = traj;
    }
  }
  return res;
}

ProjectionResult encoder_project(const Model& generator, const Model& inverter,
                                 const Tensor<float>& x, const ProjectionConfig& cfg) {
  Shape batched = x.shape();
  batched.insert(batched.begin(), 1);
  const Tensor<float> xb = x.reshaped(batched);
  auto bp = encoder_project_batch(generator, inverter, xb, cfg);

  ProjectionResult res;
  res.z = bp.z.slice_rows(0, 1).reshaped({generator.spec.latent_dim});
  res.x_proj = bp.x_proj.slice_rows(0, 1).reshaped(x.shape());
  res.effective_iterations = bp.effective_iterations;
  Tensor<float> z0 = inverter.net.forward(xb);
  res.trajectory = rerun_single_trajectory(generator.net, z0, xb, cfg.steps, cfg.alpha);
  return res;
}

}  // namespace ganinv
