#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "ganinv/inverter_train.hpp"
#include "ganinv/projection.hpp"
#include "gradcheck.hpp"

using namespace ganinv;
using ganinv::testing::grad_check;

namespace {

Model linear_generator_model(int64_t d, int64_t m, const std::vector<float>& a, uint64_t seed) {
  // raw dense map packaged as a model; only latent_dim is consulted by the
  // projection routines
  NetworkSpec spec = mlp_generator_spec(d, m, 4, 1);
  Model model = build_model(spec, seed);
  Network<float> net(Shape{d});
  auto layer = std::make_unique<DenseLayer<float>>(d, m);
  layer->weights().vec() = a;
  layer->bias().fill(0.0f);
  net.add(std::move(layer));
  model.net = std::move(net);
  return model;
}

}  // namespace

TEST_CASE("defaults follow the stated schedules") {
  ProjectionConfig cfg;
  CHECK(cfg.steps == 200);
  CHECK(cfg.restarts == 10);
  CHECK(cfg.alpha == 0.1);
  cfg.validate();
  cfg.restarts = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("encoder init forces a single restart chain") {
  ProjectionConfig cfg;
  cfg.init = ProjectionConfig::Init::Encoder;
  cfg.restarts = 10;
  CHECK(cfg.effective_restarts() == 1);
}

TEST_CASE("chain started at the exact preimage stays at objective zero") {
  auto gspec = mlp_generator_spec(3, 2, 8, 1);
  auto g = build_model(gspec, 5);
  Rng rng(2);
  Tensor<float> z0 = rng.standard_normal<float>({4, 3});
  Tensor<float> x = g.net.forward(z0);

  auto bp = project_batch_with_starts(g.net, {z0}, x, 0, 0.1);
  for (double v : bp.final_objective) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
  // x_proj equals G(z) exactly: recompute and compare bitwise
  Tensor<float> again = g.net.forward(bp.z);
  for (int64_t i = 0; i < again.size(); ++i) CHECK(bp.x_proj[i] == again[i]);
  CHECK(bp.effective_iterations == 0);
}

TEST_CASE("linear generator: gradient descent approaches the least-squares solution") {
  // G(z) = A z with full column rank A (4x2); pseudo-inverse oracle
  const std::vector<float> a_rowmajor = {1.0f, 0.2f, -0.3f, 0.8f, 0.5f, -0.5f, 0.1f, 1.1f};
  auto g = linear_generator_model(2, 4, a_rowmajor, 1);

  Eigen::MatrixXd A(4, 2);  // maps z (2) -> x (4); dense stores [in,out] row-major
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) A(j, i) = a_rowmajor[i * 4 + j];

  Eigen::VectorXd xt(4);
  xt << 0.7, -0.4, 0.9, 0.3;
  Eigen::VectorXd z_star = A.colPivHouseholderQr().solve(xt);
  const double resid_star = (A * z_star - xt).norm();

  Tensor<float> x(Shape{1, 4});
  for (int i = 0; i < 4; ++i) x[i] = static_cast<float>(xt[i]);

  ProjectionConfig cfg;
  cfg.steps = 4000;
  cfg.alpha = 0.01;
  cfg.restarts = 2;
  cfg.seed = 3;
  auto res = direct_invert(g, x.reshaped({4}), cfg);
  CHECK(res.trajectory.size() == 4001);
  CHECK(res.trajectory.back() == doctest::Approx(resid_star).epsilon(0.01));
  CHECK(res.z[0] == doctest::Approx(z_star[0]).epsilon(0.05));
  CHECK(res.z[1] == doctest::Approx(z_star[1]).epsilon(0.05));
  CHECK(res.effective_iterations == 2 * 4000);
}

TEST_CASE("one hand-computed gradient step on a 2x2 linear pair") {
  // G(z) = A z, A = [[2,0],[0,1]] (stored [in,out] row-major: rows are input
  // dims); x = (1,1), z0 = (0,0): r = -x, ||r|| = sqrt(2),
  // dz = A^T r/||r|| = (-2/sqrt2, -1/sqrt2); z1 = z0 - alpha*dz
  auto g = linear_generator_model(2, 2, {2, 0, 0, 1}, 1);
  Tensor<float> x(Shape{1, 2}, {1, 1});
  Tensor<float> z(Shape{1, 2}, {0, 0});
  auto traj = project_chain<float>(g.net, z, x, 1, 0.1);
  const double s2 = std::sqrt(2.0);
  CHECK(traj[0][0] == doctest::Approx(s2));
  CHECK(z[0] == doctest::Approx(0.1 * 2.0 / s2));
  CHECK(z[1] == doctest::Approx(0.1 * 1.0 / s2));
}

TEST_CASE("projection objective gradient matches finite differences") {
  auto gspec = mlp_generator_spec(3, 4, 10, 2);
  auto net = build_network<double>(gspec, 9);
  Rng rng(4);
  for (auto& p : net.named_params()) rng.fill_normal(*p.value, 0.0, 0.4);
  Tensor<double> z(Shape{2, 3});
  rng.fill_normal(z);
  Tensor<double> x(Shape{2, 1, 1, 4});
  rng.fill_normal(x, 0.0, 0.5);

  Tensor<double> dz(z.shape());
  projection_objective<double>(net, z, x, &dz);
  auto total = [&]() {
    auto norms = projection_objective<double>(net, z, x);
    double s = 0;
    for (double n : norms) s += n;
    return s;
  };
  CHECK(grad_check(total, z, dz) < 1e-4);
}

TEST_CASE("near-zero residual uses the zero-gradient convention") {
  auto g = linear_generator_model(2, 2, {1, 0, 0, 1}, 1);
  Tensor<float> z(Shape{1, 2}, {0.3f, -0.2f});
  Tensor<float> x = g.net.forward(z);
  Tensor<float> dz(z.shape());
  projection_objective<float>(g.net, z, x, &dz);
  CHECK(dz[0] == 0.0f);
  CHECK(dz[1] == 0.0f);
}

TEST_CASE("encoder projection: T=0 is the pure encoder pass; mismatched pairing refused") {
  auto gspec = mlp_generator_spec(2, 2, 16, 1);
  auto g = build_model(gspec, 21);
  InverterTrainConfig icfg;
  icfg.iterations = 200;
  icfg.batch = 32;
  icfg.seed = 4;
  auto trained = train_inverter(g, icfg);

  Rng rng(6);
  Tensor<float> z = rng.standard_normal<float>({5, 2});
  Tensor<float> x = g.net.forward(z);

  ProjectionConfig cfg;
  cfg.init = ProjectionConfig::Init::Encoder;
  cfg.steps = 0;
  auto bp = encoder_project_batch(g, trained.inverter, x, cfg);
  Tensor<float> direct = g.net.forward(trained.inverter.net.forward(x));
  for (int64_t i = 0; i < direct.size(); ++i) CHECK(bp.x_proj[i] == direct[i]);

  // pairing guard
  auto other = build_model(mlp_generator_spec(2, 2, 16, 2), 22);
  CHECK_THROWS_AS(encoder_project_batch(other, trained.inverter, x, cfg), SpecMismatchError);
}

TEST_CASE("final objective does not exceed the initial one for small alpha") {
  auto gspec = mlp_generator_spec(4, 6, 16, 2);
  auto g = build_model(gspec, 33);
  Rng rng(8);
  Tensor<float> x = g.net.forward(rng.standard_normal<float>({6, 4}));
  // perturb targets off the manifold
  for (int64_t i = 0; i < x.size(); ++i)
    x[i] = std::max(-1.0f, std::min(1.0f, x[i] + 0.05f * float(rng.normal())));

  ProjectionConfig cfg;
  cfg.steps = 50;
  cfg.alpha = 0.02;
  cfg.restarts = 3;
  cfg.seed = 11;
  auto bp = direct_invert_batch(g, x, cfg);
  for (int64_t i = 0; i < x.dim(0); ++i)
    CHECK(bp.final_objective[i] <= bp.initial_objective[i] + 1e-9);
}

TEST_CASE("diverged chains are disqualified; all-failed raises") {
  auto g = linear_generator_model(2, 2, {1, 0, 0, 1}, 1);
  Tensor<float> x(Shape{1, 2}, {0.5f, 0.5f});
  Tensor<float> bad(Shape{1, 2});
  bad[0] = std::numeric_limits<float>::quiet_NaN();
  bad[1] = 0;
  CHECK_THROWS_AS(project_batch_with_starts(g.net, {bad}, x, 3, 0.1), ProjectionError);

  // one good chain rescues the batch
  Tensor<float> good(Shape{1, 2}, {0.1f, 0.1f});
  auto bp = project_batch_with_starts(g.net, {bad, good}, x, 3, 0.1);
  CHECK(std::isfinite(bp.final_objective[0]));
}
