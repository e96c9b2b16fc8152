#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <type_traits>

#include "ganinv/data.hpp"
#include "ganinv/gan_train.hpp"
#include "ganinv/inverter_train.hpp"
#include "gradcheck.hpp"

using namespace ganinv;
using ganinv::testing::grad_check;

namespace {

/// One-dense-layer network with prescribed weights (no activation).
Network<double> linear_net(int64_t in, int64_t out, const std::vector<double>& w,
                           const std::vector<double>& b) {
  Network<double> net(Shape{in});
  auto layer = std::make_unique<DenseLayer<double>>(in, out);
  layer->weights().vec() = w;
  layer->bias().vec() = b;
  net.add(std::move(layer));
  return net;
}

Network<float> linear_net_f(int64_t in, int64_t out, const std::vector<float>& w,
                            const std::vector<float>& b) {
  Network<float> net(Shape{in});
  auto layer = std::make_unique<DenseLayer<float>>(in, out);
  layer->weights().vec() = w;
  layer->bias().vec() = b;
  net.add(std::move(layer));
  return net;
}

}  // namespace

TEST_CASE("config validation enforces bounds; paper optimizer defaults stand") {
  GanTrainConfig cfg;
  CHECK(cfg.opt.beta1 == 0.5);
  CHECK(cfg.opt.beta2 == 0.999);
  cfg.validate();
  cfg.opt.beta1 = 1.0;
  CHECK_THROWS(cfg.validate());

  InverterTrainConfig icfg;
  CHECK(icfg.lambda_sem == 100.0);
  CHECK(icfg.lambda_adv == 1.0);
  CHECK(icfg.lambda_lat == 1.0);
  icfg.lambda_sem = -1;
  CHECK_THROWS(icfg.validate());
}

TEST_CASE("inverter config resolution: default margin and ablation flag") {
  InverterTrainConfig cfg;
  auto r = cfg.resolved(28 * 28);
  CHECK(r.eta == doctest::Approx(0.05 * 28.0));

  cfg.disable_adv = true;
  auto a = cfg.resolved(28 * 28);
  CHECK(a.eta == 0.0);
  CHECK(a.lambda_adv == 0.0);
  CHECK(a.lambda_lat == 0.0);
  CHECK(a.lambda_sem == 1.0);
}

TEST_CASE("gan training covers the 8-gaussian modes and reaches rough equilibrium") {
  auto data = synth_gaussians(8, 4096, 42);
  GanTrainConfig cfg;
  cfg.iterations = 3000;
  cfg.batch = 64;
  cfg.latent_dim = 4;
  cfg.seed = 7;
  cfg.opt.lr = 1e-3;
  auto res = train_gan(data, cfg, mlp_generator_spec(4, 2, 32, 2), mlp_discriminator_spec(2, 32, 2));

  // nearest-center mode coverage on fresh samples
  Rng rng(3);
  Tensor<float> z = rng.standard_normal<float>({512, 4});
  Tensor<float> samples = res.generator.net.forward(z);
  const auto centers = gaussian_ring_centers(8, 0.7);
  std::vector<int> counts(8, 0);
  for (int64_t i = 0; i < 512; ++i) {
    const double x = samples[2 * i], y = samples[2 * i + 1];
    int best = 0;
    double best_d = 1e18;
    for (int k = 0; k < 8; ++k) {
      const double d = std::hypot(x - centers[k].first, y - centers[k].second);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    counts[best]++;
  }
  int covered = 0;
  for (int k = 0; k < 8; ++k) covered += counts[k] >= 8;  // >1.5% share
  CHECK(covered >= 6);

  // discriminator near chance on held-out real vs generated
  auto held_out = synth_gaussians(8, 512, 999);
  const double m_real = mean_discriminator_output(res.discriminator, held_out.images);
  const double m_fake = mean_discriminator_output(res.discriminator, samples);
  CHECK(std::abs((m_real + m_fake) / 2 - 0.5) < 0.15);

  // reproducibility: same seed, same loss curve
  auto res2 = train_gan(data, cfg, mlp_generator_spec(4, 2, 32, 2), mlp_discriminator_spec(2, 32, 2));
  REQUIRE(res.log.size() == res2.log.size());
  for (size_t i = 0; i < res.log.size(); ++i) {
    CHECK(res.log[i].loss_d == res2.log[i].loss_d);
    CHECK(res.log[i].loss_g == res2.log[i].loss_g);
  }
}

TEST_CASE("train_gan rejects incompatible generator/data shapes and empty data") {
  auto data = synth_gaussians(4, 64, 1);
  GanTrainConfig cfg;
  cfg.iterations = 1;
  cfg.latent_dim = 4;
  CHECK_THROWS_AS(train_gan(data, cfg, mlp_generator_spec(4, 3), mlp_discriminator_spec(3)),
                  SpecError);
  LabeledImageSet empty;
  CHECK_THROWS(train_gan(empty, cfg, mlp_generator_spec(4, 2), mlp_discriminator_spec(2)));
}

TEST_CASE("classifier training: degenerate single-class data is learned perfectly") {
  LabeledImageSet data;
  data.images = Tensor<float>(Shape{64, 1, 1, 2});
  data.images.fill(0.25f);
  data.labels.assign(64, 1);
  data.num_classes = 3;
  ClassifierTrainConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 5;
  auto res = train_classifier(data, cfg, mlp_classifier_spec(2, 3, 8));
  CHECK(classification_accuracy(res.classifier, data.images, data.labels) == 1.0);
}

TEST_CASE("linear classifier on two gaussians approaches the bayes boundary") {
  // two isotropic gaussians at +-mu: bayes boundary is the perpendicular
  // bisector; bayes accuracy is Phi(||mu|| / sigma)
  const double sigma = 0.15, mu = 0.35;
  LabeledImageSet data;
  const int64_t n = 4000;
  data.images = Tensor<float>(Shape{n, 1, 1, 2});
  data.labels.resize(n);
  data.num_classes = 2;
  Rng rng(11);
  for (int64_t i = 0; i < n; ++i) {
    const int k = i % 2;
    data.labels[i] = k;
    const double cx = k == 0 ? -mu : mu;
    data.images[2 * i] = static_cast<float>(cx + sigma * rng.normal());
    data.images[2 * i + 1] = static_cast<float>(sigma * rng.normal());
  }

  // purely linear classifier: flatten + dense logits
  NetworkSpec spec;
  spec.role = Role::Classifier;
  spec.latent_dim = 1;
  spec.image_shape = {1, 1, 2};
  spec.layers.push_back({.kind = "flatten"});
  spec.layers.push_back({.kind = "dense", .out = 2});
  ClassifierTrainConfig cfg;
  cfg.iterations = 1500;
  cfg.seed = 3;
  auto res = train_classifier(data, cfg, spec);

  // boundary normal (w1 - w0) should align with the center axis (1, 0)
  auto params = res.classifier.net.named_params();
  const auto& w = *params[0].value;  // [2 in, 2 out]
  const double nx = w[1] - w[0];     // d(logit1 - logit0)/dx
  const double ny = w[3] - w[2];
  const double cosang = std::abs(nx) / std::hypot(nx, ny);
  CHECK(cosang > 0.97);

  const double bayes = 0.5 * std::erfc(-(mu / sigma) / std::sqrt(2.0));
  auto test = data;  // same distribution; reuse
  const double acc = classification_accuracy(res.classifier, test.images, test.labels);
  CHECK(acc > bayes - 0.03);
}

// --- inverter loss oracles ---------------------------------------------------

TEST_CASE("semantic loss: hinge floor, above-hinge value, closed form vs batch mean") {
  // identity generator and inverter: loss is exactly eta
  auto g_id = linear_net(2, 2, {1, 0, 0, 1}, {0, 0});
  auto i_id = linear_net(2, 2, {1, 0, 0, 1}, {0, 0});
  Rng rng(5);
  Tensor<double> z(Shape{4, 2});
  rng.fill_normal(z);
  auto fwd = inverter_forward<double>(g_id, i_id, z, false);
  CHECK(semantic_loss_from<double>(fwd, 0.3) == doctest::Approx(0.3));

  // zero inverter: per-sample reconstruction norm equals ||z||; choose rows
  // of norm 2*eta so the loss sits above the hinge at exactly 2*eta
  const double eta = 0.25;
  auto i_zero = linear_net(2, 2, {0, 0, 0, 0}, {0, 0});
  Tensor<double> z2(Shape{3, 2});
  for (int i = 0; i < 3; ++i) {
    z2[2 * i] = 2 * eta;
    z2[2 * i + 1] = 0;
  }
  auto fwd2 = inverter_forward<double>(g_id, i_zero, z2, false);
  CHECK(semantic_loss_from<double>(fwd2, eta) == doctest::Approx(2 * eta));

  // 1-d linear pair: E|az - a b a z| = |a||1 - ab| E|z|
  const double a = 1.7, b = 0.4;
  auto g1 = linear_net(1, 1, {a}, {0});
  auto i1 = linear_net(1, 1, {b}, {0});
  Tensor<double> z1(Shape{64, 1});
  rng.fill_normal(z1);
  double mean_abs_z = 0;
  for (int64_t i = 0; i < 64; ++i) mean_abs_z += std::abs(z1[i]);
  mean_abs_z /= 64;
  auto fwd1 = inverter_forward<double>(g1, i1, z1, false);
  const double expected = std::abs(a) * std::abs(1 - a * b) * mean_abs_z;
  CHECK(semantic_loss_from<double>(fwd1, 0.0) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("latent loss: zero at identity, hand norm, independent recomputation") {
  auto g_id = linear_net(2, 2, {1, 0, 0, 1}, {0, 0});
  auto i_id = linear_net(2, 2, {1, 0, 0, 1}, {0, 0});
  Rng rng(8);
  Tensor<double> z(Shape{5, 2});
  rng.fill_normal(z);
  auto fwd = inverter_forward<double>(g_id, i_id, z, false);
  CHECK(latent_loss_from<double>(z, fwd.z_hat) == doctest::Approx(0.0));

  // z=(1,0) mapped to (0,1): norm sqrt(2)
  auto i_swap = linear_net(2, 2, {0, 1, 1, 0}, {0, 0});
  Tensor<double> zs(Shape{1, 2}, {1, 0});
  auto fwds = inverter_forward<double>(g_id, i_swap, zs, false);
  CHECK(latent_loss_from<double>(zs, fwds.z_hat) == doctest::Approx(std::sqrt(2.0)));

  // random fixed linear pair in d=3 vs an Eigen recomputation
  std::vector<double> gw(9), iw(9);
  Rng wr(21);
  for (auto& v : gw) v = wr.normal();
  for (auto& v : iw) v = wr.normal();
  auto g3 = linear_net(3, 3, gw, {0, 0, 0});
  auto i3 = linear_net(3, 3, iw, {0, 0, 0});
  Tensor<double> z3(Shape{16, 3});
  wr.fill_normal(z3);
  auto fwd3 = inverter_forward<double>(g3, i3, z3, false);
  // independent arithmetic path
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> G(
      gw.data(), 3, 3),
      I(iw.data(), 3, 3), Z(z3.data(), 16, 3);
  Eigen::MatrixXd Zh = Z * G * I;
  double expected = 0;
  for (int i = 0; i < 16; ++i) expected += (Z.row(i) - Zh.row(i)).norm();
  expected /= 16;
  CHECK(latent_loss_from<double>(z3, fwd3.z_hat) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adversarial loss: constant-half discriminator and logistic oracle") {
  // D with zero weights outputs sigmoid(0) = 0.5 everywhere
  Network<double> d_half(Shape{2});
  d_half.add(std::make_unique<DenseLayer<double>>(2, 1));
  d_half.add(std::make_unique<ActivationLayer<double>>(Act::Sigmoid));
  Rng rng(3);
  Tensor<double> x_real(Shape{6, 2}), x_rec(Shape{6, 2});
  rng.fill_normal(x_real);
  rng.fill_normal(x_rec);
  auto [li, ld] = adversarial_loss_from<double>(d_half, x_real, x_rec, 1e-6);
  CHECK(ld == doctest::Approx(2 * std::log(2.0)));
  CHECK(li == doctest::Approx(std::log(2.0)));

  // scalar logistic discriminator with known parameters on 1-d inputs
  Network<double> d1(Shape{1});
  {
    auto layer = std::make_unique<DenseLayer<double>>(1, 1);
    layer->weights().vec() = {1.3};
    layer->bias().vec() = {-0.2};
    d1.add(std::move(layer));
  }
  d1.add(std::make_unique<ActivationLayer<double>>(Act::Sigmoid));
  Tensor<double> xr(Shape{2, 1}, {0.5, -1.0});
  Tensor<double> xf(Shape{2, 1}, {0.1, 0.9});
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double exp_ld = 0, exp_li = 0;
  for (int i = 0; i < 2; ++i) {
    exp_ld += -std::log(sig(1.3 * xr[i] - 0.2)) - std::log(1 - sig(1.3 * xf[i] - 0.2));
    exp_li += -std::log(sig(1.3 * xf[i] - 0.2));
  }
  auto [li1, ld1] = adversarial_loss_from<double>(d1, xr, xf, 1e-9);
  CHECK(ld1 == doctest::Approx(exp_ld / 2).epsilon(1e-12));
  CHECK(li1 == doctest::Approx(exp_li / 2).epsilon(1e-12));
}

TEST_CASE("inverter loss gradients match finite differences (tiny nets, double)") {
  // tiny generator (tanh mlp), mirror-ish inverter, small discriminator;
  // parameters are re-randomized to a generic point so no pre-activation
  // sits on an activation kink
  auto g = build_network<double>(mlp_generator_spec(2, 2, 6, 1), 31);
  auto inv = build_network<double>(mirror_inverter_spec(mlp_generator_spec(2, 2, 6, 1)), 32);
  auto d = build_network<double>(mlp_discriminator_spec(2, 6, 1), 33);
  Rng rng(9);
  auto randomize = [&rng](Network<double>& net) {
    for (auto& p : net.named_params()) rng.fill_normal(*p.value, 0.0, 0.5);
  };
  randomize(g);
  randomize(inv);
  randomize(d);
  Tensor<double> z(Shape{3, 2});
  rng.fill_normal(z);

  const double eta = 0.03, floor = 1e-9;
  const double l_adv = 1.0, l_sem = 100.0, l_lat = 1.0;

  // analytic gradient of the combined encoder objective w.r.t. inverter params
  auto fwd = inverter_forward<double>(g, inv, z, true);
  Tensor<double> dx_rec(fwd.x_rec.shape());
  auto [adv_i, adv_d] = adversarial_loss_from<double>(d, fwd.x_real, fwd.x_rec, floor, nullptr,
                                                      &dx_rec, l_adv);
  (void)adv_d;
  semantic_loss_from<double>(fwd, eta, &dx_rec, l_sem);
  Tensor<double> dz_hat = g.backward(fwd.trace_g2, dx_rec, nullptr);
  latent_loss_from<double>(z, fwd.z_hat, &dz_hat, l_lat);
  auto grads_i = inv.make_grads();
  grads_i.zero();
  inv.backward(fwd.trace_i, dz_hat, &grads_i);

  auto total_loss = [&]() {
    auto f = inverter_forward<double>(g, inv, z, false);
    auto [ai, ad] = adversarial_loss_from<double>(d, f.x_real, f.x_rec, floor);
    (void)ad;
    return l_adv * ai + l_sem * semantic_loss_from<double>(f, eta) +
           l_lat * latent_loss_from<double>(z, f.z_hat);
  };

  auto params = inv.named_params();
  size_t flat = 0;
  for (size_t li = 0; li < grads_i.by_layer.size(); ++li)
    for (size_t pi = 0; pi < grads_i.by_layer[li].size(); ++pi) {
      CHECK(grad_check(total_loss, *params[flat].value, grads_i.by_layer[li][pi]) < 1e-4);
      ++flat;
    }

  // discriminator-side gradient of loss_for_D
  auto grads_d = d.make_grads();
  grads_d.zero();
  adversarial_loss_from<double>(d, fwd.x_real, fwd.x_rec, floor, &grads_d);
  auto d_loss = [&]() {
    auto f = inverter_forward<double>(g, inv, z, false);
    return adversarial_loss_from<double>(d, f.x_real, f.x_rec, floor).second;
  };
  auto dparams = d.named_params();
  flat = 0;
  for (size_t li = 0; li < grads_d.by_layer.size(); ++li)
    for (size_t pi = 0; pi < grads_d.by_layer[li].size(); ++pi) {
      CHECK(grad_check(d_loss, *dparams[flat].value, grads_d.by_layer[li][pi]) < 1e-4);
      ++flat;
    }
}

TEST_CASE("semantic hinge inactivity: sub-margin samples carry zero gradient") {
  auto g_id = linear_net(2, 2, {1, 0, 0, 1}, {0, 0});
  // inverter shrinks by 0.9: reconstruction error 0.1*||z||
  auto i_scale = linear_net(2, 2, {0.9, 0, 0, 0.9}, {0, 0});
  Tensor<double> z(Shape{2, 2}, {1.0, 0.0, 50.0, 0.0});  // errors 0.1 and 5.0
  auto fwd = inverter_forward<double>(g_id, i_scale, z, true);
  Tensor<double> dx(fwd.x_rec.shape());
  semantic_loss_from<double>(fwd, 1.0, &dx, 1.0);  // eta=1: first sample under the hinge
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == 0.0);
  CHECK(dx[2] != 0.0);
}

TEST_CASE("train_inverter: data-free signature, zero-iteration no-op, loss decomposition") {
  // the trainer accepts only (generator, config, log hook): no dataset handle
  static_assert(!std::is_invocable_v<decltype(&train_inverter), const Model&,
                                     const LabeledImageSet&, const InverterTrainConfig&>);

  auto gen_spec = mlp_generator_spec(2, 2, 16, 1);
  auto g = build_model(gen_spec, 77);

  InverterTrainConfig cfg;
  cfg.iterations = 0;
  cfg.batch = 16;
  cfg.seed = 5;
  auto res = train_inverter(g, cfg);
  auto fresh = build_model(mirror_inverter_spec(gen_spec), mix_seed(cfg.seed, 0x17));
  auto pa = res.inverter.net.named_params(), pb = fresh.net.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].value->size(); ++j)
      CHECK(pa[i].value->vec()[j] == pb[i].value->vec()[j]);
  CHECK(res.inverter.meta.paired_spec_hash == spec_hash(gen_spec));

  cfg.iterations = 300;
  cfg.log_every = 50;
  auto res2 = train_inverter(g, cfg);
  REQUIRE(res2.log.size() > 2);
  for (const auto& e : res2.log) {
    const double recomposed = cfg.lambda_adv * e.adv + cfg.lambda_sem * e.semantic +
                              cfg.lambda_lat * e.latent;
    CHECK(e.total == doctest::Approx(recomposed).epsilon(1e-12));
  }
}

TEST_CASE("toy pipeline: latent recovery improves and beats the prior-scale baseline") {
  auto data = synth_gaussians(8, 4096, 13);
  GanTrainConfig gcfg;
  gcfg.iterations = 2500;
  gcfg.batch = 64;
  gcfg.latent_dim = 2;
  gcfg.seed = 13;
  gcfg.opt.lr = 1e-3;
  auto gan = train_gan(data, gcfg, mlp_generator_spec(2, 2, 32, 2), mlp_discriminator_spec(2, 32, 2));

  InverterTrainConfig icfg;
  icfg.iterations = 20000;
  icfg.batch = 64;
  icfg.seed = 29;
  icfg.opt.lr = 3e-3;
  icfg.log_every = 10;
  auto inv = train_inverter(gan.generator, icfg);

  // exponentially smoothed latent loss: iteration 10k mark below iteration 100
  auto smooth_at = [&](int64_t it) {
    double s = -1;
    for (const auto& e : inv.log) {
      if (e.iter > it) break;
      s = s < 0 ? e.latent : 0.9 * s + 0.1 * e.latent;
    }
    return s;
  };
  CHECK(smooth_at(10000) < smooth_at(100));

  // fresh-z recovery against the prior scale E||z|| (exact for d=2:
  // sqrt(pi/2))
  Rng rng(55);
  Tensor<float> z = rng.standard_normal<float>({1000, 2});
  Tensor<float> zh = inv.inverter.net.forward(gan.generator.net.forward(z));
  double mean_err = 0;
  for (int64_t i = 0; i < 1000; ++i)
    mean_err += std::hypot(double(z[2 * i]) - double(zh[2 * i]),
                           double(z[2 * i + 1]) - double(zh[2 * i + 1]));
  mean_err /= 1000;
  const double prior_norm = std::sqrt(M_PI / 2.0);
  // regression threshold frozen from the first calibrated run of this seed;
  // a 2d-latent toy generator is far from injective, so recovery saturates
  // well above the level a full-size image generator reaches
  CHECK(mean_err < 0.55 * prior_norm);
}
