#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ganinv/models.hpp"
#include "ganinv/rng.hpp"

using namespace ganinv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "ganinv_test_models";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("generator spec validates and produces tanh-range output") {
  auto spec = dcgan_generator_spec(16, 28, 28, 1, 16);
  spec.validate();
  auto g = build_model(spec, 7);
  Rng rng(1);
  Tensor<float> z(Shape{4, 16});
  rng.fill_normal(z);
  auto x = g.net.forward(z);
  REQUIRE(x.shape() == Shape{4, 28, 28, 1});
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(x[i] <= 1.0f);
    CHECK(x[i] >= -1.0f);
  }
}

TEST_CASE("mirror inverter maps image back to latent shape for any generator spec") {
  for (int64_t d : {8, 16, 64}) {
    auto gen = dcgan_generator_spec(d, 28, 28, 1, 16);
    auto inv = mirror_inverter_spec(gen);
    CHECK(inv.role == Role::Inverter);
    CHECK(inv.latent_dim == d);
    inv.validate();
    auto g = build_model(gen, 3);
    auto i = build_model(inv, 4);
    Rng rng(5);
    Tensor<float> z(Shape{2, d});
    rng.fill_normal(z);
    auto x = g.net.forward(z);
    auto zhat = i.net.forward(x);
    CHECK(zhat.shape() == Shape{2, d});
    // latents are unbounded: no squashing layer at the end
    CHECK(inv.layers.back().kind != "act");
  }
  // mlp generators mirror too
  auto gen2 = mlp_generator_spec(2, 2, 16, 2);
  auto inv2 = mirror_inverter_spec(gen2);
  inv2.validate();
  auto g2 = build_model(gen2, 1);
  auto i2 = build_model(inv2, 2);
  Tensor<float> z2(Shape{3, 2});
  Rng rng(9);
  rng.fill_normal(z2);
  CHECK(i2.net.forward(g2.net.forward(z2)).shape() == Shape{3, 2});
}

TEST_CASE("spec error reports the offending layer") {
  auto spec = dcgan_generator_spec(8, 28, 28, 1, 16);
  spec.layers[3].target = {7, 7, 31};  // reshape no longer matches the dense output
  bool threw = false;
  try {
    spec.validate();
  } catch (const SpecError& e) {
    threw = true;
    CHECK(e.layer == 3);
  }
  CHECK(threw);

  NetworkSpec bad = spec;
  bad.layers.clear();
  CHECK_THROWS_AS(bad.validate(), SpecError);
}

TEST_CASE("spec json round trip preserves the hash") {
  auto spec = dcgan_generator_spec(16, 28, 28, 1, 32);
  auto j = spec.to_json();
  auto back = NetworkSpec::from_json(j);
  CHECK(spec_hash(spec) == spec_hash(back));
  CHECK(spec.canonical_string() == back.canonical_string());
}

TEST_CASE("same spec and seed build identical parameters") {
  auto spec = conv_classifier_spec(28, 28, 1, 10, 8, 16);
  auto a = build_model(spec, 11);
  auto b = build_model(spec, 11);
  auto pa = a.net.named_params(), pb = b.net.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].value->size(); ++j)
      CHECK(pa[i].value->vec()[j] == pb[i].value->vec()[j]);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto spec = dcgan_generator_spec(8, 28, 28, 1, 16);
  auto m = build_model(spec, 21);
  m.meta.seed = 21;
  m.meta.config_hash = 0xabcd;
  const auto path = temp_dir() / "gen.ckpt";
  save_checkpoint(m, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.meta.seed == 21);
  CHECK(loaded.meta.config_hash == 0xabcd);
  auto pa = m.net.named_params(), pb = loaded.net.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].name == pb[i].name);
    for (int64_t j = 0; j < pa[i].value->size(); ++j)
      CHECK(pa[i].value->vec()[j] == pb[i].value->vec()[j]);
  }
}

TEST_CASE("loading rejects a mismatched spec") {
  auto spec = dcgan_generator_spec(8, 28, 28, 1, 16);
  auto m = build_model(spec, 2);
  const auto path = temp_dir() / "gen8.ckpt";
  save_checkpoint(m, path);
  auto other = dcgan_generator_spec(16, 28, 28, 1, 16);  // wrong latent_dim
  CHECK_THROWS_AS(load_checkpoint(path, &other), SpecMismatchError);
  CHECK_NOTHROW(load_checkpoint(path, &spec));
}

TEST_CASE("truncated archive raises an integrity error, no partial model") {
  auto spec = mlp_generator_spec(4, 2, 8, 1);
  auto m = build_model(spec, 5);
  const auto path = temp_dir() / "trunc.ckpt";
  save_checkpoint(m, path);
  // chop off the last 40 bytes of payload
  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 40);
  CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);

  // corrupt one payload byte: crc must catch it
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-8, std::ios::end);
    char c = 0x5a;
    f.write(&c, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
}

TEST_CASE("classifier features compose exactly to the logits") {
  auto spec = conv_classifier_spec(28, 28, 1, 10, 8, 16);
  auto clf = build_model(spec, 31);
  Rng rng(3);
  Tensor<float> x(Shape{5, 28, 28, 1});
  rng.fill_normal(x, 0.0, 0.5);
  auto phi = classifier_features(clf, x);
  CHECK(phi.shape() == Shape{5, 16});
  auto logits_direct = clf.net.forward(x);
  auto logits_composed = classifier_head(clf, phi);
  REQUIRE(logits_direct.size() == logits_composed.size());
  for (int64_t i = 0; i < logits_direct.size(); ++i)
    CHECK(logits_direct[i] == logits_composed[i]);

  // identical inputs give identical features
  auto phi2 = classifier_features(clf, x);
  for (int64_t i = 0; i < phi.size(); ++i) CHECK(phi[i] == phi2[i]);
}

TEST_CASE("two-layer classifier on 2d toy input matches hand-rolled forward") {
  // dense(2->2, lrelu) then dense(2->2); weights chosen by hand
  NetworkSpec spec = mlp_classifier_spec(2, 2, 2);
  auto m = build_model(spec, 0);
  auto params = m.net.named_params();
  // layer1: w = [[1,-1],[2,0]], b = [0.1, -0.2]
  params[0].value->vec() = {1, -1, 2, 0};
  params[1].value->vec() = {0.1f, -0.2f};
  // head: w = [[1,0],[0,1]], b = [0,0]
  params[2].value->vec() = {1, 0, 0, 1};
  params[3].value->vec() = {0, 0};

  Tensor<float> x(Shape{1, 1, 1, 2}, {0.5f, -0.5f});
  auto phi = classifier_features(m, x);
  // pre-activation: [0.5*1 + (-0.5)*2 + 0.1, 0.5*(-1) + 0 - 0.2] = [-0.4, -0.7]
  // lrelu(0.2): [-0.08, -0.14]
  CHECK(phi[0] == doctest::Approx(-0.08f));
  CHECK(phi[1] == doctest::Approx(-0.14f));
  auto logits = m.net.forward(x);
  CHECK(logits[0] == doctest::Approx(-0.08f));
  CHECK(logits[1] == doctest::Approx(-0.14f));
}
