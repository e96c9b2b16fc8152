#include "ganinv/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <iomanip>

#include "ganinv/attacks.hpp"
#include "ganinv/data.hpp"
#include "ganinv/defense_eval.hpp"
#include "ganinv/gan_train.hpp"
#include "ganinv/inverter_train.hpp"
#include "ganinv/projection.hpp"
#include "ganinv/tensor_io.hpp"
#include "ganinv/theorem.hpp"

namespace ganinv {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ExperimentError(kStageFailure, "cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json read_json(const fs::path& path, int missing_code = kMissingDependency) {
  std::ifstream is(path);
  if (!is) throw ExperimentError(missing_code, "missing artifact: " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ExperimentError(kStageFailure, "corrupt JSON at " + path.string() + ": " + e.what());
  }
}

uint64_t config_hash(const json& cfg) { return fnv1a(cfg.dump()); }

std::string now_string() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

// --- shared artifact access -------------------------------------------------

struct DataPaths {
  fs::path train_images, train_labels, test_images, test_labels;
};

DataPaths data_paths(const fs::path& dir) {
  return {dir / "data" / "train-images-idx3-ubyte", dir / "data" / "train-labels-idx1-ubyte",
          dir / "data" / "test-images-idx3-ubyte", dir / "data" / "test-labels-idx1-ubyte"};
}

LabeledImageSet load_split(const fs::path& dir, const std::string& split) {
  const auto p = data_paths(dir);
  const bool train = split == "train";
  if (!fs::exists(train ? p.train_images : p.test_images))
    throw ExperimentError(kMissingDependency, "dataset not present; run the synth-data stage");
  auto set = load_idx(train ? p.train_images : p.test_images,
                      train ? p.train_labels : p.test_labels);
  set.split = split;
  return set;
}

Model load_model(const fs::path& dir, const std::string& name) {
  const fs::path path = dir / "models" / (name + ".ckpt");
  if (!fs::exists(path))
    throw ExperimentError(kMissingDependency, "missing checkpoint: " + path.string());
  return load_checkpoint(path);
}

ProjectionConfig projection_from_json(const json& cfg, uint64_t seed) {
  ProjectionConfig pc;
  pc.steps = cfg.value("steps", int64_t(1000));
  pc.alpha = cfg.value("alpha", 0.1);
  pc.restarts = cfg.value("restarts", int64_t(1));
  pc.init = cfg.value("init", std::string("encoder")) == "random"
                ? ProjectionConfig::Init::Random
                : ProjectionConfig::Init::Encoder;
  pc.seed = seed;
  return pc;
}

std::vector<int64_t> head_indices(int64_t n) {
  std::vector<int64_t> idx(n);
  for (int64_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

std::vector<int> labels_tensor_to_vec(const Tensor<float>& t) {
  std::vector<int> out(t.size());
  for (int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<int>(std::lround(t[i]));
  return out;
}

Tensor<float> labels_vec_to_tensor(const std::vector<int>& v) {
  Tensor<float> t(Shape{static_cast<int64_t>(v.size())});
  for (size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

// --- stages ------------------------------------------------------------------

std::vector<std::string> stage_synth_data(const fs::path& dir, const json& cfg, uint64_t seed) {
  const auto p = data_paths(dir);
  fs::create_directories(dir / "data");
  if (cfg.contains("idx")) {
    // external IDX pair supplied by path: ingest and re-emit normalized copies
    const auto& ix = cfg.at("idx");
    auto train = load_idx(ix.at("train_images").get<std::string>(),
                          ix.at("train_labels").get<std::string>());
    auto test =
        load_idx(ix.at("test_images").get<std::string>(), ix.at("test_labels").get<std::string>());
    save_idx(train, p.train_images, p.train_labels);
    save_idx(test, p.test_images, p.test_labels);
  } else {
    const GlyphStyle style =
        cfg.value("style", std::string("digits")) == "shapes" ? GlyphStyle::Shapes
                                                              : GlyphStyle::Digits;
    const int64_t n_train = cfg.value("n_train", int64_t(20000));
    const int64_t n_test = cfg.value("n_test", int64_t(2000));
    auto train = synth_glyphs(style, n_train, mix_seed(seed, 0xda1), "train");
    auto test = synth_glyphs(style, n_test, mix_seed(seed, 0xda2), "test");
    save_idx(train, p.train_images, p.train_labels);
    save_idx(test, p.test_images, p.test_labels);
  }
  json meta;
  meta["config"] = cfg;
  write_json(dir / "data" / "meta.json", meta);
  return {"data/train-images-idx3-ubyte", "data/train-labels-idx1-ubyte",
          "data/test-images-idx3-ubyte", "data/test-labels-idx1-ubyte", "data/meta.json"};
}

std::vector<std::string> stage_pretrain(const fs::path& dir, const json& cfg, uint64_t seed) {
  auto train = load_split(dir, "train");
  auto test = load_split(dir, "test");
  const int64_t h = train.images.dim(1), w = train.images.dim(2), c = train.images.dim(3);

  const json gan_cfg = cfg.value("gan", json::object());
  GanTrainConfig gcfg;
  gcfg.iterations = gan_cfg.value("iterations", int64_t(20000));
  gcfg.batch = gan_cfg.value("batch", int64_t(64));
  gcfg.latent_dim = gan_cfg.value("latent_dim", int64_t(64));
  gcfg.opt.lr = gan_cfg.value("lr", 2e-4);
  gcfg.seed = mix_seed(seed, 0x6a);
  const int64_t base = gan_cfg.value("base_channels", int64_t(32));

  auto gan = train_gan(train, gcfg, dcgan_generator_spec(gcfg.latent_dim, h, w, c, base),
                       dcgan_discriminator_spec(h, w, c, base));
  gan.generator.meta.config_hash = config_hash(cfg);
  gan.discriminator.meta.config_hash = config_hash(cfg);

  const json clf_cfg = cfg.value("classifier", json::object());
  ClassifierTrainConfig ccfg;
  ccfg.iterations = clf_cfg.value("iterations", int64_t(3000));
  ccfg.batch = clf_cfg.value("batch", int64_t(64));
  ccfg.opt.lr = clf_cfg.value("lr", 1e-3);
  ccfg.seed = mix_seed(seed, 0xc1);
  auto clf = train_classifier(
      train, ccfg,
      conv_classifier_spec(h, w, c, train.num_classes, clf_cfg.value("base_channels", int64_t(16)),
                           clf_cfg.value("feature_dim", int64_t(64))));
  clf.classifier.meta.config_hash = config_hash(cfg);

  fs::create_directories(dir / "models");
  save_checkpoint(gan.generator, dir / "models" / "generator.ckpt");
  save_checkpoint(gan.discriminator, dir / "models" / "gan_discriminator.ckpt");
  save_checkpoint(clf.classifier, dir / "models" / "classifier.ckpt");

  json glog = json::array();
  for (const auto& e : gan.log)
    glog.push_back({{"iter", e.iter}, {"loss_d", e.loss_d}, {"loss_g", e.loss_g}});
  write_json(dir / "logs" / "gan_log.json", glog);
  json clog = json::array();
  for (const auto& e : clf.log) clog.push_back({{"iter", e.iter}, {"loss", e.loss}});
  write_json(dir / "logs" / "classifier_log.json", clog);

  json rep;
  rep["clean_test_accuracy"] = classification_accuracy(clf.classifier, test.images, test.labels);
  {
    Rng rng(mix_seed(seed, 0xe9));
    Tensor<float> z = rng.standard_normal<float>({512, gcfg.latent_dim});
    Tensor<float> fake = forward_chunked(gan.generator.net, z, 256);
    const double m_real =
        mean_discriminator_output(gan.discriminator, test.images.slice_rows(0, 512));
    const double m_fake = mean_discriminator_output(gan.discriminator, fake);
    rep["discriminator_mean_real"] = m_real;
    rep["discriminator_mean_fake"] = m_fake;
  }
  write_json(dir / "reports" / "pretrain.json", rep);
  return {"models/generator.ckpt", "models/gan_discriminator.ckpt", "models/classifier.ckpt",
          "logs/gan_log.json", "logs/classifier_log.json", "reports/pretrain.json"};
}

std::vector<std::string> stage_train_inverter(const fs::path& dir, const json& cfg,
                                              uint64_t seed) {
  auto generator = load_model(dir, "generator");
  InverterTrainConfig icfg;
  icfg.iterations = cfg.value("iterations", int64_t(20000));
  icfg.batch = cfg.value("batch", int64_t(64));
  icfg.lambda_adv = cfg.value("lambda_adv", 1.0);
  icfg.lambda_sem = cfg.value("lambda_sem", 100.0);
  icfg.lambda_lat = cfg.value("lambda_lat", 1.0);
  icfg.eta = cfg.value("eta", -1.0);
  icfg.disable_adv = cfg.value("disable_adv", false);
  icfg.opt.lr = cfg.value("lr", 2e-4);
  icfg.seed = mix_seed(seed, cfg.value("seed_stream", int64_t(0x1f)));

  auto res = train_inverter(generator, icfg);
  res.inverter.meta.config_hash = config_hash(cfg);

  const std::string tag = cfg.value("tag", std::string(""));
  save_checkpoint(res.inverter, dir / "models" / ("inverter" + tag + ".ckpt"));
  save_checkpoint(res.discriminator, dir / "models" / ("inversion_discriminator" + tag + ".ckpt"));
  json ilog = json::array();
  for (const auto& e : res.log)
    ilog.push_back({{"iter", e.iter},
                    {"loss_d", e.loss_d},
                    {"adv", e.adv},
                    {"semantic", e.semantic},
                    {"latent", e.latent},
                    {"total", e.total}});
  write_json(dir / "logs" / ("inverter_log" + tag + ".json"), ilog);
  return {"models/inverter" + tag + ".ckpt", "models/inversion_discriminator" + tag + ".ckpt",
          "logs/inverter_log" + tag + ".json"};
}

std::vector<std::string> stage_attack(const fs::path& dir, const json& cfg, uint64_t seed) {
  auto test = load_split(dir, "test");
  auto classifier = load_model(dir, "classifier");

  const std::string family = cfg.at("family").get<std::string>();
  const int64_t n = std::min<int64_t>(cfg.value("n_samples", int64_t(1000)), test.count());
  auto sub = test.subset(head_indices(n));

  AttackSpec spec;
  spec.family = attack_family_from_name(family);
  spec.eps = cfg.value("eps", 0.3);
  spec.cw_binary_steps = cfg.value("cw_binary_steps", 6);
  spec.cw_lr = cfg.value("cw_lr", 0.2);
  spec.cw_iters = cfg.value("cw_iters", 100);
  spec.bpda_steps = cfg.value("bpda_steps", 50);
  spec.bpda_step_frac = cfg.value("bpda_step_frac", 0.1);
  spec.seed = mix_seed(seed, 0xa1);
  spec.validate();

  Tensor<float> x_adv;
  json summary;
  summary["family"] = family;
  summary["eps"] = spec.eps;
  summary["n_samples"] = n;

  if (spec.family == AttackFamily::Fgsm) {
    x_adv = fgsm(classifier_loss_grad(classifier), sub.images, sub.labels, spec.eps);
  } else if (spec.family == AttackFamily::CwL2) {
    auto res = cw_l2(classifier, sub.images, sub.labels, spec);
    x_adv = std::move(res.x_adv);
    int64_t flips = 0;
    double mean_l2 = 0;
    for (int64_t i = 0; i < n; ++i) {
      flips += res.success[i];
      mean_l2 += res.l2[i];
    }
    summary["success_rate"] = double(flips) / double(n);
    summary["mean_l2"] = mean_l2 / double(n);
  } else if (spec.family == AttackFamily::Reparam) {
    auto generator = load_model(dir, "generator");
    auto inverter = load_model(dir, "inverter");
    x_adv = reparam_attack(classifier, generator, inverter, sub.images, sub.labels, spec);
  } else if (spec.family == AttackFamily::Bpda) {
    auto generator = load_model(dir, "generator");
    auto inverter = load_model(dir, "inverter");
    // the attacker's forward defense may use a cheaper schedule than the
    // deployed one; the deployed schedule is what the defend stage uses
    auto pc = projection_from_json(cfg.value("attack_defense", json::object()),
                                   mix_seed(seed, 0xbd));
    if (cfg.contains("attack_defense") == false) pc.steps = 200;
    x_adv = bpda_attack(classifier, make_defense_fn(generator, inverter, pc), sub.images,
                        sub.labels, spec);
  } else {
    throw ExperimentError(kConfigError,
                          "blackbox attacks run through the dedicated blackbox stage");
  }

  if (spec.family != AttackFamily::CwL2 && !satisfies_linf_budget(sub.images, x_adv, spec.eps))
    throw ExperimentError(kStageFailure, "attack emitted out-of-budget examples");

  summary["undefended_accuracy"] = classification_accuracy(classifier, x_adv, sub.labels);

  fs::create_directories(dir / "attacks");
  Tensor<float> y = labels_vec_to_tensor(sub.labels);
  save_tensor_archive(dir / "attacks" / (family + ".bin"),
                      {{"x", &sub.images}, {"x_adv", &x_adv}, {"y", &y}}, summary.dump());
  write_json(dir / "attacks" / (family + ".json"), summary);
  return {"attacks/" + family + ".bin", "attacks/" + family + ".json"};
}

std::vector<std::string> stage_defend(const fs::path& dir, const json& cfg, uint64_t seed) {
  auto classifier = load_model(dir, "classifier");
  auto generator = load_model(dir, "generator");
  auto inverter = load_model(dir, "inverter");
  auto pc = projection_from_json(cfg, mix_seed(seed, 0xde));

  const std::string set = cfg.value("set", std::string("clean"));
  Tensor<float> x;
  std::vector<int> labels;
  if (set == "clean") {
    auto test = load_split(dir, "test");
    const int64_t n = std::min<int64_t>(cfg.value("n_samples", int64_t(1000)), test.count());
    auto sub = test.subset(head_indices(n));
    x = std::move(sub.images);
    labels = std::move(sub.labels);
  } else {
    auto archive = load_tensor_archive(dir / "attacks" / (set + ".bin"));
    x = std::move(archive.tensors.at("x_adv"));
    labels = labels_tensor_to_vec(archive.tensors.at("y"));
  }

  Tensor<float> x_proj = purify(generator, inverter, x, pc, 250);
  const auto pred = argmax_rows(forward_chunked(classifier.net, x_proj, 250));
  int64_t hits = 0;
  for (size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];

  json rep;
  rep["set"] = set;
  rep["steps"] = pc.steps;
  rep["alpha"] = pc.alpha;
  rep["n_samples"] = static_cast<int64_t>(labels.size());
  rep["defended_accuracy"] = double(hits) / double(labels.size());
  rep["undefended_accuracy"] = classification_accuracy(classifier, x, labels);

  fs::create_directories(dir / "defense");
  Tensor<float> y = labels_vec_to_tensor(labels);
  save_tensor_archive(dir / "defense" / (set + "_proj.bin"),
                      {{"x", &x}, {"x_proj", &x_proj}, {"y", &y}}, rep.dump());
  write_json(dir / "defense" / (set + ".json"), rep);
  return {"defense/" + set + "_proj.bin", "defense/" + set + ".json"};
}

std::vector<std::string> stage_detect(const fs::path& dir, const json& cfg, uint64_t) {
  auto classifier = load_model(dir, "classifier");
  const bool image_space = cfg.value("image_space", false);

  auto scores_of = [&](const std::string& set) {
    auto ar = load_tensor_archive(dir / "defense" / (set + "_proj.bin"));
    return detection_scores(classifier, ar.tensors.at("x"), ar.tensors.at("x_proj"), image_space);
  };
  const auto clean = scores_of("clean");

  fs::create_directories(dir / "detect");
  {
    std::ofstream cs(dir / "detect" / "scores_clean.csv");
    cs << "score\n";
    for (double v : clean) cs << std::setprecision(17) << v << "\n";
  }

  json rep;
  rep["image_space"] = image_space;
  json aucs = json::object();
  for (const auto& fam : cfg.value("families", std::vector<std::string>{"fgsm"})) {
    const auto attacked = scores_of(fam);
    aucs[fam] = detection_auc(clean, attacked);
    std::ofstream fs_scores(dir / "detect" / ("scores_" + fam + ".csv"));
    fs_scores << "score\n";
    for (double v : attacked) fs_scores << std::setprecision(17) << v << "\n";
  }
  rep["auc"] = aucs;
  write_json(dir / "detect" / "auc.json", rep);
  return {"detect/auc.json"};
}

std::vector<std::string> stage_metrics(const fs::path& dir, const json& cfg, uint64_t seed) {
  auto classifier = load_model(dir, "classifier");
  auto generator = load_model(dir, "generator");
  auto inverter = load_model(dir, "inverter");

  const int64_t n = cfg.value("n_eval", int64_t(1000));
  Rng rng(mix_seed(seed, 0x3e));
  Tensor<float> z = rng.standard_normal<float>({n, generator.spec.latent_dim});
  Tensor<float> originals = forward_chunked(generator.net, z, 250);
  Tensor<float> z_hat = forward_chunked(inverter.net, originals, 250);
  Tensor<float> recon = forward_chunked(generator.net, z_hat, 250);
  const auto labels = argmax_rows(forward_chunked(classifier.net, originals, 250));

  auto rep = eval_metrics(originals, recon, labels, classifier);

  // inversion quality on the same fresh latents
  double mean_latent_err = 0;
  {
    const auto errs = inversion_errors(composed_inversion_map(inverter, generator), z);
    for (double e : errs) mean_latent_err += e;
    mean_latent_err /= double(errs.size());
  }

  json j;
  j["n_eval"] = n;
  j["mse_mean"] = rep.mse_mean;
  j["mse_std"] = rep.mse_std;
  j["accuracy"] = rep.accuracy;
  j["proxy_is"] = rep.proxy_is;
  j["proxy_fid"] = rep.proxy_fid;
  j["fid_eigen_clipped"] = rep.fid_eigen_clipped;
  j["mean_latent_recovery"] = mean_latent_err;
  j["latent_dim"] = generator.spec.latent_dim;
  j["prior_norm_scale"] = std::sqrt(double(generator.spec.latent_dim));
  write_json(dir / "reports" / "metrics.json", j);
  return {"reports/metrics.json"};
}

std::vector<std::string> stage_validate_theorem(const fs::path& dir, const json& cfg,
                                                uint64_t seed) {
  auto generator = load_model(dir, "generator");
  auto inverter = load_model(dir, "inverter");
  TheoremConfig tcfg;
  tcfg.n_train_latents = cfg.value("n_train_latents", int64_t(1000));
  tcfg.n_lipschitz_pairs = cfg.value("n_lipschitz_pairs", int64_t(2000));
  tcfg.m_fresh = cfg.value("m_fresh", int64_t(10000));
  if (cfg.contains("eps_prime_scale"))
    tcfg.eps_prime_scale = cfg.at("eps_prime_scale").get<std::vector<double>>();
  tcfg.seed = mix_seed(seed, 0x7e3);

  auto rep = validate_theorem(inverter, generator, tcfg);
  json j;
  j["n"] = rep.n;
  j["d"] = rep.d;
  j["epsilon"] = rep.epsilon;
  j["lipschitz_hat"] = rep.lipschitz_hat;
  j["m"] = rep.m;
  j["rows"] = json::array();
  for (const auto& r : rep.rows)
    j["rows"].push_back({{"eps_prime", r.eps_prime},
                         {"p_hat", r.p_hat},
                         {"ci_low", r.ci_low},
                         {"ci_high", r.ci_high},
                         {"bound", r.bound},
                         {"bound_2l", r.bound_2l},
                         {"regime_flagged", r.regime_flagged},
                         {"check_applicable", r.check_applicable},
                         {"check_passed", r.check_passed}});
  j["any_violation"] = rep.any_violation();
  j["any_flagged"] = rep.any_flagged();
  write_json(dir / "reports" / "theorem.json", j);
  return {"reports/theorem.json"};
}

std::vector<std::string> stage_ablation(const fs::path& dir, const json& cfg, uint64_t seed) {
  // toy-scale by default: the directional claim is checked per seed on a
  // fast 2-d pipeline
  const auto seeds = cfg.value("seeds", std::vector<int64_t>{1, 2, 3});
  const int64_t gan_iters = cfg.value("gan_iterations", int64_t(2500));
  const int64_t inv_iters = cfg.value("iterations", int64_t(6000));
  const int64_t n_eval = cfg.value("n_eval", int64_t(2000));

  json runs = json::array();
  int holds = 0;
  for (int64_t s : seeds) {
    auto data = synth_gaussians(8, 4096, mix_seed(seed, 0xab0 + s));
    GanTrainConfig gcfg;
    gcfg.iterations = gan_iters;
    gcfg.batch = 64;
    gcfg.latent_dim = 2;
    gcfg.seed = mix_seed(seed, 0xab1 + s);
    gcfg.opt.lr = 1e-3;
    auto gan = train_gan(data, gcfg, mlp_generator_spec(2, 2, 32, 2),
                         mlp_discriminator_spec(2, 32, 2));
    ClassifierTrainConfig ccfg;
    ccfg.iterations = 1200;
    ccfg.seed = mix_seed(seed, 0xab2 + s);
    auto clf = train_classifier(data, ccfg, mlp_classifier_spec(2, 8, 32));

    InverterTrainConfig icfg;
    icfg.iterations = inv_iters;
    icfg.batch = 64;
    icfg.opt.lr = 3e-3;
    icfg.seed = mix_seed(seed, 0xab3 + s);
    auto pair = ablation_report(gan.generator, clf.classifier, icfg, n_eval,
                                mix_seed(seed, 0xab4 + s));
    holds += pair.direction_holds;
    runs.push_back({{"seed", s},
                    {"full", {{"mse", pair.full.mse_mean}, {"fid", pair.full.proxy_fid},
                              {"accuracy", pair.full.accuracy}}},
                    {"ablated", {{"mse", pair.ablated.mse_mean}, {"fid", pair.ablated.proxy_fid},
                                 {"accuracy", pair.ablated.accuracy}}},
                    {"direction_holds", pair.direction_holds}});
  }
  json j;
  j["runs"] = runs;
  j["majority_direction_holds"] = holds * 2 > static_cast<int>(seeds.size());
  write_json(dir / "reports" / "ablation.json", j);
  return {"reports/ablation.json"};
}

std::vector<std::string> stage_tradeoff(const fs::path& dir, const json& cfg, uint64_t seed) {
  auto classifier = load_model(dir, "classifier");
  auto generator = load_model(dir, "generator");
  auto inverter = load_model(dir, "inverter");
  auto test = load_split(dir, "test");

  const auto budgets = cfg.value("budgets", std::vector<int64_t>{50, 200, 1000});
  const auto seeds = cfg.value("seeds", std::vector<int64_t>{1, 2, 3});
  const int64_t n = std::min<int64_t>(cfg.value("n_samples", int64_t(200)), test.count());
  const double alpha = cfg.value("alpha", 0.1);
  const int64_t random_restarts = cfg.value("restarts", int64_t(10));

  json runs = json::array();
  for (int64_t s : seeds) {
    Rng pick(mix_seed(seed, 0xf4 + s));
    std::vector<int64_t> idx(n);
    for (int64_t i = 0; i < n; ++i)
      idx[i] = static_cast<int64_t>(pick.integer(static_cast<uint64_t>(test.count())));
    auto sub = test.subset(idx);

    for (int64_t budget : budgets) {
      // encoder-initialized: R=1, T=budget
      ProjectionConfig pe;
      pe.init = ProjectionConfig::Init::Encoder;
      pe.steps = budget;
      pe.alpha = alpha;
      pe.seed = mix_seed(seed, 0xf5 + s);
      auto pred_e = defend_classify(classifier, generator, inverter, sub.images, pe, 200);

      // random restarts: R chains, T=budget/R each
      ProjectionConfig pr;
      pr.init = ProjectionConfig::Init::Random;
      pr.restarts = random_restarts;
      pr.steps = std::max<int64_t>(1, budget / random_restarts);
      pr.alpha = alpha;
      pr.seed = mix_seed(seed, 0xf6 + s);
      Tensor<float> proj = Tensor<float>(sub.images.shape());
      for (int64_t start = 0; start < n; start += 200) {
        const int64_t end = std::min(n, start + 200);
        auto bp = direct_invert_batch(generator, sub.images.slice_rows(start, end), pr);
        for (int64_t i = start; i < end; ++i)
          proj.set_row(i, bp.x_proj.slice_rows(i - start, i - start + 1));
      }
      auto pred_r = argmax_rows(forward_chunked(classifier.net, proj, 200));

      int64_t hit_e = 0, hit_r = 0;
      for (int64_t i = 0; i < n; ++i) {
        hit_e += pred_e[i] == sub.labels[i];
        hit_r += pred_r[i] == sub.labels[i];
      }
      runs.push_back({{"seed", s},
                      {"effective_iterations", budget},
                      {"encoder_accuracy", double(hit_e) / double(n)},
                      {"random_accuracy", double(hit_r) / double(n)},
                      {"random_restarts", random_restarts},
                      {"random_steps_per_restart", pr.steps}});
    }
  }
  json j;
  j["n_samples"] = n;
  j["runs"] = runs;
  write_json(dir / "reports" / "tradeoff.json", j);
  return {"reports/tradeoff.json"};
}

std::vector<std::string> stage_blackbox(const fs::path& dir, const json& cfg, uint64_t seed) {
  auto classifier = load_model(dir, "classifier");
  auto generator = load_model(dir, "generator");
  auto inverter = load_model(dir, "inverter");
  auto test = load_split(dir, "test");

  AttackSpec spec;
  spec.family = AttackFamily::Blackbox;
  spec.eps = cfg.value("eps", 0.3);
  spec.bb_rounds = cfg.value("rounds", 5);
  spec.bb_lambda = cfg.value("lambda", 0.1);
  spec.bb_train_iters = cfg.value("substitute_iterations", int64_t(600));
  spec.seed = mix_seed(seed, 0xbb);

  const int64_t n_seed = cfg.value("seed_count", int64_t(100));
  const int64_t n_eval = std::min<int64_t>(cfg.value("n_eval", int64_t(500)), test.count() - n_seed);
  auto seed_set = test.subset(head_indices(n_seed));
  std::vector<int64_t> eval_idx(n_eval);
  for (int64_t i = 0; i < n_eval; ++i) eval_idx[i] = n_seed + i;
  auto eval_set = test.subset(eval_idx);

  auto pc = projection_from_json(cfg.value("defense", json::object()), mix_seed(seed, 0xbd));

  // oracle A: the undefended classifier
  LabelOracle plain_oracle = [&classifier](const Tensor<float>& x) {
    return argmax_rows(forward_chunked(classifier.net, x, 250));
  };
  auto plain = blackbox_substitute(plain_oracle, seed_set.images, eval_set.images, spec);
  const double undefended_acc =
      classification_accuracy(classifier, plain.x_adv, eval_set.labels);

  // oracle B: the defended pipeline
  LabelOracle defended_oracle = [&](const Tensor<float>& x) {
    return defend_classify(classifier, generator, inverter, x, pc, 250);
  };
  AttackSpec spec_b = spec;
  spec_b.seed = mix_seed(seed, 0xbc);
  auto defended = blackbox_substitute(defended_oracle, seed_set.images, eval_set.images, spec_b);
  Tensor<float> def_proj = purify(generator, inverter, defended.x_adv, pc, 250);
  const auto def_pred = argmax_rows(forward_chunked(classifier.net, def_proj, 250));
  int64_t hits = 0;
  for (int64_t i = 0; i < n_eval; ++i) hits += def_pred[i] == eval_set.labels[i];
  const double defended_acc = double(hits) / double(n_eval);

  json j;
  j["eps"] = spec.eps;
  j["rounds"] = spec.bb_rounds;
  j["seed_count"] = n_seed;
  j["n_eval"] = n_eval;
  j["undefended_accuracy"] = undefended_acc;
  j["defended_accuracy"] = defended_acc;
  j["undefended_agreement"] = plain.agreement;
  j["defended_agreement"] = defended.agreement;
  j["undefended_oracle_queries"] = plain.oracle_queries;
  j["defended_oracle_queries"] = defended.oracle_queries;
  write_json(dir / "reports" / "blackbox.json", j);
  return {"reports/blackbox.json"};
}

}  // namespace

// defined in report.cpp
std::vector<std::string> emit_report(const fs::path& dir);

// --- schema -------------------------------------------------------------------

const std::vector<std::string>& Experiment::known_stages() {
  static const std::vector<std::string> kStages = {
      "synth-data", "pretrain", "train-inverter", "attack",   "defend",  "detect",
      "metrics",    "validate-theorem", "ablation", "tradeoff", "blackbox", "report"};
  return kStages;
}

std::vector<std::string> validate_experiment_config(const json& config) {
  std::vector<std::string> errors;
  if (!config.is_object()) {
    errors.push_back("config root must be an object");
    return errors;
  }
  if (!config.contains("seed") || !config.at("seed").is_number_integer())
    errors.push_back("'seed' (integer) is required");
  if (!config.contains("artifact_dir") || !config.at("artifact_dir").is_string())
    errors.push_back("'artifact_dir' (string) is required");
  if (!config.contains("stages") || !config.at("stages").is_array()) {
    errors.push_back("'stages' (array) is required");
    return errors;
  }
  const auto& known = Experiment::known_stages();
  size_t i = 0;
  for (const auto& s : config.at("stages")) {
    const std::string where = "stages[" + std::to_string(i++) + "]";
    if (!s.is_object()) {
      errors.push_back(where + " must be an object");
      continue;
    }
    if (!s.contains("stage") || !s.at("stage").is_string()) {
      errors.push_back(where + ".stage (string) is required");
      continue;
    }
    const std::string name = s.at("stage").get<std::string>();
    if (std::find(known.begin(), known.end(), name) == known.end())
      errors.push_back(where + ": unknown stage '" + name + "'");
    if (s.contains("config") && !s.at("config").is_object())
      errors.push_back(where + ".config must be an object");
    if (name == "attack") {
      const json c = s.value("config", json::object());
      if (!c.contains("family"))
        errors.push_back(where + ": attack stage requires config.family");
    }
  }
  return errors;
}

// --- runner -------------------------------------------------------------------

Experiment::Experiment(fs::path artifact_dir, uint64_t global_seed)
    : dir_(std::move(artifact_dir)), seed_(global_seed) {
  fs::create_directories(dir_);
}

json Experiment::manifest() const {
  const fs::path p = dir_ / "manifest.json";
  if (!fs::exists(p)) return json{{"entries", json::array()}};
  return read_json(p, kStageFailure);
}

bool Experiment::up_to_date(const std::string& stage, uint64_t hash) const {
  const json m = manifest();
  for (const auto& e : m.at("entries")) {
    if (e.at("stage") == stage && e.at("config_hash") == hash_hex(hash)) {
      bool all = true;
      for (const auto& out : e.at("outputs"))
        all = all && fs::exists(dir_ / out.get<std::string>());
      if (all) return true;
    }
  }
  return false;
}

void Experiment::record(const std::string& stage, uint64_t hash,
                        const std::vector<std::string>& outputs) {
  json m = manifest();
  json entries = json::array();
  for (const auto& e : m.at("entries"))
    if (e.at("stage") != stage) entries.push_back(e);
  entries.push_back({{"stage", stage},
                     {"config_hash", hash_hex(hash)},
                     {"outputs", outputs},
                     {"timestamp", now_string()}});
  m["entries"] = entries;
  write_json(dir_ / "manifest.json", m);
}

bool Experiment::run_stage(const std::string& stage, json cfg) {
  if (!cfg.is_object()) cfg = json::object();
  // the stage key for attack/defend/train-inverter variants includes the
  // distinguishing field so several instances can coexist in one manifest
  std::string key = stage;
  if (stage == "attack") key += ":" + cfg.value("family", std::string("?"));
  if (stage == "defend") key += ":" + cfg.value("set", std::string("clean"));
  if (stage == "train-inverter") key += cfg.value("tag", std::string(""));

  const uint64_t hash = config_hash(cfg);
  if (up_to_date(key, hash)) return false;

  std::vector<std::string> outputs;
  if (stage == "synth-data") outputs = stage_synth_data(dir_, cfg, seed_);
  else if (stage == "pretrain") outputs = stage_pretrain(dir_, cfg, seed_);
  else if (stage == "train-inverter") outputs = stage_train_inverter(dir_, cfg, seed_);
  else if (stage == "attack") outputs = stage_attack(dir_, cfg, seed_);
  else if (stage == "defend") outputs = stage_defend(dir_, cfg, seed_);
  else if (stage == "detect") outputs = stage_detect(dir_, cfg, seed_);
  else if (stage == "metrics") outputs = stage_metrics(dir_, cfg, seed_);
  else if (stage == "validate-theorem") outputs = stage_validate_theorem(dir_, cfg, seed_);
  else if (stage == "ablation") outputs = stage_ablation(dir_, cfg, seed_);
  else if (stage == "tradeoff") outputs = stage_tradeoff(dir_, cfg, seed_);
  else if (stage == "blackbox") outputs = stage_blackbox(dir_, cfg, seed_);
  else if (stage == "report") outputs = emit_report(dir_);
  else throw ExperimentError(kConfigError, "unknown stage: " + stage);

  record(key, hash, outputs);
  return true;
}

DirLock::DirLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw ExperimentError(kLocked, "artifact directory is locked by another runner: " +
                                       path_.string());
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

int Experiment::run_config(json config, uint64_t seed_override, bool has_override) {
  const auto errors = validate_experiment_config(config);
  if (!errors.empty()) {
    for (const auto& e : errors) fprintf(stderr, "config error: %s\n", e.c_str());
    return kConfigError;
  }
  const uint64_t seed =
      has_override ? seed_override : config.at("seed").get<uint64_t>();
  fs::path dir = config.at("artifact_dir").get<std::string>();
  if (const char* env = std::getenv("GANINV_ARTIFACT_DIR")) dir = env;

  try {
    DirLock lock(dir);
    Experiment exp(dir, seed);
    for (const auto& s : config.at("stages")) {
      const std::string name = s.at("stage").get<std::string>();
      const json cfg = s.value("config", json::object());
      const bool ran = exp.run_stage(name, cfg);
      fprintf(stderr, "[stage] %-18s %s\n", name.c_str(), ran ? "done" : "skipped (up to date)");
    }
  } catch (const ExperimentError& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return e.code;
  } catch (const std::exception& e) {
    fprintf(stderr, "stage failure: %s\n", e.what());
    return kStageFailure;
  }
  return kOk;
}

}  // namespace ganinv
