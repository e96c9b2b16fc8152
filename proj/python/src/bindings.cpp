// Python bindings for the main operations: model construction and
// checkpoints, datasets, training, projection, attacks, defense evaluation,
// and the inversion-guarantee report.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "ganinv/attacks.hpp"
#include "ganinv/data.hpp"
#include "ganinv/defense_eval.hpp"
#include "ganinv/experiment.hpp"
#include "ganinv/gan_train.hpp"
#include "ganinv/inverter_train.hpp"
#include "ganinv/projection.hpp"
#include "ganinv/theorem.hpp"

namespace py = pybind11;
using namespace ganinv;
using nlohmann::json;

namespace {

Tensor<float> tensor_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.ndim());
  for (int i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor<float>(std::move(shape), std::move(data));
}

py::array_t<float> numpy_from_tensor(const Tensor<float>& t) {
  std::vector<ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

NetworkSpec spec_from_json_str(const std::string& s) {
  return NetworkSpec::from_json(json::parse(s));
}

ProjectionConfig projection_config(int64_t steps, double alpha, int64_t restarts,
                                   const std::string& init, uint64_t seed) {
  ProjectionConfig pc;
  pc.steps = steps;
  pc.alpha = alpha;
  pc.restarts = restarts;
  pc.init = init == "random" ? ProjectionConfig::Init::Random : ProjectionConfig::Init::Encoder;
  pc.seed = seed;
  pc.validate();
  return pc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GAN inversion, projection defense, and attack toolkit";

  py::register_exception<SpecError>(m, "SpecError");
  py::register_exception<IntegrityError>(m, "IntegrityError");
  py::register_exception<SpecMismatchError>(m, "SpecMismatchError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<AttackError>(m, "AttackError");
  py::register_exception<ProjectionError>(m, "ProjectionError");

  // --- models ---------------------------------------------------------------
  py::class_<Model>(m, "Model")
      .def_property_readonly("spec_json", [](const Model& mm) { return mm.spec.to_json().dump(); })
      .def_property_readonly("latent_dim", [](const Model& mm) { return mm.spec.latent_dim; })
      .def_property_readonly("role", [](const Model& mm) { return role_name(mm.spec.role); })
      .def_property_readonly("seed", [](const Model& mm) { return mm.meta.seed; })
      .def("forward",
           [](const Model& mm, py::array_t<float, py::array::c_style | py::array::forcecast> x) {
             return numpy_from_tensor(mm.net.forward(tensor_from_numpy(x)));
           },
           py::arg("x"))
      .def("param_count", [](Model& mm) { return mm.net.param_count(); });

  m.def("build_model",
        [](const std::string& spec_json, uint64_t seed) {
          return build_model(spec_from_json_str(spec_json), seed);
        },
        py::arg("spec_json"), py::arg("seed"));
  m.def("save_checkpoint",
        [](Model& model, const std::string& path) { save_checkpoint(model, path); },
        py::arg("model"), py::arg("path"));
  m.def("load_checkpoint",
        [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"));
  m.def("classifier_features",
        [](const Model& clf, py::array_t<float, py::array::c_style | py::array::forcecast> x) {
          return numpy_from_tensor(classifier_features(clf, tensor_from_numpy(x)));
        },
        py::arg("classifier"), py::arg("x"));

  m.def("dcgan_generator_spec",
        [](int64_t d, int64_t h, int64_t w, int64_t c, int64_t base) {
          return dcgan_generator_spec(d, h, w, c, base).to_json().dump();
        },
        py::arg("latent_dim"), py::arg("h"), py::arg("w"), py::arg("c"),
        py::arg("base_channels") = 64);
  m.def("dcgan_discriminator_spec",
        [](int64_t h, int64_t w, int64_t c, int64_t base) {
          return dcgan_discriminator_spec(h, w, c, base).to_json().dump();
        },
        py::arg("h"), py::arg("w"), py::arg("c"), py::arg("base_channels") = 64);
  m.def("conv_classifier_spec",
        [](int64_t h, int64_t w, int64_t c, int64_t classes, int64_t base, int64_t feat) {
          return conv_classifier_spec(h, w, c, classes, base, feat).to_json().dump();
        },
        py::arg("h"), py::arg("w"), py::arg("c"), py::arg("num_classes"),
        py::arg("base_channels") = 16, py::arg("feature_dim") = 64);
  m.def("mlp_generator_spec",
        [](int64_t d, int64_t data_dim, int64_t hidden, int64_t depth) {
          return mlp_generator_spec(d, data_dim, hidden, depth).to_json().dump();
        },
        py::arg("latent_dim"), py::arg("data_dim"), py::arg("hidden") = 32, py::arg("depth") = 2);
  m.def("mlp_discriminator_spec",
        [](int64_t data_dim, int64_t hidden, int64_t depth) {
          return mlp_discriminator_spec(data_dim, hidden, depth).to_json().dump();
        },
        py::arg("data_dim"), py::arg("hidden") = 32, py::arg("depth") = 2);
  m.def("mlp_classifier_spec",
        [](int64_t data_dim, int64_t classes, int64_t hidden) {
          return mlp_classifier_spec(data_dim, classes, hidden).to_json().dump();
        },
        py::arg("data_dim"), py::arg("num_classes"), py::arg("hidden") = 32);
  m.def("mirror_inverter_spec", [](const std::string& gen_spec) {
    return mirror_inverter_spec(spec_from_json_str(gen_spec)).to_json().dump();
  });

  // --- datasets ---------------------------------------------------------------
  py::class_<LabeledImageSet>(m, "LabeledImageSet")
      .def_property_readonly("images",
                             [](const LabeledImageSet& s) { return numpy_from_tensor(s.images); })
      .def_readonly("labels", &LabeledImageSet::labels)
      .def_readonly("num_classes", &LabeledImageSet::num_classes)
      .def_readonly("source", &LabeledImageSet::source)
      .def("count", &LabeledImageSet::count);

  m.def("load_idx",
        [](const std::string& images, const std::string& labels) {
          return load_idx(images, labels);
        },
        py::arg("images_path"), py::arg("labels_path"));
  m.def("save_idx",
        [](const LabeledImageSet& s, const std::string& images, const std::string& labels) {
          save_idx(s, images, labels);
        },
        py::arg("dataset"), py::arg("images_path"), py::arg("labels_path"));
  m.def("synth_gaussians", &synth_gaussians, py::arg("k_modes"), py::arg("n"), py::arg("seed"),
        py::arg("ring_radius") = 0.7, py::arg("sigma") = 0.05);
  m.def("synth_glyphs",
        [](const std::string& style, int64_t n, uint64_t seed, const std::string& split) {
          return synth_glyphs(style == "shapes" ? GlyphStyle::Shapes : GlyphStyle::Digits, n, seed,
                              split);
        },
        py::arg("style"), py::arg("n"), py::arg("seed"), py::arg("split") = "train");

  // --- training ----------------------------------------------------------------
  m.def("train_gan",
        [](const LabeledImageSet& data, const std::string& gen_spec, const std::string& d_spec,
           int64_t iterations, int64_t batch, int64_t latent_dim, double lr, double beta1,
           double beta2, uint64_t seed) {
          GanTrainConfig cfg;
          cfg.iterations = iterations;
          cfg.batch = batch;
          cfg.latent_dim = latent_dim;
          cfg.opt = {lr, beta1, beta2};
          cfg.seed = seed;
          auto res = train_gan(data, cfg, spec_from_json_str(gen_spec),
                               spec_from_json_str(d_spec));
          py::dict log;
          std::vector<int64_t> iters;
          std::vector<double> loss_d, loss_g;
          for (const auto& e : res.log) {
            iters.push_back(e.iter);
            loss_d.push_back(e.loss_d);
            loss_g.push_back(e.loss_g);
          }
          log["iter"] = iters;
          log["loss_d"] = loss_d;
          log["loss_g"] = loss_g;
          return py::make_tuple(std::move(res.generator), std::move(res.discriminator), log);
        },
        py::arg("data"), py::arg("generator_spec"), py::arg("discriminator_spec"),
        py::arg("iterations") = 20000, py::arg("batch") = 64, py::arg("latent_dim") = 64,
        py::arg("lr") = 2e-4, py::arg("beta1") = 0.5, py::arg("beta2") = 0.999,
        py::arg("seed") = 0);

  m.def("train_classifier",
        [](const LabeledImageSet& data, const std::string& spec, int64_t iterations,
           int64_t batch, double lr, uint64_t seed) {
          ClassifierTrainConfig cfg;
          cfg.iterations = iterations;
          cfg.batch = batch;
          cfg.opt.lr = lr;
          cfg.seed = seed;
          auto res = train_classifier(data, cfg, spec_from_json_str(spec));
          return std::move(res.classifier);
        },
        py::arg("data"), py::arg("spec"), py::arg("iterations") = 3000, py::arg("batch") = 64,
        py::arg("lr") = 1e-3, py::arg("seed") = 0);

  m.def("train_inverter",
        [](const Model& generator, int64_t iterations, int64_t batch, double lambda_adv,
           double lambda_sem, double lambda_lat, double eta, bool disable_adv, double lr,
           uint64_t seed) {
          InverterTrainConfig cfg;
          cfg.iterations = iterations;
          cfg.batch = batch;
          cfg.lambda_adv = lambda_adv;
          cfg.lambda_sem = lambda_sem;
          cfg.lambda_lat = lambda_lat;
          cfg.eta = eta;
          cfg.disable_adv = disable_adv;
          cfg.opt.lr = lr;
          cfg.seed = seed;
          auto res = train_inverter(generator, cfg);
          py::dict log;
          std::vector<int64_t> iters;
          std::vector<double> sem, lat, adv, total;
          for (const auto& e : res.log) {
            iters.push_back(e.iter);
            sem.push_back(e.semantic);
            lat.push_back(e.latent);
            adv.push_back(e.adv);
            total.push_back(e.total);
          }
          log["iter"] = iters;
          log["semantic"] = sem;
          log["latent"] = lat;
          log["adv"] = adv;
          log["total"] = total;
          return py::make_tuple(std::move(res.inverter), std::move(res.discriminator), log);
        },
        py::arg("generator"), py::arg("iterations") = 20000, py::arg("batch") = 64,
        py::arg("lambda_adv") = 1.0, py::arg("lambda_sem") = 100.0, py::arg("lambda_lat") = 1.0,
        py::arg("eta") = -1.0, py::arg("disable_adv") = false, py::arg("lr") = 2e-4,
        py::arg("seed") = 0);

  m.def("semantic_loss",
        [](const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> z, double eta) {
          return semantic_loss(g, inv, tensor_from_numpy(z), eta);
        },
        py::arg("generator"), py::arg("inverter"), py::arg("z"), py::arg("eta"));
  m.def("latent_loss",
        [](const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> z) {
          return latent_loss(g, inv, tensor_from_numpy(z));
        },
        py::arg("generator"), py::arg("inverter"), py::arg("z"));
  m.def("adversarial_loss",
        [](const Model& d, const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> z, double floor) {
          return adversarial_loss(d, g, inv, tensor_from_numpy(z), floor);
        },
        py::arg("discriminator"), py::arg("generator"), py::arg("inverter"), py::arg("z"),
        py::arg("prob_floor") = 1e-6);

  // --- projection ----------------------------------------------------------------
  m.def("direct_invert",
        [](const Model& g, py::array_t<float, py::array::c_style | py::array::forcecast> x,
           int64_t steps, double alpha, int64_t restarts, uint64_t seed) {
          auto bp = direct_invert_batch(g, tensor_from_numpy(x),
                                        projection_config(steps, alpha, restarts, "random", seed));
          py::dict out;
          out["z"] = numpy_from_tensor(bp.z);
          out["x_proj"] = numpy_from_tensor(bp.x_proj);
          out["final_objective"] = bp.final_objective;
          out["effective_iterations"] = bp.effective_iterations;
          return out;
        },
        py::arg("generator"), py::arg("x"), py::arg("steps") = 200, py::arg("alpha") = 0.1,
        py::arg("restarts") = 10, py::arg("seed") = 0);

  m.def("encoder_project",
        [](const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> x, int64_t steps,
           double alpha, uint64_t seed) {
          auto bp = encoder_project_batch(g, inv, tensor_from_numpy(x),
                                          projection_config(steps, alpha, 1, "encoder", seed));
          py::dict out;
          out["z"] = numpy_from_tensor(bp.z);
          out["x_proj"] = numpy_from_tensor(bp.x_proj);
          out["final_objective"] = bp.final_objective;
          out["effective_iterations"] = bp.effective_iterations;
          return out;
        },
        py::arg("generator"), py::arg("inverter"), py::arg("x"), py::arg("steps") = 1000,
        py::arg("alpha") = 0.1, py::arg("seed") = 0);

  // --- attacks -------------------------------------------------------------------
  m.def("fgsm",
        [](const Model& clf, py::array_t<float, py::array::c_style | py::array::forcecast> x,
           const std::vector<int>& y, double eps) {
          return numpy_from_tensor(fgsm(classifier_loss_grad(clf), tensor_from_numpy(x), y, eps));
        },
        py::arg("classifier"), py::arg("x"), py::arg("y"), py::arg("eps") = 0.3);
  m.def("cw_l2",
        [](const Model& clf, py::array_t<float, py::array::c_style | py::array::forcecast> x,
           const std::vector<int>& y, int binary_steps, double lr, int iters) {
          AttackSpec spec;
          spec.family = AttackFamily::CwL2;
          spec.cw_binary_steps = binary_steps;
          spec.cw_lr = lr;
          spec.cw_iters = iters;
          auto res = cw_l2(clf, tensor_from_numpy(x), y, spec);
          py::dict out;
          out["x_adv"] = numpy_from_tensor(res.x_adv);
          out["success"] = res.success;
          out["l2"] = res.l2;
          return out;
        },
        py::arg("classifier"), py::arg("x"), py::arg("y"), py::arg("binary_steps") = 6,
        py::arg("lr") = 0.2, py::arg("iters") = 100);
  m.def("reparam_attack",
        [](const Model& clf, const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> x,
           const std::vector<int>& y, double eps) {
          AttackSpec spec;
          spec.family = AttackFamily::Reparam;
          spec.eps = eps;
          return numpy_from_tensor(reparam_attack(clf, g, inv, tensor_from_numpy(x), y, spec));
        },
        py::arg("classifier"), py::arg("generator"), py::arg("inverter"), py::arg("x"),
        py::arg("y"), py::arg("eps") = 0.3);
  m.def("bpda_attack",
        [](const Model& clf, const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> x,
           const std::vector<int>& y, double eps, int steps, int64_t defense_steps,
           double defense_alpha) {
          AttackSpec spec;
          spec.family = AttackFamily::Bpda;
          spec.eps = eps;
          spec.bpda_steps = steps;
          auto pc = projection_config(defense_steps, defense_alpha, 1, "encoder", 0);
          return numpy_from_tensor(
              bpda_attack(clf, make_defense_fn(g, inv, pc), tensor_from_numpy(x), y, spec));
        },
        py::arg("classifier"), py::arg("generator"), py::arg("inverter"), py::arg("x"),
        py::arg("y"), py::arg("eps") = 0.3, py::arg("steps") = 50, py::arg("defense_steps") = 200,
        py::arg("defense_alpha") = 0.1);
  m.def("blackbox_substitute",
        [](const std::function<std::vector<int>(py::array_t<float>)>& oracle,
           py::array_t<float, py::array::c_style | py::array::forcecast> seed_x,
           py::array_t<float, py::array::c_style | py::array::forcecast> eval_x, double eps,
           int rounds, double lam, int64_t train_iters, uint64_t seed) {
          AttackSpec spec;
          spec.family = AttackFamily::Blackbox;
          spec.eps = eps;
          spec.bb_rounds = rounds;
          spec.bb_lambda = lam;
          spec.bb_train_iters = train_iters;
          spec.seed = seed;
          LabelOracle wrapped = [&oracle](const Tensor<float>& x) {
            return oracle(numpy_from_tensor(x));
          };
          auto res = blackbox_substitute(wrapped, tensor_from_numpy(seed_x),
                                         tensor_from_numpy(eval_x), spec);
          py::dict out;
          out["substitute"] = py::cast(std::move(res.substitute));
          out["x_adv"] = numpy_from_tensor(res.x_adv);
          out["agreement"] = res.agreement;
          out["oracle_queries"] = res.oracle_queries;
          return out;
        },
        py::arg("oracle"), py::arg("seed_x"), py::arg("eval_x"), py::arg("eps") = 0.3,
        py::arg("rounds") = 5, py::arg("lambda_aug") = 0.1, py::arg("train_iters") = 600,
        py::arg("seed") = 0);

  // --- defense evaluation -----------------------------------------------------
  m.def("defend_classify",
        [](const Model& clf, const Model& g, const Model& inv,
           py::array_t<float, py::array::c_style | py::array::forcecast> x, int64_t steps,
           double alpha, uint64_t seed) {
          return defend_classify(clf, g, inv, tensor_from_numpy(x),
                                 projection_config(steps, alpha, 1, "encoder", seed));
        },
        py::arg("classifier"), py::arg("generator"), py::arg("inverter"), py::arg("x"),
        py::arg("steps") = 1000, py::arg("alpha") = 0.1, py::arg("seed") = 0);
  m.def("detection_scores",
        [](const Model& clf, py::array_t<float, py::array::c_style | py::array::forcecast> x,
           py::array_t<float, py::array::c_style | py::array::forcecast> x_proj,
           bool image_space) {
          return detection_scores(clf, tensor_from_numpy(x), tensor_from_numpy(x_proj),
                                  image_space);
        },
        py::arg("classifier"), py::arg("x"), py::arg("x_proj"), py::arg("image_space") = false);
  m.def("detection_auc", &detection_auc, py::arg("clean_scores"), py::arg("attacked_scores"));
  m.def("frechet_distance",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b) {
          return frechet_distance(tensor_from_numpy(a), tensor_from_numpy(b));
        },
        py::arg("features_a"), py::arg("features_b"));
  m.def("eval_metrics",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> originals,
           py::array_t<float, py::array::c_style | py::array::forcecast> recon,
           const std::vector<int>& labels, const Model& clf) {
          auto rep = eval_metrics(tensor_from_numpy(originals), tensor_from_numpy(recon), labels,
                                  clf);
          py::dict out;
          out["mse_mean"] = rep.mse_mean;
          out["mse_std"] = rep.mse_std;
          out["accuracy"] = rep.accuracy;
          out["proxy_is"] = rep.proxy_is;
          out["proxy_fid"] = rep.proxy_fid;
          out["sample_count"] = rep.sample_count;
          return out;
        },
        py::arg("originals"), py::arg("reconstructions"), py::arg("labels"),
        py::arg("classifier"));

  // --- theorem ------------------------------------------------------------------
  m.def("train_error_epsilon",
        [](const Model& inv, const Model& g,
           py::array_t<float, py::array::c_style | py::array::forcecast> z) {
          return train_error_epsilon(composed_inversion_map(inv, g), tensor_from_numpy(z));
        },
        py::arg("inverter"), py::arg("generator"), py::arg("latents"));
  m.def("estimate_lipschitz",
        [](const Model& inv, const Model& g, int64_t n_pairs, uint64_t seed) {
          return estimate_lipschitz(composed_inversion_map(inv, g), g.spec.latent_dim, n_pairs,
                                    seed);
        },
        py::arg("inverter"), py::arg("generator"), py::arg("n_pairs") = 2000, py::arg("seed") = 0);
  m.def("empirical_inversion_prob",
        [](const Model& inv, const Model& g, double eps_prime, int64_t m, uint64_t seed) {
          auto p = empirical_inversion_prob(composed_inversion_map(inv, g), g.spec.latent_dim,
                                            eps_prime, m, seed);
          py::dict out;
          out["p_hat"] = p.p_hat;
          out["ci_low"] = p.ci_low;
          out["ci_high"] = p.ci_high;
          out["m"] = p.m;
          return out;
        },
        py::arg("inverter"), py::arg("generator"), py::arg("eps_prime"), py::arg("m") = 10000,
        py::arg("seed") = 0);
  m.def("analytic_bound",
        [](int64_t n, int64_t d, double eps, double eps_prime, double lipschitz) {
          bool flagged = false;
          const double b = analytic_bound(n, d, eps, eps_prime, lipschitz, &flagged);
          return py::make_tuple(b, flagged);
        },
        py::arg("n"), py::arg("d"), py::arg("eps"), py::arg("eps_prime"), py::arg("lipschitz"));
  m.def("validate_theorem",
        [](const Model& inv, const Model& g, int64_t n_train, int64_t n_pairs, int64_t m_fresh,
           const std::vector<double>& eps_prime_scale, uint64_t seed) {
          TheoremConfig cfg;
          cfg.n_train_latents = n_train;
          cfg.n_lipschitz_pairs = n_pairs;
          cfg.m_fresh = m_fresh;
          if (!eps_prime_scale.empty()) cfg.eps_prime_scale = eps_prime_scale;
          cfg.seed = seed;
          auto rep = validate_theorem(inv, g, cfg);
          py::dict out;
          out["n"] = rep.n;
          out["d"] = rep.d;
          out["epsilon"] = rep.epsilon;
          out["lipschitz_hat"] = rep.lipschitz_hat;
          out["m"] = rep.m;
          py::list rows;
          for (const auto& r : rep.rows) {
            py::dict row;
            row["eps_prime"] = r.eps_prime;
            row["p_hat"] = r.p_hat;
            row["ci_low"] = r.ci_low;
            row["ci_high"] = r.ci_high;
            row["bound"] = r.bound;
            row["bound_2l"] = r.bound_2l;
            row["regime_flagged"] = r.regime_flagged;
            row["check_applicable"] = r.check_applicable;
            row["check_passed"] = r.check_passed;
            rows.append(row);
          }
          out["rows"] = rows;
          out["any_violation"] = rep.any_violation();
          return out;
        },
        py::arg("inverter"), py::arg("generator"), py::arg("n_train_latents") = 1000,
        py::arg("n_lipschitz_pairs") = 2000, py::arg("m_fresh") = 10000,
        py::arg("eps_prime_scale") = std::vector<double>{}, py::arg("seed") = 0);

#ifdef GANINV_VERSION
  m.attr("__version__") = GANINV_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
