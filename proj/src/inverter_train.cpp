#include "ganinv/inverter_train.hpp"

#include "ganinv/rng.hpp"

namespace ganinv {

void InverterTrainConfig::validate() const {
  if (lambda_adv < 0 || lambda_sem < 0 || lambda_lat < 0)
    throw std::invalid_argument("inverter config: loss weights must be non-negative");
  if (iterations < 0 || batch <= 0)
    throw std::invalid_argument("inverter config: counts must be positive");
  if (opt.beta1 < 0 || opt.beta1 >= 1 || opt.beta2 < 0 || opt.beta2 >= 1)
    throw std::invalid_argument("inverter config: betas must lie in [0,1)");
}

InverterTrainConfig InverterTrainConfig::resolved(int64_t image_numel) const {
  InverterTrainConfig r = *this;
  if (r.eta < 0) r.eta = 0.05 * std::sqrt(double(image_numel));
  if (r.disable_adv) {
    r.eta = 0.0;
    r.lambda_adv = 0.0;
    r.lambda_lat = 0.0;
    r.lambda_sem = 1.0;
  }
  r.validate();
  return r;
}

double semantic_loss(const Model& g, const Model& inv, const Tensor<float>& z, double eta) {
  if (!z.all_finite()) throw std::invalid_argument("semantic_loss: non-finite latents");
  auto f = inverter_forward<float>(g.net, inv.net, z, false);
  return semantic_loss_from<float>(f, eta);
}

double latent_loss(const Model& g, const Model& inv, const Tensor<float>& z) {
  auto f = inverter_forward<float>(g.net, inv.net, z, false);
  return latent_loss_from<float>(z, f.z_hat);
}

std::pair<double, double> adversarial_loss(const Model& d, const Model& g, const Model& inv,
                                           const Tensor<float>& z, double prob_floor) {
  auto f = inverter_forward<float>(g.net, inv.net, z, false);
  return adversarial_loss_from<float>(d.net, f.x_real, f.x_rec, prob_floor);
}

InverterTrainResult train_inverter(const Model& generator, const InverterTrainConfig& raw_cfg,
                                   const std::function<void(const InverterLogEntry&)>& on_log) {
  const auto& gspec = generator.spec;
  if (gspec.role != Role::Generator) throw SpecError("train_inverter expects a generator");
  const int64_t image_numel =
      gspec.image_shape[0] * gspec.image_shape[1] * gspec.image_shape[2];
  const InverterTrainConfig cfg = raw_cfg.resolved(image_numel);

  const NetworkSpec inv_spec = mirror_inverter_spec(gspec);
  NetworkSpec d_spec;
  if (gspec.image_shape[0] >= 4 && gspec.image_shape[0] % 4 == 0 &&
      gspec.image_shape[1] % 4 == 0) {
    int64_t base = 16;
    for (const auto& l : gspec.layers)
      if (l.kind == "reshape" && l.target.size() == 3) base = std::max<int64_t>(8, l.target[2]);
    d_spec = dcgan_discriminator_spec(gspec.image_shape[0], gspec.image_shape[1],
                                      gspec.image_shape[2], base);
  } else {
    d_spec = mlp_discriminator_spec(image_numel);
  }

  InverterTrainResult result{build_model(inv_spec, mix_seed(cfg.seed, 0x17)),
                             build_model(d_spec, mix_seed(cfg.seed, 0xd2)),
                             {}};
  result.inverter.meta.seed = cfg.seed;
  result.inverter.meta.paired_spec_hash = spec_hash(gspec);
  result.discriminator.meta.seed = cfg.seed;

  const Network<float>& g = generator.net;
  Network<float>& inv = result.inverter.net;
  Network<float>& d = result.discriminator.net;

  inv.set_training(true);
  d.set_training(true);
  // the generator stays frozen in inference mode throughout

  Adam<float> opt_i(cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2);
  Adam<float> opt_d(cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2);
  auto grads_i = inv.make_grads();
  auto grads_d = d.make_grads();

  // dedicated latent stream: training consumes (G, cfg, seed) and nothing else
  Rng z_stream(mix_seed(cfg.seed, 0x2f));
  const bool use_adv = cfg.lambda_adv > 0;

  for (int64_t it = 0; it < cfg.iterations; ++it) {
    Tensor<float> z = z_stream.standard_normal<float>({cfg.batch, gspec.latent_dim});
    auto fwd = inverter_forward<float>(g, inv, z, true);
    if (!fwd.x_rec.all_finite()) throw TrainError("non-finite forward", it, "reconstruction");

    double loss_d = 0;
    if (use_adv) {
      grads_d.zero();
      auto [li, ld] =
          adversarial_loss_from<float>(d, fwd.x_real, fwd.x_rec, cfg.prob_floor, &grads_d);
      (void)li;
      loss_d = ld;
      if (!std::isfinite(loss_d)) throw TrainError("non-finite loss", it, "adversarial(D)");
      opt_d.step(d.named_params(), grads_d);
    }

    // encoder step against the just-updated discriminator
    Tensor<float> dx_rec(fwd.x_rec.shape());
    double adv_i = 0;
    if (use_adv) {
      auto [li, ld] = adversarial_loss_from<float>(d, fwd.x_real, fwd.x_rec, cfg.prob_floor,
                                                   nullptr, &dx_rec, cfg.lambda_adv);
      (void)ld;
      adv_i = li;
      if (!std::isfinite(adv_i)) throw TrainError("non-finite loss", it, "adversarial(I)");
    }
    const double sem = semantic_loss_from<float>(fwd, cfg.eta, &dx_rec, cfg.lambda_sem);
    if (!std::isfinite(sem)) throw TrainError("non-finite loss", it, "semantic");

    Tensor<float> dz_hat = g.backward(fwd.trace_g2, dx_rec, nullptr);
    const double lat = latent_loss_from<float>(z, fwd.z_hat, &dz_hat, cfg.lambda_lat);
    if (!std::isfinite(lat)) throw TrainError("non-finite loss", it, "latent");

    grads_i.zero();
    inv.backward(fwd.trace_i, dz_hat, &grads_i);
    opt_i.step(inv.named_params(), grads_i);

    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      const double total =
          cfg.lambda_adv * adv_i + cfg.lambda_sem * sem + cfg.lambda_lat * lat;
      InverterLogEntry e{it, loss_d, adv_i, sem, lat, total};
      result.log.push_back(e);
      if (on_log) on_log(e);
    }
  }
  inv.set_training(false);
  d.set_training(false);
  return result;
}

}  // namespace ganinv
