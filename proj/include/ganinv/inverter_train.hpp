#pragma once

#include <functional>
#include <optional>

#include "ganinv/gan_train.hpp"
#include "ganinv/models.hpp"

namespace ganinv {

/// Weights and schedule for encoder training against a frozen generator.
/// The trainer sees no dataset: every batch is sampled from the latent prior.
struct InverterTrainConfig {
  double lambda_adv = 1.0;     // distribution-consistency weight
  double lambda_sem = 100.0;   // hinge-floored reconstruction weight
  double lambda_lat = 1.0;     // latent recovery weight
  double eta = -1.0;           // hinge margin; < 0 selects 0.05*sqrt(h*w*c)
  int64_t iterations = 20000;
  int64_t batch = 64;
  AdamConfig opt;
  uint64_t seed = 0;
  bool disable_adv = false;    // ablation: eta=0, lambda_adv=lambda_lat=0, lambda_sem=1
  double prob_floor = 1e-6;
  int64_t log_every = 100;

  void validate() const;
  /// Applies the ablation flag and the default margin for the given image
  /// element count.
  InverterTrainConfig resolved(int64_t image_numel) const;
};

struct InverterLogEntry {
  int64_t iter;
  double loss_d;
  double adv;       // unweighted encoder adversarial term
  double semantic;  // unweighted hinge-floored reconstruction term
  double latent;    // unweighted latent recovery term
  double total;     // lambda_adv*adv + lambda_sem*semantic + lambda_lat*latent
};

struct InverterTrainResult {
  Model inverter;
  Model discriminator;  // fresh inversion discriminator, not the GAN's
  std::vector<InverterLogEntry> log;
};

// --- loss primitives (templated so tests can instantiate double) -----------

/// Shared forward pass: x_real = G(z), z_hat = I(x_real), x_rec = G(z_hat).
template <class T>
struct InverterForward {
  Tensor<T> x_real, z_hat, x_rec;
  Trace<T> trace_i, trace_g2;  // traces for I and for the second G pass
};

template <class T>
InverterForward<T> inverter_forward(const Network<T>& g, const Network<T>& inv,
                                    const Tensor<T>& z, bool traced) {
  InverterForward<T> f;
  f.x_real = g.forward(z);
  f.z_hat = traced ? inv.forward(f.x_real, f.trace_i) : inv.forward(f.x_real);
  f.x_rec = traced ? g.forward(f.z_hat, f.trace_g2) : g.forward(f.z_hat);
  return f;
}

/// E_z[max(||G(z) - G(I(G(z)))||_2, eta)], unsquared norm over all pixels.
/// When dx_rec is non-null, adds the gradient w.r.t. x_rec scaled by lambda.
/// Samples at or below the margin contribute zero gradient.
template <class T>
double semantic_loss_from(const InverterForward<T>& f, double eta, Tensor<T>* dx_rec = nullptr,
                          double lambda = 1.0) {
  const int64_t b = f.x_real.dim(0);
  const int64_t stride = f.x_real.size() / b;
  Tensor<T> resid(f.x_real.shape());
  for (int64_t i = 0; i < resid.size(); ++i) resid[i] = f.x_real[i] - f.x_rec[i];
  const auto norms = row_l2_norms(resid);
  double loss = 0;
  for (int64_t i = 0; i < b; ++i) {
    loss += std::max(norms[i], eta);
    if (dx_rec && norms[i] > eta && norms[i] > 1e-12) {
      const double scale = lambda / (norms[i] * double(b));
      T* d = dx_rec->data() + i * stride;
      const T* r = resid.data() + i * stride;
      for (int64_t j = 0; j < stride; ++j) d[j] -= static_cast<T>(scale * r[j]);
    }
  }
  return loss / double(b);
}

/// E_z[||z - I(G(z))||_2]; gradient w.r.t. z_hat goes to dz_hat when given.
template <class T>
double latent_loss_from(const Tensor<T>& z, const Tensor<T>& z_hat, Tensor<T>* dz_hat = nullptr,
                        double lambda = 1.0) {
  const int64_t b = z.dim(0), d = z.size() / b;
  double loss = 0;
  for (int64_t i = 0; i < b; ++i) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = double(z[i * d + j]) - double(z_hat[i * d + j]);
      s += diff * diff;
    }
    const double norm = std::sqrt(s);
    loss += norm;
    if (dz_hat && norm > 1e-12) {
      const double scale = lambda / (norm * double(b));
      for (int64_t j = 0; j < d; ++j)
        (*dz_hat)[i * d + j] +=
            static_cast<T>(scale * (double(z_hat[i * d + j]) - double(z[i * d + j])));
    }
  }
  return loss / double(b);
}

template <class T>
inline T clamp_prob(T p, double floor) {
  return std::min(static_cast<T>(1.0 - floor), std::max(static_cast<T>(floor), p));
}

/// Binary cross-entropy pair for the inversion discriminator: D is pushed to
/// score generations high and inverted reconstructions low; the encoder gets
/// the non-saturating -log D(fake) objective. Probabilities are clamped away
/// from {0,1} by prob_floor before the log (clamped samples carry no
/// gradient).
///   returns {loss_for_I, loss_for_D}
template <class T>
std::pair<double, double> adversarial_loss_from(
    const Network<T>& d_net, const Tensor<T>& x_real, const Tensor<T>& x_rec, double prob_floor,
    NetGrads<T>* d_grads = nullptr,      // gradients of loss_for_D w.r.t. D params
    Tensor<T>* dx_rec = nullptr,         // gradient of lambda*loss_for_I w.r.t. x_rec
    double lambda_i = 1.0) {
  const int64_t b = x_real.dim(0);

  Trace<T> tr_real, tr_fake;
  const bool need_d = d_grads != nullptr;
  Tensor<T> p_real = need_d ? d_net.forward(x_real, tr_real) : d_net.forward(x_real);
  Tensor<T> p_fake =
      (need_d || dx_rec) ? d_net.forward(x_rec, tr_fake) : d_net.forward(x_rec);

  double loss_d = 0, loss_i = 0;
  Tensor<T> dp_real(p_real.shape()), dp_fake_d(p_fake.shape());
  for (int64_t i = 0; i < b; ++i) {
    const double pr = clamp_prob(p_real[i], prob_floor);
    const double pf = clamp_prob(p_fake[i], prob_floor);
    loss_d += -std::log(pr) - std::log(1.0 - pf);
    loss_i += -std::log(pf);
    const bool real_clamped = p_real[i] <= prob_floor || p_real[i] >= 1.0 - prob_floor;
    const bool fake_clamped = p_fake[i] <= prob_floor || p_fake[i] >= 1.0 - prob_floor;
    dp_real[i] = real_clamped ? T(0) : static_cast<T>(-1.0 / (pr * b));
    dp_fake_d[i] = fake_clamped ? T(0) : static_cast<T>(1.0 / ((1.0 - pf) * b));
  }
  loss_d /= double(b);
  loss_i /= double(b);

  if (d_grads) {
    d_net.backward(tr_real, dp_real, d_grads);
    d_net.backward(tr_fake, dp_fake_d, d_grads);
  }
  if (dx_rec) {
    Tensor<T> dp_fake_i(p_fake.shape());
    for (int64_t i = 0; i < b; ++i) {
      const double pf = clamp_prob(p_fake[i], prob_floor);
      const bool fake_clamped = p_fake[i] <= prob_floor || p_fake[i] >= 1.0 - prob_floor;
      dp_fake_i[i] = fake_clamped ? T(0) : static_cast<T>(-lambda_i / (pf * b));
    }
    Tensor<T> dxr = d_net.backward(tr_fake, dp_fake_i, nullptr);
    axpy(T(1), dxr, *dx_rec);
  }
  return {loss_i, loss_d};
}

// --- spec-level operations on models ----------------------------------------

double semantic_loss(const Model& g, const Model& inv, const Tensor<float>& z, double eta);
double latent_loss(const Model& g, const Model& inv, const Tensor<float>& z);
std::pair<double, double> adversarial_loss(const Model& d, const Model& g, const Model& inv,
                                           const Tensor<float>& z, double prob_floor = 1e-6);

/// Trains the inverter (and a fresh inversion discriminator) against a frozen
/// generator from latent samples alone; one D step then one I step per
/// iteration. The returned inverter records the generator's spec hash.
InverterTrainResult train_inverter(
    const Model& generator, const InverterTrainConfig& cfg,
    const std::function<void(const InverterLogEntry&)>& on_log = nullptr);

}  // namespace ganinv
