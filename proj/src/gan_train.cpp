#include "ganinv/gan_train.hpp"

#include "ganinv/inverter_train.hpp"
#include "ganinv/rng.hpp"

namespace ganinv {

void GanTrainConfig::validate() const {
  if (iterations < 0 || batch <= 0 || latent_dim <= 0)
    throw std::invalid_argument("gan config: counts must be positive");
  if (opt.beta1 < 0 || opt.beta1 >= 1 || opt.beta2 < 0 || opt.beta2 >= 1)
    throw std::invalid_argument("gan config: betas must lie in [0,1)");
  if (opt.lr <= 0) throw std::invalid_argument("gan config: lr must be positive");
}

void ClassifierTrainConfig::validate() const {
  if (iterations < 0 || batch <= 0)
    throw std::invalid_argument("classifier config: counts must be positive");
  if (opt.beta1 < 0 || opt.beta1 >= 1 || opt.beta2 < 0 || opt.beta2 >= 1)
    throw std::invalid_argument("classifier config: betas must lie in [0,1)");
}

namespace {

/// Deterministic epoch-shuffled batch cursor.
class BatchCursor {
 public:
  BatchCursor(int64_t n, uint64_t seed) : n_(n), seed_(seed) { reshuffle(); }

  std::vector<int64_t> next(int64_t batch) {
    std::vector<int64_t> idx(batch);
    for (int64_t i = 0; i < batch; ++i) {
      if (pos_ == n_) reshuffle();
      idx[i] = order_[pos_++];
    }
    return idx;
  }

 private:
  void reshuffle() {
    Rng rng(mix_seed(seed_, epoch_++));
    order_ = shuffled_indices<float>(n_, rng);
    pos_ = 0;
  }
  int64_t n_, pos_ = 0;
  uint64_t seed_;
  uint64_t epoch_ = 0;
  std::vector<int64_t> order_;
};

Tensor<float> gather_rows(const Tensor<float>& src, const std::vector<int64_t>& idx) {
  Shape s = src.shape();
  s[0] = static_cast<int64_t>(idx.size());
  Tensor<float> out(s);
  for (size_t i = 0; i < idx.size(); ++i)
    out.set_row(static_cast<int64_t>(i), src.slice_rows(idx[i], idx[i] + 1));
  return out;
}

}  // namespace

GanTrainResult train_gan(const LabeledImageSet& data, const GanTrainConfig& cfg,
                         const NetworkSpec& generator_spec,
                         const NetworkSpec& discriminator_spec,
                         const std::function<void(const GanLogEntry&)>& on_log) {
  cfg.validate();
  if (data.count() == 0) throw std::invalid_argument("train_gan: empty dataset");
  {
    const Shape img = {data.images.dim(1), data.images.dim(2), data.images.dim(3)};
    if (generator_spec.output_shape() != img)
      throw SpecError("generator output " + shape_str(generator_spec.output_shape()) +
                      " incompatible with data " + shape_str(img));
  }

  GanTrainResult result{build_model(generator_spec, mix_seed(cfg.seed, 0x67)),
                        build_model(discriminator_spec, mix_seed(cfg.seed, 0xd1)),
                        {}};
  Network<float>& g = result.generator.net;
  Network<float>& d = result.discriminator.net;
  result.generator.meta.seed = cfg.seed;
  result.discriminator.meta.seed = cfg.seed;

  g.set_training(true);
  d.set_training(true);

  Adam<float> opt_g(cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2);
  Adam<float> opt_d(cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2);
  auto grads_g = g.make_grads();
  auto grads_d = d.make_grads();

  Rng z_stream(mix_seed(cfg.seed, 0x5a));
  BatchCursor cursor(data.count(), mix_seed(cfg.seed, 0xbc));

  const int64_t b = cfg.batch;
  for (int64_t it = 0; it < cfg.iterations; ++it) {
    // --- discriminator step: real batch up, generated batch down
    Tensor<float> x_real = gather_rows(data.images, cursor.next(b));
    Tensor<float> z = z_stream.standard_normal<float>({b, cfg.latent_dim});
    Tensor<float> x_fake = g.forward(z);

    grads_d.zero();
    auto [unused_i, loss_d] =
        adversarial_loss_from<float>(d, x_real, x_fake, cfg.prob_floor, &grads_d);
    (void)unused_i;
    if (!std::isfinite(loss_d)) throw TrainError("non-finite loss", it, "discriminator");
    opt_d.step(d.named_params(), grads_d);

    // --- generator step: non-saturating -log D(G(z))
    Tensor<float> z2 = z_stream.standard_normal<float>({b, cfg.latent_dim});
    Trace<float> tr_g;
    Tensor<float> x_gen = g.forward(z2, tr_g);
    Trace<float> tr_d;
    Tensor<float> p = d.forward(x_gen, tr_d);
    double loss_g = 0;
    Tensor<float> dp(p.shape());
    for (int64_t i = 0; i < b; ++i) {
      const double pc = clamp_prob(double(p[i]), cfg.prob_floor);
      loss_g += -std::log(pc);
      const bool clamped = p[i] <= cfg.prob_floor || p[i] >= 1.0 - cfg.prob_floor;
      dp[i] = clamped ? 0.0f : static_cast<float>(-1.0 / (pc * b));
    }
    loss_g /= double(b);
    if (!std::isfinite(loss_g)) throw TrainError("non-finite loss", it, "generator");
    Tensor<float> dx = d.backward(tr_d, dp, nullptr);
    grads_g.zero();
    g.backward(tr_g, dx, &grads_g);
    opt_g.step(g.named_params(), grads_g);

    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      GanLogEntry e{it, loss_d, loss_g};
      result.log.push_back(e);
      if (on_log) on_log(e);
    }
  }
  g.set_training(false);
  d.set_training(false);
  return result;
}

ClassifierTrainResult train_classifier(
    const LabeledImageSet& data, const ClassifierTrainConfig& cfg,
    const NetworkSpec& classifier_spec,
    const std::function<void(const ClassifierLogEntry&)>& on_log) {
  cfg.validate();
  if (data.count() == 0) throw std::invalid_argument("train_classifier: empty dataset");

  ClassifierTrainResult result{build_model(classifier_spec, mix_seed(cfg.seed, 0xc1)), {}};
  Network<float>& net = result.classifier.net;
  result.classifier.meta.seed = cfg.seed;

  net.set_training(true);
  Adam<float> opt(cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2);
  auto grads = net.make_grads();
  BatchCursor cursor(data.count(), mix_seed(cfg.seed, 0xbc));

  for (int64_t it = 0; it < cfg.iterations; ++it) {
    const auto idx = cursor.next(cfg.batch);
    Tensor<float> x = gather_rows(data.images, idx);
    std::vector<int> y(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) y[i] = data.labels[idx[i]];

    Trace<float> tr;
    Tensor<float> logits = net.forward(x, tr);
    Tensor<float> dlogits;
    const double loss = softmax_cross_entropy(logits, y, &dlogits);
    if (!std::isfinite(loss)) throw TrainError("non-finite loss", it, "classifier");
    grads.zero();
    net.backward(tr, dlogits, &grads);
    opt.step(net.named_params(), grads);

    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      ClassifierLogEntry e{it, loss};
      result.log.push_back(e);
      if (on_log) on_log(e);
    }
  }
  net.set_training(false);
  return result;
}

Tensor<float> forward_chunked(const Network<float>& net, const Tensor<float>& x, int64_t chunk) {
  const int64_t n = x.dim(0);
  Tensor<float> out;
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t end = std::min(n, start + chunk);
    Tensor<float> y = net.forward(x.slice_rows(start, end));
    if (out.empty()) {
      Shape s = y.shape();
      s[0] = n;
      out = Tensor<float>(s);
    }
    for (int64_t i = start; i < end; ++i) out.set_row(i, y.slice_rows(i - start, i - start + 1));
  }
  return out;
}

double classification_accuracy(const Model& classifier, const Tensor<float>& x,
                               const std::vector<int>& labels, int64_t chunk) {
  Tensor<float> logits = forward_chunked(classifier.net, x, chunk);
  const auto pred = argmax_rows(logits);
  int64_t hits = 0;
  for (size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return double(hits) / double(labels.size());
}

double mean_discriminator_output(const Model& d, const Tensor<float>& x, int64_t chunk) {
  Tensor<float> p = forward_chunked(d.net, x, chunk);
  double s = 0;
  for (int64_t i = 0; i < p.size(); ++i) s += p[i];
  return s / double(p.size());
}

}  // namespace ganinv
