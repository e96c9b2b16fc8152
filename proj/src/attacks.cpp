#include "ganinv/attacks.hpp"

#include <cmath>

#include "ganinv/gan_train.hpp"
#include "ganinv/rng.hpp"

namespace ganinv {

std::string attack_family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::Fgsm: return "fgsm";
    case AttackFamily::CwL2: return "cw_l2";
    case AttackFamily::Reparam: return "reparam";
    case AttackFamily::Bpda: return "bpda";
    case AttackFamily::Blackbox: return "blackbox";
  }
  return "?";
}

AttackFamily attack_family_from_name(const std::string& s) {
  if (s == "fgsm") return AttackFamily::Fgsm;
  if (s == "cw_l2" || s == "cw") return AttackFamily::CwL2;
  if (s == "reparam" || s == "rp") return AttackFamily::Reparam;
  if (s == "bpda") return AttackFamily::Bpda;
  if (s == "blackbox") return AttackFamily::Blackbox;
  throw AttackError("unknown attack family: " + s);
}

void AttackSpec::validate() const {
  if (eps < 0) throw AttackError("eps must be >= 0");
  if (cw_binary_steps <= 0 || cw_iters <= 0 || cw_lr <= 0 || cw_initial_c <= 0)
    throw AttackError("cw parameters must be positive");
  if (bpda_steps <= 0 || bpda_step_frac <= 0) throw AttackError("bpda parameters must be positive");
  if (bb_rounds < 0 || bb_lambda <= 0) throw AttackError("blackbox parameters invalid");
}

namespace {

constexpr float kRangeLo = -1.0f, kRangeHi = 1.0f;

inline float clampf(float v, float lo, float hi) { return std::min(hi, std::max(lo, v)); }

template <class T>
inline T sgn(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

}  // namespace

bool satisfies_linf_budget(const Tensor<float>& x, const Tensor<float>& x_adv, double eps01) {
  const double budget = 2.0 * eps01 + 1e-6;
  for (int64_t i = 0; i < x.size(); ++i) {
    if (std::abs(double(x_adv[i]) - double(x[i])) > budget) return false;
    if (x_adv[i] < kRangeLo || x_adv[i] > kRangeHi) return false;
  }
  return true;
}

void assert_linf_budget(const Tensor<float>& x, const Tensor<float>& x_adv, double eps01,
                        const std::string& who) {
  if (!satisfies_linf_budget(x, x_adv, eps01))
    throw AttackError(who + ": emitted example violates the L-inf budget or pixel range");
}

LossGradFn classifier_loss_grad(const Model& classifier) {
  const Network<float>* net = &classifier.net;
  return [net](const Tensor<float>& x, const std::vector<int>& y) {
    Trace<float> tr;
    Tensor<float> logits = net->forward(x, tr);
    Tensor<float> dlogits;
    softmax_cross_entropy(logits, y, &dlogits);
    return net->backward(tr, dlogits, nullptr);
  };
}

LossGradFn reparam_loss_grad(const Model& classifier, const Model& generator,
                             const Model& inverter) {
  if (inverter.meta.paired_spec_hash != 0 &&
      inverter.meta.paired_spec_hash != spec_hash(generator.spec))
    throw SpecMismatchError("reparam attack: inverter/generator spec hashes differ");
  const Network<float>* f = &classifier.net;
  const Network<float>* g = &generator.net;
  const Network<float>* inv = &inverter.net;
  return [f, g, inv](const Tensor<float>& x, const std::vector<int>& y) {
    return reparam_grad_t<float>(*f, *g, *inv, x, y);
  };
}

Tensor<float> fgsm(const LossGradFn& grad_fn, const Tensor<float>& x, const std::vector<int>& y,
                   double eps01) {
  Tensor<float> g = grad_fn(x, y);
  if (!g.all_finite()) throw AttackError("fgsm: non-finite loss gradient");
  const float step = static_cast<float>(2.0 * eps01);
  Tensor<float> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i)
    out[i] = clampf(x[i] + step * sgn(g[i]), kRangeLo, kRangeHi);
  assert_linf_budget(x, out, eps01, "fgsm");
  return out;
}

CwResult cw_l2(const Model& classifier, const Tensor<float>& x, const std::vector<int>& y,
               const AttackSpec& spec) {
  spec.validate();
  const Network<float>& f = classifier.net;
  const int64_t b = x.dim(0);
  const int64_t stride = x.size() / b;
  const int64_t nc = classifier.spec.output_shape()[0];

  // tanh-space parameterization keeps iterates inside the valid range
  Tensor<float> w0(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double xi = std::min(0.999999, std::max(-0.999999, double(x[i])));
    w0[i] = static_cast<float>(std::atanh(xi));
  }

  CwResult result;
  result.x_adv = x;
  result.success.assign(b, false);
  result.l2.assign(b, 0.0);
  std::vector<double> best_l2(b, std::numeric_limits<double>::infinity());

  // samples already misclassified are done at zero distortion
  std::vector<bool> done(b, false);
  {
    const auto pred = argmax_rows(f.forward(x));
    for (int64_t i = 0; i < b; ++i)
      if (pred[i] != y[i]) {
        result.success[i] = true;
        done[i] = true;
      }
  }

  std::vector<double> c(b, spec.cw_initial_c), c_lo(b, 0.0),
      c_hi(b, std::numeric_limits<double>::infinity());

  for (int step = 0; step < spec.cw_binary_steps; ++step) {
    Tensor<float> w = w0;
    Adam<float> opt(spec.cw_lr, 0.9, 0.999);
    // wrap w as a single-parameter network-free Adam target
    NetGrads<float> gw;
    gw.by_layer.resize(1);
    gw.by_layer[0].push_back(Tensor<float>(w.shape()));
    std::vector<ParamRef<float>> pw{{"w", &w}};

    std::vector<bool> round_success(b, false);

    for (int it = 0; it < spec.cw_iters; ++it) {
      Tensor<float> xp(w.shape());
      for (int64_t i = 0; i < w.size(); ++i) xp[i] = std::tanh(w[i]);

      Trace<float> tr;
      Tensor<float> logits = f.forward(xp, tr);
      const auto pred = argmax_rows(logits);

      // margin term: max(Z_y - max_{j != y} Z_j, 0)
      Tensor<float> dlogits(logits.shape());
      for (int64_t i = 0; i < b; ++i) {
        if (done[i]) continue;
        const float* row = logits.data() + i * nc;
        int runner = y[i] == 0 ? 1 : 0;
        for (int64_t j = 0; j < nc; ++j)
          if (j != y[i] && row[j] > row[runner]) runner = static_cast<int>(j);
        const double margin = double(row[y[i]]) - double(row[runner]);
        if (pred[i] != y[i]) {
          round_success[i] = true;
          double l2 = 0;
          for (int64_t j = 0; j < stride; ++j) {
            const double dd = double(xp[i * stride + j]) - double(x[i * stride + j]);
            l2 += dd * dd;
          }
          l2 = std::sqrt(l2);
          if (l2 < best_l2[i]) {
            best_l2[i] = l2;
            result.x_adv.set_row(i, xp.slice_rows(i, i + 1));
            result.success[i] = true;
            result.l2[i] = l2;
          }
        }
        if (margin > 0) {
          dlogits[i * nc + y[i]] += static_cast<float>(c[i]);
          dlogits[i * nc + runner] -= static_cast<float>(c[i]);
        }
      }

      Tensor<float> dxp = f.backward(tr, dlogits, nullptr);
      // add the distortion term d||xp - x||^2 = 2 (xp - x), then through tanh
      Tensor<float>& gradw = gw.by_layer[0][0];
      gradw.fill(0.0f);
      for (int64_t i = 0; i < b; ++i) {
        if (done[i]) continue;
        for (int64_t j = 0; j < stride; ++j) {
          const int64_t k = i * stride + j;
          const double total_dx = double(dxp[k]) + 2.0 * (double(xp[k]) - double(x[k]));
          const double dtanh = 1.0 - double(xp[k]) * double(xp[k]);
          gradw[k] = static_cast<float>(total_dx * dtanh);
        }
      }
      opt.step(pw, gw);
    }

    for (int64_t i = 0; i < b; ++i) {
      if (done[i]) continue;
      if (round_success[i]) {
        c_hi[i] = c[i];
        c[i] = (c_lo[i] + c_hi[i]) / 2;
      } else {
        c_lo[i] = c[i];
        c[i] = std::isinf(c_hi[i]) ? c[i] * 10 : (c_lo[i] + c_hi[i]) / 2;
      }
    }
  }

  // unsuccessful samples keep x (best attempt with zero distortion is x itself)
  for (int64_t i = 0; i < b; ++i)
    if (!result.success[i]) result.l2[i] = 0.0;
  return result;
}

Tensor<float> reparam_attack(const Model& classifier, const Model& generator,
                             const Model& inverter, const Tensor<float>& x,
                             const std::vector<int>& y, const AttackSpec& spec) {
  spec.validate();
  auto grad_fn = reparam_loss_grad(classifier, generator, inverter);
  Tensor<float> out = fgsm(grad_fn, x, y, spec.eps);
  assert_linf_budget(x, out, spec.eps, "reparam");
  return out;
}

Tensor<float> bpda_attack(const Model& classifier, const DefenseFn& defense,
                          const Tensor<float>& x, const std::vector<int>& y,
                          const AttackSpec& spec) {
  spec.validate();
  const Network<float>& f = classifier.net;
  const float budget = static_cast<float>(2.0 * spec.eps);
  const float step = static_cast<float>(2.0 * spec.eps * spec.bpda_step_frac);

  Tensor<float> xt = x;
  for (int it = 0; it < spec.bpda_steps; ++it) {
    Tensor<float> xp;
    try {
      xp = defense(xt);
    } catch (const std::exception&) {
      break;  // projection failure: keep the attack state reached so far
    }
    Trace<float> tr;
    Tensor<float> logits = f.forward(xp, tr);
    Tensor<float> dlogits;
    softmax_cross_entropy(logits, y, &dlogits);
    // backward through the classifier only; the defense Jacobian is taken as
    // the identity
    Tensor<float> g = f.backward(tr, dlogits, nullptr);
    for (int64_t i = 0; i < xt.size(); ++i) {
      float v = xt[i] + step * sgn(g[i]);
      v = clampf(v, x[i] - budget, x[i] + budget);
      xt[i] = clampf(v, kRangeLo, kRangeHi);
    }
  }
  assert_linf_budget(x, xt, spec.eps, "bpda");
  return xt;
}

std::vector<int> OracleClient::query(const Tensor<float>& x) {
  int attempt = 0;
  for (;;) {
    try {
      ++queries_;
      return fn_(x);
    } catch (const std::exception& e) {
      if (++attempt > retries_)
        throw AttackError(std::string("oracle query failed after retries: ") + e.what());
    }
  }
}

BlackboxResult blackbox_substitute(const LabelOracle& oracle, const Tensor<float>& seed_x,
                                   const Tensor<float>& eval_x, const AttackSpec& spec) {
  spec.validate();
  OracleClient client(oracle, spec.bb_max_retries);

  const int64_t h = seed_x.dim(1), w = seed_x.dim(2), c = seed_x.dim(3);
  Tensor<float> xs = seed_x;
  std::vector<int> labels = client.query(xs);
  int num_classes = 2;
  for (int l : labels) num_classes = std::max(num_classes, l + 1);

  BlackboxResult result;
  const NetworkSpec sub_spec = conv_classifier_spec(h, w, c, num_classes, 8, 32);
  const int64_t n_seed = seed_x.dim(0);

  for (int round = 0; round <= spec.bb_rounds; ++round) {
    LabeledImageSet train;
    train.images = xs;
    train.labels = labels;
    train.num_classes = num_classes;

    ClassifierTrainConfig cfg;
    cfg.iterations = spec.bb_train_iters;
    cfg.batch = std::min<int64_t>(64, xs.dim(0));
    cfg.seed = mix_seed(spec.seed, 0xb0 + static_cast<uint64_t>(round));
    auto trained = train_classifier(train, cfg, sub_spec);
    result.substitute = std::move(trained.classifier);

    // agreement with the oracle on the fixed seed set (labels already known)
    {
      const auto pred = argmax_rows(forward_chunked(result.substitute.net, seed_x, 128));
      int64_t agree = 0;
      for (int64_t i = 0; i < n_seed; ++i) agree += pred[i] == labels[i];
      result.agreement.push_back(double(agree) / double(n_seed));
    }
    if (round == spec.bb_rounds) break;

    // Jacobian-based augmentation: x' = x + lambda * sign(d logit_label / dx);
    // only the fresh points are sent to the oracle
    const int64_t n = xs.dim(0);
    Tensor<float> fresh(Shape{n, h, w, c});
    const float lam = static_cast<float>(2.0 * spec.bb_lambda);
    const int64_t chunk = 128;
    for (int64_t start = 0; start < n; start += chunk) {
      const int64_t end = std::min(n, start + chunk);
      Tensor<float> xb = xs.slice_rows(start, end);
      Trace<float> tr;
      Tensor<float> logits = result.substitute.net.forward(xb, tr);
      Tensor<float> dlogits(logits.shape());
      const int64_t nc = logits.dim(1);
      for (int64_t i = start; i < end; ++i) dlogits[(i - start) * nc + labels[i]] = 1.0f;
      Tensor<float> g = result.substitute.net.backward(tr, dlogits, nullptr);
      for (int64_t i = start; i < end; ++i) {
        Tensor<float> row = xs.slice_rows(i, i + 1);
        const float* gr = g.data() + (i - start) * h * w * c;
        for (int64_t j = 0; j < h * w * c; ++j)
          row[j] = clampf(row[j] + lam * sgn(gr[j]), kRangeLo, kRangeHi);
        fresh.set_row(i, row);
      }
    }
    const auto fresh_labels = client.query(fresh);
    Tensor<float> grown(Shape{2 * n, h, w, c});
    for (int64_t i = 0; i < n; ++i) grown.set_row(i, xs.slice_rows(i, i + 1));
    for (int64_t i = 0; i < n; ++i) grown.set_row(n + i, fresh.slice_rows(i, i + 1));
    xs = std::move(grown);
    labels.insert(labels.end(), fresh_labels.begin(), fresh_labels.end());
  }

  // craft FGSM on the substitute against oracle-assigned labels of eval_x
  const auto eval_labels = client.query(eval_x);
  result.x_adv = fgsm(classifier_loss_grad(result.substitute), eval_x, eval_labels, spec.eps);
  assert_linf_budget(eval_x, result.x_adv, spec.eps, "blackbox");
  result.oracle_queries = client.queries();
  return result;
}

}  // namespace ganinv
