#pragma once

#include <functional>

#include "ganinv/models.hpp"

namespace ganinv {

enum class AttackFamily { Fgsm, CwL2, Reparam, Bpda, Blackbox };

std::string attack_family_name(AttackFamily f);
AttackFamily attack_family_from_name(const std::string& s);

/// Attack hyperparameters. eps is the L-inf budget quoted in [0,1] pixel
/// units; images live in [-1,1], so the internal budget is 2*eps.
struct AttackSpec {
  AttackFamily family = AttackFamily::Fgsm;
  double eps = 0.3;

  int cw_binary_steps = 6;
  double cw_lr = 0.2;
  int cw_iters = 100;
  double cw_initial_c = 1e-2;

  int bpda_steps = 50;
  double bpda_step_frac = 0.1;  // step size = eps * frac

  int bb_rounds = 5;
  double bb_lambda = 0.1;       // augmentation step, [0,1] units
  int64_t bb_train_iters = 600;
  int bb_max_retries = 3;

  uint64_t seed = 0;

  void validate() const;
};

struct AttackError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Gradient of a scalar classification loss w.r.t. the input batch.
using LossGradFn =
    std::function<Tensor<float>(const Tensor<float>& x, const std::vector<int>& y)>;

/// Purification map used as the non-differentiable block under BPDA.
using DefenseFn = std::function<Tensor<float>(const Tensor<float>& x)>;

/// Black-box label oracle; may throw transiently.
using LabelOracle = std::function<std::vector<int>(const Tensor<float>& x)>;

/// True when x_adv stays in [-1,1] and within 2*eps of x in L-inf (slack 1e-6).
bool satisfies_linf_budget(const Tensor<float>& x, const Tensor<float>& x_adv, double eps01);
/// Same check as a hard assertion; every L-inf attack calls it before returning.
void assert_linf_budget(const Tensor<float>& x, const Tensor<float>& x_adv, double eps01,
                        const std::string& who);

/// Cross-entropy input gradient of a plain classifier.
LossGradFn classifier_loss_grad(const Model& classifier);

/// Cross-entropy input gradient through the composition f(G(I(x))):
/// the white-box gradient of an encoder-reparameterized defense.
LossGradFn reparam_loss_grad(const Model& classifier, const Model& generator,
                             const Model& inverter);

/// Single signed-gradient step, clipped to the valid range.
/// sign(0) = 0, so a zero gradient returns x unchanged.
Tensor<float> fgsm(const LossGradFn& grad_fn, const Tensor<float>& x, const std::vector<int>& y,
                   double eps01);

struct CwResult {
  Tensor<float> x_adv;
  std::vector<bool> success;   // label flipped
  std::vector<double> l2;      // distortion of the returned example
};

/// Carlini-Wagner L2 with margin zero: binary search over the trade-off
/// constant, Adam in tanh space. Failure to flip is reported per sample,
/// never thrown.
CwResult cw_l2(const Model& classifier, const Tensor<float>& x, const std::vector<int>& y,
               const AttackSpec& spec);

/// FGSM-style step through f(G(I(x))): the reparameterization attack.
Tensor<float> reparam_attack(const Model& classifier, const Model& generator,
                             const Model& inverter, const Tensor<float>& x,
                             const std::vector<int>& y, const AttackSpec& spec);

/// Iterative attack that runs the true defense forward and substitutes the
/// identity for its Jacobian on the way back; steps are projected onto the
/// eps ball and value range.
Tensor<float> bpda_attack(const Model& classifier, const DefenseFn& defense,
                          const Tensor<float>& x, const std::vector<int>& y,
                          const AttackSpec& spec);

/// Retry-aware client around a label oracle: transient failures are retried
/// up to the spec budget, queries are counted.
class OracleClient {
 public:
  OracleClient(LabelOracle fn, int max_retries) : fn_(std::move(fn)), retries_(max_retries) {}
  std::vector<int> query(const Tensor<float>& x);
  int64_t queries() const { return queries_; }

 private:
  LabelOracle fn_;
  int retries_;
  int64_t queries_ = 0;
};

struct BlackboxResult {
  Model substitute;
  Tensor<float> x_adv;                  // FGSM on the substitute over eval_x
  std::vector<double> agreement;        // substitute/oracle agreement per round
  int64_t oracle_queries = 0;
};

/// Substitute-model attack: iterative Jacobian-based dataset augmentation
/// against the oracle, then FGSM on the trained substitute. Labels used for
/// crafting come from the oracle, never from ground truth.
BlackboxResult blackbox_substitute(const LabelOracle& oracle, const Tensor<float>& seed_x,
                                   const Tensor<float>& eval_x, const AttackSpec& spec);

// --- templated reparameterization gradient (double-precision checkable) ----

/// dCE(f(G(I(x))), y)/dx for arbitrary scalar type.
template <class T>
Tensor<T> reparam_grad_t(const Network<T>& clf, const Network<T>& g, const Network<T>& inv,
                         const Tensor<T>& x, const std::vector<int>& y, double* loss_out = nullptr) {
  Trace<T> tr_i, tr_g, tr_f;
  Tensor<T> z = inv.forward(x, tr_i);
  Tensor<T> xp = g.forward(z, tr_g);
  Tensor<T> logits = clf.forward(xp, tr_f);
  Tensor<T> dlogits;
  const double loss = softmax_cross_entropy(logits, y, &dlogits);
  if (loss_out) *loss_out = loss;
  Tensor<T> dxp = clf.backward(tr_f, dlogits, nullptr);
  Tensor<T> dz = g.backward(tr_g, dxp, nullptr);
  return inv.backward(tr_i, dz, nullptr);
}

}  // namespace ganinv
