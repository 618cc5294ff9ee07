#pragma once

// Distributional critic: (state, action, alpha) -> Gaussian over future return,
// its temporal-difference targets and its Wasserstein training loss.

#include "wcpg/nn.hpp"
#include "wcpg/replay.hpp"
#include "wcpg/risk.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace wcpg {

using nn::Matrix;
using nn::Vector;

inline constexpr double kMaxAccel = 4.0;

/// Column-major batch of network inputs.
struct StateBatch {
  Matrix states;  // kObsDim x B, already normalized
  Matrix alphas;  // 1 x B

  nn::Index size() const { return states.cols(); }
};

inline Matrix to_column(const Observation& o) {
  Matrix m(static_cast<nn::Index>(kObsDim), 1);
  for (std::size_t i = 0; i < kObsDim; ++i) m(static_cast<nn::Index>(i), 0) = o[i];
  return m;
}

inline Matrix row_of(std::span<const double> v) {
  Matrix m(1, static_cast<nn::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<nn::Index>(i)) = v[i];
  return m;
}

/// Output of one batched critic pass, kept for the backward pass.
struct CriticEval {
  nn::Tape tape;
  Vector mean;
  Vector variance;  // softplus(raw) + floor

  GaussianReturn at(nn::Index i) const { return {mean(i), variance(i)}; }
};

class CriticNet {
 public:
  /// I:16 -> h1:64, I_alpha:1 -> h2:64, (h1, h2, I_act) -> h3:64 -> h4:64 -> (mean, raw variance)
  static nn::NetworkSpec architecture() {
    using nn::Activation;
    constexpr double s = 0.01;
    return {{{"state", static_cast<nn::Index>(kObsDim)}, {"action", 1}, {"alpha", 1}},
            {{"h1", {"state"}, 64, Activation::relu, s},
             {"h2", {"alpha"}, 64, Activation::relu, s},
             {"h3", {"h1", "h2", "action"}, 64, Activation::relu, s},
             {"h4", {"h3"}, 64, Activation::relu, s},
             {"out", {"h4"}, 2, Activation::linear, s}}};
  }

  CriticNet() : net_(architecture()) {}
  explicit CriticNet(nn::Mlp net) : net_(std::move(net)) {
    if (!(net_.spec() == architecture())) throw std::invalid_argument("not a critic architecture");
  }
  static CriticNet init(std::uint64_t seed) { return CriticNet(nn::Mlp::init(architecture(), seed)); }

  const nn::Mlp& net() const { return net_; }
  nn::Mlp& net() { return net_; }

  CriticEval evaluate(const Matrix& states, const Matrix& actions, const Matrix& alphas) const {
    const Matrix in[] = {states, actions, alphas};
    CriticEval e{net_.forward(in), {}, {}};
    const Matrix& out = e.tape.output();
    e.mean = out.row(0).transpose();
    e.variance = out.row(1).transpose().unaryExpr([](double r) { return nn::softplus(r) + kVarianceFloor; });
    return e;
  }

  /// Backpropagates d(loss)/d(mean) and d(loss)/d(variance) per sample.
  nn::Gradients backward(const CriticEval& e, const Vector& d_mean, const Vector& d_variance,
                         bool want_params = true) const {
    const Matrix& out = e.tape.output();
    Matrix g(2, out.cols());
    g.row(0) = d_mean.transpose();
    for (nn::Index i = 0; i < out.cols(); ++i) g(1, i) = d_variance(i) * nn::sigmoid(out(1, i));
    return net_.backward(e.tape, g, want_params);
  }

  /// state must already be normalized.
  GaussianReturn predict(const Observation& state, double action, RiskLevel alpha) const {
    Matrix a(1, 1), al(1, 1);
    a(0, 0) = action;
    al(0, 0) = alpha.value();
    return evaluate(to_column(state), a, al).at(0);
  }

 private:
  nn::Mlp net_;
};

/// Regression target for one transition.
struct TdTarget {
  GaussianReturn target;  // mean and variance of r + gamma * Z(s', a')
  double regression_std = 0.0;
};

/// Builds the distributional Bellman target for one transition.
///
/// `next` is the target critic at (s', a'), `anchor_mean` the target critic's
/// mean at (s, a). The variance combines the bootstrapped variance with the
/// squared deviation of the sampled return from the current mean estimate,
///   var = (r + gamma*Q' - Q(s,a))^2 + gamma^2 * Var',
/// whose expectation over (r, s') is the variance recursion for Z(s, a); with
/// deterministic transitions it reduces to gamma^2 * Var' at the fixed point.
/// Terminal transitions drop the bootstrap terms. The regression std is
/// sqrt(var); see linearize_std for the unbiased alternative.
inline TdTarget make_target(double reward, bool done, double gamma, const GaussianReturn& next,
                            double anchor_mean) {
  TdTarget t;
  const double boot = done ? 0.0 : 1.0;
  t.target.mean = reward + boot * gamma * next.mean;
  const double dev = t.target.mean - anchor_mean;
  t.target.variance = std::max(dev * dev + boot * gamma * gamma * next.variance, kVarianceFloor);
  t.regression_std = std::sqrt(t.target.variance);
  return t;
}

/// Replaces the regression std by sqrt(var) linearized around `sigma`:
/// (var + sigma^2) / (2 sigma). With sigma the (gradient-stopped) prediction,
/// the expected update vanishes exactly when sigma^2 = E[var], whereas
/// regressing onto sqrt(var) settles at E[sqrt(var)]^2 < E[var] whenever the
/// sampled variance is random.
inline void linearize_std(TdTarget& t, double sigma) {
  const double s = std::max(sigma, std::sqrt(kVarianceFloor));
  t.regression_std = (t.target.variance + s * s) / (2.0 * s);
}

/// Batched TD targets from the target critic. Terminal entries ignore `next_actions`.
inline std::vector<TdTarget> make_targets(const CriticNet& target_critic, const Matrix& states,
                                          const Matrix& actions, const Matrix& next_states,
                                          const Matrix& next_actions, const Matrix& alphas,
                                          std::span<const double> rewards,
                                          std::span<const std::uint8_t> dones, double gamma) {
  const nn::Index b = states.cols();
  if (static_cast<nn::Index>(rewards.size()) != b || static_cast<nn::Index>(dones.size()) != b)
    throw std::invalid_argument("target batch size mismatch");
  const CriticEval cur = target_critic.evaluate(states, actions, alphas);
  const CriticEval nxt = target_critic.evaluate(next_states, next_actions, alphas);
  std::vector<TdTarget> out;
  out.reserve(static_cast<std::size_t>(b));
  for (nn::Index i = 0; i < b; ++i)
    out.push_back(make_target(rewards[static_cast<std::size_t>(i)], dones[static_cast<std::size_t>(i)] != 0,
                              gamma, nxt.at(i), cur.mean(i)));
  return out;
}

struct CriticLoss {
  double loss = 0.0;
  nn::Gradients grads;
  CriticEval eval;
};

/// Mean squared 2-Wasserstein distance between the predictions in `eval` and
/// constant targets, with gradients through the network when requested.
inline CriticLoss critic_loss_from_eval(const CriticNet& net, CriticEval eval,
                                        std::span<const TdTarget> targets, bool want_grads = true) {
  const nn::Index b = eval.mean.size();
  if (b == 0) throw std::invalid_argument("critic loss needs a nonempty batch");
  if (static_cast<nn::Index>(targets.size()) != b)
    throw std::invalid_argument("critic loss: target count mismatch");
  CriticLoss r;
  r.eval = std::move(eval);
  Vector dm(b), dv(b);
  double total = 0.0;
  for (nn::Index i = 0; i < b; ++i) {
    const TdTarget& t = targets[static_cast<std::size_t>(i)];
    const double sigma = std::sqrt(r.eval.variance(i));
    const double em = r.eval.mean(i) - t.target.mean;
    const double es = sigma - t.regression_std;
    total += em * em + es * es;
    dm(i) = 2.0 * em / static_cast<double>(b);
    dv(i) = 2.0 * es / static_cast<double>(b) / (2.0 * sigma);
  }
  r.loss = total / static_cast<double>(b);
  if (want_grads) r.grads = net.backward(r.eval, dm, dv);
  return r;
}

inline CriticLoss critic_loss_and_grads(const CriticNet& net, const Matrix& states, const Matrix& actions,
                                        const Matrix& alphas, std::span<const TdTarget> targets,
                                        bool want_grads = true) {
  if (states.cols() == 0) throw std::invalid_argument("critic loss needs a nonempty batch");
  return critic_loss_from_eval(net, net.evaluate(states, actions, alphas), targets, want_grads);
}

/// Loss against targets whose regression std is linearized around the
/// current prediction (held constant for differentiation).
inline CriticLoss critic_loss_linearized(const CriticNet& net, const Matrix& states, const Matrix& actions,
                                         const Matrix& alphas, std::vector<TdTarget> targets,
                                         bool want_grads = true) {
  if (states.cols() == 0) throw std::invalid_argument("critic loss needs a nonempty batch");
  CriticEval e = net.evaluate(states, actions, alphas);
  if (static_cast<nn::Index>(targets.size()) != e.mean.size())
    throw std::invalid_argument("critic loss: target count mismatch");
  for (nn::Index i = 0; i < e.mean.size(); ++i)
    linearize_std(targets[static_cast<std::size_t>(i)], std::sqrt(e.variance(i)));
  return critic_loss_from_eval(net, std::move(e), targets, want_grads);
}

inline void soft_update(CriticNet& target, const CriticNet& live, double tau) {
  if (!(target.net().spec() == live.net().spec()))
    throw std::invalid_argument("soft_update: architectures differ");
  nn::soft_update(target.net().params(), live.net().params(), tau);
}

}  // namespace wcpg
