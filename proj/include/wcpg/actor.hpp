#pragma once

// Alpha-conditioned deterministic policy and its CVaR policy gradient.

#include "wcpg/critic.hpp"
#include "wcpg/nn.hpp"
#include "wcpg/risk.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace wcpg {

class ActorNet {
 public:
  /// I:16 -> h1:32, I_alpha:1 -> h2:16, (h1, h2) -> h3:32 -> tanh, scaled by 4 m/s^2
  static nn::NetworkSpec architecture() {
    using nn::Activation;
    const double s = std::sqrt(2.0);
    return {{{"state", static_cast<nn::Index>(kObsDim)}, {"alpha", 1}},
            {{"h1", {"state"}, 32, Activation::relu, s},
             {"h2", {"alpha"}, 16, Activation::relu, s},
             {"h3", {"h1", "h2"}, 32, Activation::relu, s},
             {"out", {"h3"}, 1, Activation::tanh, s}}};
  }

  ActorNet() : net_(architecture()) {}
  explicit ActorNet(nn::Mlp net) : net_(std::move(net)) {
    if (!(net_.spec() == architecture())) throw std::invalid_argument("not an actor architecture");
  }
  static ActorNet init(std::uint64_t seed) { return ActorNet(nn::Mlp::init(architecture(), seed)); }

  const nn::Mlp& net() const { return net_; }
  nn::Mlp& net() { return net_; }

  nn::Tape forward(const Matrix& states, const Matrix& alphas) const {
    const Matrix in[] = {states, alphas};
    return net_.forward(in);
  }

  /// Actions (1 x B) in m/s^2.
  Matrix actions(const Matrix& states, const Matrix& alphas) const {
    return kMaxAccel * forward(states, alphas).output();
  }

  /// state must already be normalized.
  double act(const Observation& state, RiskLevel alpha) const {
    Matrix al(1, 1);
    al(0, 0) = alpha.value();
    return actions(to_column(state), al)(0, 0);
  }

 private:
  nn::Mlp net_;
};

/// action + N(0, sigma^2), clipped to the acceleration bounds.
template <typename Rng>
double explore(double action, double noise_sigma, Rng& rng) {
  if (noise_sigma < 0) throw std::invalid_argument("noise sigma must be non-negative");
  if (noise_sigma == 0) return action;
  std::normal_distribution<double> n(0.0, noise_sigma);
  return std::clamp(action + n(rng), -kMaxAccel, kMaxAccel);
}

/// Which part of the CVaR objective to differentiate; `both` is the real update.
enum class CvarPath { both, mean_only, spread_only };

struct ActorGradient {
  double objective = 0.0;  // batch mean of CVaR(predict(s, pi(s, alpha)), alpha)
  nn::ParamSet grads;      // ascent direction
  nn::Gradients input_grads;
  std::uint64_t pattern = 0;
};

/// Gradient of the batch-mean CVaR objective with respect to the actor
/// parameters, chaining the critic's action gradient through the policy.
inline ActorGradient actor_update(const ActorNet& actor, const CriticNet& critic,
                                  const StateBatch& batch, CvarRule rule = CvarRule::paper,
                                  CvarPath path = CvarPath::both, bool want_grads = true) {
  const nn::Index b = batch.size();
  if (b == 0) throw std::invalid_argument("actor update needs a nonempty batch");
  const nn::Tape atape = actor.forward(batch.states, batch.alphas);
  const Matrix acts = kMaxAccel * atape.output();
  const CriticEval ce = critic.evaluate(batch.states, acts, batch.alphas);
  ActorGradient r;
  Vector dm(b), dv(b), da(b);
  double total = 0.0;
  for (nn::Index i = 0; i < b; ++i) {
    const double alpha = batch.alphas(0, i);
    const RiskLevel level(alpha);
    const GaussianReturn z = ce.at(i);
    total += cvar(z, level, rule);
    const CvarPartials p = cvar_partials(z, level, rule);
    dm(i) = path == CvarPath::spread_only ? 0.0 : p.d_mean / static_cast<double>(b);
    dv(i) = path == CvarPath::mean_only ? 0.0 : p.d_variance / static_cast<double>(b);
    da(i) = path == CvarPath::mean_only ? 0.0 : p.d_alpha / static_cast<double>(b);
  }
  r.objective = total / static_cast<double>(b);
  r.pattern = atape.activation_pattern() * 31 + ce.tape.activation_pattern();
  if (!want_grads) return r;
  const nn::Gradients cg = critic.backward(ce, dm, dv, false);
  const Matrix d_action = cg.inputs[1];  // d objective / d action
  r.input_grads = actor.net().backward(atape, kMaxAccel * d_action, true);
  r.grads = std::move(r.input_grads.params);
  // Add the direct paths from state and alpha into the critic, and alpha's
  // effect on the CVaR coefficient.
  r.input_grads.inputs[0] += cg.inputs[0];
  r.input_grads.inputs[1] += cg.inputs[2] + da.transpose();
  return r;
}

inline void soft_update(ActorNet& target, const ActorNet& live, double tau) {
  if (!(target.net().spec() == live.net().spec()))
    throw std::invalid_argument("soft_update: architectures differ");
  nn::soft_update(target.net().params(), live.net().params(), tau);
}

}  // namespace wcpg
