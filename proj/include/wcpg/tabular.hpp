#pragma once

// Exact policy evaluation of mean and variance of return on small enumerated MDPs.

#include "wcpg/risk.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wcpg {

struct TabularOutcome {
  double prob = 1.0;
  int next_state = -1;  // -1 terminates the episode
};

struct TabularAction {
  double reward_mean = 0.0;
  double reward_variance = 0.0;
  std::vector<TabularOutcome> outcomes;
};

struct TabularMdp {
  std::vector<std::vector<TabularAction>> actions;  // actions[state][action]
};

/// pi(a | s), rows indexed by state.
using TabularPolicy = std::vector<std::vector<double>>;

/// Return distribution moments per (state, action).
using ReturnTable = std::vector<std::vector<GaussianReturn>>;

/// Solves the mean Bellman equation and the variance recursion exactly:
///   Q = r + gamma P Q
///   V = var(r) + gamma^2 (P(Q^2) - (PQ)^2) + gamma^2 P V
/// where P maps (s,a) to the distribution over (s', a') under the policy.
/// Variances here are exact and may be zero (not floored).
inline ReturnTable policy_evaluate_tabular(const TabularMdp& mdp, const TabularPolicy& policy,
                                           double gamma) {
  if (policy.size() != mdp.actions.size()) throw std::invalid_argument("policy/MDP state mismatch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  std::vector<std::vector<int>> index(mdp.actions.size());
  int n = 0;
  for (std::size_t s = 0; s < mdp.actions.size(); ++s) {
    if (policy[s].size() != mdp.actions[s].size())
      throw std::invalid_argument("policy/MDP action mismatch");
    for (std::size_t a = 0; a < mdp.actions[s].size(); ++a) index[s].push_back(n++);
  }
  if (n > 100) throw std::invalid_argument("tabular evaluation limited to 100 state-action pairs");

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r(n), v(n);
  for (std::size_t s = 0; s < mdp.actions.size(); ++s) {
    for (std::size_t a = 0; a < mdp.actions[s].size(); ++a) {
      const TabularAction& act = mdp.actions[s][a];
      const int i = index[s][a];
      r(i) = act.reward_mean;
      v(i) = act.reward_variance;
      for (const auto& o : act.outcomes) {
        if (o.next_state < 0) continue;
        const auto ns = static_cast<std::size_t>(o.next_state);
        if (ns >= mdp.actions.size()) throw std::invalid_argument("outcome leads to unknown state");
        for (std::size_t a2 = 0; a2 < mdp.actions[ns].size(); ++a2)
          p(i, index[ns][a2]) += o.prob * policy[ns][a2];
      }
    }
  }

  if (gamma == 1.0) {
    // Every pair must reach termination with positive probability.
    std::vector<bool> ends(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) ends[static_cast<std::size_t>(i)] = p.row(i).sum() < 1.0 - 1e-12;
    bool changed = true;
    while (changed) {
      changed = false;
      for (int i = 0; i < n; ++i) {
        if (ends[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < n; ++j)
          if (p(i, j) > 0 && ends[static_cast<std::size_t>(j)]) {
            ends[static_cast<std::size_t>(i)] = true;
            changed = true;
            break;
          }
      }
    }
    for (int i = 0; i < n; ++i)
      if (!ends[static_cast<std::size_t>(i)])
        throw std::invalid_argument("MDP is not episodic under this policy and gamma = 1");
  }

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd q = (eye - gamma * p).fullPivLu().solve(r);
  const Eigen::VectorXd pq = p * q;
  const Eigen::VectorXd spread = p * q.cwiseProduct(q) - pq.cwiseProduct(pq);
  const Eigen::VectorXd var =
      (eye - gamma * gamma * p).fullPivLu().solve(v + gamma * gamma * spread);

  ReturnTable out(mdp.actions.size());
  for (std::size_t s = 0; s < mdp.actions.size(); ++s)
    for (std::size_t a = 0; a < mdp.actions[s].size(); ++a) {
      const int i = index[s][a];
      out[s].push_back({q(i), std::max(var(i), 0.0)});
    }
  return out;
}

}  // namespace wcpg
