#pragma once

// Fast/slow lane selection: a two-lane, fixed-horizon MDP small enough to
// solve the CVaR-optimal lane-change probability by brute force.

#include "wcpg/replay.hpp"
#include "wcpg/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace wcpg::lanes {

enum Lane : int { right = 0, left = 1 };

struct LaneMdp {
  int horizon = 4;
  double left_mean = 2.0, left_variance = 4.0;
  double right_mean = 1.0, right_variance = 1.0;
  Lane start = right;

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    if (!(left_variance > 0 && right_variance > 0))
      throw std::invalid_argument("lane reward variances must be positive");
  }
  double mean(int lane) const { return lane == left ? left_mean : right_mean; }
  double std_dev(int lane) const { return std::sqrt(lane == left ? left_variance : right_variance); }
};

/// Probability of switching lanes, applied identically at every step.
struct LanePolicy {
  double p_change = 0.0;

  explicit LanePolicy(double p) : p_change(p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p_change must be in [0, 1]");
  }
};

/// Pre-drawn randomness for a batch of trials, shared across policies.
struct CommonDraws {
  int horizon = 0;
  std::vector<double> normals;   // trials x horizon
  std::vector<double> uniforms;  // trials x horizon

  std::size_t trials() const { return horizon ? normals.size() / static_cast<std::size_t>(horizon) : 0; }
};

template <typename Rng>
CommonDraws draw_common(const LaneMdp& mdp, std::size_t n_trials, Rng& rng) {
  CommonDraws d;
  d.horizon = mdp.horizon;
  const std::size_t n = n_trials * static_cast<std::size_t>(mdp.horizon);
  d.normals.resize(n);
  d.uniforms.resize(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    d.normals[i] = normal(rng);
    d.uniforms[i] = unif(rng);
  }
  return d;
}

/// Each step: collect the current lane's reward, then switch with probability p_change.
inline std::vector<double> rollout(const LaneMdp& mdp, const LanePolicy& policy, const CommonDraws& d) {
  mdp.validate();
  if (d.horizon != mdp.horizon) throw std::invalid_argument("draws were made for another horizon");
  const std::size_t h = static_cast<std::size_t>(mdp.horizon);
  std::vector<double> returns(d.trials());
  for (std::size_t k = 0; k < returns.size(); ++k) {
    int lane = mdp.start;
    double total = 0.0;
    for (std::size_t t = 0; t < h; ++t) {
      total += mdp.mean(lane) + mdp.std_dev(lane) * d.normals[k * h + t];
      if (d.uniforms[k * h + t] < policy.p_change) lane = 1 - lane;
    }
    returns[k] = total;
  }
  return returns;
}

template <typename Rng>
std::vector<double> rollout(const LaneMdp& mdp, const LanePolicy& policy, std::size_t n_trials, Rng& rng) {
  if (n_trials < 1) throw std::invalid_argument("need at least one trial");
  return rollout(mdp, policy, draw_common(mdp, n_trials, rng));
}

/// Mean of the lowest ceil(alpha * n) samples.
inline double empirical_cvar(std::vector<double> returns, double alpha) {
  if (returns.empty()) throw std::invalid_argument("empirical CVaR of an empty sample");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
  const std::size_t n = returns.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  if (k == n) return std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(n);
  std::nth_element(returns.begin(), returns.begin() + static_cast<std::ptrdiff_t>(k), returns.end());
  return std::accumulate(returns.begin(), returns.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(k);
}

/// Sorted sample with prefix sums: CVaR at any alpha in O(1).
class TailProfile {
 public:
  explicit TailProfile(std::vector<double> returns) : sorted_(std::move(returns)) {
    if (sorted_.empty()) throw std::invalid_argument("empty sample");
    std::sort(sorted_.begin(), sorted_.end());
    prefix_.resize(sorted_.size() + 1, 0.0);
    for (std::size_t i = 0; i < sorted_.size(); ++i) prefix_[i + 1] = prefix_[i] + sorted_[i];
  }
  double cvar(double alpha) const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
    const std::size_t n = sorted_.size();
    std::size_t k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    return prefix_[k] / static_cast<double>(k);
  }

 private:
  std::vector<double> sorted_;
  std::vector<double> prefix_;
};

/// grid_size evenly spaced points on [0, 1], endpoints included.
inline std::vector<double> policy_grid(std::size_t grid_size = 32) {
  if (grid_size < 1) throw std::invalid_argument("policy grid must be nonempty");
  std::vector<double> g(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i)
    g[i] = grid_size == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(grid_size - 1);
  return g;
}

struct GridOptimum {
  double best_p_change = 0.0;
  double cvar = 0.0;
};

/// Every grid policy evaluated on the same draws; ties go to the smaller p_change.
class PolicyGridSolver {
 public:
  PolicyGridSolver(const LaneMdp& mdp, std::vector<double> grid, const CommonDraws& draws)
      : grid_(std::move(grid)) {
    if (grid_.empty()) throw std::invalid_argument("policy grid must be nonempty");
    for (double p : grid_) profiles_.emplace_back(rollout(mdp, LanePolicy(p), draws));
  }

  GridOptimum solve(double alpha) const {
    GridOptimum best{grid_[0], profiles_[0].cvar(alpha)};
    for (std::size_t i = 1; i < grid_.size(); ++i) {
      const double c = profiles_[i].cvar(alpha);
      if (c > best.cvar) best = {grid_[i], c};
    }
    return best;
  }

  const std::vector<double>& grid() const { return grid_; }

 private:
  std::vector<double> grid_;
  std::vector<TailProfile> profiles_;
};

template <typename Rng>
GridOptimum grid_search_optimal(const LaneMdp& mdp, double alpha, std::size_t grid_size,
                                std::size_t n_trials, Rng& rng) {
  const CommonDraws d = draw_common(mdp, n_trials, rng);
  return PolicyGridSolver(mdp, policy_grid(grid_size), d).solve(alpha);
}

struct SweepRow {
  double alpha = 0.0;
  double best_p_change = 0.0;
  double cvar = 0.0;
};

inline std::vector<SweepRow> alpha_sweep(const LaneMdp& mdp, const std::vector<double>& alphas,
                                         std::size_t grid_size, std::size_t n_trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const CommonDraws d = draw_common(mdp, n_trials, rng);
  const PolicyGridSolver solver(mdp, policy_grid(grid_size), d);
  std::vector<SweepRow> rows;
  for (double a : alphas) {
    const GridOptimum o = solver.solve(a);
    rows.push_back({a, o.best_p_change, o.cvar});
  }
  return rows;
}

/// Width-3 median filter: removes isolated single-point flips.
inline std::vector<double> majority_filter(const std::vector<double>& v) {
  if (v.size() < 3) return v;
  std::vector<double> out(v);
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    double w[3] = {v[i - 1], v[i], v[i + 1]};
    std::sort(w, w + 3);
    out[i] = w[1];
  }
  return out;
}

/// The lane MDP as a tabular problem: state index = 2 * t + lane, actions {stay, change}.
inline TabularMdp to_tabular(const LaneMdp& mdp) {
  mdp.validate();
  TabularMdp t;
  for (int step = 0; step < mdp.horizon; ++step)
    for (int lane = 0; lane < 2; ++lane) {
      std::vector<TabularAction> acts;
      for (int change = 0; change < 2; ++change) {
        TabularAction a;
        a.reward_mean = mdp.mean(lane);
        a.reward_variance = lane == left ? mdp.left_variance : mdp.right_variance;
        const int next_lane = change ? 1 - lane : lane;
        a.outcomes.push_back({1.0, step + 1 < mdp.horizon ? 2 * (step + 1) + next_lane : -1});
        acts.push_back(a);
      }
      t.actions.push_back(acts);
    }
  return t;
}

inline TabularPolicy tabular_policy(const LaneMdp& mdp, double p_change) {
  return TabularPolicy(static_cast<std::size_t>(2 * mdp.horizon), {1.0 - p_change, p_change});
}

inline int state_index(int step, int lane) { return 2 * step + lane; }

/// One-hot lane and time step, padded to the network input width.
inline Observation encode(const LaneMdp& mdp, int step, int lane) {
  if (2 + mdp.horizon > static_cast<int>(kObsDim)) throw std::invalid_argument("horizon too long to encode");
  Observation o{};
  o[static_cast<std::size_t>(lane)] = 1.0;
  if (step < mdp.horizon) o[static_cast<std::size_t>(2 + step)] = 1.0;
  return o;
}

/// The lane MDP behind the continuous-action environment interface:
/// a positive action requests a lane change.
class LaneEnv {
 public:
  struct Outcome {
    Observation observation{};
    double reward = 0.0;
    bool done = false;
    int lane = right;
  };

  explicit LaneEnv(LaneMdp mdp = {}) : mdp_(mdp) { mdp_.validate(); }

  Observation reset(std::uint64_t seed) {
    rng_.seed(seed);
    step_ = 0;
    lane_ = mdp_.start;
    return encode(mdp_, step_, lane_);
  }

  Outcome step(double action) {
    if (step_ >= mdp_.horizon) throw std::logic_error("episode already finished");
    std::normal_distribution<double> normal(0.0, 1.0);
    Outcome o;
    o.reward = mdp_.mean(lane_) + mdp_.std_dev(lane_) * normal(rng_);
    if (action > 0.0) lane_ = 1 - lane_;
    ++step_;
    o.done = step_ >= mdp_.horizon;
    o.lane = lane_;
    o.observation = encode(mdp_, step_, lane_);
    return o;
  }

  int step_index() const { return step_; }
  int lane() const { return lane_; }
  const LaneMdp& mdp() const { return mdp_; }

 private:
  LaneMdp mdp_;
  std::mt19937_64 rng_;
  int step_ = 0;
  int lane_ = right;
};

}  // namespace wcpg::lanes
