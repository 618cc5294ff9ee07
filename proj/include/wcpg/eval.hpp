#pragma once

// Deterministic evaluation, summary statistics, extrapolation and risk-level
// sweeps, critic uncertainty traces and the gradient check report.

#include "wcpg/actor.hpp"
#include "wcpg/critic.hpp"
#include "wcpg/nn.hpp"
#include "wcpg/sim/world.hpp"
#include "wcpg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcpg::eval {

struct EvalRecord {
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::string cause;
  int steps = 0;
  double episode_return = 0.0;
  double mean_sigma = 0.0;
  double max_sigma = 0.0;
};

struct TraceRow {
  int decision = 0;
  int step = 0;  // environment steps taken before this decision
  double x = 0.0, y = 0.0, heading = 0.0, speed = 0.0;
  double action = 0.0;
  double reward = 0.0;  // summed over the held action
  double critic_mean = 0.0;
  double critic_sigma = 0.0;
  double nearest = 0.0;
  bool terminal = false;
  std::string cause;
};

struct EpisodeSettings {
  int max_steps = 300;
  int action_repeat = 4;
};

/// Greedy rollout: no exploration, normalizer frozen. Fills `trace` when given.
template <Environment Env>
EvalRecord evaluate_episode(Env& env, const Agent& ag, double alpha, std::uint64_t seed,
                            EpisodeSettings s = {}, std::vector<TraceRow>* trace = nullptr) {
  const RiskLevel level(alpha);
  EvalRecord rec;
  rec.seed = seed;
  rec.alpha = alpha;
  Observation obs = env.reset(seed);
  bool done = false;
  double sigma_sum = 0.0;
  int decisions = 0;
  while (!done && rec.steps < s.max_steps) {
    const double action = ag.act(obs, level.value());
    const GaussianReturn z = ag.predict(obs, action, level.value());
    sigma_sum += z.std_dev();
    rec.max_sigma = std::max(rec.max_sigma, z.std_dev());
    TraceRow row;
    row.decision = decisions;
    row.step = rec.steps;
    if constexpr (requires { env.world().ego; }) {
      const auto& e = env.world().ego;
      row.x = e.x;
      row.y = e.y;
      row.heading = e.heading;
      row.speed = e.speed;
    }
    row.action = action;
    row.critic_mean = z.mean;
    row.critic_sigma = z.std_dev();
    row.nearest = obs.size() > 4 ? std::hypot(obs[4], obs[5]) : 0.0;
    for (int k = 0; k < s.action_repeat && !done && rec.steps < s.max_steps; ++k) {
      const auto out = env.step(action);
      rec.episode_return += out.reward;
      row.reward += out.reward;
      obs = out.observation;
      done = out.done;
      ++rec.steps;
      if (done) rec.cause = terminal_cause(out);
    }
    row.terminal = done;
    row.cause = done ? rec.cause : "running";
    if (trace) trace->push_back(row);
    ++decisions;
  }
  if (!done) rec.cause = "truncated";
  rec.mean_sigma = decisions ? sigma_sum / decisions : 0.0;
  return rec;
}

/// Binomial standard error of a percentage: sqrt(p (1 - p) / n) * 100.
inline double sem_percent(int count, int n) {
  if (n <= 0) throw std::invalid_argument("sem_percent needs n > 0");
  if (count < 0 || count > n) throw std::invalid_argument("count outside [0, n]");
  const double p = static_cast<double>(count) / n;
  return std::sqrt(p * (1.0 - p) / n) * 100.0;
}

/// "15.0 ±3.6"
inline std::string format_rate(int count, int n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f \xC2\xB1%.1f", 100.0 * count / n, sem_percent(count, n));
  return buf;
}

struct Summary {
  int n = 0;
  int collisions = 0, successes = 0, timeouts = 0;
  double collision_pct = 0, success_pct = 0, timeout_pct = 0;
  double collision_sem = 0, success_sem = 0, timeout_sem = 0;
  double mean_steps = 0, mean_return = 0, mean_sigma = 0;
};

/// Every episode that is neither a collision nor a success counts as a timeout.
inline Summary summarize(const std::vector<EvalRecord>& rs) {
  Summary s;
  s.n = static_cast<int>(rs.size());
  if (s.n == 0) return s;
  for (const auto& r : rs) {
    if (r.cause == "collision")
      ++s.collisions;
    else if (r.cause == "success")
      ++s.successes;
    else
      ++s.timeouts;
    s.mean_steps += r.steps;
    s.mean_return += r.episode_return;
    s.mean_sigma += r.mean_sigma;
  }
  s.mean_steps /= s.n;
  s.mean_return /= s.n;
  s.mean_sigma /= s.n;
  s.collision_pct = 100.0 * s.collisions / s.n;
  s.success_pct = 100.0 * s.successes / s.n;
  s.timeout_pct = 100.0 * s.timeouts / s.n;
  s.collision_sem = sem_percent(s.collisions, s.n);
  s.success_sem = sem_percent(s.successes, s.n);
  s.timeout_sem = sem_percent(s.timeouts, s.n);
  return s;
}

struct EvalResult {
  std::vector<EvalRecord> records;  // ordered by seed
  Summary summary;
};

/// Trial i uses environment seed `seed + i`; the same seeds are reused for every alpha.
inline EvalResult evaluate(const Agent& ag, const sim::ScenarioConfig& cfg, double alpha, int n_trials,
                           std::uint64_t seed, EpisodeSettings s = {}) {
  if (n_trials < 1) throw std::invalid_argument("need at least one trial");
  sim::DrivingEnv env(cfg);
  s.max_steps = std::min(s.max_steps, cfg.max_steps);
  EvalResult r;
  for (int i = 0; i < n_trials; ++i)
    r.records.push_back(evaluate_episode(env, ag, alpha, seed + static_cast<std::uint64_t>(i), s));
  r.summary = summarize(r.records);
  return r;
}

/// One environment shift: agent speed upper bound offset, spawn rate and extra initial agents.
struct Shift {
  double velocity_offset = 0.0;
  double spawn_rate = 0.01;
  int extra_agents = 0;
};

struct SweepSpec {
  std::vector<Shift> shifts;
  std::vector<double> alphas;
  int trials_per_cell = 100;

  void validate() const {
    if (shifts.empty()) throw std::invalid_argument("sweep needs at least one shift");
    if (alphas.empty()) throw std::invalid_argument("sweep needs at least one alpha");
    if (trials_per_cell < 1) throw std::invalid_argument("sweep needs at least one trial per cell");
    for (double a : alphas) RiskLevel{a};
  }
};

/// Row labels of the left-turn extrapolation table.
inline std::vector<Shift> left_turn_shifts() {
  return {{5, 0.05, 0}, {10, 0.05, 0}, {15, 0.05, 0}, {0, 0.02, 0}, {0, 0.08, 0}, {10, 0.08, 0}};
}

struct SweepCell {
  Shift shift;
  double alpha = 0.0;
  Summary summary;
};

inline std::vector<SweepCell> extrapolation_sweep(const Agent& ag, const sim::ScenarioConfig& base,
                                                  const SweepSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<SweepCell> cells;
  for (const Shift& sh : spec.shifts) {
    const sim::ScenarioConfig cfg = base.extrapolated(sh.velocity_offset, sh.spawn_rate, sh.extra_agents);
    for (double a : spec.alphas)
      cells.push_back({sh, a, evaluate(ag, cfg, a, spec.trials_per_cell, seed).summary});
  }
  return cells;
}

/// Linear-interpolated percentile, q in [0, 100].
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct AlphaRow {
  double alpha = 0.0;
  double return_p01 = 0.0, return_p99 = 0.0, mean_return = 0.0;
  double mean_steps = 0.0;
  double mean_sigma = 0.0;
  Summary summary;
};

inline std::vector<AlphaRow> alpha_sweep(const Agent& ag, const sim::ScenarioConfig& cfg,
                                         const std::vector<double>& alphas, int n_trials, std::uint64_t seed) {
  if (alphas.empty()) throw std::invalid_argument("alpha sweep needs at least one alpha");
  std::vector<AlphaRow> rows;
  for (double a : alphas) {
    const EvalResult r = evaluate(ag, cfg, a, n_trials, seed);
    std::vector<double> returns;
    for (const auto& rec : r.records) returns.push_back(rec.episode_return);
    rows.push_back({a, percentile(returns, 1), percentile(returns, 99), r.summary.mean_return,
                    r.summary.mean_steps, r.summary.mean_sigma, r.summary});
  }
  return rows;
}

/// Average ranks, ties sharing the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two equal series");
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

inline std::vector<TraceRow> uncertainty_trace(const Agent& ag, const sim::ScenarioConfig& cfg, double alpha,
                                               std::uint64_t seed, EpisodeSettings s = {}) {
  sim::DrivingEnv env(cfg);
  std::vector<TraceRow> rows;
  evaluate_episode(env, ag, alpha, seed, s, &rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Gradient check report

struct GradcheckRow {
  std::string component;
  double worst_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = false;
};

inline constexpr double kGradcheckThreshold = 1e-4;

/// Random parameter point: initialized weights plus N(0, 1/fan_in) noise on
/// every weight and N(0, 0.1^2) on every bias, so all layers carry signal.
inline nn::Mlp random_point(const nn::NetworkSpec& spec, std::uint64_t seed) {
  nn::Mlp net = nn::Mlp::init(spec, seed);
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& l : net.params()) {
    const double s = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    l.weight = l.weight.unaryExpr([&](double w) { return w + s * n(rng); });
    l.bias = l.bias.unaryExpr([&](double b) { return b + 0.1 * n(rng); });
  }
  return net;
}

inline Matrix random_matrix(nn::Index rows, nn::Index cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (nn::Index j = 0; j < cols; ++j)
    for (nn::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

struct GradcheckOptions {
  int points = 10;
  int batch = 4;
  double h = 1e-5;
  std::uint64_t seed = 7;
  CvarRule rule = CvarRule::paper;
  // Multiplies every analytic gradient; anything other than 1 must fail.
  double corruption = 1.0;
};

inline std::vector<GradcheckRow> gradcheck_all(const GradcheckOptions& o = {}) {
  const nn::Index b = o.batch;
  const nn::Index d = static_cast<nn::Index>(kObsDim);
  auto run = [&](const std::string& name, const nn::NetworkSpec& spec, auto make_inputs, const nn::NetworkLoss& fn) {
    GradcheckRow row{name, 0.0, 0, 0, false};
    for (int p = 0; p < o.points; ++p) {
      const std::uint64_t seed = o.seed * 1000 + static_cast<std::uint64_t>(p);
      std::mt19937_64 rng(seed);
      const nn::FdReport r = nn::finite_difference_check(random_point(spec, seed), make_inputs(rng), fn, o.h);
      row.worst_rel_error = std::max(row.worst_rel_error, r.max_rel_error);
      row.checked += r.checked;
      row.skipped += r.skipped_kinks;
    }
    row.pass = row.checked > 0 && row.worst_rel_error <= kGradcheckThreshold;
    return row;
  };
  auto corrupt = [&](nn::Gradients& g) {
    if (o.corruption == 1.0) return;
    nn::scale(g.params, o.corruption);
    for (auto& m : g.inputs) m *= o.corruption;
  };
  auto alpha_row = [&](std::mt19937_64& rng) { return random_matrix(1, b, rng, 0.01, 1.0); };

  std::vector<GradcheckRow> out;

  // Actor output contracted with fixed random weights.
  std::mt19937_64 wrng(o.seed);
  const Matrix actor_w = random_matrix(1, b, wrng);
  out.push_back(run(
      "actor", ActorNet::architecture(),
      [&](std::mt19937_64& rng) { return std::vector<Matrix>{random_matrix(d, b, rng), alpha_row(rng)}; },
      [&](const nn::Mlp& net, std::span<const Matrix> in, bool want) {
        const nn::Tape t = net.forward(in);
        nn::LossWithGrad r;
        r.eval = {kMaxAccel * t.output().cwiseProduct(actor_w).sum(), t.activation_pattern()};
        if (want) {
          r.grads = net.backward(t, kMaxAccel * actor_w);
          corrupt(r.grads);
        }
        return r;
      }));

  // Critic mean and variance heads contracted with fixed random weights.
  const Vector cm = random_matrix(b, 1, wrng).col(0), cv = random_matrix(b, 1, wrng).col(0);
  auto critic_inputs = [&](std::mt19937_64& rng) {
    return std::vector<Matrix>{random_matrix(d, b, rng), random_matrix(1, b, rng, -kMaxAccel, kMaxAccel),
                               alpha_row(rng)};
  };
  out.push_back(run("critic", CriticNet::architecture(), critic_inputs,
                    [&](const nn::Mlp& net, std::span<const Matrix> in, bool want) {
                      const CriticNet c(net);
                      const CriticEval e = c.evaluate(in[0], in[1], in[2]);
                      nn::LossWithGrad r;
                      r.eval = {e.mean.dot(cm) + e.variance.dot(cv), e.tape.activation_pattern()};
                      if (want) {
                        r.grads = c.backward(e, cm, cv);
                        corrupt(r.grads);
                      }
                      return r;
                    }));

  // Wasserstein loss against fixed random targets.
  std::vector<TdTarget> targets;
  for (nn::Index i = 0; i < b; ++i) {
    const Matrix t = random_matrix(2, 1, wrng);
    targets.push_back(make_target(3.0 * t(0, 0), i % 2 == 0, 0.9, {t(1, 0), 2.0}, 0.5 * t(1, 0)));
  }
  out.push_back(run("w2_loss", CriticNet::architecture(), critic_inputs,
                    [&](const nn::Mlp& net, std::span<const Matrix> in, bool want) {
                      const CriticNet c(net);
                      const CriticLoss l = critic_loss_and_grads(c, in[0], in[1], in[2], targets, want);
                      nn::LossWithGrad r;
                      r.eval = {l.loss, l.eval.tape.activation_pattern()};
                      if (want) {
                        r.grads = l.grads;
                        corrupt(r.grads);
                      }
                      return r;
                    }));

  // Batch-mean CVaR of the critic's prediction at the actor's action, with
  // respect to the actor parameters and the state and alpha inputs.
  const CriticNet fixed_critic(random_point(CriticNet::architecture(), o.seed + 99));
  out.push_back(run(
      "cvar_objective", ActorNet::architecture(),
      [&](std::mt19937_64& rng) { return std::vector<Matrix>{random_matrix(d, b, rng), alpha_row(rng)}; },
      [&](const nn::Mlp& net, std::span<const Matrix> in, bool want) {
        const ActorNet a(net);
        ActorGradient g = actor_update(a, fixed_critic, {in[0], in[1]}, o.rule, CvarPath::both, want);
        nn::LossWithGrad r;
        r.eval = {g.objective, g.pattern};
        if (want) {
          r.grads.params = std::move(g.grads);
          r.grads.inputs = std::move(g.input_grads.inputs);
          corrupt(r.grads);
        }
        return r;
      }));
  return out;
}

}  // namespace wcpg::eval
