#pragma once

// The training loop: per-episode risk level, action repeat, exploration,
// replay, and one critic / actor / target update per decision.

#include "wcpg/actor.hpp"
#include "wcpg/checkpoint.hpp"
#include "wcpg/critic.hpp"
#include "wcpg/replay.hpp"
#include "wcpg/risk.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcpg {

/// Anything with reset(seed) -> Observation and step(action) -> {observation, reward, done}.
template <typename E>
concept Environment = requires(E env, std::uint64_t seed, double a) {
  { env.reset(seed) } -> std::convertible_to<Observation>;
  { env.step(a).observation } -> std::convertible_to<Observation>;
  { env.step(a).reward } -> std::convertible_to<double>;
  { env.step(a).done } -> std::convertible_to<bool>;
};

template <typename Outcome>
std::string terminal_cause(const Outcome& o) {
  if constexpr (requires { o.info.cause; })
    return to_string(o.info.cause);
  else
    return o.done ? "done" : "running";
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct TrainConfig {
  int episodes = 5000;
  int max_steps = 300;  // environment steps
  double gamma = 0.99;
  int batch = 512;
  double lr_actor = 1e-4;
  double lr_critic = 1e-4;
  double tau = 0.001;
  double noise_sigma = 2.0;
  int action_repeat = 4;
  std::array<double, 2> alpha_range{0.01, 1.0};
  std::uint64_t seed = 0;
  int eval_every = 0;  // episodes; 0 disables periodic evaluation
  int eval_trials = 20;
  std::vector<double> eval_alphas{0.02, 0.1, 0.3, 0.6, 1.0};
  std::string checkpoint_dir;
  CvarRule cvar_rule = CvarRule::paper;
  bool update_every_env_step = false;
  std::size_t replay_capacity = ReplayBuffer::kDefaultCapacity;

  void validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    if (episodes < 0) bad("episodes must be non-negative");
    if (max_steps < 1) bad("max_steps must be positive");
    if (!(gamma > 0 && gamma <= 1)) bad("gamma must be in (0, 1]");
    if (batch < 1) bad("batch must be positive");
    if (!(lr_actor > 0 && lr_critic > 0)) bad("learning rates must be positive");
    if (!(tau > 0 && tau <= 1)) bad("tau must be in (0, 1]");
    if (noise_sigma < 0) bad("noise_sigma must be non-negative");
    if (action_repeat < 1) bad("action_repeat must be positive");
    if (!(alpha_range[0] >= RiskLevel::kMin && alpha_range[0] <= alpha_range[1] && alpha_range[1] <= 1.0))
      bad("alpha_range must lie within [0.01, 1]");
    if (eval_every < 0 || eval_trials < 0) bad("evaluation settings must be non-negative");
    if (replay_capacity < static_cast<std::size_t>(batch)) bad("replay capacity below batch size");
  }

  double bootstrap_discount() const { return std::pow(gamma, action_repeat); }
};

/// Live and target networks, their optimizers and the input normalizer.
struct Agent {
  ActorNet actor, actor_target;
  CriticNet critic, critic_target;
  nn::AdamState actor_opt, critic_opt;
  RunningNormalizer normalizer;

  static Agent init(std::uint64_t seed, double lr_actor, double lr_critic) {
    Agent a;
    a.actor = ActorNet::init(splitmix64(seed ^ 0xac7041));
    a.critic = CriticNet::init(splitmix64(seed ^ 0xc217c));
    a.actor_target = a.actor;
    a.critic_target = a.critic;
    a.actor_opt = nn::AdamState(a.actor.net().params(), lr_actor);
    a.critic_opt = nn::AdamState(a.critic.net().params(), lr_critic);
    return a;
  }

  double act(const Observation& raw, double alpha) const {
    return actor.act(normalizer.normalize(raw), RiskLevel(alpha));
  }

  GaussianReturn predict(const Observation& raw, double action, double alpha) const {
    return critic.predict(normalizer.normalize(raw), action, RiskLevel(alpha));
  }

  ckpt::Bundle bundle() const { return {actor, actor_target, critic, critic_target, normalizer, {}}; }

  static Agent from_bundle(const ckpt::Bundle& b, double lr_actor, double lr_critic) {
    Agent a;
    a.actor = b.actor;
    a.actor_target = b.actor_target;
    a.critic = b.critic;
    a.critic_target = b.critic_target;
    a.normalizer = b.normalizer;
    a.actor_opt = nn::AdamState(a.actor.net().params(), lr_actor);
    a.critic_opt = nn::AdamState(a.critic.net().params(), lr_critic);
    return a;
  }
};

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
};

/// Normalized minibatch matrices.
struct Minibatch {
  Matrix states, next_states, actions, alphas;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
};

inline Minibatch assemble(const std::vector<Transition>& ts, const RunningNormalizer& norm) {
  const auto b = static_cast<nn::Index>(ts.size());
  Minibatch m;
  m.states.resize(static_cast<nn::Index>(kObsDim), b);
  m.next_states.resize(static_cast<nn::Index>(kObsDim), b);
  m.actions.resize(1, b);
  m.alphas.resize(1, b);
  for (nn::Index i = 0; i < b; ++i) {
    const Transition& t = ts[static_cast<std::size_t>(i)];
    const Observation s = norm.normalize(t.state), n = norm.normalize(t.next_state);
    for (std::size_t k = 0; k < kObsDim; ++k) {
      m.states(static_cast<nn::Index>(k), i) = s[k];
      m.next_states(static_cast<nn::Index>(k), i) = n[k];
    }
    m.actions(0, i) = t.action;
    m.alphas(0, i) = t.alpha;
    m.rewards.push_back(t.reward);
    m.dones.push_back(t.done);
  }
  return m;
}

/// One critic step on the Wasserstein loss against target-network targets.
inline double critic_step(Agent& ag, const Minibatch& mb, double discount) {
  const Matrix next_actions = ag.actor_target.actions(mb.next_states, mb.alphas);
  const auto targets = make_targets(ag.critic_target, mb.states, mb.actions, mb.next_states, next_actions,
                                    mb.alphas, mb.rewards, mb.dones, discount);
  CriticLoss cl = critic_loss_linearized(ag.critic, mb.states, mb.actions, mb.alphas, targets);
  if (!std::isfinite(cl.loss)) throw std::runtime_error("critic loss is not finite");
  if (!(cl.eval.variance.array() > 0.0).all()) throw std::runtime_error("critic predicted a non-positive variance");
  nn::adam_step(ag.critic.net().params(), cl.grads.params, ag.critic_opt);
  return cl.loss;
}

/// One actor ascent step on the batch-mean CVaR objective.
inline double actor_step(Agent& ag, const Minibatch& mb, CvarRule rule) {
  ActorGradient g = actor_update(ag.actor, ag.critic, {mb.states, mb.alphas}, rule);
  if (!std::isfinite(g.objective)) throw std::runtime_error("actor objective is not finite");
  nn::scale(g.grads, -1.0);
  nn::adam_step(ag.actor.net().params(), g.grads, ag.actor_opt);
  return g.objective;
}

template <typename Rng>
UpdateStats update(Agent& ag, const ReplayBuffer& buffer, const TrainConfig& cfg, Rng& rng) {
  const Minibatch mb = assemble(buffer.sample(static_cast<std::size_t>(cfg.batch), rng), ag.normalizer);
  UpdateStats s;
  s.critic_loss = critic_step(ag, mb, cfg.bootstrap_discount());
  s.actor_objective = actor_step(ag, mb, cfg.cvar_rule);
  soft_update(ag.critic_target, ag.critic, cfg.tau);
  soft_update(ag.actor_target, ag.actor, cfg.tau);
  return s;
}

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t env_seed = 0;
  double alpha = 0.0;
  double episode_return = 0.0;  // undiscounted sum of environment rewards
  int steps = 0;                // environment steps
  int decisions = 0;
  std::string cause;
  double mean_sigma = 0.0;  // critic std at the executed (s, a)
  double mean_critic_loss = 0.0;
  double mean_actor_objective = 0.0;
  int updates = 0;
};

struct EpisodeOptions {
  bool explore = true;
  bool learn = true;  // update the normalizer, store transitions and train
};

/// One episode with a fixed risk level. Each decision holds its action for
/// action_repeat environment steps and stores a single macro-transition whose
/// reward is the discounted sum over the repeat.
template <Environment Env, typename Rng>
EpisodeRecord run_episode(Env& env, Agent& ag, ReplayBuffer& buffer, const TrainConfig& cfg, double alpha,
                          std::uint64_t env_seed, Rng& rng, EpisodeOptions opt = {}) {
  RiskLevel level(alpha);
  EpisodeRecord rec;
  rec.alpha = alpha;
  rec.env_seed = env_seed;
  Observation obs = env.reset(env_seed);
  bool done = false;
  double sigma_sum = 0.0, loss_sum = 0.0, obj_sum = 0.0;
  while (!done && rec.steps < cfg.max_steps) {
    if (opt.learn) ag.normalizer.update(obs);
    double action = ag.act(obs, level.value());
    if (opt.explore) action = explore(action, cfg.noise_sigma, rng);
    sigma_sum += ag.predict(obs, action, level.value()).std_dev();
    double macro_reward = 0.0, discount = 1.0;
    Observation next = obs;
    std::string cause = "running";
    for (int k = 0; k < cfg.action_repeat && !done && rec.steps < cfg.max_steps; ++k) {
      const auto out = env.step(action);
      macro_reward += discount * out.reward;
      rec.episode_return += out.reward;
      discount *= cfg.gamma;
      next = out.observation;
      done = out.done;
      cause = terminal_cause(out);
      ++rec.steps;
      if (opt.learn && cfg.update_every_env_step && buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
        const UpdateStats s = update(ag, buffer, cfg, rng);
        loss_sum += s.critic_loss;
        obj_sum += s.actor_objective;
        ++rec.updates;
      }
    }
    ++rec.decisions;
    if (done) rec.cause = cause;
    if (opt.learn) {
      buffer.push({obs, action, macro_reward, next, done, level.value()});
      if (!cfg.update_every_env_step && buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
        const UpdateStats s = update(ag, buffer, cfg, rng);
        loss_sum += s.critic_loss;
        obj_sum += s.actor_objective;
        ++rec.updates;
      }
    }
    obs = next;
  }
  if (!done) rec.cause = "truncated";
  rec.mean_sigma = rec.decisions ? sigma_sum / rec.decisions : 0.0;
  rec.mean_critic_loss = rec.updates ? loss_sum / rec.updates : 0.0;
  rec.mean_actor_objective = rec.updates ? obj_sum / rec.updates : 0.0;
  return rec;
}

struct TrainResult {
  Agent agent;
  std::vector<EpisodeRecord> log;
};

/// Called after every episode; `agent` is the live state.
using EpisodeHook = std::function<void(const EpisodeRecord&, const Agent&)>;

template <Environment Env>
TrainResult train(Env& env, const TrainConfig& cfg, const EpisodeHook& hook = {}) {
  cfg.validate();
  TrainResult r{Agent::init(cfg.seed, cfg.lr_actor, cfg.lr_critic), {}};
  ReplayBuffer buffer(cfg.replay_capacity);
  std::mt19937_64 rng(splitmix64(cfg.seed));
  std::uniform_real_distribution<double> alpha_dist(cfg.alpha_range[0], cfg.alpha_range[1]);
  for (int e = 0; e < cfg.episodes; ++e) {
    const double alpha = cfg.alpha_range[0] == cfg.alpha_range[1] ? cfg.alpha_range[0] : alpha_dist(rng);
    const std::uint64_t env_seed = splitmix64(cfg.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(e));
    EpisodeRecord rec = run_episode(env, r.agent, buffer, cfg, alpha, env_seed, rng);
    rec.episode = e;
    r.log.push_back(rec);
    if (hook) hook(rec, r.agent);
  }
  return r;
}

}  // namespace wcpg
