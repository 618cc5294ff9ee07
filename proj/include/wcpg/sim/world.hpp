#pragma once

// Multi-agent driving world: reset, rule-based traffic, spawning, the
// 16-dimensional observation and the environment step.

#include "wcpg/replay.hpp"
#include "wcpg/sim/geometry.hpp"
#include "wcpg/sim/scenario.hpp"
#include "wcpg/sim/vehicle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcpg::sim {

enum class TerminalStatus { running, collision, success, timeout };

inline const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::running: return "running";
    case TerminalStatus::collision: return "collision";
    case TerminalStatus::success: return "success";
    case TerminalStatus::timeout: return "timeout";
  }
  return "?";
}

inline constexpr double kCollisionReward = -50.0;
inline constexpr double kSuccessRadius = 2.0;
inline constexpr double kConflictRange = 30.0;
inline constexpr double kTimeGap = 1.5;
inline constexpr double kMinGap = 2.0;
inline constexpr double kLeaderRange = 80.0;
inline constexpr double kLaneChangeSeconds = 3.0;
inline constexpr double kSpawnClearance = 20.0;
inline constexpr double kPadDistance = 200.0;

struct WorldState {
  std::shared_ptr<const Layout> layout;
  VehicleState ego;
  std::vector<VehicleState> agents;
  int step_count = 0;
  std::mt19937_64 rng;
  TerminalStatus status = TerminalStatus::running;
  int next_id = 1;
};

struct StepInfo {
  TerminalStatus cause = TerminalStatus::running;
  int steps = 0;
  double ego_s = 0.0;
  std::array<double, 3> nearest_distances{kPadDistance, kPadDistance, kPadDistance};
};

struct StepOutcome {
  Observation observation{};
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

inline double lane_s(const WorldState& w, const VehicleState& v) {
  return w.layout->lanes.at(static_cast<std::size_t>(v.lane)).path->project(v.position()).s;
}

inline double ego_s(const WorldState& w) { return w.layout->ego_route->project(w.ego.position()).s; }

/// Whether the agent is currently negotiating its lane's conflict zone with the
/// ego: the agent is within 30 m before the zone, the ego has not cleared it
/// and the ego would reach it no later than 2 s after the agent.
inline bool conflict_active(const WorldState& w, const VehicleState& agent) {
  if (agent.lane < 0) return false;
  const LaneDef& lane = w.layout->lanes.at(static_cast<std::size_t>(agent.lane));
  if (!lane.conflict.exists()) return false;
  const double d_agent = lane.conflict.lane_s - lane_s(w, agent);
  if (d_agent <= 0.0 || d_agent > kConflictRange) return false;
  const double es = ego_s(w);
  if (es >= lane.conflict.ego_exit_s) return false;
  const double d_ego = lane.conflict.ego_enter_s - es;
  if (d_ego > kConflictRange) return false;
  const double t_ego = std::max(d_ego, 0.0) / std::max(w.ego.speed, 0.5);
  const double t_agent = d_agent / std::max(agent.speed, 0.5);
  return t_ego <= t_agent + 2.0;
}

/// Gap-keeping acceleration toward the closest leader in the agent's lane, or
/// +inf when no leader is close enough to matter. The ego only counts as a
/// leader when it physically occupies the lane and is not in an active
/// conflict with this agent.
inline double leader_accel(const WorldState& w, const VehicleState& agent, bool conflict) {
  const Path& path = *w.layout->lanes.at(static_cast<std::size_t>(agent.lane)).path;
  const double s = path.project(agent.position()).s;
  double best_ds = std::numeric_limits<double>::infinity();
  double lead_speed = 0.0, lead_len = kVehicleLength;
  for (const auto& o : w.agents) {
    if (o.id == agent.id || o.lane != agent.lane) continue;
    const double ds = path.project(o.position()).s - s;
    if (ds > 0 && ds < best_ds) {
      best_ds = ds;
      lead_speed = o.speed;
      lead_len = o.length;
    }
  }
  if (!conflict) {
    const Projection pe = path.project(w.ego.position());
    const double ds = pe.s - s;
    if (std::abs(pe.lateral) < 0.5 * (kLaneWidth + w.ego.width) && ds > 0 && ds < best_ds) {
      best_ds = ds;
      lead_speed = w.ego.speed;
      lead_len = w.ego.length;
    }
  }
  if (best_ds > kLeaderRange) return std::numeric_limits<double>::infinity();
  const double gap = best_ds - 0.5 * (agent.length + lead_len);
  if (gap < kMinGap) return -kAccelLimit;
  const double desired = kMinGap + kTimeGap * agent.speed;
  return std::clamp(0.25 * (gap - desired) + 0.8 * (lead_speed - agent.speed), -kAccelLimit, kAccelLimit);
}

/// Adaptive cruise toward the agent's target speed with gap control, plus its
/// behavior-specific response to a conflicting ego.
inline double agent_policy(const VehicleState& agent, const WorldState& w) {
  if (agent.behavior == Behavior::ego) throw std::invalid_argument("agent_policy called on the ego");
  const bool conflict = conflict_active(w, agent);
  // An agent that ignores the ego behaves exactly as if no conflict existed.
  const bool reacts = conflict && agent.behavior != Behavior::ignore;
  double a = std::clamp(agent.target_speed - agent.speed, -kAccelLimit, kAccelLimit);
  if (reacts && agent.behavior == Behavior::accelerate)
    a = agent.speed < 1.25 * agent.target_speed ? kAccelLimit : 0.0;
  a = std::min(a, leader_accel(w, agent, conflict));
  if (reacts && agent.behavior == Behavior::yield) {
    const LaneDef& lane = w.layout->lanes.at(static_cast<std::size_t>(agent.lane));
    const double d = lane.conflict.lane_s - lane_s(w, agent) - 6.0;
    const double stop = -agent.speed * agent.speed / (2.0 * std::max(d, 0.5));
    a = std::min(a, std::max(stop, -kAccelLimit));
  }
  return std::clamp(a, -kAccelLimit, kAccelLimit);
}

template <typename Rng>
VehicleState make_agent(const WorldState& w, const ScenarioConfig& cfg, int lane, double s, Rng& rng) {
  const Layout& L = *w.layout;
  const auto& path = L.lanes.at(static_cast<std::size_t>(lane)).path;
  std::uniform_real_distribution<double> speed(cfg.agent_speed_range[0], cfg.agent_speed_range[1]);
  std::discrete_distribution<int> behavior({cfg.behavior_mix[0], cfg.behavior_mix[1], cfg.behavior_mix[2]});
  VehicleState a;
  const Vec2 p = path->point_at(s);
  a.x = p.x;
  a.y = p.y;
  a.heading = path->heading_at(s);
  a.target_speed = speed(rng);
  a.speed = a.target_speed;
  const int b = behavior(rng);
  a.behavior = b == 0 ? Behavior::yield : (b == 1 ? Behavior::ignore : Behavior::accelerate);
  a.route = path;
  a.lane = lane;
  return a;
}

inline bool entry_clear(const WorldState& w, int lane) {
  const Vec2 entry = w.layout->lanes.at(static_cast<std::size_t>(lane)).path->point_at(0.0);
  if ((w.ego.position() - entry).norm() < kSpawnClearance) return false;
  for (const auto& a : w.agents)
    if ((a.position() - entry).norm() < kSpawnClearance) return false;
  return true;
}

/// Each birth lane spawns independently with probability spawn_rate when its
/// entry is clear and the agent cap allows.
template <typename Rng>
void spawn_tick(WorldState& w, const ScenarioConfig& cfg, Rng& rng) {
  if (w.status != TerminalStatus::running) throw std::logic_error("spawn_tick on a finished world");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 0; l < w.layout->lanes.size(); ++l) {
    if (!w.layout->lanes[l].birth) continue;
    const double draw = u(rng);
    if (draw >= cfg.spawn_rate) continue;
    if (!entry_clear(w, static_cast<int>(l))) continue;
    if (static_cast<int>(w.agents.size()) >= cfg.max_agents) continue;
    VehicleState a = make_agent(w, cfg, static_cast<int>(l), 0.0, rng);
    a.id = w.next_id++;
    w.agents.push_back(a);
  }
}

inline void spawn_tick(WorldState& w, const ScenarioConfig& cfg) { spawn_tick(w, cfg, w.rng); }

/// Ego block (speed, heading relative to route, lateral offset, distance to
/// goal) followed by the three nearest agents in the ego frame as
/// (dx, dy, relative heading, speed), padded with (200, 0, 0, 0).
inline Observation observe(const WorldState& w) {
  Observation o{};
  const Projection p = w.layout->ego_route->project(w.ego.position());
  o[0] = w.ego.speed;
  o[1] = wrap_angle(w.ego.heading - p.heading);
  o[2] = p.lateral;
  o[3] = w.layout->goal_s - p.s;
  const double c = std::cos(w.ego.heading), s = std::sin(w.ego.heading);
  std::vector<std::array<double, 5>> rel;
  rel.reserve(w.agents.size());
  for (const auto& a : w.agents) {
    const double dx = a.x - w.ego.x, dy = a.y - w.ego.y;
    rel.push_back({std::hypot(dx, dy), c * dx + s * dy, -s * dx + c * dy,
                   wrap_angle(a.heading - w.ego.heading), a.speed});
  }
  std::sort(rel.begin(), rel.end());
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t b = 4 + 4 * k;
    if (k < rel.size()) {
      o[b] = rel[k][1];
      o[b + 1] = rel[k][2];
      o[b + 2] = rel[k][3];
      o[b + 3] = rel[k][4];
    } else {
      o[b] = kPadDistance;
    }
  }
  return o;
}

/// Deterministic initial world for a seed: ego at the route start with a
/// sampled speed, plus scenario-specific pre-populated traffic.
inline WorldState reset(const ScenarioConfig& cfg, std::uint64_t seed,
                        std::shared_ptr<const Layout> layout = nullptr) {
  cfg.validate();
  WorldState w;
  w.layout = layout ? std::move(layout) : std::make_shared<const Layout>(make_layout(cfg));
  if (w.layout->kind != cfg.scenario) throw std::invalid_argument("layout does not match scenario");
  w.rng.seed(seed);
  const Layout& L = *w.layout;
  const Vec2 start = L.ego_route->point_at(L.ego_start_s);
  w.ego.x = start.x;
  w.ego.y = start.y;
  w.ego.heading = L.ego_route->heading_at(L.ego_start_s);
  w.ego.route = L.ego_route;
  w.ego.behavior = Behavior::ego;
  std::uniform_real_distribution<double> ego_speed(cfg.ego_init_speed_range[0], cfg.ego_init_speed_range[1]);
  w.ego.speed = ego_speed(w.rng);

  auto populate = [&](int lane, int count) {
    const auto band = L.initial_band.at(static_cast<std::size_t>(lane));
    std::uniform_real_distribution<double> pos(band[0], band[1]);
    const Path& path = *L.lanes.at(static_cast<std::size_t>(lane)).path;
    for (int k = 0; k < count && static_cast<int>(w.agents.size()) < cfg.max_agents; ++k) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double s = pos(w.rng);
        bool clear = (path.point_at(s) - w.ego.position()).norm() > kSpawnClearance;
        for (const auto& a : w.agents)
          if (a.lane == lane && std::abs(path.project(a.position()).s - s) < kSpawnClearance) clear = false;
        if (!clear) continue;
        VehicleState a = make_agent(w, cfg, lane, s, w.rng);
        a.id = w.next_id++;
        w.agents.push_back(a);
        break;
      }
    }
  };
  std::uniform_int_distribution<int> n_main(L.initial_count[0], L.initial_count[1]);
  populate(0, n_main(w.rng) + cfg.extra_agents);
  if (L.lanes.size() > 1) {
    std::uniform_int_distribution<int> n_side(L.secondary_count[0], L.secondary_count[1]);
    populate(1, n_side(w.rng));
  }
  return w;
}

/// Starts a quintic lane change for a yielding agent when the target lane has room.
inline bool try_lane_change(WorldState& w, VehicleState& agent) {
  const LaneDef& from = w.layout->lanes.at(static_cast<std::size_t>(agent.lane));
  if (from.change_to < 0) return false;
  const Path& to = *w.layout->lanes.at(static_cast<std::size_t>(from.change_to)).path;
  const double s = to.project(agent.position()).s;
  for (const auto& o : w.agents)
    if (o.lane == from.change_to && std::abs(to.project(o.position()).s - s) < kSpawnClearance) return false;
  const Projection target = to.project(agent.position());
  const double len = std::max(agent.speed * kLaneChangeSeconds, 10.0);
  const Vec2 end = to.points().back();
  if (target.s + len >= to.length() - 1.0) return false;
  // Main lanes run along +x in the merge layout.
  agent.route = std::make_shared<const Path>(
      PathBuilder(agent.position()).quintic_shift_x(len, target.point.y).line_to(end).build());
  agent.lane = from.change_to;
  return true;
}

/// Advances every vehicle by dt, spawns traffic and resolves termination:
/// collision (-50) takes precedence over success, which takes precedence over timeout (0).
inline StepOutcome env_step(WorldState& w, const ScenarioConfig& cfg, double ego_accel) {
  if (w.status != TerminalStatus::running) throw std::logic_error("env_step on a finished episode");
  const double dt = cfg.dt;

  std::vector<double> accels;
  accels.reserve(w.agents.size());
  std::vector<bool> change(w.agents.size(), false);
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    const VehicleState& a = w.agents[i];
    accels.push_back(agent_policy(a, w));
    change[i] = a.behavior == Behavior::yield && conflict_active(w, a) &&
                w.layout->lanes.at(static_cast<std::size_t>(a.lane)).change_to >= 0;
  }
  for (std::size_t i = 0; i < w.agents.size(); ++i)
    if (change[i]) try_lane_change(w, w.agents[i]);

  const double ego_steer = stanley_steer(w.ego, *w.ego.route);
  w.ego = bicycle_step(w.ego, ego_accel, ego_steer, dt);
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    VehicleState& a = w.agents[i];
    a = bicycle_step(a, accels[i], stanley_steer(a, *a.route), dt);
  }
  std::erase_if(w.agents, [](const VehicleState& a) {
    return a.route->project(a.position()).s >= a.route->length() - 0.5;
  });
  spawn_tick(w, cfg);
  ++w.step_count;

  StepOutcome out;
  const Projection p = w.layout->ego_route->project(w.ego.position());
  bool collided = false;
  const OrientedBox eb = w.ego.box();
  for (const auto& a : w.agents)
    if (overlap(eb, a.box())) collided = true;
  const bool reached = (w.ego.position() - w.layout->goal_point()).norm() <= kSuccessRadius ||
                       p.s >= w.layout->goal_s;
  if (collided) {
    w.status = TerminalStatus::collision;
    out.reward = kCollisionReward;
  } else if (reached) {
    w.status = TerminalStatus::success;
    out.reward = cfg.success_reward(w.step_count);
  } else if (w.step_count >= cfg.max_steps) {
    w.status = TerminalStatus::timeout;
    out.reward = 0.0;
  }
  out.done = w.status != TerminalStatus::running;
  out.observation = observe(w);
  out.info.cause = w.status;
  out.info.steps = w.step_count;
  out.info.ego_s = p.s;
  std::vector<double> d;
  for (const auto& a : w.agents) d.push_back((a.position() - w.ego.position()).norm());
  std::sort(d.begin(), d.end());
  for (std::size_t k = 0; k < 3 && k < d.size(); ++k) out.info.nearest_distances[k] = d[k];
  return out;
}

/// Driving world behind the trainer's environment interface.
class DrivingEnv {
 public:
  explicit DrivingEnv(ScenarioConfig cfg)
      : cfg_(cfg), layout_(std::make_shared<const Layout>(make_layout(cfg))) {
    cfg_.validate();
  }

  Observation reset(std::uint64_t seed) {
    world_ = sim::reset(cfg_, seed, layout_);
    return observe(world_);
  }

  StepOutcome step(double accel) { return env_step(world_, cfg_, accel); }

  const WorldState& world() const { return world_; }
  const ScenarioConfig& config() const { return cfg_; }

 private:
  ScenarioConfig cfg_;
  std::shared_ptr<const Layout> layout_;
  WorldState world_;
};

}  // namespace wcpg::sim
