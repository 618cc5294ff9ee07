#pragma once

// Scenario parameters and road layouts for the unprotected left turn and the
// highway merge.

#include "wcpg/sim/geometry.hpp"
#include "wcpg/sim/vehicle.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcpg::sim {

inline constexpr double kLaneWidth = 3.7;

enum class ScenarioKind { left_turn, merge };

inline const char* to_string(ScenarioKind k) { return k == ScenarioKind::left_turn ? "left_turn" : "merge"; }

inline ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "left_turn") return ScenarioKind::left_turn;
  if (s == "merge") return ScenarioKind::merge;
  throw std::invalid_argument("unknown scenario: " + s);
}

struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::left_turn;
  double scale = 240.0;
  std::array<double, 2> ego_init_speed_range{5.0, 20.0};
  std::array<double, 2> agent_speed_range{10.0, 20.0};
  double spawn_rate = 0.01;
  std::array<double, 3> behavior_mix{0.0, 0.8, 0.2};  // yield, ignore, accelerate
  int max_steps = 300;
  double dt = 0.1;
  int extra_agents = 0;
  int max_agents = 12;

  static ScenarioConfig left_turn() { return {}; }

  static ScenarioConfig merge() {
    ScenarioConfig c;
    c.scenario = ScenarioKind::merge;
    c.scale = 180.0;
    c.agent_speed_range = {5.0, 15.0};
    c.behavior_mix = {0.2, 0.4, 0.4};
    return c;
  }

  static ScenarioConfig for_kind(ScenarioKind k) { return k == ScenarioKind::merge ? merge() : left_turn(); }

  /// Raises the agent speed upper bound, replaces the spawn rate and adds
  /// pre-populated agents.
  ScenarioConfig extrapolated(double velocity_offset, double spawn, int extra) const {
    ScenarioConfig c = *this;
    c.agent_speed_range[1] += velocity_offset;
    c.spawn_rate = spawn;
    c.extra_agents = extra;
    c.validate();
    return c;
  }

  double success_reward(int steps) const {
    const double decay = std::exp(-static_cast<double>(steps) / 50.0);
    return scenario == ScenarioKind::left_turn ? 50.0 * decay + 10.0 : 75.0 * decay + 5.0;
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("scenario config: " + m); };
    if (!(scale > 0)) bad("scale must be positive");
    if (!(ego_init_speed_range[0] >= 0 && ego_init_speed_range[0] <= ego_init_speed_range[1]))
      bad("empty ego speed range");
    if (!(agent_speed_range[0] >= 0 && agent_speed_range[0] <= agent_speed_range[1]))
      bad("empty agent speed range");
    if (!(spawn_rate >= 0 && spawn_rate <= 1)) bad("spawn rate outside [0, 1]");
    double sum = 0;
    for (double p : behavior_mix) {
      if (p < 0) bad("negative behavior probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) bad("behavior probabilities must sum to 1");
    if (max_steps < 1) bad("max_steps must be positive");
    if (!(dt > 0)) bad("dt must be positive");
    if (extra_agents < 0) bad("extra_agents must be non-negative");
    if (max_agents < 1) bad("max_agents must be positive");
  }
};

/// Where the ego's route occupies a traffic lane.
struct ConflictZone {
  double ego_enter_s = std::numeric_limits<double>::infinity();
  double ego_exit_s = std::numeric_limits<double>::infinity();
  double lane_s = std::numeric_limits<double>::infinity();

  bool exists() const { return std::isfinite(ego_enter_s); }
};

struct LaneDef {
  std::shared_ptr<const Path> path;
  bool birth = false;
  ConflictZone conflict;
  int change_to = -1;  // lane a yielding agent may move into
};

struct Layout {
  ScenarioKind kind = ScenarioKind::left_turn;
  std::vector<LaneDef> lanes;
  std::shared_ptr<const Path> ego_route;
  double ego_start_s = 0.0;
  double goal_s = 0.0;
  // Ranges of lane arc length used to pre-populate each lane at reset.
  std::vector<std::array<double, 2>> initial_band;
  std::array<int, 2> initial_count{1, 3};  // per lane 0, uniform inclusive
  std::array<int, 2> secondary_count{0, 0};

  Vec2 goal_point() const { return ego_route->point_at(goal_s); }
};

/// Walks the ego route to find where its center enters the lane corridor and
/// where it either leaves it again (crossing) or settles on the center line (merging).
inline ConflictZone find_conflict(const Path& ego_route, const Path& lane) {
  ConflictZone z;
  const double half = 0.5 * kLaneWidth;
  const double step = 0.1;
  bool inside = false;
  for (double s = 0.0; s <= ego_route.length(); s += step) {
    const Vec2 p = ego_route.point_at(s);
    const Projection pr = lane.project(p);
    const bool within_span = pr.s > 1e-6 && pr.s < lane.length() - 1e-6;
    const bool in_lane = within_span && std::abs(pr.lateral) <= half;
    if (!inside && in_lane) {
      inside = true;
      z.ego_enter_s = s;
      z.lane_s = pr.s;
    } else if (inside && (!in_lane || std::abs(pr.lateral) < 0.3)) {
      z.ego_exit_s = s;
      break;
    }
  }
  return z;
}

/// Two perpendicular two-lane roads crossing at the origin. The ego drives
/// north and turns left (west) across the southbound lane.
inline Layout make_left_turn_layout(double scale = 240.0) {
  const double h = 0.5 * scale, c = 0.5 * kLaneWidth;
  Layout L;
  L.kind = ScenarioKind::left_turn;
  auto oncoming = std::make_shared<const Path>(PathBuilder({-c, h}, 1.0).line_to({-c, -h}).build());
  auto route = std::make_shared<const Path>(PathBuilder({c, -h})
                                                .line_to({c, -kLaneWidth})
                                                .arc({-kLaneWidth, -kLaneWidth}, std::numbers::pi / 2)
                                                .line_to({-h, c})
                                                .build());
  L.ego_route = route;
  L.ego_start_s = h - 50.0;
  L.goal_s = route->project({-40.0, c}).s;
  LaneDef lane{oncoming, true, find_conflict(*route, *oncoming), -1};
  L.lanes.push_back(lane);
  L.initial_band = {{10.0, h - 10.0}};
  L.initial_count = {1, 3};
  return L;
}

/// Two eastbound main lanes (y = 0 right, y = 3.7 left). The ego enters from a
/// 15 degree ramp onto an auxiliary lane and blends into the right lane along
/// a 60 m gore.
inline Layout make_merge_layout(double scale = 180.0) {
  const double h = 0.5 * scale;
  Layout L;
  L.kind = ScenarioKind::merge;
  auto right = std::make_shared<const Path>(PathBuilder({-h, 0.0}, 1.0).line_to({h, 0.0}).build());
  auto left = std::make_shared<const Path>(PathBuilder({-h, kLaneWidth}, 1.0).line_to({h, kLaneWidth}).build());
  const double ramp_len = 60.0, angle = 15.0 * std::numbers::pi / 180.0;
  const Vec2 gore_start{0.0, -kLaneWidth};
  const Vec2 ramp_start{gore_start.x - ramp_len * std::cos(angle), gore_start.y - ramp_len * std::sin(angle)};
  auto route = std::make_shared<const Path>(PathBuilder(ramp_start)
                                                .line_to(gore_start)
                                                .line_to({15.0, -kLaneWidth})
                                                .quintic_shift_x(40.0, 0.0)
                                                .line_to({h, 0.0})
                                                .build());
  L.ego_route = route;
  L.ego_start_s = 10.0;
  L.goal_s = route->project({75.0, 0.0}).s;
  L.lanes.push_back({right, true, find_conflict(*route, *right), 1});
  L.lanes.push_back({left, true, ConflictZone{}, -1});
  L.initial_band = {{10.0, h + 30.0}, {10.0, h + 30.0}};
  L.initial_count = {2, 4};
  L.secondary_count = {0, 2};
  return L;
}

inline Layout make_layout(const ScenarioConfig& c) {
  return c.scenario == ScenarioKind::left_turn ? make_left_turn_layout(c.scale) : make_merge_layout(c.scale);
}

}  // namespace wcpg::sim
