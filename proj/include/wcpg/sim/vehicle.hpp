#pragma once

#include "wcpg/sim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace wcpg::sim {

inline constexpr double kWheelbase = 2.9;
inline constexpr double kRearToCenter = 1.45;  // l_r, equal to l_f
inline constexpr double kMaxSteer = 0.6;
inline constexpr double kAccelLimit = 4.0;
inline constexpr double kVehicleLength = 4.8;
inline constexpr double kVehicleWidth = 1.9;
inline constexpr double kStanleyGain = 2.5;
inline constexpr double kStanleySoftening = 0.1;

enum class Behavior { ego, yield, ignore, accelerate };

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::ego: return "ego";
    case Behavior::yield: return "yield";
    case Behavior::ignore: return "ignore";
    case Behavior::accelerate: return "accelerate";
  }
  return "?";
}

struct VehicleState {
  double x = 0.0, y = 0.0;
  double heading = 0.0;  // (-pi, pi]
  double speed = 0.0;    // >= 0
  double length = kVehicleLength;
  double width = kVehicleWidth;
  Behavior behavior = Behavior::ego;
  std::shared_ptr<const Path> route;

  // Rule-based agents only.
  int lane = -1;
  double target_speed = 0.0;
  int id = 0;

  Vec2 position() const { return {x, y}; }
  OrientedBox box() const { return {{x, y}, heading, length, width}; }
};

/// Kinematic bicycle model about the center of gravity, l_r = l_f.
inline VehicleState bicycle_step(VehicleState v, double accel, double steer, double dt) {
  accel = std::clamp(accel, -kAccelLimit, kAccelLimit);
  steer = std::clamp(steer, -kMaxSteer, kMaxSteer);
  const double beta = std::atan(0.5 * std::tan(steer));
  v.x += v.speed * std::cos(v.heading + beta) * dt;
  v.y += v.speed * std::sin(v.heading + beta) * dt;
  v.heading = wrap_angle(v.heading + v.speed / kRearToCenter * std::sin(beta) * dt);
  v.speed = std::max(0.0, v.speed + accel * dt);
  return v;
}

/// Stanley lateral controller evaluated at the front axle.
inline double stanley_steer(const VehicleState& v, const Path& path, double gain = kStanleyGain) {
  if (path.empty()) throw std::invalid_argument("stanley_steer needs a path with two points");
  const double lf = kWheelbase - kRearToCenter;
  const Vec2 front{v.x + lf * std::cos(v.heading), v.y + lf * std::sin(v.heading)};
  const Projection p = path.project(front);
  const double heading_error = wrap_angle(p.heading - v.heading);
  const double steer = heading_error - std::atan(gain * p.lateral / (v.speed + kStanleySoftening));
  return std::clamp(steer, -kMaxSteer, kMaxSteer);
}

}  // namespace wcpg::sim
