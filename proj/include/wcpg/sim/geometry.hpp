#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace wcpg::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

/// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

struct Projection {
  double s = 0.0;        // arc length of the closest point
  double lateral = 0.0;  // signed distance, positive to the left of travel
  double heading = 0.0;  // path heading at the closest point
  Vec2 point;
};

/// Polyline with cumulative arc length.
class Path {
 public:
  Path() = default;
  explicit Path(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw std::invalid_argument("path needs at least two points");
    s_.resize(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) s_[i] = s_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
  }

  bool empty() const { return pts_.size() < 2; }
  double length() const { return s_.empty() ? 0.0 : s_.back(); }
  const std::vector<Vec2>& points() const { return pts_; }

  Vec2 point_at(double s) const {
    const std::size_t i = segment_at(s);
    const double seg = s_[i + 1] - s_[i];
    const double u = seg > 0 ? std::clamp((s - s_[i]) / seg, 0.0, 1.0) : 0.0;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * u;
  }

  double heading_at(double s) const {
    const std::size_t i = segment_at(s);
    const Vec2 d = pts_[i + 1] - pts_[i];
    return std::atan2(d.y, d.x);
  }

  Projection project(Vec2 p) const {
    if (empty()) throw std::invalid_argument("projection onto an empty path");
    Projection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
      const Vec2 a = pts_[i], d = pts_[i + 1] - pts_[i];
      const double len2 = d.dot(d);
      const double u = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
      const Vec2 c = a + d * u;
      const double d2 = (p - c).dot(p - c);
      if (d2 < best_d2) {
        best_d2 = d2;
        best.s = s_[i] + u * std::sqrt(len2);
        best.point = c;
        best.heading = std::atan2(d.y, d.x);
        const double len = std::sqrt(len2);
        best.lateral = len > 0 ? d.cross(p - a) / len : 0.0;
      }
    }
    return best;
  }

 private:
  std::size_t segment_at(double s) const {
    if (empty()) throw std::invalid_argument("empty path");
    const auto it = std::upper_bound(s_.begin(), s_.end(), s);
    std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
    return std::min(i, pts_.size() - 2);
  }

  std::vector<Vec2> pts_;
  std::vector<double> s_;
};

/// Incrementally samples straight lines and circular arcs into a Path.
class PathBuilder {
 public:
  explicit PathBuilder(Vec2 start, double spacing = 0.5) : spacing_(spacing) { pts_.push_back(start); }

  PathBuilder& line_to(Vec2 end) {
    const Vec2 a = pts_.back();
    const double len = (end - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing_)));
    for (int k = 1; k <= n; ++k) pts_.push_back(a + (end - a) * (static_cast<double>(k) / n));
    return *this;
  }

  /// Arc around `center` sweeping `sweep` radians (positive = counter-clockwise).
  PathBuilder& arc(Vec2 center, double sweep) {
    const Vec2 a = pts_.back();
    const double r = (a - center).norm();
    const double start = std::atan2(a.y - center.y, a.x - center.x);
    const int n = std::max(2, static_cast<int>(std::ceil(std::abs(sweep) * r / spacing_)));
    for (int k = 1; k <= n; ++k) {
      const double t = start + sweep * static_cast<double>(k) / n;
      pts_.push_back({center.x + r * std::cos(t), center.y + r * std::sin(t)});
    }
    return *this;
  }

  /// Straight travel along +x from the current point while the lateral offset
  /// blends to `y_end` with a quintic smoothstep over `length` meters.
  PathBuilder& quintic_shift_x(double length, double y_end) {
    const Vec2 a = pts_.back();
    const int n = std::max(2, static_cast<int>(std::ceil(length / spacing_)));
    for (int k = 1; k <= n; ++k) {
      const double u = static_cast<double>(k) / n;
      const double q = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
      pts_.push_back({a.x + length * u, a.y + (y_end - a.y) * q});
    }
    return *this;
  }

  Path build() const { return Path(pts_); }

 private:
  double spacing_;
  std::vector<Vec2> pts_;
};

/// Rectangle centered at `center`, long axis along `heading`.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 4.8;
  double width = 1.9;

  std::array<Vec2, 4> corners() const {
    const Vec2 f{std::cos(heading), std::sin(heading)}, l{-f.y, f.x};
    const Vec2 hf = f * (0.5 * length), hl = l * (0.5 * width);
    return {center + hf + hl, center + hf - hl, center - hf - hl, center - hf + hl};
  }

  double half_diagonal() const { return 0.5 * std::hypot(length, width); }
};

/// Separating-axis test; touching boxes do not overlap.
inline bool overlap(const OrientedBox& a, const OrientedBox& b) {
  if ((a.center - b.center).norm() > a.half_diagonal() + b.half_diagonal()) return false;
  const auto ca = a.corners(), cb = b.corners();
  const Vec2 axes[4] = {{std::cos(a.heading), std::sin(a.heading)},
                        {-std::sin(a.heading), std::cos(a.heading)},
                        {std::cos(b.heading), std::sin(b.heading)},
                        {-std::sin(b.heading), std::cos(b.heading)}};
  for (const Vec2& ax : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const Vec2& c : ca) {
      amin = std::min(amin, c.dot(ax));
      amax = std::max(amax, c.dot(ax));
    }
    for (const Vec2& c : cb) {
      bmin = std::min(bmin, c.dot(ax));
      bmax = std::max(bmax, c.dot(ax));
    }
    if (amax <= bmin || bmax <= amin) return false;
  }
  return true;
}

}  // namespace wcpg::sim
