// Oriented 3D boxes (yaw about the vertical axis) and their overlap.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include <Eigen/Core>

namespace sfmot {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (!std::isfinite(a)) throw std::invalid_argument("normalize_angle: non-finite angle");
  double r = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (r <= -pi) r += 2.0 * pi;
  return r;
}

/// Oriented box in a right-handed z-up frame. (x, y, z) is the volumetric
/// center, l runs along the heading, theta is the yaw about +z.
struct Box3D {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double theta = 0;

  Box3D() = default;
  Box3D(double x_, double y_, double z_, double l_, double w_, double h_, double theta_)
      : x(x_), y(y_), z(z_), l(l_), w(w_), h(h_), theta(normalize_angle(theta_)) {
    validate();
  }

  void validate() const {
    for (double v : {x, y, z, l, w, h, theta})
      if (!std::isfinite(v)) throw std::invalid_argument("Box3D: non-finite field");
    if (!(l > 0 && w > 0 && h > 0)) throw std::invalid_argument("Box3D: dimensions must be positive");
  }

  Vec3 center() const { return {x, y, z}; }
  double volume() const { return l * w * h; }
  double bottom() const { return z - 0.5 * h; }
  double top() const { return z + 0.5 * h; }

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Footprint vertices, counter-clockwise, starting at the front-left corner.
inline std::array<Vec2, 4> corners_bev(const Box3D& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  const std::array<Vec2, 4> local{Vec2{hl, hw}, Vec2{-hl, hw}, Vec2{-hl, -hw}, Vec2{hl, -hw}};
  std::array<Vec2, 4> out;
  for (std::size_t i = 0; i < 4; ++i)
    out[i] = {b.x + c * local[i].x() - s * local[i].y(), b.y + s * local[i].x() + c * local[i].y()};
  return out;
}

namespace detail {

inline constexpr double kClipTolerance = 1e-9;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) acc += cross2(poly[i], poly[(i + 1) % n]);
  return 0.5 * std::abs(acc);
}

// Sutherland-Hodgman clip of `subject` against the convex CCW `clip` polygon.
inline std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  for (std::size_t e = 0, n = clip.size(); e < n && !out.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % n];
    const Vec2 edge = b - a;
    const double len = edge.norm();
    auto side = [&](const Vec2& p) { return cross2(edge, p - a) / len; };  // signed distance, + inside

    std::vector<Vec2> in = std::move(out);
    out.clear();
    for (std::size_t i = 0, m = in.size(); i < m; ++i) {
      const Vec2& cur = in[i];
      const Vec2& nxt = in[(i + 1) % m];
      const double dc = side(cur), dn = side(nxt);
      const bool cur_in = dc >= -kClipTolerance, nxt_in = dn >= -kClipTolerance;
      if (cur_in) out.push_back(cur);
      if (cur_in != nxt_in && std::abs(dc - dn) > 0.0) {
        const double t = dc / (dc - dn);
        out.push_back(cur + t * (nxt - cur));
      }
    }
  }
  return out;
}

inline auto box_key(const Box3D& b) { return std::tie(b.x, b.y, b.z, b.l, b.w, b.h, b.theta); }

}  // namespace detail

/// Area of the intersection of the two footprints.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = corners_bev(a);
  const auto cb = corners_bev(b);
  const auto poly = detail::clip_convex(ca, cb);
  return detail::polygon_area(poly);
}

/// Intersection-over-union of two oriented boxes, in [0, 1].
inline double iou3d(const Box3D& a, const Box3D& b) {
  if (a == b) return 1.0;
  // Evaluate in a canonical argument order so the result is bitwise symmetric.
  const bool swap = detail::box_key(b) < detail::box_key(a);
  const Box3D& p = swap ? b : a;
  const Box3D& q = swap ? a : b;

  const double dz = std::min(p.top(), q.top()) - std::max(p.bottom(), q.bottom());
  if (dz <= 0.0) return 0.0;
  const double reach = 0.5 * (std::hypot(p.l, p.w) + std::hypot(q.l, q.w));
  if (std::hypot(p.x - q.x, p.y - q.y) > reach) return 0.0;

  const double inter = bev_intersection_area(p, q) * dz;
  const double uni = p.volume() + q.volume() - inter;
  if (inter <= 0.0 || uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// True when `p` lies inside `box` or on its boundary.
inline bool contains(const Box3D& box, const Vec3& p) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double dx = p.x() - box.x, dy = p.y() - box.y;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.l && std::abs(ly) <= 0.5 * box.w && std::abs(p.z() - box.z) <= 0.5 * box.h;
}

/// Indices of the points inside the box, in ascending order.
inline std::vector<std::size_t> points_in_box(const Box3D& box, std::span<const Vec3> points) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (contains(box, points[i])) idx.push_back(i);
  return idx;
}

}  // namespace sfmot
