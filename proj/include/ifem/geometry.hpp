#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace ifem {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend constexpr Point operator*(Point a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Point a, Point b) = default;
};

/// Gradients and normals share the representation.
using Vec2 = Point;

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point a, Point b) { return norm(b - a); }
constexpr Point lerp(Point a, Point b, double t) { return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}; }

using Tri = std::array<Point, 3>;

/// Positive for counterclockwise vertex order.
constexpr double signed_area(const Tri& t) { return 0.5 * cross(t[1] - t[0], t[2] - t[0]); }

constexpr Point centroid(const Tri& t) {
  return {(t[0].x + t[1].x + t[2].x) / 3.0, (t[0].y + t[1].y + t[2].y) / 3.0};
}

inline double inradius(const Tri& t) {
  const double perimeter = distance(t[0], t[1]) + distance(t[1], t[2]) + distance(t[2], t[0]);
  return 2.0 * std::abs(signed_area(t)) / perimeter;
}

/// Smallest interior angle in radians.
inline double min_angle(const Tri& t) {
  double best = std::numbers::pi;
  for (int k = 0; k < 3; ++k) {
    const Vec2 u = t[(k + 1) % 3] - t[k];
    const Vec2 v = t[(k + 2) % 3] - t[k];
    best = std::min(best, std::atan2(std::abs(cross(u, v)), dot(u, v)));
  }
  return best;
}

/// Gradients of the three barycentric coordinates (constant on the triangle).
inline std::array<Vec2, 3> barycentric_gradients(const Tri& t) {
  const double twice_area = 2.0 * signed_area(t);
  std::array<Vec2, 3> g;
  for (int k = 0; k < 3; ++k) {
    const Point& a = t[(k + 1) % 3];
    const Point& b = t[(k + 2) % 3];
    // rotate the opposite edge by -90 degrees
    g[k] = {(a.y - b.y) / twice_area, (b.x - a.x) / twice_area};
  }
  return g;
}

inline std::array<double, 3> barycentric(const Tri& t, Point p) {
  const double twice_area = 2.0 * signed_area(t);
  std::array<double, 3> l;
  for (int k = 0; k < 3; ++k) {
    const Point& a = t[(k + 1) % 3];
    const Point& b = t[(k + 2) % 3];
    l[k] = cross(b - a, p - a) / twice_area;
  }
  return l;
}

/// Edge-midpoint rule: three points, weights |K|/3, exact for quadratics.
inline std::array<Point, 3> midpoint_quadrature_points(const Tri& t) {
  return {lerp(t[0], t[1], 0.5), lerp(t[1], t[2], 0.5), lerp(t[2], t[0], 0.5)};
}

}  // namespace ifem
