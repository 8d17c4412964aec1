#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

namespace matchkit {

/// Base manifold. The flat unit torus is the default; the unit square carries
/// Neumann conditions and is represented by the even cosine basis.
enum class Geometry { Torus, Square };

std::string_view geometry_name(Geometry g);
Geometry parse_geometry(std::string_view name);

struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  Vec2 operator+(Vec2 o) const { return {x1 + o.x1, x2 + o.x2}; }
  Vec2 operator-(Vec2 o) const { return {x1 - o.x1, x2 - o.x2}; }
  Vec2 operator*(double s) const { return {x1 * s, x2 * s}; }
  double norm2() const { return x1 * x1 + x2 * x2; }
  double norm() const { return std::sqrt(norm2()); }
};

/// Reduces a coordinate into [0,1).
inline double wrap_unit(double v) {
  double r = v - std::floor(v);
  // floor can round r up to exactly 1 for tiny negative v
  return r >= 1.0 ? 0.0 : r;
}

/// Folds a coordinate into [0,1] by mirror reflection at the walls.
inline double reflect_unit(double v) {
  double r = v - 2.0 * std::floor(v / 2.0);
  return r > 1.0 ? 2.0 - r : r;
}

/// A point of the unit torus; both coordinates always lie in [0,1).
class TorusPoint {
 public:
  TorusPoint() = default;
  TorusPoint(double x1, double x2) : x1_(wrap_unit(x1)), x2_(wrap_unit(x2)) {}

  double x1() const { return x1_; }
  double x2() const { return x2_; }
  double operator[](int i) const { return i == 0 ? x1_ : x2_; }

  TorusPoint operator+(Vec2 v) const { return {x1_ + v.x1, x2_ + v.x2}; }

  bool operator==(const TorusPoint&) const = default;

 private:
  double x1_ = 0.0;
  double x2_ = 0.0;
};

/// Shortest signed displacement from a to b along one periodic axis, in [-1/2, 1/2).
inline double wrapped_delta(double a, double b) {
  double d = b - a;
  d -= std::floor(d + 0.5);
  return d;
}

/// Minimal displacement vector from x to y on the torus.
inline Vec2 torus_displacement(const TorusPoint& x, const TorusPoint& y) {
  return {wrapped_delta(x.x1(), y.x1()), wrapped_delta(x.x2(), y.x2())};
}

inline double torus_distance2(const TorusPoint& x, const TorusPoint& y) {
  const double d1 = std::abs(x.x1() - y.x1());
  const double d2 = std::abs(x.x2() - y.x2());
  const double m1 = std::min(d1, 1.0 - d1);
  const double m2 = std::min(d2, 1.0 - d2);
  return m1 * m1 + m2 * m2;
}

inline double torus_distance(const TorusPoint& x, const TorusPoint& y) {
  return std::sqrt(torus_distance2(x, y));
}

/// Squared distance in the given geometry. On the square, points are read as
/// their coordinates in [0,1)^2 and the Euclidean metric applies.
inline double distance2(Geometry g, const TorusPoint& x, const TorusPoint& y) {
  if (g == Geometry::Torus) return torus_distance2(x, y);
  const double d1 = x.x1() - y.x1();
  const double d2 = x.x2() - y.x2();
  return d1 * d1 + d2 * d2;
}

/// Exponential map of the flat torus: x + v reduced mod 1.
inline TorusPoint exp_map(const TorusPoint& x, Vec2 v) { return x + v; }

/// Exponential map with geodesics reflected at the walls of the square.
/// The result is clamped below 1 so it stays representable as a TorusPoint.
TorusPoint exp_map(Geometry g, const TorusPoint& x, Vec2 v);

}  // namespace matchkit
