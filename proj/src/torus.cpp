#include "matchkit/torus.hpp"

#include <stdexcept>

namespace matchkit {

std::string_view geometry_name(Geometry g) {
  return g == Geometry::Torus ? "torus" : "square";
}

Geometry parse_geometry(std::string_view name) {
  if (name == "torus") return Geometry::Torus;
  if (name == "square") return Geometry::Square;
  throw std::invalid_argument("unknown geometry '" + std::string(name) + "'");
}

TorusPoint exp_map(Geometry g, const TorusPoint& x, Vec2 v) {
  if (g == Geometry::Torus) return exp_map(x, v);
  constexpr double kBelowOne = 1.0 - 1e-16;
  return {std::min(reflect_unit(x.x1() + v.x1), kBelowOne),
          std::min(reflect_unit(x.x2() + v.x2), kBelowOne)};
}

}  // namespace matchkit
