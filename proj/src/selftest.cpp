#include "matchkit/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

#include "matchkit/elliptic.hpp"
#include "matchkit/transport.hpp"

namespace matchkit {

namespace {

std::string describe(const char* fmt, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

CheckResult exhaustive_assignment() {
  Rng rng(0x0715);
  double worst = 0.0, worst_gap = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 7;
    std::vector<TorusPoint> xs(n), ys(n);
    for (auto& p : xs) p = rng.uniform_point();
    for (auto& p : ys) p = rng.uniform_point();
    std::vector<std::size_t> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    double best = 1e300;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += torus_distance2(xs[i], ys[sigma[i]]);
      best = std::min(best, s / static_cast<double>(n));
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    const auto r = solve_discrete_ot(DiscreteMeasure::uniform(xs), DiscreteMeasure::uniform(ys));
    worst = std::max(worst, std::abs(r.cost - best) / std::max(best, 1e-300));
    worst_gap = std::max(worst_gap, r.gap / std::max(r.cost, 1e-300));
  }
  return {"ot-exhaustive", worst <= 1e-12 && worst_gap <= 1e-9,
          describe("max relative cost error %.3g, max relative gap %.3g", worst, worst_gap)};
}

CheckResult poisson_single_mode() {
  SpectralField rhs(Geometry::Torus, 6);
  rhs.at(2, 1, Parity::Cos) = 0.7;
  const auto h = solve_poisson(rhs);
  const double expected = 0.7 / (4.0 * kPi * kPi * 5.0);
  double err = std::abs(h.field.at(2, 1, Parity::Cos) - expected);
  for (std::size_t i = 0; i < h.field.size(); ++i) {
    if (i != h.field.index(2, 1, Parity::Cos)) err = std::max(err, std::abs(h.field.coeffs()[i]));
  }
  return {"poisson-single-mode", err <= 1e-12, describe("max coefficient error %.3g%.0s", err, 0.0)};
}

CheckResult heat_kernel_representations() {
  Rng rng(0x4ea7);
  const double t = 1.0 / (4.0 * kPi * kPi);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const TorusPoint x = rng.uniform_point(), y = rng.uniform_point();
    const double a = heat_kernel_spectral(t, x, y), b = heat_kernel_images(t, x, y);
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  return {"heat-kernel-representations", worst <= 1e-10,
          describe("max relative difference %.3g at t = %.4g", worst, t)};
}

CheckResult heat_trace_identity() {
  double worst = 0.0;
  for (double t : {0.01, 0.1, 1.0}) {
    const double diag = heat_kernel(t, TorusPoint(0.3, 0.7), TorusPoint(0.3, 0.7));
    worst = std::max(worst, std::abs(diag - heat_trace(t)) / heat_trace(t));
  }
  return {"heat-trace", worst <= 1e-8, describe("max relative error %.3g%.0s", worst, 0.0)};
}

CheckResult symmetric_semidiscrete() {
  const double a = 7.0 / 32, b = a + 0.5;
  const EmpiricalMeasure mu({TorusPoint(a, a), TorusPoint(a, b), TorusPoint(b, a), TorusPoint(b, b)});
  const auto r = semidiscrete_map(DensityModel::uniform(), mu, 16);
  const double expected = 21.0 / 512.0;
  return {"semidiscrete-symmetric-atoms", std::abs(r.cost - expected) <= 1e-12 * expected,
          describe("cost %.17g, expected %.17g", r.cost, expected)};
}

CheckResult screened_constant() {
  const Grid grid(Geometry::Torus, 32);
  SpectralField base(Geometry::Torus, 8);
  base.set_mean(1.0);
  base.at(1, 0, Parity::Sin) = 0.2;
  const auto rho = heat_smooth(base, 0.01, grid);
  const auto u = solve_screened(rho, rho.field);
  SpectralField one(Geometry::Torus, 8);
  one.set_mean(1.0);
  const double err = u.field.max_abs_diff(one);
  return {"screened-constant", err <= 1e-12, describe("max coefficient error %.3g%.0s", err, 0.0)};
}

CheckResult moser_identity() {
  SpectralField mu(Geometry::Torus, 3);
  mu.set_mean(1.0);
  const PotentialField zero{SpectralField(Geometry::Torus, 3), "zero", {}};
  const auto r = flow_transport(mu, mu, zero, mu, 8, 8, true);
  const double w2 = r.w2_to_target.value_or(1.0);
  return {"moser-identity", w2 <= 1e-20, describe("W2^2 to target %.3g%.0s", w2, 0.0)};
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  const std::vector<std::function<CheckResult()>> checks{
      exhaustive_assignment, poisson_single_mode, heat_kernel_representations, heat_trace_identity,
      symmetric_semidiscrete, screened_constant,  moser_identity};
  const char* names[] = {"ot-exhaustive",      "poisson-single-mode",          "heat-kernel-representations",
                         "heat-trace",         "semidiscrete-symmetric-atoms", "screened-constant",
                         "moser-identity"};
  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    try {
      out.push_back(checks[i]());
    } catch (const std::exception& e) {
      out.push_back({names[i], false, std::string("threw: ") + e.what()});
    }
  }
  return out;
}

}  // namespace matchkit
