#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "matchkit/elliptic.hpp"

using namespace matchkit;

namespace {

SpectralField random_field(Geometry g, int cutoff, std::uint64_t seed, double decay = 1.5) {
  Rng rng(seed);
  SpectralField f(g, cutoff);
  for (std::size_t i = 1; i < f.size(); ++i) {
    f.coeffs()[i] = (rng.uniform() - 0.5) / std::pow(1.0 + f.mode(i).eigenvalue, decay);
  }
  return f;
}

GridValues sine_coefficient(const Grid& grid) {
  return DensityModel::sine().sample_on(grid);
}

}  // namespace

TEST_CASE("Poisson solve") {
  SpectralField rhs(Geometry::Torus, 6);
  rhs.at(1, 0, Parity::Cos) = 4 * kPi * kPi;
  const auto h = solve_poisson(rhs);
  CHECK(h.field.at(1, 0, Parity::Cos) == doctest::Approx(1.0));
  CHECK(h.field.mean() == 0.0);

  const auto f = random_field(Geometry::Torus, 10, 3);
  CHECK(solve_poisson(neg_laplacian(f)).field.max_abs_diff(f) < 1e-14);

  auto bad = rhs;
  bad.set_mean(0.1);
  CHECK_THROWS_AS(solve_poisson(bad), std::invalid_argument);
}

TEST_CASE("Galerkin operator is symmetric and positive") {
  for (Geometry g : {Geometry::Torus, Geometry::Square}) {
    const Grid grid(g, 48);
    const auto c = sine_coefficient(grid);
    const auto a = random_field(g, 12, 5, 0.5);
    const auto b = random_field(g, 12, 6, 0.5);
    const auto aa = apply_divform(grid, c, a);
    const auto ab = apply_divform(grid, c, b);
    double lhs = 0.0, rhs = 0.0, energy = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      lhs += ab.coeffs()[i] * a.coeffs()[i];
      rhs += aa.coeffs()[i] * b.coeffs()[i];
      energy += aa.coeffs()[i] * a.coeffs()[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(energy > 0.0);
  }
}

TEST_CASE("divergence-form solve") {
  SUBCASE("constant coefficient reproduces Poisson") {
    const Grid grid(Geometry::Torus, 64);
    const GridValues one(grid.node_count(), 1.0);
    const auto rhs = random_field(Geometry::Torus, 20, 7, 0.5);
    const auto h = solve_divform(grid, one, rhs);
    CHECK(h.report.converged());
    CHECK(h.report.iterations <= 2);
    CHECK(h.field.max_abs_diff(solve_poisson(rhs).field) < 1e-12);
  }
  SUBCASE("manufactured solution") {
    for (Geometry g : {Geometry::Torus, Geometry::Square}) {
      const Grid grid(g, 64);
      const auto c = sine_coefficient(grid);
      const auto exact = random_field(g, 20, 8);
      const auto rhs = apply_divform(grid, c, exact);
      const auto h = solve_divform(grid, c, rhs);
      CHECK(h.report.residual <= 1e-10);
      CHECK(h.field.mean() == 0.0);
      CHECK(h.field.max_abs_diff(exact) < 1e-9);
      CHECK(h.report.to_json()["iterations"].get<int>() == h.report.iterations);
    }
  }
  SUBCASE("a pointwise manufactured rhs matches to truncation accuracy") {
    // h = sin(2 pi x2), rho = 1 + 0.5 sin(2 pi x1):
    // -div(rho grad h) = 4 pi^2 rho sin(2 pi x2)
    const Grid grid(Geometry::Torus, 64);
    const auto c = sine_coefficient(grid);
    GridValues rv(grid.node_count());
    for (std::size_t i = 0; i < rv.size(); ++i) {
      const auto x = grid.node(i);
      rv[i] = 4 * kPi * kPi * c[i] * std::sin(kTwoPi * x.x2());
    }
    const auto h = solve_divform(grid, c, grid_to_spectral(rv, grid, 16));
    CHECK(h.field.at(0, 1, Parity::Sin) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    const auto values = spectral_to_grid(h.field, grid);
    double err = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      err = std::max(err, std::abs(values[i] - std::sin(kTwoPi * grid.node(i).x2())));
    }
    CHECK(err < 1e-9);
  }
  SUBCASE("rejections and non-convergence") {
    const Grid grid(Geometry::Torus, 32);
    auto c = sine_coefficient(grid);
    const auto rhs = random_field(Geometry::Torus, 10, 9);
    auto bad_rhs = rhs;
    bad_rhs.set_mean(1.0);
    CHECK_THROWS_AS(solve_divform(grid, c, bad_rhs), std::invalid_argument);
    auto zero = c;
    zero[17] = 0.0;
    CHECK_THROWS_AS(solve_divform(grid, zero, rhs), std::invalid_argument);
    c[3] = 1e-3;
    try {
      solve_divform(grid, c, rhs, 1e-14, 2);
      FAIL("expected SolveFailure");
    } catch (const SolveFailure& e) {
      CHECK(e.report().iterations == 2);
      CHECK(e.report().residual > 1e-14);
    }
  }
  SUBCASE("smoothed coefficient overload") {
    const Grid grid(Geometry::Torus, 64);
    const auto rho = heat_smooth(DensityModel::bump(2.0), 0.01, 20, grid);
    const auto rhs = random_field(Geometry::Torus, 20, 10);
    const auto h = solve_divform(rho, rhs);
    CHECK(apply_divform(grid, rho.values, h.field).max_abs_diff(rhs) < 1e-9);
  }
}

TEST_CASE("screened solve") {
  const Grid grid(Geometry::Torus, 64);
  const GridValues one(grid.node_count(), 1.0);
  SpectralField rhs(Geometry::Torus, 10);
  rhs.set_mean(1.0);
  const auto u = solve_screened(grid, one, rhs);
  CHECK(u.field.mean() == doctest::Approx(1.0));
  CHECK(u.field.l2_norm() == doctest::Approx(1.0));

  rhs.at(2, 1, Parity::Sin) = 3.0;
  const auto c = sine_coefficient(grid);
  const auto v = solve_screened(grid, c, rhs);
  CHECK(v.report.residual < 1e-12);
  // (I - Laplace) v == P_K(rhs / rho), checked on the grid
  const auto applied = spectral_to_grid(v.field + neg_laplacian(v.field), grid);
  GridValues quotient = spectral_to_grid(rhs, grid);
  for (std::size_t i = 0; i < quotient.size(); ++i) quotient[i] /= c[i];
  const auto projected = spectral_to_grid(grid_to_spectral(quotient, grid, 10), grid);
  double err = 0.0;
  for (std::size_t i = 0; i < applied.size(); ++i) err = std::max(err, std::abs(applied[i] - projected[i]));
  CHECK(err < 1e-11);
}

TEST_CASE("spectral gradient agrees with finite differences to second order") {
  SpectralField f(Geometry::Torus, 6);
  f.at(1, 2, Parity::Cos) = 0.3;
  f.at(3, -1, Parity::Sin) = 0.2;
  f.at(0, 2, Parity::Sin) = -0.4;
  const PotentialField h{f, "fd", {}};
  std::vector<double> errors;
  const std::vector<int> sizes{32, 64, 128};
  for (int n : sizes) {
    const Grid grid(Geometry::Torus, n);
    const auto values = spectral_to_grid(f, grid);
    const auto g = gradient(h, grid);
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const auto at = [&](int a, int b) {
          return values[static_cast<std::size_t>((a + n) % n) * n + (b + n) % n];
        };
        const double d1 = (at(i + 1, j) - at(i - 1, j)) * n / 2.0;
        const double d2 = (at(i, j + 1) - at(i, j - 1)) * n / 2.0;
        const std::size_t idx = static_cast<std::size_t>(i) * n + j;
        err = std::max({err, std::abs(d1 - g[0][idx]), std::abs(d2 - g[1][idx])});
      }
    }
    errors.push_back(err);
  }
  const double order = std::log(errors.front() / errors.back()) / std::log(4.0);
  CHECK(order >= 1.9);
}

TEST_CASE("gradient and Hessian of a single mode") {
  SpectralField f(Geometry::Torus, 4);
  f.at(1, 0, Parity::Cos) = 1.0;  // sqrt2 cos(2 pi x1)
  const PotentialField h{f, "mode", {}};
  const Grid grid(Geometry::Torus, 32);
  const auto g = gradient(h, grid);
  const auto hs = hessian(h, grid);
  for (std::size_t i = 0; i < grid.node_count(); i += 37) {
    const double x1 = grid.node(i).x1();
    CHECK(g[0][i] == doctest::Approx(-kTwoPi * std::sqrt(2.0) * std::sin(kTwoPi * x1)));
    CHECK(std::abs(g[1][i]) < 1e-12);
    CHECK(hs[0][i] == doctest::Approx(-kTwoPi * kTwoPi * std::sqrt(2.0) * std::cos(kTwoPi * x1)));
  }
  CHECK(derivative_sup_norm(h, grid) == doctest::Approx(kTwoPi * kTwoPi * std::sqrt(2.0)));
}

TEST_CASE("Lq gradient norm") {
  SpectralField f(Geometry::Torus, 4);
  f.at(1, 0, Parity::Cos) = 1.0;
  const PotentialField h{f, "mode", {}};
  const Grid grid(Geometry::Torus, 64);
  // |grad h| = 2 pi sqrt2 |sin(2 pi x1)|
  CHECK(lq_gradient_norm(h, grid, 2.0) == doctest::Approx(4 * kPi * kPi));
  const double amp = kTwoPi * std::sqrt(2.0);
  CHECK(lq_gradient_norm(h, grid, 4.0) == doctest::Approx(std::sqrt(std::pow(amp, 4) * 3.0 / 8.0)));
  CHECK_THROWS(lq_gradient_norm(h, grid, 1.5));
  CHECK_THROWS(lq_gradient_norm(h, grid, 4.5));
}

TEST_CASE("exp map moves points by at most the sup of the gradient") {
  const Grid grid(Geometry::Torus, 64);
  const auto rhs = random_field(Geometry::Torus, 12, 11, 0.3);
  const auto h = solve_poisson(rhs);
  const auto g = gradient(h, grid);
  double sup = 0.0;
  for (std::size_t i = 0; i < g[0].size(); ++i) sup = std::max(sup, std::hypot(g[0][i], g[1][i]));
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    const auto x = grid.node(i);
    const auto y = exp_map(x, Vec2{g[0][i], g[1][i]});
    CHECK(torus_distance(x, y) <= sup + 1e-15);
  }
}

TEST_CASE("regularization error estimate") {
  const Grid grid(Geometry::Torus, 128);
  const auto rho_model = DensityModel::bump(1.0);
  const auto rho = rho_model.sample_on(grid);
  const auto rhs = random_field(Geometry::Torus, 30, 12, 0.5);
  const auto h = solve_divform(grid, rho, rhs);
  for (double delta : {0.001, 0.01, 0.05}) {
    const auto rho_delta = heat_smooth(rho_model, delta, 60, grid);
    const auto hd = solve_divform(rho_delta, rhs);
    const auto est = regularization_error(h, hd, rho, rho_delta.values, rho_delta.min_value(), grid);
    CHECK(est.lhs > 0.0);
    CHECK(est.holds());
  }
  CHECK_THROWS(regularization_error(h, h, rho, rho, 0.0, grid));
}
