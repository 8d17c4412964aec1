#include "matchkit/elliptic.hpp"

#include <algorithm>
#include <cmath>

namespace matchkit {
namespace {

double dot(const SpectralField& a, const SpectralField& b) {
  const auto x = a.coeffs();
  const auto y = b.coeffs();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const SpectralField& x, SpectralField& y) {
  const auto a = x.coeffs();
  auto b = y.coeffs();
  for (std::size_t i = 0; i < a.size(); ++i) b[i] += alpha * a[i];
}

void require_mean_zero(const SpectralField& rhs) {
  if (std::abs(rhs.mean()) > 1e-12 * std::max(1.0, rhs.l2_norm())) {
    throw std::invalid_argument("right-hand side must have zero mean on a closed manifold");
  }
}

std::pair<double, double> coefficient_range(const GridValues& c) {
  const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
  if (!(*lo > 0.0)) throw std::invalid_argument("non-coercive coefficient: minimum <= 0");
  return {*lo, *hi};
}

SpectralField inverse_laplacian(const SpectralField& r) {
  SpectralField z = r;
  auto c = z.coeffs();
  c[0] = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) c[i] /= r.mode(i).eigenvalue;
  return z;
}

}  // namespace

nlohmann::json SolveReport::to_json() const {
  return {{"iterations", iterations}, {"residual", residual}, {"tolerance", tolerance}};
}

PotentialField solve_poisson(const SpectralField& rhs, std::string rhs_id) {
  require_mean_zero(rhs);
  PotentialField out{inverse_laplacian(rhs), std::move(rhs_id), {0, 0.0, 0.0}};
  return out;
}

SpectralField apply_divform(const Grid& grid, const GridValues& coefficient, const SpectralField& h) {
  auto g = gradient_to_grid(h, grid);
  for (std::size_t i = 0; i < coefficient.size(); ++i) {
    g[0][i] *= coefficient[i];
    g[1][i] *= coefficient[i];
  }
  SpectralField out = divergence_to_spectral(g[0], g[1], grid, h.cutoff());
  out *= -1.0;
  return out;
}

PotentialField solve_divform(const Grid& grid, const GridValues& coefficient,
                             const SpectralField& rhs, double tol, int max_iter,
                             std::string rhs_id) {
  require_mean_zero(rhs);
  if (coefficient.size() != grid.node_count()) throw std::invalid_argument("coefficient size mismatch");
  const auto [lo, hi] = coefficient_range(coefficient);
  if (max_iter <= 0) {
    max_iter = 10 * static_cast<int>(std::ceil(std::sqrt(hi / lo))) * std::max(1, rhs.cutoff());
  }

  SpectralField b = rhs;
  b.set_mean(0.0);
  const double bnorm = b.l2_norm();
  SpectralField x(rhs.geometry(), rhs.cutoff());
  SolveReport report{0, 0.0, tol};
  if (bnorm == 0.0) return {x, std::move(rhs_id), report};

  SpectralField r = b;
  SpectralField z = inverse_laplacian(r);
  SpectralField p = z;
  double rz = dot(r, z);
  double rel = 1.0;
  int it = 0;
  while (it < max_iter) {
    const SpectralField ap = apply_divform(grid, coefficient, p);
    const double alpha = rz / dot(p, ap);
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    ++it;
    rel = r.l2_norm() / bnorm;
    if (rel <= 0.5 * tol) break;
    z = inverse_laplacian(r);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < p.size(); ++i) p.coeffs()[i] = z.coeffs()[i] + beta * p.coeffs()[i];
  }
  x.set_mean(0.0);
  const SpectralField true_residual = apply_divform(grid, coefficient, x) - b;
  report.iterations = it;
  report.residual = true_residual.l2_norm() / bnorm;
  if (!report.converged()) {
    throw SolveFailure("divergence-form solve did not converge: residual " +
                           std::to_string(report.residual) + " after " + std::to_string(it) +
                           " iterations",
                       report);
  }
  return {std::move(x), std::move(rhs_id), report};
}

PotentialField solve_divform(const SmoothedDensity& coefficient, const SpectralField& rhs,
                             double tol, int max_iter, std::string rhs_id) {
  return solve_divform(coefficient.grid, coefficient.values, rhs, tol, max_iter, std::move(rhs_id));
}

PotentialField solve_screened(const Grid& grid, const GridValues& coefficient,
                              const SpectralField& rhs, double tol, std::string rhs_id) {
  coefficient_range(coefficient);
  GridValues values = spectral_to_grid(rhs, grid);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] /= coefficient[i];
  const SpectralField projected = grid_to_spectral(values, grid, rhs.cutoff());

  SpectralField u = projected;
  for (std::size_t i = 0; i < u.size(); ++i) u.coeffs()[i] /= 1.0 + u.mode(i).eigenvalue;

  // Forward application check.
  SpectralField applied = u + neg_laplacian(u);
  applied -= projected;
  const double pnorm = projected.l2_norm();
  SolveReport report{1, pnorm > 0.0 ? applied.l2_norm() / pnorm : 0.0, tol};
  if (!report.converged()) throw SolveFailure("screened solve failed its residual check", report);
  return {std::move(u), std::move(rhs_id), report};
}

PotentialField solve_screened(const SmoothedDensity& coefficient, const SpectralField& rhs,
                              double tol, std::string rhs_id) {
  return solve_screened(coefficient.grid, coefficient.values, rhs, tol, std::move(rhs_id));
}

std::array<GridValues, 2> gradient(const PotentialField& h, const Grid& grid) {
  return gradient_to_grid(h.field, grid);
}

std::array<GridValues, 3> hessian(const PotentialField& h, const Grid& grid) {
  return hessian_to_grid(h.field, grid);
}

double lq_gradient_norm(const PotentialField& h, const Grid& grid, double q) {
  if (!(q >= 2.0 && q <= 4.0)) throw std::invalid_argument("q must lie in [2, 4]");
  const auto g = gradient(h, grid);
  double s = 0.0;
  for (std::size_t i = 0; i < g[0].size(); ++i) {
    s += std::pow(g[0][i] * g[0][i] + g[1][i] * g[1][i], 0.5 * q);
  }
  return std::pow(s * grid.cell_mass(), 2.0 / q);
}

double derivative_sup_norm(const PotentialField& h, const Grid& grid) {
  const auto g = gradient(h, grid);
  const auto hs = hessian(h, grid);
  double m = 0.0;
  for (std::size_t i = 0; i < g[0].size(); ++i) {
    const double grad = std::hypot(g[0][i], g[1][i]);
    const double hess = std::sqrt(hs[0][i] * hs[0][i] + 2.0 * hs[1][i] * hs[1][i] + hs[2][i] * hs[2][i]);
    m = std::max({m, grad, hess});
  }
  return m;
}

RegularizationError regularization_error(const PotentialField& h, const PotentialField& h_delta,
                                         const GridValues& rho, const GridValues& rho_delta,
                                         double lower, const Grid& grid) {
  if (!(lower > 0.0)) throw std::invalid_argument("coercivity constant must be positive");
  const SpectralField diff = h_delta.field - h.field;
  const auto ge = gradient_to_grid(diff, grid);
  const auto gh = gradient(h, grid);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    lhs += ge[0][i] * ge[0][i] + ge[1][i] * ge[1][i];
    const double d = rho[i] - rho_delta[i];
    rhs += d * d * (gh[0][i] * gh[0][i] + gh[1][i] * gh[1][i]);
  }
  return {lhs * grid.cell_mass(), rhs * grid.cell_mass() / (lower * lower)};
}

}  // namespace matchkit
