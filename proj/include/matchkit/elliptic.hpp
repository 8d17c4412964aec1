#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "matchkit/smoothing.hpp"
#include "matchkit/spectral.hpp"

namespace matchkit {

struct SolveReport {
  int iterations = 0;
  /// Relative L2 residual of the defining equation.
  double residual = 0.0;
  double tolerance = 0.0;

  bool converged() const { return residual <= tolerance; }
  nlohmann::json to_json() const;
};

/// Raised when an iterative solve stops above its tolerance.
class SolveFailure : public std::runtime_error {
 public:
  SolveFailure(const std::string& what, SolveReport report)
      : std::runtime_error(what), report_(report) {}
  const SolveReport& report() const { return report_; }

 private:
  SolveReport report_;
};

/// Solution of one of the linearized equations. H^1 solutions carry a zero
/// mean coefficient; the screened solution is the one exception.
struct PotentialField {
  SpectralField field;
  std::string rhs_id;
  SolveReport report;
};

inline constexpr double kDefaultSolveTolerance = 1e-10;

/// -Laplace g = rhs with zero mean; rejects a rhs with nonzero mean.
PotentialField solve_poisson(const SpectralField& rhs, std::string rhs_id = "poisson");

/// -div(coeff grad h) = rhs by conjugate gradients on the Galerkin operator,
/// preconditioned by the inverse Laplacian. `coefficient` is sampled on
/// `grid`; rejects nonpositive coefficients and a nonzero-mean rhs. Throws
/// SolveFailure after max_iter iterations (0 selects 10 ceil(sqrt(max/min)) K).
PotentialField solve_divform(const Grid& grid, const GridValues& coefficient,
                             const SpectralField& rhs, double tol = kDefaultSolveTolerance,
                             int max_iter = 0, std::string rhs_id = "divform");
PotentialField solve_divform(const SmoothedDensity& coefficient, const SpectralField& rhs,
                             double tol = kDefaultSolveTolerance, int max_iter = 0,
                             std::string rhs_id = "divform");

/// (I - Laplace) u = P_K(rhs / coeff): grid division, re-projection, then
/// spectral division by 1 + lambda_k.
PotentialField solve_screened(const Grid& grid, const GridValues& coefficient,
                              const SpectralField& rhs, double tol = kDefaultSolveTolerance,
                              std::string rhs_id = "screened");
PotentialField solve_screened(const SmoothedDensity& coefficient, const SpectralField& rhs,
                              double tol = kDefaultSolveTolerance, std::string rhs_id = "screened");

/// Galerkin operator -P_K div(coeff grad h).
SpectralField apply_divform(const Grid& grid, const GridValues& coefficient, const SpectralField& h);

std::array<GridValues, 2> gradient(const PotentialField& h, const Grid& grid);
std::array<GridValues, 3> hessian(const PotentialField& h, const Grid& grid);

/// (integral |grad h|^q)^(2/q) by grid quadrature; q must lie in [2, 4].
double lq_gradient_norm(const PotentialField& h, const Grid& grid, double q);

/// max over grid nodes of max(|grad h|, |Hess h|_F).
double derivative_sup_norm(const PotentialField& h, const Grid& grid);

struct RegularizationError {
  /// integral |grad(h_delta - h)|^2
  double lhs = 0.0;
  /// (1/lambda^2) integral |rho - rho_delta|^2 |grad h|^2
  double rhs_bound = 0.0;
  bool holds() const { return lhs <= rhs_bound; }
};

/// Energy estimate for two solves with the same rhs and coefficients rho and
/// rho_delta; `lower` must bound rho_delta from below on the grid.
RegularizationError regularization_error(const PotentialField& h, const PotentialField& h_delta,
                                         const GridValues& rho, const GridValues& rho_delta,
                                         double lower, const Grid& grid);

}  // namespace matchkit
