#pragma once

#include <vector>

#include "matchkit/sampling.hpp"
#include "matchkit/spectral.hpp"

namespace matchkit {

/// Uniform atomic measure (1/n) sum_j delta_{X_j}.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(std::vector<TorusPoint> atoms, Geometry g = Geometry::Torus);
  explicit EmpiricalMeasure(const PointCloud& cloud) : EmpiricalMeasure(cloud.points) {}

  const std::vector<TorusPoint>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double weight() const { return 1.0 / static_cast<double>(atoms_.size()); }
  Geometry geometry() const { return geometry_; }

 private:
  std::vector<TorusPoint> atoms_;
  Geometry geometry_;
};

/// (1/n) sum_j phi_k(X_j) for every retained mode; the mean is exactly 1.
SpectralField empirical_coeffs(const EmpiricalMeasure& mu, int cutoff);

/// P_t f: multiplies every coefficient by e^{-t lambda_k}.
SpectralField heat_smooth(const SpectralField& f, double t);

/// A heat-smoothed probability density with its grid samples.
struct SmoothedDensity {
  SpectralField base;
  double time = 0.0;
  SpectralField field;
  Grid grid;
  GridValues values;

  double min_value() const;
  /// False when the truncated expansion dips to zero or below somewhere on the
  /// grid; values are never clipped.
  bool positive() const { return min_value() > 0.0; }
  const SpectralField& coeffs() const { return field; }
};

SmoothedDensity heat_smooth(const SpectralField& base, double t, const Grid& grid);
/// Builds mu^{n,t}. Modes whose heat factor underflows below 1e-17 are skipped.
SmoothedDensity heat_smooth(const EmpiricalMeasure& mu, double t, int cutoff, const Grid& grid);
/// Builds rho_t.
SmoothedDensity heat_smooth(const DensityModel& rho, double t, int cutoff, const Grid& grid);

/// Parameter schedule t = log^kappa2(n)/n, delta = log^-kappa1(n), event
/// threshold log^-upsilon(n). `schauder` is the exponent used only for the
/// validity check upsilon > (schauder + 2) kappa1.
struct Schedule {
  double kappa1 = 0.5;
  double kappa2 = 3.0;
  double upsilon = 2.0;
  double schauder = 1.0;

  /// Throws std::invalid_argument when an exponent is nonpositive or the
  /// fluctuation hypothesis fails.
  void validate() const;
  double t(std::size_t n) const;
  double delta(std::size_t n) const;
  double threshold(std::size_t n) const;
  /// Bound on derivatives of f_delta inside A_n and B_{delta,n}:
  /// log^-(upsilon - (schauder+2) kappa1)(n).
  double derivative_bound(std::size_t n) const;
};

/// log^kappa2(n) / n; rejects n < 3.
double schedule_t(std::size_t n, double kappa2);
/// log^-kappa1(n); rejects n < 3.
double schedule_delta(std::size_t n, double kappa1);

/// max over grid nodes of |a - b|; rejects different grids or cutoffs.
double sup_deviation(const SmoothedDensity& a, const SmoothedDensity& b);

/// ||P_s rho - rho||_{L^q} by grid quadrature; rejects s <= 0.
double rho_smoothing_error(const DensityModel& rho, double s, double q, int resolution = 256,
                           int cutoff = 100);

}  // namespace matchkit
