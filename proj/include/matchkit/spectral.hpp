#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "matchkit/torus.hpp"

namespace matchkit {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

enum class Parity { Cos = 0, Sin = 1 };

/// Eigenvalue of -Laplacian for wave vector k: 4 pi^2 |k|^2 on the torus,
/// pi^2 |k|^2 on the Neumann square.
double eigenvalue(Geometry g, int k1, int k2);

/// Smallest nonzero eigenvalue (spectral gap).
double spectral_gap(Geometry g);

struct FourierMode {
  int k1 = 0;
  int k2 = 0;
  Parity parity = Parity::Cos;
  double eigenvalue = 0.0;
};

/// L2-normalized real eigenfunction evaluated at x.
///   torus:  1, sqrt2 cos(2 pi k.x), sqrt2 sin(2 pi k.x)
///   square: prod_i c_i cos(pi k_i x_i), c_i = sqrt2 if k_i > 0 else 1
double eigenfunction(Geometry g, const FourierMode& mode, const TorusPoint& x);

/// Truncated real Fourier expansion f = sum_k fhat(k) phi_k.
///
/// Torus layout, row-major by (k1, k2, parity): k1 = 0..K, k2 = -K..K, keeping
/// (0,0) with cosine parity only and the half plane {k1 > 0} U {k1 = 0, k2 > 0}
/// with both parities. That is exactly (2K+1)^2 coefficients.
/// Square layout: k1, k2 = 0..K, cosine parity only, (K+1)^2 coefficients.
/// Index 0 is always the mean fhat(0).
class SpectralField {
 public:
  SpectralField() = default;
  SpectralField(Geometry g, int cutoff);

  Geometry geometry() const { return geometry_; }
  int cutoff() const { return cutoff_; }
  std::size_t size() const { return coeffs_.size(); }

  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }

  double mean() const { return coeffs_.front(); }
  void set_mean(double m) { coeffs_.front() = m; }

  /// Throws std::out_of_range for a mode that is not stored.
  std::size_t index(int k1, int k2, Parity p) const;
  double at(int k1, int k2, Parity p) const { return coeffs_[index(k1, k2, p)]; }
  double& at(int k1, int k2, Parity p) { return coeffs_[index(k1, k2, p)]; }
  FourierMode mode(std::size_t idx) const;
  std::vector<FourierMode> modes() const;

  /// Complex exponential coefficient c_k with f = sum c_k e^{2 pi i k.x}
  /// (torus only); defined for every |k|_inf <= K.
  std::complex<double> complex_coeff(int k1, int k2) const;
  void set_complex_coeff(int k1, int k2, std::complex<double> c);

  /// Evaluates the expansion at one point by direct summation.
  double evaluate(const TorusPoint& x) const;

  /// Same geometry, coefficients copied into a field with a different cutoff
  /// (zero padded or truncated).
  SpectralField with_cutoff(int cutoff) const;

  SpectralField& operator+=(const SpectralField& o);
  SpectralField& operator-=(const SpectralField& o);
  SpectralField& operator*=(double s);
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }

  double max_abs_diff(const SpectralField& o) const;
  /// L2 norm, equal to the Euclidean norm of the coefficients (Parseval).
  double l2_norm() const;

  nlohmann::json to_json() const;
  static SpectralField from_json(const nlohmann::json& j);

 private:
  void check_compatible(const SpectralField& o) const;

  Geometry geometry_ = Geometry::Torus;
  int cutoff_ = 0;
  std::vector<double> coeffs_{0.0};
};

/// Uniform evaluation lattice. Torus nodes sit at (i/N, j/N); square nodes at
/// cell centers ((i+1/2)/N, (j+1/2)/N). Values are stored row-major [i*N + j].
class Grid {
 public:
  Grid(Geometry g, int resolution);

  Geometry geometry() const { return geometry_; }
  int resolution() const { return n_; }
  std::size_t node_count() const { return static_cast<std::size_t>(n_) * n_; }
  double cell_mass() const { return 1.0 / (static_cast<double>(n_) * n_); }
  TorusPoint node(int i, int j) const;
  TorusPoint node(std::size_t flat) const { return node(static_cast<int>(flat / n_), static_cast<int>(flat % n_)); }
  double spacing() const { return 1.0 / n_; }

  /// Grid quadrature of sampled values.
  double integrate(std::span<const double> values) const;
  /// (integral |f|^q)^(1/q) by grid quadrature.
  double lq_norm(std::span<const double> values, double q) const;
  double max_abs(std::span<const double> values) const;

  bool operator==(const Grid&) const = default;

 private:
  Geometry geometry_;
  int n_;
};

using GridValues = std::vector<double>;

/// Largest cutoff that a grid of resolution N carries without aliasing.
inline int max_cutoff(int resolution) { return resolution / 2 - 1; }

GridValues spectral_to_grid(const SpectralField& f, const Grid& grid);
/// Rejects cutoffs above N/2 - 1.
SpectralField grid_to_spectral(std::span<const double> values, const Grid& grid, int cutoff);

/// Spectral gradient sampled on the grid.
std::array<GridValues, 2> gradient_to_grid(const SpectralField& f, const Grid& grid);
/// Spectral Hessian sampled on the grid: (d11, d12, d22).
std::array<GridValues, 3> hessian_to_grid(const SpectralField& f, const Grid& grid);
/// Projection of the divergence of a sampled vector field onto the modes up to
/// cutoff. The adjoint of gradient_to_grid under grid quadrature.
SpectralField divergence_to_spectral(const GridValues& flux1, const GridValues& flux2,
                                     const Grid& grid, int cutoff);

/// Applies -Laplacian coefficientwise.
SpectralField neg_laplacian(const SpectralField& f);

/// (sum_{k != 0} lambda_k^{2 eps} |fhat(k)|^2)^(1/2)
double hs_norm(const SpectralField& f, double eps);

// Heat kernel ----------------------------------------------------------------

/// Time below which the image-sum representation is used.
inline constexpr double kHeatSwitchTime = 1.0 / (4.0 * kPi * kPi);

/// p_t(x, y); rejects t <= 0.
double heat_kernel(double t, const TorusPoint& x, const TorusPoint& y,
                   Geometry g = Geometry::Torus);
/// Eigenfunction expansion, summed until terms fall below double precision.
double heat_kernel_spectral(double t, const TorusPoint& x, const TorusPoint& y,
                            Geometry g = Geometry::Torus);
/// Periodized (torus) or reflected (square) Gaussian image sum.
double heat_kernel_images(double t, const TorusPoint& x, const TorusPoint& y,
                          Geometry g = Geometry::Torus);
/// sum_k e^{-t lambda_k}, including k = 0.
double heat_trace(double t, Geometry g = Geometry::Torus);

}  // namespace matchkit
