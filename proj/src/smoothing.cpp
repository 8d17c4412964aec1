#include "matchkit/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace matchkit {
namespace {

// Largest |k|_inf whose heat factor can exceed 1e-17 at time t.
int effective_cutoff(Geometry g, double t, int cutoff) {
  if (t <= 0.0) return cutoff;
  const double base = eigenvalue(g, 1, 0);
  const double k = std::sqrt(std::log(1e17) / (base * t));
  return std::min(cutoff, static_cast<int>(std::ceil(k)));
}

SpectralField torus_empirical(const std::vector<TorusPoint>& atoms, int cutoff) {
  const int k = cutoff;
  const int width = 2 * k + 1;
  const std::size_t rows = static_cast<std::size_t>(k + 1);
  std::vector<double> re(rows * width, 0.0), im(rows * width, 0.0);
  std::vector<double> e1r(k + 1), e1i(k + 1), e2r(width), e2i(width);

  for (const auto& x : atoms) {
    // e^{-2 pi i k1 x1} for k1 = 0..K and e^{-2 pi i k2 x2} for k2 = -K..K
    const std::complex<double> w1 = std::polar(1.0, -kTwoPi * x.x1());
    const std::complex<double> w2 = std::polar(1.0, -kTwoPi * x.x2());
    std::complex<double> p(1.0, 0.0);
    for (int a = 0; a <= k; ++a) {
      e1r[a] = p.real();
      e1i[a] = p.imag();
      p *= w1;
    }
    p = 1.0;
    for (int b = 0; b <= k; ++b) {
      e2r[k + b] = p.real();
      e2i[k + b] = p.imag();
      e2r[k - b] = p.real();
      e2i[k - b] = -p.imag();
      p *= w2;
    }
    for (int a = 0; a <= k; ++a) {
      const double ar = e1r[a], ai = e1i[a];
      double* rr = re.data() + static_cast<std::size_t>(a) * width;
      double* ii = im.data() + static_cast<std::size_t>(a) * width;
      for (int b = 0; b < width; ++b) {
        rr[b] += ar * e2r[b] - ai * e2i[b];
        ii[b] += ar * e2i[b] + ai * e2r[b];
      }
    }
  }

  SpectralField f(Geometry::Torus, cutoff);
  const double inv = 1.0 / static_cast<double>(atoms.size());
  for (int a = 0; a <= k; ++a) {
    for (int b = -k; b <= k; ++b) {
      if (a == 0 && b <= 0) continue;
      const std::size_t idx = static_cast<std::size_t>(a) * width + (b + k);
      f.set_complex_coeff(a, b, std::complex<double>(re[idx], im[idx]) * inv);
    }
  }
  f.set_mean(1.0);
  return f;
}

SpectralField square_empirical(const std::vector<TorusPoint>& atoms, int cutoff) {
  const int k = cutoff;
  std::vector<double> acc(static_cast<std::size_t>(k + 1) * (k + 1), 0.0);
  std::vector<double> c1(k + 1), c2(k + 1);
  const double sqrt2 = std::sqrt(2.0);
  for (const auto& x : atoms) {
    for (int a = 0; a <= k; ++a) {
      c1[a] = (a > 0 ? sqrt2 : 1.0) * std::cos(kPi * a * x.x1());
      c2[a] = (a > 0 ? sqrt2 : 1.0) * std::cos(kPi * a * x.x2());
    }
    for (int a = 0; a <= k; ++a) {
      double* row = acc.data() + static_cast<std::size_t>(a) * (k + 1);
      for (int b = 0; b <= k; ++b) row[b] += c1[a] * c2[b];
    }
  }
  SpectralField f(Geometry::Square, cutoff);
  const double inv = 1.0 / static_cast<double>(atoms.size());
  for (std::size_t i = 0; i < acc.size(); ++i) f.coeffs()[i] = acc[i] * inv;
  f.set_mean(1.0);
  return f;
}

void check_log_argument(std::size_t n) {
  if (n < 3) throw std::invalid_argument("schedule requires n >= 3 so that log(n) > 1");
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<TorusPoint> atoms, Geometry g)
    : atoms_(std::move(atoms)), geometry_(g) {
  if (atoms_.empty()) throw std::invalid_argument("empirical measure needs at least one atom");
}

SpectralField empirical_coeffs(const EmpiricalMeasure& mu, int cutoff) {
  return mu.geometry() == Geometry::Torus ? torus_empirical(mu.atoms(), cutoff)
                                          : square_empirical(mu.atoms(), cutoff);
}

SpectralField heat_smooth(const SpectralField& f, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("smoothing time must be >= 0");
  SpectralField out = f;
  if (t == 0.0) return out;
  auto c = out.coeffs();
  for (std::size_t i = 1; i < c.size(); ++i) c[i] *= std::exp(-t * f.mode(i).eigenvalue);
  return out;
}

double SmoothedDensity::min_value() const { return *std::min_element(values.begin(), values.end()); }

SmoothedDensity heat_smooth(const SpectralField& base, double t, const Grid& grid) {
  SpectralField field = heat_smooth(base, t);
  GridValues values = spectral_to_grid(field, grid);
  return SmoothedDensity{base, t, std::move(field), grid, std::move(values)};
}

SmoothedDensity heat_smooth(const EmpiricalMeasure& mu, double t, int cutoff, const Grid& grid) {
  if (!(t >= 0.0)) throw std::invalid_argument("smoothing time must be >= 0");
  const int active = effective_cutoff(mu.geometry(), t, cutoff);
  SpectralField base = empirical_coeffs(mu, active);
  if (active < cutoff) base = base.with_cutoff(cutoff);
  return heat_smooth(base, t, grid);
}

SmoothedDensity heat_smooth(const DensityModel& rho, double t, int cutoff, const Grid& grid) {
  SpectralField base = rho.coefficients(cutoff, std::max(grid.resolution(), 2 * cutoff + 2));
  base.set_mean(1.0);
  return heat_smooth(base, t, grid);
}

void Schedule::validate() const {
  if (!(kappa1 > 0.0 && kappa2 > 0.0 && upsilon > 0.0 && schauder > 0.0)) {
    throw std::invalid_argument("schedule exponents must be positive");
  }
  if (!(upsilon > (schauder + 2.0) * kappa1)) {
    throw std::invalid_argument("schedule requires upsilon > (kappa + 2) kappa1");
  }
}

double Schedule::t(std::size_t n) const { return schedule_t(n, kappa2); }
double Schedule::delta(std::size_t n) const { return schedule_delta(n, kappa1); }

double Schedule::threshold(std::size_t n) const {
  check_log_argument(n);
  return std::pow(std::log(static_cast<double>(n)), -upsilon);
}

double Schedule::derivative_bound(std::size_t n) const {
  check_log_argument(n);
  return std::pow(std::log(static_cast<double>(n)), -(upsilon - (schauder + 2.0) * kappa1));
}

double schedule_t(std::size_t n, double kappa2) {
  check_log_argument(n);
  const double dn = static_cast<double>(n);
  return std::pow(std::log(dn), kappa2) / dn;
}

double schedule_delta(std::size_t n, double kappa1) {
  check_log_argument(n);
  return std::pow(std::log(static_cast<double>(n)), -kappa1);
}

double sup_deviation(const SmoothedDensity& a, const SmoothedDensity& b) {
  if (!(a.grid == b.grid) || a.field.cutoff() != b.field.cutoff()) {
    throw std::invalid_argument("smoothed densities use different discretizations");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

double rho_smoothing_error(const DensityModel& rho, double s, double q, int resolution, int cutoff) {
  if (!(s > 0.0)) throw std::invalid_argument("smoothing time must be > 0");
  const Grid grid(Geometry::Torus, resolution);
  const SmoothedDensity smoothed = heat_smooth(rho, s, cutoff, grid);
  const GridValues exact = rho.sample_on(grid);
  GridValues diff(exact.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = smoothed.values[i] - exact[i];
  return grid.lq_norm(diff, q);
}

}  // namespace matchkit
