#include "matchkit/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fft_engine.hpp"

namespace matchkit {
namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

using Complex = std::complex<double>;

bool in_half_plane(int k1, int k2) { return k1 > 0 || (k1 == 0 && k2 > 0); }

// Normalization of the square eigenfunction cos(pi k1 x1) cos(pi k2 x2).
double square_norm(int k1, int k2) {
  return (k1 > 0 ? kSqrt2 : 1.0) * (k2 > 0 ? kSqrt2 : 1.0);
}

std::size_t half_size(int n) { return static_cast<std::size_t>(n) * (n / 2 + 1); }

std::size_t half_index(int n, int k1, int k2) {
  const int row = k1 >= 0 ? k1 : k1 + n;
  return static_cast<std::size_t>(row) * (n / 2 + 1) + k2;
}

void check_grid_cutoff(const Grid& grid, int cutoff) {
  if (cutoff < 0 || cutoff > max_cutoff(grid.resolution())) {
    throw std::invalid_argument("cutoff " + std::to_string(cutoff) +
                                " exceeds the aliasing limit N/2-1 = " +
                                std::to_string(max_cutoff(grid.resolution())));
  }
}

// Fills the half spectrum of the torus field multiplied by a per-mode factor.
template <typename Factor>
std::vector<Complex> torus_half_spectrum(const SpectralField& f, int n, Factor factor) {
  std::vector<Complex> spec(half_size(n));
  const int k = f.cutoff();
  for (int k1 = -k; k1 <= k; ++k1) {
    for (int k2 = 0; k2 <= k; ++k2) {
      spec[half_index(n, k1, k2)] = f.complex_coeff(k1, k2) * factor(k1, k2);
    }
  }
  return spec;
}

GridValues torus_eval(std::vector<Complex> spec, int n) {
  GridValues out(static_cast<std::size_t>(n) * n);
  detail::inverse_c2r(n, spec.data(), out.data());
  return out;
}

// Square: per-axis coefficient array for a DCT-III / DST-III evaluation.
// For a cosine axis, frequency k sits at index k with weight 1/2 for k > 0.
// For a sine axis, frequency k sits at index k-1 with weight 1/2.
template <typename Factor>
GridValues square_eval(const SpectralField& f, int n, bool sin0, bool sin1, Factor factor) {
  std::vector<double> in(static_cast<std::size_t>(n) * n, 0.0);
  const int k = f.cutoff();
  for (int k1 = 0; k1 <= k; ++k1) {
    for (int k2 = 0; k2 <= k; ++k2) {
      if ((sin0 && k1 == 0) || (sin1 && k2 == 0)) continue;
      const int i1 = sin0 ? k1 - 1 : k1;
      const int i2 = sin1 ? k2 - 1 : k2;
      const double w1 = (sin0 || k1 > 0) ? 0.5 : 1.0;
      const double w2 = (sin1 || k2 > 0) ? 0.5 : 1.0;
      in[static_cast<std::size_t>(i1) * n + i2] =
          f.at(k1, k2, Parity::Cos) * square_norm(k1, k2) * w1 * w2 * factor(k1, k2);
    }
  }
  GridValues out(in.size());
  detail::r2r(n, sin0 ? FFTW_RODFT01 : FFTW_REDFT01, sin1 ? FFTW_RODFT01 : FFTW_REDFT01,
              in.data(), out.data());
  return out;
}

double heat_1d_torus_spectral(double t, double z) {
  double sum = 1.0;
  for (int k = 1;; ++k) {
    const double w = std::exp(-4.0 * kPi * kPi * k * k * t);
    if (w < 1e-18) break;
    sum += 2.0 * w * std::cos(kTwoPi * k * z);
  }
  return sum;
}

double gaussian_1d(double t, double z) {
  return std::exp(-z * z / (4.0 * t)) / std::sqrt(4.0 * kPi * t);
}

double heat_1d_torus_images(double t, double z) {
  z = wrapped_delta(0.0, z);
  const int m_max = static_cast<int>(std::ceil(6.0 * std::sqrt(t))) + 1;
  double sum = 0.0;
  for (int m = -m_max; m <= m_max; ++m) sum += gaussian_1d(t, z + m);
  return sum;
}

double heat_1d_square_spectral(double t, double x, double y) {
  double sum = 1.0;
  for (int k = 1;; ++k) {
    const double w = std::exp(-kPi * kPi * k * k * t);
    if (w < 1e-18) break;
    sum += 2.0 * w * std::cos(kPi * k * x) * std::cos(kPi * k * y);
  }
  return sum;
}

double heat_1d_square_images(double t, double x, double y) {
  const int m_max = static_cast<int>(std::ceil(3.0 * std::sqrt(t))) + 2;
  double sum = 0.0;
  for (int m = -m_max; m <= m_max; ++m) {
    sum += gaussian_1d(t, x - y + 2.0 * m) + gaussian_1d(t, x + y + 2.0 * m);
  }
  return sum;
}

void check_time(double t) {
  if (!(t > 0.0)) throw std::invalid_argument("heat kernel requires t > 0");
}

}  // namespace

double eigenvalue(Geometry g, int k1, int k2) {
  const double base = g == Geometry::Torus ? 4.0 * kPi * kPi : kPi * kPi;
  return base * (static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2);
}

double spectral_gap(Geometry g) { return eigenvalue(g, 1, 0); }

double eigenfunction(Geometry g, const FourierMode& mode, const TorusPoint& x) {
  if (g == Geometry::Torus) {
    if (mode.k1 == 0 && mode.k2 == 0) return mode.parity == Parity::Cos ? 1.0 : 0.0;
    const double phase = kTwoPi * (mode.k1 * x.x1() + mode.k2 * x.x2());
    return kSqrt2 * (mode.parity == Parity::Cos ? std::cos(phase) : std::sin(phase));
  }
  if (mode.parity != Parity::Cos) return 0.0;
  return square_norm(mode.k1, mode.k2) * std::cos(kPi * mode.k1 * x.x1()) *
         std::cos(kPi * mode.k2 * x.x2());
}

// SpectralField ---------------------------------------------------------------

SpectralField::SpectralField(Geometry g, int cutoff) : geometry_(g), cutoff_(cutoff) {
  if (cutoff < 0) throw std::invalid_argument("cutoff must be nonnegative");
  const std::size_t side = g == Geometry::Torus ? 2 * cutoff + 1 : cutoff + 1;
  coeffs_.assign(side * side, 0.0);
}

std::size_t SpectralField::index(int k1, int k2, Parity p) const {
  const int k = cutoff_;
  if (geometry_ == Geometry::Square) {
    if (k1 < 0 || k2 < 0 || k1 > k || k2 > k || p != Parity::Cos) {
      throw std::out_of_range("mode not stored in square layout");
    }
    return static_cast<std::size_t>(k1) * (k + 1) + k2;
  }
  if (k1 == 0 && k2 == 0) {
    if (p != Parity::Cos) throw std::out_of_range("the constant mode has no sine part");
    return 0;
  }
  if (!in_half_plane(k1, k2) || k1 > k || std::abs(k2) > k) {
    throw std::out_of_range("mode not stored in torus layout");
  }
  const int pi = static_cast<int>(p);
  if (k1 == 0) return 1 + 2 * static_cast<std::size_t>(k2 - 1) + pi;
  const std::size_t base = 1 + 2 * static_cast<std::size_t>(k) +
                           2 * static_cast<std::size_t>(k1 - 1) * (2 * k + 1);
  return base + 2 * static_cast<std::size_t>(k2 + k) + pi;
}

FourierMode SpectralField::mode(std::size_t idx) const {
  FourierMode m;
  const int k = cutoff_;
  if (geometry_ == Geometry::Square) {
    m.k1 = static_cast<int>(idx / (k + 1));
    m.k2 = static_cast<int>(idx % (k + 1));
  } else if (idx == 0) {
    m.k1 = m.k2 = 0;
  } else if (idx < 1 + 2 * static_cast<std::size_t>(k)) {
    m.k1 = 0;
    m.k2 = 1 + static_cast<int>((idx - 1) / 2);
    m.parity = static_cast<Parity>((idx - 1) % 2);
  } else {
    const std::size_t rest = idx - 1 - 2 * static_cast<std::size_t>(k);
    const std::size_t row = 2 * static_cast<std::size_t>(2 * k + 1);
    m.k1 = 1 + static_cast<int>(rest / row);
    m.k2 = static_cast<int>((rest % row) / 2) - k;
    m.parity = static_cast<Parity>(rest % 2);
  }
  m.eigenvalue = eigenvalue(geometry_, m.k1, m.k2);
  return m;
}

std::vector<FourierMode> SpectralField::modes() const {
  std::vector<FourierMode> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mode(i);
  return out;
}

std::complex<double> SpectralField::complex_coeff(int k1, int k2) const {
  if (geometry_ != Geometry::Torus) throw std::logic_error("complex coefficients are torus-only");
  if (k1 == 0 && k2 == 0) return coeffs_[0];
  if (in_half_plane(k1, k2)) {
    const std::size_t i = index(k1, k2, Parity::Cos);
    return Complex(coeffs_[i], -coeffs_[i + 1]) / kSqrt2;
  }
  return std::conj(complex_coeff(-k1, -k2));
}

void SpectralField::set_complex_coeff(int k1, int k2, std::complex<double> c) {
  if (geometry_ != Geometry::Torus) throw std::logic_error("complex coefficients are torus-only");
  if (k1 == 0 && k2 == 0) {
    coeffs_[0] = c.real();
    return;
  }
  if (!in_half_plane(k1, k2)) {
    k1 = -k1;
    k2 = -k2;
    c = std::conj(c);
  }
  const std::size_t i = index(k1, k2, Parity::Cos);
  coeffs_[i] = kSqrt2 * c.real();
  coeffs_[i + 1] = -kSqrt2 * c.imag();
}

double SpectralField::evaluate(const TorusPoint& x) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    if (coeffs_[i] != 0.0) sum += coeffs_[i] * eigenfunction(geometry_, mode(i), x);
  }
  return sum;
}

SpectralField SpectralField::with_cutoff(int cutoff) const {
  SpectralField out(geometry_, cutoff);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    const FourierMode m = mode(i);
    if (std::max(std::abs(m.k1), std::abs(m.k2)) <= cutoff) {
      out.coeffs_[out.index(m.k1, m.k2, m.parity)] = coeffs_[i];
    }
  }
  return out;
}

void SpectralField::check_compatible(const SpectralField& o) const {
  if (geometry_ != o.geometry_ || cutoff_ != o.cutoff_) {
    throw std::invalid_argument("spectral fields have different geometry or cutoff");
  }
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
  check_compatible(o);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
  check_compatible(o);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  return *this;
}

double SpectralField::max_abs_diff(const SpectralField& o) const {
  check_compatible(o);
  double m = 0.0;
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    m = std::max(m, std::abs(coeffs_[i] - o.coeffs_[i]));
  }
  return m;
}

double SpectralField::l2_norm() const {
  double s = 0.0;
  for (double c : coeffs_) s += c * c;
  return std::sqrt(s);
}

nlohmann::json SpectralField::to_json() const {
  return {{"cutoff", cutoff_}, {"geometry", std::string(geometry_name(geometry_))},
          {"coeffs", coeffs_}};
}

SpectralField SpectralField::from_json(const nlohmann::json& j) {
  SpectralField f(parse_geometry(j.at("geometry").get<std::string>()), j.at("cutoff").get<int>());
  auto coeffs = j.at("coeffs").get<std::vector<double>>();
  if (coeffs.size() != f.size()) {
    throw std::invalid_argument("coefficient count does not match cutoff");
  }
  f.coeffs_ = std::move(coeffs);
  return f;
}

// Grid ------------------------------------------------------------------------

Grid::Grid(Geometry g, int resolution) : geometry_(g), n_(resolution) {
  if (resolution < 1) throw std::invalid_argument("grid resolution must be positive");
}

TorusPoint Grid::node(int i, int j) const {
  const double shift = geometry_ == Geometry::Torus ? 0.0 : 0.5;
  return {(i + shift) / n_, (j + shift) / n_};
}

double Grid::integrate(std::span<const double> values) const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell_mass();
}

double Grid::lq_norm(std::span<const double> values, double q) const {
  double s = 0.0;
  for (double v : values) s += std::pow(std::abs(v), q);
  return std::pow(s * cell_mass(), 1.0 / q);
}

double Grid::max_abs(std::span<const double> values) const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

// Transforms ------------------------------------------------------------------

GridValues spectral_to_grid(const SpectralField& f, const Grid& grid) {
  if (f.geometry() != grid.geometry()) throw std::invalid_argument("geometry mismatch");
  check_grid_cutoff(grid, f.cutoff());
  const int n = grid.resolution();
  if (f.geometry() == Geometry::Torus) {
    return torus_eval(torus_half_spectrum(f, n, [](int, int) { return 1.0; }), n);
  }
  return square_eval(f, n, false, false, [](int, int) { return 1.0; });
}

SpectralField grid_to_spectral(std::span<const double> values, const Grid& grid, int cutoff) {
  check_grid_cutoff(grid, cutoff);
  const int n = grid.resolution();
  if (values.size() != grid.node_count()) throw std::invalid_argument("grid size mismatch");
  SpectralField f(grid.geometry(), cutoff);
  const double scale = 1.0 / (static_cast<double>(n) * n);
  if (grid.geometry() == Geometry::Torus) {
    std::vector<Complex> spec(half_size(n));
    detail::forward_r2c(n, values.data(), spec.data());
    for (int k1 = 0; k1 <= cutoff; ++k1) {
      for (int k2 = -cutoff; k2 <= cutoff; ++k2) {
        if (!(k1 == 0 && k2 == 0) && !in_half_plane(k1, k2)) continue;
        const Complex c = k2 >= 0 ? spec[half_index(n, k1, k2)]
                                  : std::conj(spec[half_index(n, -k1, -k2)]);
        f.set_complex_coeff(k1, k2, c * scale);
      }
    }
    return f;
  }
  std::vector<double> out(values.size());
  detail::r2r(n, FFTW_REDFT10, FFTW_REDFT10, values.data(), out.data());
  for (int k1 = 0; k1 <= cutoff; ++k1) {
    for (int k2 = 0; k2 <= cutoff; ++k2) {
      f.at(k1, k2, Parity::Cos) =
          square_norm(k1, k2) * out[static_cast<std::size_t>(k1) * n + k2] * 0.25 * scale;
    }
  }
  return f;
}

std::array<GridValues, 2> gradient_to_grid(const SpectralField& f, const Grid& grid) {
  if (f.geometry() != grid.geometry()) throw std::invalid_argument("geometry mismatch");
  check_grid_cutoff(grid, f.cutoff());
  const int n = grid.resolution();
  if (f.geometry() == Geometry::Torus) {
    const Complex i2pi(0.0, kTwoPi);
    return {torus_eval(torus_half_spectrum(f, n, [&](int k1, int) { return i2pi * double(k1); }), n),
            torus_eval(torus_half_spectrum(f, n, [&](int, int k2) { return i2pi * double(k2); }), n)};
  }
  return {square_eval(f, n, true, false, [](int k1, int) { return -kPi * k1; }),
          square_eval(f, n, false, true, [](int, int k2) { return -kPi * k2; })};
}

std::array<GridValues, 3> hessian_to_grid(const SpectralField& f, const Grid& grid) {
  if (f.geometry() != grid.geometry()) throw std::invalid_argument("geometry mismatch");
  check_grid_cutoff(grid, f.cutoff());
  const int n = grid.resolution();
  if (f.geometry() == Geometry::Torus) {
    const double w = -kTwoPi * kTwoPi;
    return {torus_eval(torus_half_spectrum(f, n, [&](int k1, int) { return w * k1 * k1; }), n),
            torus_eval(torus_half_spectrum(f, n, [&](int k1, int k2) { return w * k1 * k2; }), n),
            torus_eval(torus_half_spectrum(f, n, [&](int, int k2) { return w * k2 * k2; }), n)};
  }
  const double w = kPi * kPi;
  return {square_eval(f, n, false, false, [&](int k1, int) { return -w * k1 * k1; }),
          square_eval(f, n, true, true, [&](int k1, int k2) { return w * k1 * k2; }),
          square_eval(f, n, false, false, [&](int, int k2) { return -w * k2 * k2; })};
}

SpectralField divergence_to_spectral(const GridValues& flux1, const GridValues& flux2,
                                     const Grid& grid, int cutoff) {
  check_grid_cutoff(grid, cutoff);
  const int n = grid.resolution();
  if (flux1.size() != grid.node_count() || flux2.size() != grid.node_count()) {
    throw std::invalid_argument("grid size mismatch");
  }
  SpectralField f(grid.geometry(), cutoff);
  const double scale = 1.0 / (static_cast<double>(n) * n);
  if (grid.geometry() == Geometry::Torus) {
    std::vector<Complex> s1(half_size(n)), s2(half_size(n));
    detail::forward_r2c(n, flux1.data(), s1.data());
    detail::forward_r2c(n, flux2.data(), s2.data());
    const Complex i2pi(0.0, kTwoPi);
    for (int k1 = 0; k1 <= cutoff; ++k1) {
      for (int k2 = -cutoff; k2 <= cutoff; ++k2) {
        if (!in_half_plane(k1, k2)) continue;
        const Complex a = k2 >= 0 ? s1[half_index(n, k1, k2)] : std::conj(s1[half_index(n, -k1, -k2)]);
        const Complex b = k2 >= 0 ? s2[half_index(n, k1, k2)] : std::conj(s2[half_index(n, -k1, -k2)]);
        f.set_complex_coeff(k1, k2, i2pi * (double(k1) * a + double(k2) * b) * scale);
      }
    }
    return f;
  }
  std::vector<double> y1(flux1.size()), y2(flux2.size());
  detail::r2r(n, FFTW_RODFT10, FFTW_REDFT10, flux1.data(), y1.data());
  detail::r2r(n, FFTW_REDFT10, FFTW_RODFT10, flux2.data(), y2.data());
  for (int k1 = 0; k1 <= cutoff; ++k1) {
    for (int k2 = 0; k2 <= cutoff; ++k2) {
      double d = 0.0;
      if (k1 > 0) d += kPi * k1 * y1[static_cast<std::size_t>(k1 - 1) * n + k2];
      if (k2 > 0) d += kPi * k2 * y2[static_cast<std::size_t>(k1) * n + (k2 - 1)];
      f.at(k1, k2, Parity::Cos) = square_norm(k1, k2) * d * 0.25 * scale;
    }
  }
  return f;
}

SpectralField neg_laplacian(const SpectralField& f) {
  SpectralField out = f;
  auto c = out.coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= f.mode(i).eigenvalue;
  return out;
}

double hs_norm(const SpectralField& f, double eps) {
  double s = 0.0;
  const auto c = f.coeffs();
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (c[i] == 0.0) continue;
    s += std::pow(f.mode(i).eigenvalue, 2.0 * eps) * c[i] * c[i];
  }
  return std::sqrt(s);
}

// Heat kernel -----------------------------------------------------------------

double heat_kernel_spectral(double t, const TorusPoint& x, const TorusPoint& y, Geometry g) {
  check_time(t);
  if (g == Geometry::Torus) {
    return heat_1d_torus_spectral(t, x.x1() - y.x1()) * heat_1d_torus_spectral(t, x.x2() - y.x2());
  }
  return heat_1d_square_spectral(t, x.x1(), y.x1()) * heat_1d_square_spectral(t, x.x2(), y.x2());
}

double heat_kernel_images(double t, const TorusPoint& x, const TorusPoint& y, Geometry g) {
  check_time(t);
  if (g == Geometry::Torus) {
    return heat_1d_torus_images(t, x.x1() - y.x1()) * heat_1d_torus_images(t, x.x2() - y.x2());
  }
  return heat_1d_square_images(t, x.x1(), y.x1()) * heat_1d_square_images(t, x.x2(), y.x2());
}

double heat_kernel(double t, const TorusPoint& x, const TorusPoint& y, Geometry g) {
  check_time(t);
  return t >= kHeatSwitchTime ? heat_kernel_spectral(t, x, y, g) : heat_kernel_images(t, x, y, g);
}

double heat_trace(double t, Geometry g) {
  check_time(t);
  const double base = g == Geometry::Torus ? 4.0 * kPi * kPi : kPi * kPi;
  double one_d = 1.0;
  for (long k = 1;; ++k) {
    const double w = std::exp(-base * static_cast<double>(k) * k * t);
    if (w < 1e-18 * one_d) break;
    one_d += (g == Geometry::Torus ? 2.0 : 1.0) * w;
  }
  return one_d * one_d;
}

}  // namespace matchkit
