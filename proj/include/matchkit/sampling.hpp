#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "matchkit/spectral.hpp"
#include "matchkit/torus.hpp"

namespace matchkit {

// Seeds ------------------------------------------------------------------------

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);
/// seed_i = mix(base, i); distinct streams for distinct i.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t i);

/// Portable random source: mt19937_64 with explicit conversion to doubles so
/// that streams are reproducible bit-for-bit across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  TorusPoint uniform_point() {
    const double a = uniform();
    return {a, uniform()};
  }

 private:
  std::mt19937_64 engine_;
};

// Densities --------------------------------------------------------------------

/// Probability density on the torus with certified bounds lower <= rho <= upper.
class DensityModel {
 public:
  using Evaluator = std::function<double(const TorusPoint&)>;

  /// Checks the bounds on every node of the validation grid and that the grid
  /// integral equals one to 1e-6. Throws std::invalid_argument otherwise.
  DensityModel(std::string label, Evaluator evaluator, double lower, double upper,
               int validation_resolution = 256);

  static DensityModel uniform();
  /// 1 + amplitude sin(2 pi x1), |amplitude| < 1.
  static DensityModel sine(double amplitude = 0.5);
  /// Normalized product of von Mises profiles centered at `center`.
  static DensityModel bump(double concentration = 0.5, TorusPoint center = {0.5, 0.5});
  /// Positive band-limited field; bounds are the grid extrema widened by `margin`.
  static DensityModel spectral(const SpectralField& field, double margin = 1e-3);
  /// Looks up "uniform", "sine", or "bump" with default parameters.
  static DensityModel by_label(const std::string& label);

  double operator()(const TorusPoint& x) const { return evaluator_(x); }
  const std::string& label() const { return label_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  bool is_uniform() const { return label_ == "uniform"; }

  GridValues sample_on(const Grid& grid) const;
  /// Fourier coefficients from grid sampling (exact for band-limited models).
  SpectralField coefficients(int cutoff, int resolution = 256) const;

 private:
  std::string label_;
  Evaluator evaluator_;
  double lower_;
  double upper_;
};

// Point clouds -----------------------------------------------------------------

/// Contraction F of an iterated function system with additive noise,
/// X_{k+1} = F(X_k) + theta_k mod 1.
struct Contraction {
  enum class Kind { Constant, Sine };
  Kind kind = Kind::Sine;
  TorusPoint center{0.5, 0.5};
  /// Declared Lipschitz constant (zero for constant maps).
  double lipschitz = 0.5;

  /// Constant: F(x) = center. Sine: F(x) = center + (L / 2 pi) sin(2 pi x)
  /// componentwise; its Jacobian is diag(L cos, L cos) so |F(x)-F(y)| <= L d(x,y).
  TorusPoint operator()(const TorusPoint& x) const;
};

class IfsModel {
 public:
  /// Requires declared L < 1 and spot-checks the Lipschitz bound on 1000 pairs.
  IfsModel(Contraction contraction, DensityModel noise);

  const Contraction& contraction() const { return contraction_; }
  const DensityModel& noise() const { return noise_; }
  double lipschitz() const { return contraction_.lipschitz; }
  nlohmann::json descriptor() const;

  /// Stationary density of the chain. Both contractions act coordinatewise,
  /// so for product noise the chain splits into two circle chains; each 1-D
  /// density is the fixed point of the transfer operator on `resolution`
  /// nodes, and values between nodes are interpolated linearly. Throws for
  /// noise that is not a product density.
  DensityModel invariant_density(int resolution = 1024) const;

 private:
  Contraction contraction_;
  DensityModel noise_;
};

inline constexpr int kDefaultBurnIn = 1000;

struct PointCloud {
  std::vector<TorusPoint> points;
  /// {"kind": "iid"|"ifs", ...}
  nlohmann::json generator;
  std::uint64_t seed = 0;
  int burn_in = 0;

  std::size_t size() const { return points.size(); }
  nlohmann::json sidecar() const;
};

/// Draws one point from rho by rejection against the uniform envelope Lambda.
TorusPoint draw_rejection(const DensityModel& rho, Rng& rng);

PointCloud sample_iid(const DensityModel& rho, std::size_t n, std::uint64_t seed);
PointCloud sample_ifs(const IfsModel& model, std::size_t n, std::uint64_t seed,
                      int burn_in = kDefaultBurnIn);

struct BetaEstimate {
  double value = 0.0;
  /// Same estimator applied to independently re-paired samples; the bias floor.
  double null_floor = 0.0;
  int bins_per_axis = 0;
  std::size_t trials = 0;
  bool insufficient = false;
};

/// Total-variation distance between the empirical joint histogram of
/// (X_k, X_{k+lag}) and the product of its marginals, with N x N cells per
/// point (N^4 joint bins). A biased lower-bound diagnostic, not a certificate.
BetaEstimate estimate_beta(std::span<const TorusPoint> sequence, int lag, int bins_per_axis,
                           std::uint64_t seed = 1);
BetaEstimate estimate_beta(const IfsModel& model, int lag, std::size_t trials, int bins_per_axis,
                           std::uint64_t seed, int burn_in = kDefaultBurnIn);

/// Minimum pair count for a histogram with N^4 bins to be considered resolved.
inline std::size_t beta_min_trials(int bins_per_axis) {
  const std::size_t cells = static_cast<std::size_t>(bins_per_axis) * bins_per_axis;
  return 10 * cells * cells;
}

void write_cloud(const std::filesystem::path& csv_path, const PointCloud& cloud);
PointCloud read_cloud(const std::filesystem::path& csv_path);

}  // namespace matchkit
