#include "matchkit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace matchkit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t i) {
  return splitmix64(splitmix64(base) ^ (i * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

// DensityModel -------------------------------------------------------------------

DensityModel::DensityModel(std::string label, Evaluator evaluator, double lower, double upper,
                           int validation_resolution)
    : label_(std::move(label)), evaluator_(std::move(evaluator)), lower_(lower), upper_(upper) {
  if (!(lower_ > 0.0) || !(upper_ >= lower_) || !std::isfinite(upper_)) {
    throw std::invalid_argument("density bounds must satisfy 0 < lower <= upper < inf");
  }
  const Grid grid(Geometry::Torus, validation_resolution);
  const GridValues values = sample_on(grid);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < lower_ || values[i] > upper_) {
      throw std::invalid_argument("density '" + label_ + "' violates its bounds at grid node " +
                                  std::to_string(i));
    }
  }
  const double mass = grid.integrate(values);
  if (std::abs(mass - 1.0) > 1e-6) {
    throw std::invalid_argument("density '" + label_ + "' integrates to " + std::to_string(mass));
  }
}

DensityModel DensityModel::uniform() {
  return {"uniform", [](const TorusPoint&) { return 1.0; }, 1.0, 1.0};
}

DensityModel DensityModel::sine(double amplitude) {
  if (!(std::abs(amplitude) < 1.0)) throw std::invalid_argument("sine amplitude must be < 1");
  const double a = std::abs(amplitude);
  return {"sine",
          [amplitude](const TorusPoint& x) { return 1.0 + amplitude * std::sin(kTwoPi * x.x1()); },
          1.0 - a, 1.0 + a};
}

DensityModel DensityModel::bump(double concentration, TorusPoint center) {
  if (!(concentration >= 0.0)) throw std::invalid_argument("concentration must be >= 0");
  const double i0 = std::cyl_bessel_i(0.0, concentration);
  const double norm = 1.0 / (i0 * i0);
  return {"bump",
          [=](const TorusPoint& x) {
            return norm * std::exp(concentration * (std::cos(kTwoPi * (x.x1() - center.x1())) +
                                                    std::cos(kTwoPi * (x.x2() - center.x2()))));
          },
          norm * std::exp(-2.0 * concentration), norm * std::exp(2.0 * concentration)};
}

DensityModel DensityModel::spectral(const SpectralField& field, double margin) {
  if (field.geometry() != Geometry::Torus) throw std::invalid_argument("torus field required");
  const int resolution = std::max(256, 2 * field.cutoff() + 2);
  const Grid grid(Geometry::Torus, resolution);
  const GridValues v = spectral_to_grid(field, grid);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {"spectral", [field](const TorusPoint& x) { return field.evaluate(x); }, *lo - margin,
          *hi + margin, resolution};
}

DensityModel DensityModel::by_label(const std::string& label) {
  if (label == "uniform") return uniform();
  if (label == "sine") return sine();
  if (label == "bump") return bump();
  throw std::invalid_argument("unknown density '" + label + "' (valid: uniform, sine, bump)");
}

GridValues DensityModel::sample_on(const Grid& grid) const {
  GridValues v(grid.node_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = evaluator_(grid.node(i));
  return v;
}

SpectralField DensityModel::coefficients(int cutoff, int resolution) const {
  const Grid grid(Geometry::Torus, resolution);
  return grid_to_spectral(sample_on(grid), grid, cutoff);
}

// IFS ----------------------------------------------------------------------------

TorusPoint Contraction::operator()(const TorusPoint& x) const {
  if (kind == Kind::Constant) return center;
  const double s = lipschitz / kTwoPi;
  return {center.x1() + s * std::sin(kTwoPi * x.x1()), center.x2() + s * std::sin(kTwoPi * x.x2())};
}

IfsModel::IfsModel(Contraction contraction, DensityModel noise)
    : contraction_(contraction), noise_(std::move(noise)) {
  if (contraction_.kind == Contraction::Kind::Constant) contraction_.lipschitz = 0.0;
  if (!(contraction_.lipschitz >= 0.0 && contraction_.lipschitz < 1.0)) {
    throw std::invalid_argument("IFS contraction requires 0 <= L < 1");
  }
  Rng rng(0x1f5c0ffee);
  for (int i = 0; i < 1000; ++i) {
    const TorusPoint x = rng.uniform_point();
    const TorusPoint y = rng.uniform_point();
    const double lhs = torus_distance(contraction_(x), contraction_(y));
    if (lhs > contraction_.lipschitz * torus_distance(x, y) + 1e-12) {
      throw std::invalid_argument("contraction violates its declared Lipschitz constant");
    }
  }
}

nlohmann::json IfsModel::descriptor() const {
  return {{"kind", "ifs"},
          {"contraction", contraction_.kind == Contraction::Kind::Constant ? "constant" : "sine"},
          {"center", {contraction_.center.x1(), contraction_.center.x2()}},
          {"lipschitz", contraction_.lipschitz},
          {"noise", noise_.label()}};
}

DensityModel IfsModel::invariant_density(int resolution) const {
  if (resolution < 256 || resolution % 256 != 0) {
    throw std::invalid_argument("invariant density resolution must be a multiple of 256");
  }
  const int m = resolution;
  const double h = 1.0 / m;
  const DensityModel& noise = noise_;

  // Product check: h(a, b) h(c, d) = h(a, d) h(c, b).
  Rng rng(0x5eedf00d);
  for (int i = 0; i < 200; ++i) {
    const TorusPoint p = rng.uniform_point(), q = rng.uniform_point();
    const double lhs = noise(p) * noise(q);
    const double rhs = noise({p.x1(), q.x2()}) * noise({q.x1(), p.x2()});
    if (std::abs(lhs - rhs) > 1e-10 * std::max(1.0, lhs)) {
      throw std::invalid_argument("invariant density needs a product noise density");
    }
  }

  auto solve_axis = [&](int axis) {
    // 1-D noise marginal up to normalization: a slice through the mode.
    auto slice = [&](double s) { return axis == 0 ? noise({s, 0.0}) : noise({0.0, s}); };
    double norm = 0.0;
    for (int j = 0; j < m; ++j) norm += slice(j * h) * h;
    std::vector<double> image(m);
    for (int i = 0; i < m; ++i) {
      const TorusPoint x(i * h, i * h);
      const TorusPoint fx = contraction_(x);
      image[i] = axis == 0 ? fx.x1() : fx.x2();
    }
    std::vector<double> kernel(static_cast<std::size_t>(m) * m);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) kernel[static_cast<std::size_t>(j) * m + i] = slice(j * h - image[i]) / norm;

    std::vector<double> p(m, 1.0), next(m);
    for (int it = 0; it < 10000; ++it) {
      double change = 0.0, mass = 0.0;
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        const double* row = kernel.data() + static_cast<std::size_t>(j) * m;
        for (int i = 0; i < m; ++i) s += row[i] * p[i];
        next[j] = s * h;
        mass += next[j] * h;
      }
      for (int j = 0; j < m; ++j) {
        next[j] /= mass;
        change = std::max(change, std::abs(next[j] - p[j]));
      }
      p.swap(next);
      if (change < 1e-14) return p;
    }
    throw std::runtime_error("transfer operator iteration did not converge");
  };

  auto first = std::make_shared<const std::vector<double>>(solve_axis(0));
  auto second = std::make_shared<const std::vector<double>>(solve_axis(1));
  auto interpolate = [m](const std::vector<double>& p, double x) {
    const double u = wrap_unit(x) * m;
    const int i = std::min(m - 1, static_cast<int>(u));
    const double w = u - i;
    return (1.0 - w) * p[i] + w * p[(i + 1) % m];
  };
  const auto [lo1, hi1] = std::minmax_element(first->begin(), first->end());
  const auto [lo2, hi2] = std::minmax_element(second->begin(), second->end());
  return {"ifs-invariant",
          [=](const TorusPoint& x) { return interpolate(*first, x.x1()) * interpolate(*second, x.x2()); },
          *lo1 * *lo2, *hi1 * *hi2};
}

// Samplers -----------------------------------------------------------------------

TorusPoint draw_rejection(const DensityModel& rho, Rng& rng) {
  for (;;) {
    const TorusPoint x = rng.uniform_point();
    if (rho.is_uniform() || rng.uniform() * rho.upper() <= rho(x)) return x;
  }
}

nlohmann::json PointCloud::sidecar() const {
  return {{"generator", generator}, {"seed", seed}, {"n", points.size()}, {"burn_in", burn_in}};
}

PointCloud sample_iid(const DensityModel& rho, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample size must be >= 1");
  PointCloud cloud;
  cloud.generator = {{"kind", "iid"}, {"density", rho.label()}};
  cloud.seed = seed;
  cloud.points.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) cloud.points.push_back(draw_rejection(rho, rng));
  return cloud;
}

PointCloud sample_ifs(const IfsModel& model, std::size_t n, std::uint64_t seed, int burn_in) {
  if (n < 1) throw std::invalid_argument("sample size must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
  PointCloud cloud;
  cloud.generator = model.descriptor();
  cloud.seed = seed;
  cloud.burn_in = burn_in;
  cloud.points.reserve(n);
  Rng rng(seed);
  TorusPoint x = rng.uniform_point();
  auto step = [&](const TorusPoint& p) {
    const TorusPoint theta = draw_rejection(model.noise(), rng);
    return model.contraction()(p) + Vec2{theta.x1(), theta.x2()};
  };
  for (int i = 0; i < burn_in; ++i) x = step(x);
  for (std::size_t k = 0; k < n; ++k) {
    cloud.points.push_back(x);
    x = step(x);
  }
  return cloud;
}

// Mixing diagnostic --------------------------------------------------------------

namespace {

int cell_of(const TorusPoint& p, int bins) {
  const int i = std::min(bins - 1, static_cast<int>(p.x1() * bins));
  const int j = std::min(bins - 1, static_cast<int>(p.x2() * bins));
  return i * bins + j;
}

double histogram_tv(const std::vector<int>& first, const std::vector<int>& second, int cells) {
  const std::size_t t = first.size();
  std::vector<double> joint(static_cast<std::size_t>(cells) * cells, 0.0);
  std::vector<double> p(cells, 0.0), q(cells, 0.0);
  for (std::size_t k = 0; k < t; ++k) {
    joint[static_cast<std::size_t>(first[k]) * cells + second[k]] += 1.0;
    p[first[k]] += 1.0;
    q[second[k]] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(t);
  double tv = 0.0;
  for (int a = 0; a < cells; ++a) {
    for (int b = 0; b < cells; ++b) {
      tv += std::abs(joint[static_cast<std::size_t>(a) * cells + b] * inv - p[a] * inv * q[b] * inv);
    }
  }
  return 0.5 * tv;
}

}  // namespace

BetaEstimate estimate_beta(std::span<const TorusPoint> sequence, int lag, int bins_per_axis,
                           std::uint64_t seed) {
  if (lag < 0) throw std::invalid_argument("lag must be >= 0");
  if (bins_per_axis < 1) throw std::invalid_argument("bins_per_axis must be >= 1");
  if (sequence.size() <= static_cast<std::size_t>(lag)) {
    throw std::invalid_argument("sequence shorter than the lag");
  }
  const std::size_t trials = sequence.size() - lag;
  const int cells = bins_per_axis * bins_per_axis;
  std::vector<int> first(trials), second(trials);
  for (std::size_t k = 0; k < trials; ++k) {
    first[k] = cell_of(sequence[k], bins_per_axis);
    second[k] = cell_of(sequence[k + lag], bins_per_axis);
  }
  BetaEstimate out;
  out.bins_per_axis = bins_per_axis;
  out.trials = trials;
  out.insufficient = trials < beta_min_trials(bins_per_axis);
  out.value = histogram_tv(first, second, cells);

  // Re-pair with a random permutation to break the dependence.
  std::vector<int> shuffled = second;
  Rng rng(seed);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(shuffled[i - 1], shuffled[std::min(j, i - 1)]);
  }
  out.null_floor = histogram_tv(first, shuffled, cells);
  return out;
}

BetaEstimate estimate_beta(const IfsModel& model, int lag, std::size_t trials, int bins_per_axis,
                           std::uint64_t seed, int burn_in) {
  const PointCloud chain = sample_ifs(model, trials + lag, seed, burn_in);
  return estimate_beta(chain.points, lag, bins_per_axis, mix_seed(seed, 1));
}

// IO -----------------------------------------------------------------------------

void write_cloud(const std::filesystem::path& csv_path, const PointCloud& cloud) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << "x1,x2\n";
  char buf[64];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.x1(), p.x2());
    csv << buf;
  }
  auto sidecar_path = csv_path;
  sidecar_path.replace_extension(".json");
  std::ofstream js(sidecar_path);
  js << cloud.sidecar().dump(2) << "\n";
}

PointCloud read_cloud(const std::filesystem::path& csv_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot read " + csv_path.string());
  PointCloud cloud;
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    double a = 0.0, b = 0.0;
    if (std::sscanf(line.c_str(), "%lf,%lf", &a, &b) != 2) {
      throw std::runtime_error("malformed point row: " + line);
    }
    cloud.points.emplace_back(a, b);
  }
  auto sidecar_path = csv_path;
  sidecar_path.replace_extension(".json");
  if (std::ifstream js(sidecar_path); js) {
    const auto meta = nlohmann::json::parse(js);
    cloud.generator = meta.value("generator", nlohmann::json::object());
    cloud.seed = meta.value("seed", std::uint64_t{0});
    cloud.burn_in = meta.value("burn_in", 0);
  }
  return cloud;
}

}  // namespace matchkit
