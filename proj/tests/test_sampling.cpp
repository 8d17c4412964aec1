#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "matchkit/sampling.hpp"

using namespace matchkit;

namespace {

constexpr double kChi2Critical63 = 103.44237731987324;  // chi^2_{63}, p = 1e-3

std::vector<double> histogram(const std::vector<TorusPoint>& pts, int bins) {
  std::vector<double> h(static_cast<std::size_t>(bins) * bins, 0.0);
  for (const auto& p : pts) {
    const int i = std::min(bins - 1, static_cast<int>(p.x1() * bins));
    const int j = std::min(bins - 1, static_cast<int>(p.x2() * bins));
    h[static_cast<std::size_t>(i) * bins + j] += 1.0 / static_cast<double>(pts.size());
  }
  return h;
}

// Cell probabilities of a density by a fine midpoint rule.
std::vector<double> cell_masses(const std::function<double(double, double)>& rho, int bins) {
  const int sub = 64;
  std::vector<double> m(static_cast<std::size_t>(bins) * bins, 0.0);
  const int fine = bins * sub;
  for (int a = 0; a < fine; ++a) {
    for (int b = 0; b < fine; ++b) {
      const double x = (a + 0.5) / fine, y = (b + 0.5) / fine;
      m[static_cast<std::size_t>(a / sub) * bins + b / sub] += rho(x, y) / (double(fine) * fine);
    }
  }
  return m;
}

double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double lag1_autocorrelation(const std::vector<double>& s) {
  const double n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double var = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) var += (s[i] - mean) * (s[i] - mean);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) cov += (s[i] - mean) * (s[i + 1] - mean);
  return cov / var;
}

IfsModel test_chain(double lipschitz = 0.5) {
  return IfsModel(Contraction{Contraction::Kind::Sine, {0.5, 0.5}, lipschitz},
                  DensityModel::bump(2.0, {0.0, 0.0}));
}

}  // namespace

TEST_CASE("seed mixing") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(42, 7) == mix_seed(42, 7));
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("density models validate their bounds") {
  CHECK_NOTHROW(DensityModel::uniform());
  CHECK_NOTHROW(DensityModel::sine());
  CHECK_NOTHROW(DensityModel::bump(1.0));
  CHECK_THROWS_AS(DensityModel::sine(1.5), std::invalid_argument);
  // Wrong bounds.
  CHECK_THROWS_AS(DensityModel("bad", [](const TorusPoint&) { return 1.0; }, 1.1, 2.0),
                  std::invalid_argument);
  // Not normalized.
  CHECK_THROWS_AS(DensityModel("heavy", [](const TorusPoint&) { return 2.0; }, 1.0, 3.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(DensityModel::by_label("nope"), std::invalid_argument);

  SpectralField f(Geometry::Torus, 3);
  f.set_mean(1.0);
  f.at(1, 1, Parity::Cos) = 0.2;
  const auto custom = DensityModel::spectral(f);
  CHECK(custom.lower() > 0.0);
  CHECK(custom(TorusPoint(0.0, 0.0)) == doctest::Approx(1.0 + 0.2 * std::sqrt(2.0)));
}

TEST_CASE("iid uniform passes chi-square") {
  const auto cloud = sample_iid(DensityModel::uniform(), 100000, 123);
  REQUIRE(cloud.size() == 100000u);
  const auto h = histogram(cloud.points, 8);
  double chi2 = 0.0;
  const double expected = 100000.0 / 64.0;
  for (double p : h) chi2 += std::pow(p * 100000.0 - expected, 2) / expected;
  CHECK(chi2 < kChi2Critical63);
}

TEST_CASE("iid sine density matches its first moment") {
  const std::size_t n = 100000;
  const auto rho = DensityModel::sine();
  // Quadrature oracle for E[sin(2 pi X1)] and its variance.
  double m1 = 0.0, m2 = 0.0;
  const int q = 4096;
  for (int i = 0; i < q; ++i) {
    const double x = (i + 0.5) / q;
    const double s = std::sin(kTwoPi * x);
    m1 += s * rho(TorusPoint(x, 0.3)) / q;
    m2 += s * s * rho(TorusPoint(x, 0.3)) / q;
  }
  CHECK(m1 == doctest::Approx(0.25).epsilon(1e-10));
  const double sigma = std::sqrt(m2 - m1 * m1);

  const auto cloud = sample_iid(rho, n, 99);
  double mean = 0.0;
  for (const auto& p : cloud.points) {
    mean += std::sin(kTwoPi * p.x1()) / n;
    CHECK(rho(p) >= rho.lower());
    CHECK(rho(p) <= rho.upper());
  }
  CHECK(std::abs(mean - m1) < 3.0 * sigma / std::sqrt(double(n)));
}

TEST_CASE("single point clouds and determinism") {
  const auto one = sample_iid(DensityModel::bump(), 1, 4);
  REQUIRE(one.size() == 1u);
  CHECK(one.points[0].x1() >= 0.0);
  CHECK(one.points[0].x1() < 1.0);

  const auto a = sample_iid(DensityModel::sine(), 500, 77);
  const auto b = sample_iid(DensityModel::sine(), 500, 77);
  const auto c = sample_iid(DensityModel::sine(), 500, 78);
  CHECK(a.points == b.points);
  CHECK(a.points != c.points);

  const auto model = test_chain();
  CHECK(sample_ifs(model, 300, 5, 10).points == sample_ifs(model, 300, 5, 10).points);
  CHECK(sample_ifs(model, 300, 5, 10).points != sample_ifs(model, 300, 6, 10).points);
  CHECK_THROWS(sample_iid(DensityModel::uniform(), 0, 1));
  CHECK_THROWS(sample_ifs(model, 10, 1, -1));
}

TEST_CASE("IFS contraction checks") {
  CHECK_THROWS_AS(IfsModel(Contraction{Contraction::Kind::Sine, {0.5, 0.5}, 1.0},
                           DensityModel::uniform()),
                  std::invalid_argument);
  CHECK_NOTHROW(IfsModel(Contraction{Contraction::Kind::Sine, {0.1, 0.2}, 0.9},
                         DensityModel::uniform()));
  const IfsModel constant(Contraction{Contraction::Kind::Constant, {0.2, 0.7}, 0.0},
                          DensityModel::uniform());
  CHECK(constant.lipschitz() == 0.0);
  CHECK(constant.descriptor()["contraction"] == "constant");
}

TEST_CASE("IFS with constant map has the translated noise law") {
  const TorusPoint c(0.3, 0.6);
  const auto noise = DensityModel::bump(1.5, {0.0, 0.0});
  const IfsModel model(Contraction{Contraction::Kind::Constant, c, 0.0}, noise);
  const auto cloud = sample_ifs(model, 100000, 31, 100);
  const auto expected = cell_masses(
      [&](double x, double y) { return noise(TorusPoint(x - c.x1(), y - c.x2())); }, 8);
  CHECK(tv(histogram(cloud.points, 8), expected) < 0.02);

  // Uniform noise makes the chain i.i.d. uniform.
  const IfsModel flat(Contraction{Contraction::Kind::Constant, {0.0, 0.0}, 0.0},
                      DensityModel::uniform());
  const auto iid = sample_ifs(flat, 100000, 8, 0);
  const auto h = histogram(iid.points, 8);
  double chi2 = 0.0;
  for (double p : h) chi2 += std::pow(p * 100000.0 - 100000.0 / 64, 2) / (100000.0 / 64);
  CHECK(chi2 < kChi2Critical63);
}

TEST_CASE("IFS lag-1 autocorrelation matches an independent simulation") {
  const auto model = test_chain(0.5);
  const auto cloud = sample_ifs(model, 1000000, 2024);
  std::vector<double> s(cloud.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(kTwoPi * cloud.points[i].x1());
  const double lib = lag1_autocorrelation(s);

  // Brute force with its own generator and a coordinatewise von Mises sampler.
  std::mt19937_64 gen(555);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double kappa = 2.0;
  auto vm = [&]() {
    for (;;) {
      const double th = u(gen);
      if (u(gen) <= std::exp(kappa * (std::cos(kTwoPi * th) - 1.0))) return th;
    }
  };
  double x1 = u(gen), x2 = u(gen);
  const std::size_t steps = 10000000;
  std::vector<double> brute;
  brute.reserve(steps);
  for (std::size_t k = 0; k < steps + 1000; ++k) {
    const double y1 = 0.5 + 0.5 / kTwoPi * std::sin(kTwoPi * x1) + vm();
    const double y2 = 0.5 + 0.5 / kTwoPi * std::sin(kTwoPi * x2) + vm();
    x1 = y1 - std::floor(y1);
    x2 = y2 - std::floor(y2);
    if (k >= 1000) brute.push_back(std::sin(kTwoPi * x1));
  }
  const double ref = lag1_autocorrelation(brute);
  MESSAGE("lag-1 autocorrelation: library " << lib << ", brute force " << ref);
  CHECK(std::abs(ref) > 0.05);
  CHECK(std::abs(lib - ref) < 0.01);
}

TEST_CASE("beta mixing diagnostic") {
  SUBCASE("iid estimates shrink toward zero") {
    const auto small = sample_iid(DensityModel::uniform(), 20000, 3);
    const auto large = sample_iid(DensityModel::uniform(), 320000, 3);
    const auto e_small = estimate_beta(small.points, 1, 4);
    const auto e_large = estimate_beta(large.points, 1, 4);
    CHECK(e_large.value < e_small.value);
    CHECK(e_large.value < 2.0 * e_large.null_floor + 0.005);
    CHECK(e_large.value < 0.02);
    CHECK_FALSE(e_large.insufficient);
  }
  SUBCASE("lag zero sees the diagonal") {
    const auto chain = sample_ifs(test_chain(), 50000, 9);
    CHECK(estimate_beta(chain.points, 0, 4).value > 0.5);
  }
  SUBCASE("geometric decay in the lag") {
    const auto model = test_chain(0.5);
    std::vector<double> lags{1, 2, 4, 8}, logs;
    for (double lag : lags) {
      const auto e = estimate_beta(model, static_cast<int>(lag), 400000, 3, 17);
      logs.push_back(std::log(e.value));
    }
    // Least-squares slope of log estimate against lag.
    const double ml = std::accumulate(lags.begin(), lags.end(), 0.0) / 4;
    const double my = std::accumulate(logs.begin(), logs.end(), 0.0) / 4;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 4; ++i) {
      num += (lags[i] - ml) * (logs[i] - my);
      den += (lags[i] - ml) * (lags[i] - ml);
    }
    CHECK(num / den < 0.0);
    CHECK(logs[0] > logs[1]);
  }
  SUBCASE("insufficient trials are flagged") {
    const auto chain = sample_ifs(test_chain(), 1000, 9);
    CHECK(estimate_beta(chain.points, 1, 8).insufficient);
  }
}

TEST_CASE("IFS marginal converges to the long-run law") {
  // Slow chain: strong contraction and concentrated noise.
  const IfsModel model(Contraction{Contraction::Kind::Sine, {0.5, 0.5}, 0.9},
                       DensityModel::bump(10.0, {0.0, 0.0}));
  const auto stationary = histogram(sample_ifs(model, 400000, 1).points, 4);
  std::vector<double> distances;
  for (int k : {0, 2, 8}) {
    std::vector<TorusPoint> states;
    for (int chain = 0; chain < 40000; ++chain) {
      states.push_back(sample_ifs(model, 1, mix_seed(100 + k, chain), k).points[0]);
    }
    distances.push_back(tv(histogram(states, 4), stationary));
  }
  MESSAGE("marginal TV at k = 0, 2, 8: " << distances[0] << " " << distances[1] << " "
                                          << distances[2]);
  CHECK(distances[0] > distances[1]);
  CHECK(distances[1] > distances[2]);
}

TEST_CASE("cloud csv round trip") {
  const auto cloud = sample_ifs(test_chain(), 50, 12, 7);
  const auto path = std::filesystem::temp_directory_path() / "matchkit_cloud_test.csv";
  write_cloud(path, cloud);
  const auto back = read_cloud(path);
  CHECK(back.points == cloud.points);
  CHECK(back.seed == 12u);
  CHECK(back.burn_in == 7);
  CHECK(back.generator["kind"] == "ifs");
}

TEST_CASE("IFS invariant density") {
  SUBCASE("constant map: translated noise") {
    const TorusPoint c(0.3, 0.6);
    const auto noise = DensityModel::bump(1.5, {0.0, 0.0});
    const auto rho = IfsModel(Contraction{Contraction::Kind::Constant, c, 0.0}, noise).invariant_density();
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      // Node values are exact; between nodes the interpolation error is O(h^2).
      const TorusPoint node(std::floor(rng.uniform() * 1024) / 1024, std::floor(rng.uniform() * 1024) / 1024);
      CHECK(rho(node) == doctest::Approx(noise(TorusPoint(node.x1() - c.x1(), node.x2() - c.x2()))).epsilon(1e-10));
      const TorusPoint x = rng.uniform_point();
      CHECK(rho(x) == doctest::Approx(noise(TorusPoint(x.x1() - c.x1(), x.x2() - c.x2()))).epsilon(1e-4));
    }
  }
  SUBCASE("sine map: long chain histogram") {
    const auto model = test_chain(0.5);
    const auto rho = model.invariant_density();
    const auto cloud = sample_ifs(model, 400000, 77);
    const auto expected = cell_masses([&](double x, double y) { return rho(TorusPoint(x, y)); }, 8);
    CHECK(tv(histogram(cloud.points, 8), expected) < 0.01);
    // The chain is not uniform, so the comparison has power.
    CHECK(tv(expected, std::vector<double>(64, 1.0 / 64)) > 0.1);
  }
  CHECK_THROWS_AS(IfsModel(Contraction{}, DensityModel("skew", [](const TorusPoint& x) {
                                            return 1.0 + 0.5 * std::sin(kTwoPi * (x.x1() + x.x2()));
                                          }, 0.5, 1.5))
                      .invariant_density(),
                  std::invalid_argument);
}
