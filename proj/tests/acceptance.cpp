// Acceptance gate: one PASS/FAIL line per criterion, followed by INFO lines
// for diagnostic runs that do not count toward the gate. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "matchkit/elliptic.hpp"
#include "matchkit/experiments.hpp"
#include "matchkit/transport.hpp"
#include "ot_oracles.hpp"

using namespace matchkit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // 0 when no runtime bound applies
  std::function<Outcome()> run;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

RunOptions run_options() {
  return RunOptions{static_cast<int>(std::max(1u, std::thread::hardware_concurrency())), false};
}

std::filesystem::path g_out = "acceptance_results";

RateTable run_and_save(ExperimentConfig config, const std::string& tag) {
  config.output = g_out / tag;
  config.validate();
  auto table = run_experiment(config, run_options());
  write_outputs(config.output, table, config);
  return table;
}

ExperimentConfig defaults(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  return c;
}

std::vector<Aggregate> series(const RateTable& t, const std::string& quantity) {
  std::vector<Aggregate> out;
  for (const auto& row : t.rows) out.push_back(row.stats.at(quantity));
  return out;
}

std::string means(const std::vector<Aggregate>& s) {
  std::string out;
  for (const auto& a : s) out += (out.empty() ? "" : ", ") + format("%.4g", a.mean);
  return out;
}

/// All trial means share a sign and max |mean| <= 3 min |mean|.
bool within_factor_three(const std::vector<Aggregate>& s, double* spread) {
  double lo = INFINITY, hi = 0.0;
  bool same_sign = true;
  for (const auto& a : s) {
    lo = std::min(lo, std::abs(a.mean));
    hi = std::max(hi, std::abs(a.mean));
    same_sign = same_sign && (a.mean > 0.0) == (s.front().mean > 0.0) && a.mean != 0.0;
  }
  *spread = lo > 0.0 ? hi / lo : INFINITY;
  return same_sign && *spread <= 3.0;
}

/// Each mean minus its SE lies above the next mean plus its SE.
bool separated_decrease(const std::vector<Aggregate>& s) {
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!(s[i - 1].mean - s[i - 1].se > s[i].mean + s[i].se)) return false;
  }
  return true;
}

// 1 ------------------------------------------------------------------------------

Outcome ot_exactness() {
  Rng rng(20240601);
  double worst = 0.0, worst_gap = 0.0;
  int instances = 0;
  auto points = [&](std::size_t n) {
    std::vector<TorusPoint> p(n);
    for (auto& x : p) x = rng.uniform_point();
    return p;
  };
  double solver_seconds = 0.0;
  auto timed = [&](auto&& solve) {
    const auto start = std::chrono::steady_clock::now();
    OtResult r = solve();
    solver_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };
  auto record = [&](const OtResult& r, double exact) {
    worst = std::max(worst, std::abs(r.cost - exact) / std::max(exact, 1e-300));
    worst_gap = std::max(worst_gap, std::abs(r.gap) / std::max(r.cost, 1e-300));
    ++instances;
  };
  // Uniform, n = m: all permutations.
  for (int k = 0; k < 70; ++k) {
    const std::size_t n = 1 + k % 8;
    const auto xs = points(n), ys = points(n);
    const SquaredDistanceCost<TorusPoint> c(xs, ys);
    record(timed([&] { return solve_discrete_ot(DiscreteMeasure::uniform(xs), DiscreteMeasure::uniform(ys)); }),
           oracle::permutation_cost(c));
  }
  // Uniform, n != m: capacity enumeration with m/g units per row and n/g per column.
  for (int k = 0; k < 30; ++k) {
    const std::size_t n = 1 + k % 4, m = n + 1 + (k / 4) % 4;
    const auto xs = points(n), ys = points(m);
    const SquaredDistanceCost<TorusPoint> c(xs, ys);
    const auto g = std::gcd(n, m);
    oracle::CapacityDp dp(std::vector<int>(n, static_cast<int>(m / g)), std::vector<int>(m, static_cast<int>(n / g)), c);
    record(timed([&] { return solve_discrete_ot(DiscreteMeasure::uniform(xs), DiscreteMeasure::uniform(ys)); }),
           dp.solve());
  }
  // Integer weights, n + m <= 16.
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 8);
    const auto ua = oracle::composition(12, n, rng), ub = oracle::composition(12, m, rng);
    const auto xs = points(n), ys = points(m);
    const SquaredDistanceCost<TorusPoint> c(xs, ys);
    std::vector<double> a(n), b(m);
    for (std::size_t i = 0; i < n; ++i) a[i] = ua[i] / 12.0;
    for (std::size_t j = 0; j < m; ++j) b[j] = ub[j] / 12.0;
    record(timed([&] { return solve_transport(a, b, c); }), oracle::CapacityDp(ua, ub, c).solve());
  }
  // Exact up to floating summation order.
  return {instances == 200 && worst <= 1e-12 && worst_gap <= 1e-9 && solver_seconds < 10.0,
          format("%d instances, max relative cost error %.2e (<= 1e-12), max gap/cost %.2e (<= 1e-9), "
                 "solver time %.3f s (< 10 s)",
                 instances, worst, worst_gap, solver_seconds)};
}

// 2 ------------------------------------------------------------------------------

Outcome pde_exactness() {
  // Poisson: -Lap h = c sqrt2 cos(2 pi (2 x1 + x2)) has h = c / (20 pi^2) in that mode.
  SpectralField rhs(Geometry::Torus, 8);
  rhs.at(2, 1, Parity::Cos) = 0.7;
  const auto h = solve_poisson(rhs);
  double poisson = std::abs(h.field.at(2, 1, Parity::Cos) - 0.7 / (20.0 * kPi * kPi));
  for (std::size_t i = 0; i < h.field.size(); ++i) {
    if (i != h.field.index(2, 1, Parity::Cos)) poisson = std::max(poisson, std::abs(h.field.coeffs()[i]));
  }

  // rho = 1 + 0.5 sin(2 pi x1), u = cos(2 pi x1) sin(2 pi x2):
  // -div(rho grad u) = 8 pi^2 rho u + 2 pi^2 sin(2 pi x1) cos(2 pi x1) sin(2 pi x2).
  const Grid grid(Geometry::Torus, 64);
  const auto rho = DensityModel::sine().sample_on(grid);
  GridValues f(grid.node_count());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto x = grid.node(i);
    const double c1 = std::cos(kTwoPi * x.x1()), s1 = std::sin(kTwoPi * x.x1()), s2 = std::sin(kTwoPi * x.x2());
    f[i] = 8 * kPi * kPi * rho[i] * c1 * s2 + 2 * kPi * kPi * s1 * c1 * s2;
  }
  const auto u = solve_divform(grid, rho, grid_to_spectral(f, grid, 16));
  const auto values = spectral_to_grid(u.field, grid);
  const auto grad = gradient(u, grid);
  long double h1 = 0.0L;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto x = grid.node(i);
    const double c1 = std::cos(kTwoPi * x.x1()), s1 = std::sin(kTwoPi * x.x1());
    const double c2 = std::cos(kTwoPi * x.x2()), s2 = std::sin(kTwoPi * x.x2());
    const double e0 = values[i] - c1 * s2;
    const double e1 = grad[0][i] + kTwoPi * s1 * s2;
    const double e2 = grad[1][i] - kTwoPi * c1 * c2;
    h1 += e0 * e0 + e1 * e1 + e2 * e2;
  }
  const double h1_error = std::sqrt(static_cast<double>(h1 / values.size()));

  // Central differences of a smooth field against the spectral gradient.
  SpectralField g(Geometry::Torus, 6);
  g.at(1, 2, Parity::Cos) = 0.3;
  g.at(3, -1, Parity::Sin) = 0.2;
  g.at(0, 2, Parity::Sin) = -0.4;
  const PotentialField p{g, "fd", {}};
  std::vector<double> errors;
  for (int n : {32, 64, 128}) {
    const Grid fd(Geometry::Torus, n);
    const auto v = spectral_to_grid(g, fd);
    const auto sg = gradient(p, fd);
    double err = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const auto at = [&](int a, int b) { return v[static_cast<std::size_t>((a + n) % n) * n + (b + n) % n]; };
        const std::size_t idx = static_cast<std::size_t>(i) * n + j;
        err = std::max({err, std::abs((at(i + 1, j) - at(i - 1, j)) * n / 2.0 - sg[0][idx]),
                        std::abs((at(i, j + 1) - at(i, j - 1)) * n / 2.0 - sg[1][idx])});
      }
    errors.push_back(err);
  }
  const double order = std::log(errors.front() / errors.back()) / std::log(4.0);
  return {poisson <= 1e-12 && h1_error <= 1e-8 && order >= 1.9,
          format("Poisson mode error %.2e (<= 1e-12), manufactured H1 error %.2e (<= 1e-8), "
                 "finite-difference order %.3f (>= 1.9)",
                 poisson, h1_error, order)};
}

// 3 ------------------------------------------------------------------------------

Outcome heat_kernel_cross_validation() {
  Rng rng(314159);
  const double t = 1.0 / (4.0 * kPi * kPi);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const TorusPoint x = rng.uniform_point(), y = rng.uniform_point();
    const double a = heat_kernel_spectral(t, x, y), b = heat_kernel_images(t, x, y);
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  // Integral of the diagonal (constant on the torus) against the eigenvalue sum.
  double trace = 0.0;
  for (double s : {0.01, 0.1, t, 1.0}) {
    const double diag = heat_kernel(s, TorusPoint(0.3, 0.7), TorusPoint(0.3, 0.7));
    trace = std::max(trace, std::abs(diag - heat_trace(s)) / heat_trace(s));
  }
  return {worst <= 1e-10 && trace <= 1e-8,
          format("100 pairs at t = 1/(4 pi^2): max difference %.2e (<= 1e-10); trace identity %.2e (<= 1e-8)",
                 worst, trace)};
}

// 4 ------------------------------------------------------------------------------

Outcome cost_asymptotics() {
  const auto t = run_and_save(defaults("cost"), "cost");
  const auto r = series(t, "ratio");
  const auto& first = r.front();
  const auto& last = r.back();
  const bool band = last.mean >= 0.10 && last.mean <= 0.30;
  const bool down = last.mean + last.se < first.mean - first.se;
  return {band && down, format("r(n) = %s; r(4096) = %.4f +- %.4f in [0.10, 0.30]: %s; "
                               "below r(256) = %.4f +- %.4f by 1 SE: %s",
                               means(r).c_str(), last.mean, last.se, band ? "yes" : "no", first.mean, first.se,
                               down ? "yes" : "no")};
}

// 5 ------------------------------------------------------------------------------

Outcome contractivity() {
  bool pass = true;
  std::string detail;
  for (const char* density : {"uniform", "sine"}) {
    auto c = defaults("contractivity");
    c.density = density;
    const auto t = run_and_save(c, std::string("contractivity_") + density);
    const auto r = series(t, "ratio");
    double spread = 0.0;
    const bool band = within_factor_three(r, &spread);
    const double over_t = t.rows.back().stats.at("w2_over_t").mean;
    pass = pass && band && over_t < 0.2;
    detail += format("%s%s: corrected ratio %s, spread %.3f (<= 3); W2^2/t at 4096 = %.4f (< 0.2)",
                     detail.empty() ? "" : "; ", density, means(r).c_str(), spread, over_t);
  }
  return {pass, detail};
}

// 6 ------------------------------------------------------------------------------

Outcome lq_bound() {
  bool pass = true;
  std::string detail;
  for (const char* sampler : {"iid", "ifs"}) {
    auto c = defaults("lq");
    c.sampler.kind = sampler;
    const auto t = run_and_save(c, std::string("lq_") + sampler);
    for (double q : c.q_values) {
      const auto r = series(t, format("ratio_%g", q));
      double spread = 0.0;
      const bool band = within_factor_three(r, &spread);
      pass = pass && band;
      detail += format("%s%s q=%g: %s, spread %.3g (<= 3)", detail.empty() ? "" : "; ", sampler, q,
                       means(r).c_str(), spread);
    }
  }
  return {pass, detail};
}

// 7 ------------------------------------------------------------------------------

Outcome map_approximation() {
  const auto t = run_and_save(defaults("map"), "map");
  const auto r = series(t, "relative");
  std::string bands;
  for (const auto& a : r) bands += format("%s%.6f +- %.2e", bands.empty() ? "" : ", ", a.mean, a.se);
  return {separated_decrease(r), "relative error " + bands};
}

// 8 and 10 share the plan run.

RateTable& plan_table() {
  static std::optional<RateTable> table;
  if (!table) table = run_and_save(defaults("plan"), "plan");
  return *table;
}

Outcome plan_approximation() {
  const auto& t = plan_table();
  const auto r = series(t, "relative");
  std::string bands;
  for (std::size_t i = 0; i < r.size(); ++i) {
    bands += format("%sn=%zu %.4f +- %.4f (cells %.0f)", bands.empty() ? "" : ", ", t.rows[i].n, r[i].mean, r[i].se,
                    t.rows[i].stats.at("coarsening_level").mean);
  }
  return {separated_decrease(r), "relative error " + bands + ", budget 4000"};
}

Outcome regularization_inequality() {
  const auto& t = plan_table();
  std::size_t violations = 0, total = 0;
  for (const auto& rec : t.records) {
    ++total;
    if (!rec.flags.at("regularization_holds")) ++violations;
  }
  return {violations == 0 && total > 0, format("%zu violations in %zu solved instances", violations, total)};
}

// 9 ------------------------------------------------------------------------------

Outcome fluctuation_events() {
  const auto t = run_and_save(defaults("fluctuation"), "fluctuation");
  const auto f = series(t, "event_ab");
  bool nondecreasing = true;
  for (std::size_t i = 1; i < f.size(); ++i) nondecreasing = nondecreasing && f[i].mean >= f[i - 1].mean;
  return {nondecreasing && f.back().mean >= 0.9,
          format("freq(A and B) = %s; nondecreasing: %s; at 4096 >= 0.9: %s", means(f).c_str(),
                 nondecreasing ? "yes" : "no", f.back().mean >= 0.9 ? "yes" : "no")};
}

// 11 -----------------------------------------------------------------------------

// mu = 1 + 0.4 cos(2 pi x1), nu = 1 + 0.3 sin(2 pi x1). The flow moves along x1
// and preserves order, so its end map solves F_nu(T(x)) = F_mu(x) + J with
// the cumulative distributions F and J = d1 h(0) the mass crossing x1 = 0.
double exact_moser_map(double x) {
  const double a = 0.4, b = 0.3;
  const double target = x + a * std::sin(kTwoPi * x) / kTwoPi + b / kTwoPi;
  double y = x;
  for (int i = 0; i < 60; ++i) {
    const double g = y + b * (1.0 - std::cos(kTwoPi * y)) / kTwoPi - target;
    y -= g / (1.0 + b * std::sin(kTwoPi * y));
    if (std::abs(g) < 1e-16) break;
  }
  return y;
}

Outcome moser_flow() {
  const double r2 = std::sqrt(2.0);
  SpectralField mu(Geometry::Torus, 3), nu(Geometry::Torus, 3), rho(Geometry::Torus, 3);
  mu.set_mean(1.0);
  mu.at(1, 0, Parity::Cos) = 0.4 / r2;
  nu.set_mean(1.0);
  nu.at(1, 0, Parity::Sin) = 0.3 / r2;
  rho.set_mean(1.0);
  const auto h = solve_poisson(nu - mu);
  const int res = 32;

  const auto flowed = flow_transport(mu, nu, h, rho, 64, res, true);
  std::vector<TorusPoint> exact(flowed.positions.size());
  const Grid grid(Geometry::Torus, res);
  for (std::size_t i = 0; i < exact.size(); ++i) {
    exact[i] = TorusPoint(exact_moser_map(grid.node(i).x1()), grid.node(i).x2());
  }
  const DensityModel target_density(
      "nu", [](const TorusPoint& x) { return 1.0 + 0.3 * std::sin(kTwoPi * x.x1()); }, 0.7, 1.3);
  const auto target = quantize_density(target_density, res);
  const double floor = solve_discrete_ot(DiscreteMeasure(exact, flowed.flowed.weights()), target).cost;
  const double w2 = *flowed.w2_to_target;

  std::vector<double> errors;
  for (int steps : {4, 8, 16}) {
    const auto r = flow_transport(mu, nu, h, rho, steps, res, false);
    double e = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) e = std::max(e, torus_distance(r.positions[i], exact[i]));
    errors.push_back(e);
  }
  const double order = std::log(errors.front() / errors.back()) / std::log(4.0);
  return {w2 <= 4.0 * floor && order >= 3.5,
          format("W2^2 to target at 64 steps %.3e, grid floor %.3e (ratio %.3f <= 4); ODE errors %.2e %.2e %.2e, "
                 "order %.2f (>= 3.5)",
                 w2, floor, w2 / floor, errors[0], errors[1], errors[2], order)};
}

// 12 -----------------------------------------------------------------------------

Outcome determinism() {
  auto run_suite = [](const std::filesystem::path& dir) {
    std::filesystem::remove_all(dir);
    for (const auto& name : experiment_names()) {
      const std::string cmd = std::string("\"") + MATCHKIT_CLI + "\" rates " + name +
                              " --quick --seed 1 --out \"" + dir.string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) throw std::runtime_error("command failed: " + cmd);
    }
  };
  const auto a = g_out / "quick_a", b = g_out / "quick_b";
  run_suite(a);
  run_suite(b);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  std::size_t files = 0, differ = 0;
  for (const auto& e : std::filesystem::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const auto other = b / e.path().filename();
    if (!std::filesystem::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
  }
  return {files == 2 * experiment_names().size() && differ == 0,
          format("%zu CSV files per run, %zu differ", files, differ)};
}

// Diagnostics --------------------------------------------------------------------

void diagnostics() {
  auto info = [](const std::string& line) { std::printf("[INFO] %s\n", line.c_str()); };
  {
    auto c = defaults("plan");
    c.trials = 8;
    c.solver.atom_budget = 30000;
    const auto t = run_and_save(c, "diag_plan_uncoarsened");
    std::string bands;
    for (const auto& a : series(t, "relative")) bands += format(" %.4f+-%.4f", a.mean, a.se);
    info("plan relative error without coarsening (budget 30000, 8 trials):" + bands +
         (separated_decrease(series(t, "relative")) ? " [separated decrease]" : " [not separated]"));
  }
  Schedule fast;
  fast.kappa2 = 1.0;
  {
    auto c = defaults("map");
    c.schedule = fast;
    const auto t = run_and_save(c, "diag_map_kappa2_1");
    std::string bands;
    for (const auto& a : series(t, "relative")) bands += format(" %.4f+-%.4f", a.mean, a.se);
    info("map relative error with t = log(n)/n:" + bands +
         (separated_decrease(series(t, "relative")) ? " [separated decrease]" : " [not separated]"));
  }
  for (const char* sampler : {"iid", "ifs"}) {
    auto c = defaults("lq");
    c.schedule = fast;
    c.sampler.kind = sampler;
    const auto t = run_and_save(c, std::string("diag_lq_kappa2_1_") + sampler);
    for (double q : c.q_values) {
      double spread = 0.0;
      const auto r = series(t, format("ratio_%g", q));
      within_factor_three(r, &spread);
      info(format("Lq ratio with t = log(n)/n, %s q=%g: %s (spread %.3g)", sampler, q, means(r).c_str(), spread));
    }
  }
  {
    auto c = defaults("fluctuation");
    c.schedule = fast;
    const auto t = run_and_save(c, "diag_fluctuation_kappa2_1");
    info("freq(A and B) with t = log(n)/n: " + means(series(t, "event_ab")));
  }
  {
    auto c = defaults("plan");
    c.schedule = fast;
    c.trials = 8;
    c.solver.atom_budget = 30000;
    const auto t = run_and_save(c, "diag_plan_kappa2_1");
    std::string bands;
    for (const auto& a : series(t, "relative")) bands += format(" %.4f+-%.4f", a.mean, a.se);
    info("plan relative error with t = log(n)/n, budget 30000, 8 trials:" + bands);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool skip_diagnostics = false;
  std::vector<int> only;
  std::string out = g_out.string();
  app.add_option("--out", out, "Directory for experiment outputs");
  app.add_option("--only", only, "Run these criteria only");
  app.add_flag("--no-diagnostics", skip_diagnostics, "Skip the INFO runs");
  CLI11_PARSE(app, argc, argv);
  g_out = out;

  const std::vector<Criterion> criteria{
      {1, "OT exactness", 0, ot_exactness},
      {2, "PDE exactness", 10, pde_exactness},
      {3, "heat kernel cross-validation", 0, heat_kernel_cross_validation},
      {4, "cost asymptotics", 600, cost_asymptotics},
      {5, "contractivity", 300, contractivity},
      {6, "Lq gradient bound", 300, lq_bound},
      {7, "map approximation", 600, map_approximation},
      {8, "plan approximation", 600, plan_approximation},
      {9, "fluctuation events", 180, fluctuation_events},
      {10, "regularization inequality", 0, regularization_inequality},
      {11, "Moser flow", 30, moser_flow},
      {12, "determinism", 0, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_seconds == 0 || sec <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::string timing = format("%.1f s", sec);
    if (c.limit_seconds > 0) timing += format(" of %.0f s%s", c.limit_seconds, in_time ? "" : " EXCEEDED");
    std::printf("[%s] %2d %s: %s (%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  if (!skip_diagnostics && only.empty()) {
    try {
      diagnostics();
    } catch (const std::exception& e) {
      std::printf("[INFO] diagnostics aborted: %s\n", e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failed, only.empty() ? criteria.size() : only.size());
  return failed;
}
