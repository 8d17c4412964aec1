// Command-line front end: point clouds, single solves, and the rate
// experiments.
//
// Exit codes: 0 success, 1 configuration error, 2 solver failure,
// 3 selftest failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "matchkit/elliptic.hpp"
#include "matchkit/experiments.hpp"
#include "matchkit/selftest.hpp"
#include "matchkit/transport.hpp"

using namespace matchkit;

namespace {

constexpr int kConfigError = 1;
constexpr int kSolverFailure = 2;
constexpr int kSelftestFailure = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
  bool quick = false;
  bool verbose = false;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

EmpiricalMeasure load_measure(const std::string& path) {
  return EmpiricalMeasure(read_cloud(path));
}

int cmd_sample(const Common& common, std::size_t n, const std::string& density, const std::string& sampler) {
  ExperimentConfig c;
  c.experiment = "cost";
  c.density = density;
  c.sampler.kind = sampler;
  c.validate();
  const std::uint64_t seed = common.seed.value_or(1);
  const auto rho = reference_density(c);
  const auto cloud = sample_cloud(c, rho, n, seed);
  const std::filesystem::path out = common.out.empty() ? "cloud.csv" : common.out;
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_cloud(out, cloud);
  write_json(out.string() + ".json", cloud.sidecar());
  std::printf("wrote %zu points to %s\n", cloud.size(), out.string().c_str());
  return 0;
}

int cmd_match(const Common& common, const std::string& first, const std::string& second) {
  const auto mu = load_measure(first), nu = load_measure(second);
  const auto a = DiscreteMeasure::uniform(mu.atoms()), b = DiscreteMeasure::uniform(nu.atoms());
  const auto r = solve_discrete_ot(a, b);
  const std::filesystem::path dir = common.out.empty() ? "." : common.out;
  std::filesystem::create_directories(dir);
  write_coupling_csv(dir / "coupling.csv", r.coupling, SquaredDistanceCost<TorusPoint>(mu.atoms(), nu.atoms()));
  const nlohmann::json summary{{"cost", r.cost}, {"dual", r.dual}, {"gap", r.gap}, {"pivots", r.pivots},
                               {"rounds", r.rounds}, {"n", mu.size()}, {"m", nu.size()}};
  write_json(dir / "match.json", summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_solve(const Common& common, const std::string& first, const std::string& second,
              const std::string& density, std::optional<double> time, int cutoff, int resolution) {
  const auto mu = load_measure(first);
  Schedule schedule;
  const double t = time.value_or(schedule.t(std::max<std::size_t>(mu.size(), 3)));
  const Grid grid(Geometry::Torus, resolution);
  const auto rho = DensityModel::by_label(density);
  const auto mu_t = heat_smooth(mu, t, cutoff, grid);
  SpectralField rhs;
  std::string id;
  if (!second.empty()) {
    // -div(rho grad h) = nu^{m,t} - mu^{n,t}
    rhs = heat_smooth(load_measure(second), t, cutoff, grid).field - mu_t.field;
    id = "h";
  } else {
    // -div(rho grad f) = mu^{n,t} - rho_t
    rhs = mu_t.field - heat_smooth(rho, t, cutoff, grid).field;
    id = "f";
  }
  rhs.set_mean(0.0);
  const auto h = solve_divform(grid, rho.sample_on(grid), rhs, kDefaultSolveTolerance, 0, id);
  const nlohmann::json out{{"potential", id},
                           {"t", t},
                           {"report", h.report.to_json()},
                           {"grad_l2_squared", lq_gradient_norm(h, grid, 2.0)},
                           {"derivative_sup", derivative_sup_norm(h, grid)},
                           {"field", h.field.to_json()}};
  const std::filesystem::path path = common.out.empty() ? "potential.json" : common.out;
  write_json(path, out);
  std::printf("%s: %d iterations, residual %.3g, written to %s\n", id.c_str(), h.report.iterations,
              h.report.residual, path.string().c_str());
  return 0;
}

int cmd_rates(const Common& common, const std::string& experiment) {
  ExperimentConfig config;
  if (!common.config.empty()) {
    if (!std::filesystem::exists(common.config)) {
      throw std::invalid_argument("config file not found: " + common.config);
    }
    config = ExperimentConfig::load(common.config);
  }
  if (!experiment.empty()) config.experiment = experiment;
  if (common.seed) config.seed = *common.seed;
  if (common.quick) config.make_quick();
  if (!common.out.empty()) config.output = common.out;
  config.validate();

  const RateTable table = run_experiment(config, RunOptions{common.threads, common.verbose});
  write_outputs(config.output, table, config);
  std::printf("n");
  for (const auto& c : table.columns) std::printf("\t%s", c.mean_header.c_str());
  std::printf("\n");
  for (const auto& row : table.rows) {
    std::printf("%zu", row.n);
    for (const auto& c : table.columns) std::printf("\t%.6g", row.stats.at(c.quantity).mean);
    std::printf("\n");
  }
  std::printf("outputs in %s\n", config.output.string().c_str());
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : run_selftest()) {
    std::printf("%-30s %s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : kSelftestFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random matching laboratory on the flat torus"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Experiment configuration (JSON)");
  app.add_option("--seed", common.seed, "Base seed override");
  app.add_option("--out", common.out, "Output path or directory");
  app.add_option("--threads", common.threads, "Worker threads (MATCHKIT_THREADS if unset)");
  app.add_flag("--quick", common.quick, "n_values = {64, 256}, 8 trials");
  app.add_flag("-v,--verbose", common.verbose, "Per-trial progress on stderr");

  std::size_t n = 256;
  std::string density = "uniform", sampler = "iid";
  auto* sample = app.add_subcommand("sample", "Draw a point cloud to CSV");
  sample->add_option("-n", n, "Number of points")->check(CLI::PositiveNumber);
  sample->add_option("--density", density, "uniform, sine, or bump");
  sample->add_option("--sampler", sampler, "iid or ifs")->check(CLI::IsMember({"iid", "ifs"}));

  std::string first, second;
  auto* match = app.add_subcommand("match", "Exact optimal matching between two clouds");
  match->add_option("first", first, "First cloud CSV")->required()->check(CLI::ExistingFile);
  match->add_option("second", second, "Second cloud CSV")->required()->check(CLI::ExistingFile);

  std::optional<double> time;
  int cutoff = 100, resolution = 256;
  auto* solve = app.add_subcommand("solve", "Linearized potential for one or two clouds");
  solve->add_option("first", first, "Cloud CSV")->required()->check(CLI::ExistingFile);
  solve->add_option("second", second, "Second cloud CSV; without it the target is rho")->check(CLI::ExistingFile);
  solve->add_option("--density", density, "Reference density rho");
  solve->add_option("-t,--time", time, "Smoothing time (default log^3(n)/n)");
  solve->add_option("-K,--cutoff", cutoff, "Spectral cutoff");
  solve->add_option("-N,--resolution", resolution, "Grid resolution");

  std::string experiment;
  auto* rates = app.add_subcommand("rates", "Run a rate experiment");
  rates->add_option("experiment", experiment, "cost, semidiscrete, contractivity, plan, map, fluctuation, or lq");

  auto* selftest = app.add_subcommand("selftest", "Closed-form and exhaustive-search checks");

  for (auto* sub : {sample, match, solve, rates, selftest}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*sample) return cmd_sample(common, n, density, sampler);
    if (*match) return cmd_match(common, first, second);
    if (*solve) return cmd_solve(common, first, second, density, time, cutoff, resolution);
    if (*rates) return cmd_rates(common, experiment);
    return cmd_selftest();
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kSolverFailure;
  }
}
