#include <cmath>
#include <fstream>
#include <limits>

#include "experiment_runner.hpp"
#include "matchkit/elliptic.hpp"
#include "matchkit/transport.hpp"

namespace matchkit {

namespace {

double log_n(std::size_t n) { return std::log(static_cast<double>(n)); }

/// log(n) sqrt(loglog(n) / log(n)) / n, the plan and map approximation rate.
double approximation_rate(std::size_t n) {
  const double l = log_n(n);
  return l * std::sqrt(std::log(l) / l) / static_cast<double>(n);
}

std::size_t second_size(const ExperimentConfig& c, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(c.m_ratio * static_cast<double>(n) - 1e-9));
}

IfsModel ifs_model(const SamplerConfig& s) {
  const auto kind = s.contraction == "constant" ? Contraction::Kind::Constant : Contraction::Kind::Sine;
  return IfsModel(Contraction{kind, s.center, s.lipschitz}, DensityModel::by_label(s.noise));
}

/// Shared per-run state: the reference density and its grid data.
struct Context {
  const ExperimentConfig& config;
  DensityModel rho;
  Grid grid;

  explicit Context(const ExperimentConfig& c)
      : config(c), rho(reference_density(c)), grid(Geometry::Torus, c.solver.resolution) {}

  EmpiricalMeasure cloud(std::size_t n, std::uint64_t seed) const {
    return EmpiricalMeasure(sample_cloud(config, rho, n, seed));
  }
  SmoothedDensity smoothed(const EmpiricalMeasure& mu, double t) const {
    auto s = heat_smooth(mu, t, config.solver.cutoff, grid);
    if (!s.positive()) throw std::runtime_error("smoothed empirical density is not positive on the grid");
    return s;
  }
  SmoothedDensity rho_at(double t) const { return heat_smooth(rho, t, config.solver.cutoff, grid); }
};

/// Difference of two probability densities; the means agree up to
/// quadrature rounding and are set to zero exactly.
SpectralField density_difference(const SpectralField& a, const SpectralField& b) {
  SpectralField d = a - b;
  d.set_mean(0.0);
  return d;
}

void record_solve(TrialRecord& r, const PotentialField& p) {
  r.solves.push_back({{"id", p.rhs_id}, {"report", p.report.to_json()}});
}

/// -div(rho grad f) = mu^{n,t} - rho_t.
PotentialField fluctuation_potential(const Context& ctx, const SmoothedDensity& mu_t, const SmoothedDensity& rho_t,
                                     const GridValues& coefficient, TrialRecord& r) {
  auto f = solve_divform(ctx.grid, coefficient, density_difference(mu_t.field, rho_t.field), ctx.config.solver.tol,
                         0, "f");
  record_solve(r, f);
  return f;
}

}  // namespace

DensityModel reference_density(const ExperimentConfig& config) {
  if (config.sampler.kind == "ifs") return ifs_model(config.sampler).invariant_density();
  return DensityModel::by_label(config.density);
}

PointCloud sample_cloud(const ExperimentConfig& config, const DensityModel& rho, std::size_t n,
                        std::uint64_t seed) {
  if (config.sampler.kind == "ifs") return sample_ifs(ifs_model(config.sampler), n, seed, config.sampler.burn_in);
  return sample_iid(rho, n, seed);
}

int quantization_resolution(double cells_per_atom, std::size_t n) {
  int side = static_cast<int>(std::ceil(std::sqrt(cells_per_atom * static_cast<double>(n)) - 1e-9));
  if (side % 2 != 0) ++side;
  return std::max(side, 2);
}

RateTable run_cost_asymptotics(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto nu = ctx.cloud(second_size(config, r.n), mix_seed(r.seed, 1));
    const auto ot = solve_discrete_ot(DiscreteMeasure::uniform(mu.atoms()), DiscreteMeasure::uniform(nu.atoms()));
    r.values["w2"] = ot.cost;
    r.values["ratio"] = static_cast<double>(r.n) * ot.cost / log_n(r.n);
    r.values["gap"] = ot.gap;
  });
  return make_table("cost", {{"w2", "mean_w2", "se"}, {"ratio", "ratio", "se_ratio"}}, std::move(records),
                    config.trials);
}

RateTable run_semidiscrete_cost(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto sd = semidiscrete_map(ctx.rho, mu, quantization_resolution(config.solver.cells_per_atom, r.n));
    r.values["w2"] = sd.cost;
    r.values["ratio"] = static_cast<double>(r.n) * sd.cost / log_n(r.n);
    r.values["split_mass"] = sd.split_mass;
  });
  return make_table("semidiscrete",
                    {{"w2", "mean_w2", "se"}, {"ratio", "ratio", "se_ratio"}, {"split_mass", "split_mass", "se_split_mass"}},
                    std::move(records), config.trials);
}

RateTable run_contractivity(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const double t = config.schedule.t(r.n);
    const double inv_n = 1.0 / static_cast<double>(r.n);
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto mu_t = ctx.smoothed(mu, t);
    const int nq = quantization_resolution(config.solver.smoothed_cells_per_atom, r.n);
    const double w2 = solve_quantized(mu_t, DiscreteMeasure::uniform(mu.atoms()), nq).cost;

    // t || rho_{t + 1/n} - rho_{1/n} ||_{L^1}
    const auto late = ctx.rho_at(t + inv_n), early = ctx.rho_at(inv_n);
    GridValues diff(late.values.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(late.values[i] - early.values[i]);
    const double correction = t * ctx.grid.integrate(diff);

    r.values["t"] = t;
    r.values["w2"] = w2;
    r.values["correction"] = correction;
    r.values["ratio"] = (w2 - correction) * static_cast<double>(r.n) / std::log(log_n(r.n));
    r.values["w2_over_t"] = w2 / t;
  });
  return make_table("contractivity",
                    {{"w2", "mean_w2", "se"},
                     {"correction", "correction", "se_correction"},
                     {"ratio", "ratio", "se_ratio"},
                     {"w2_over_t", "w2_over_t", "se_w2_over_t"}},
                    std::move(records), config.trials);
}

RateTable run_plan_approximation(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  const GridValues rho_values = ctx.rho.sample_on(ctx.grid);
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const double t = config.schedule.t(r.n);
    const int nq = quantization_resolution(config.solver.cells_per_atom, r.n);
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto nu = ctx.cloud(second_size(config, r.n), mix_seed(r.seed, 1));
    const auto mu_t = ctx.smoothed(mu, t), nu_t = ctx.smoothed(nu, t);

    // Exact optimal plan between the clouds.
    const auto ot = solve_discrete_ot(DiscreteMeasure::uniform(mu.atoms()), DiscreteMeasure::uniform(nu.atoms()));
    const auto pi = coupling_measure(ot.coupling, mu.atoms(), nu.atoms());

    // -div(rho grad h) = nu^{m,t} - mu^{n,t}, so exp(grad h) carries mu^{n,t} towards nu^{m,t}.
    const SpectralField rhs = density_difference(nu_t.field, mu_t.field);
    const auto h = solve_divform(ctx.grid, rho_values, rhs, config.solver.tol, 0, "h");
    record_solve(r, h);
    const auto gamma = build_plan_gamma(mu_t, h, nq);
    const auto pd = plan_distance(pi, gamma, config.solver.atom_budget);

    r.values["t"] = t;
    r.values["w2"] = ot.cost;
    r.values["plan_distance"] = pd.value;
    r.values["relative"] = pd.value / ot.cost;
    r.values["ratio"] = pd.value / approximation_rate(r.n);
    r.values["coarsening_level"] = pd.coarsening_level;
    r.values["coarsening_error"] = pd.coarsening_error_first + pd.coarsening_error_second;

    if (config.regularize) {
      const auto rho_delta = ctx.rho_at(config.schedule.delta(r.n));
      const auto h_delta = solve_divform(ctx.grid, rho_delta.values, rhs, config.solver.tol, 0, "h_delta");
      record_solve(r, h_delta);
      const double lower = rho_delta.min_value();
      const auto reg = regularization_error(h, h_delta, rho_values, rho_delta.values, lower, ctx.grid);
      r.values["regularization_lhs"] = reg.lhs;
      r.values["regularization_bound"] = reg.rhs_bound;
      r.flags["regularization_holds"] = reg.holds();

      // Triangle audit through gamma_delta. The diagonal coupling bounds
      // W2^2(gamma, gamma_delta) from above; coarsening errors enter as slack.
      const auto gamma_delta = build_plan_gamma(mu_t, h_delta, nq);
      const auto pd_delta = plan_distance(pi, gamma_delta, config.solver.atom_budget);
      double diagonal = 0.0;
      for (std::size_t i = 0; i < gamma.size(); ++i) {
        diagonal += gamma.weight(i) * torus_distance2(gamma.atom(i).y, gamma_delta.atom(i).y);
      }
      const double slack = std::sqrt(pd.coarsening_error_first) + std::sqrt(pd.coarsening_error_second) +
                           std::sqrt(pd_delta.coarsening_error_first) + std::sqrt(pd_delta.coarsening_error_second);
      r.values["plan_distance_delta"] = pd_delta.value;
      r.values["gamma_shift"] = diagonal;
      r.flags["audit_holds"] =
          std::sqrt(pd.value) <= std::sqrt(pd_delta.value) + std::sqrt(diagonal) + slack + 1e-12;
    }
  });
  std::vector<RateColumn> columns{{"w2", "mean_w2", "se"},
                                  {"plan_distance", "plan_distance", "se_plan_distance"},
                                  {"relative", "relative", "se_relative"},
                                  {"ratio", "ratio", "se_ratio"},
                                  {"coarsening_level", "coarsening_level", "se_coarsening_level"},
                                  {"coarsening_error", "coarsening_error", "se_coarsening_error"}};
  if (config.regularize) {
    columns.push_back({"regularization_holds", "regularization_holds", "se_regularization_holds"});
    columns.push_back({"audit_holds", "audit_holds", "se_audit_holds"});
  }
  return make_table("plan", std::move(columns), std::move(records), config.trials);
}

RateTable run_map_approximation(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  const GridValues rho_values = ctx.rho.sample_on(ctx.grid);
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const double t = config.schedule.t(r.n);
    const int nq = quantization_resolution(config.solver.cells_per_atom, r.n);
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto sd = semidiscrete_map(ctx.rho, mu, nq);
    const auto mu_t = ctx.smoothed(mu, t);
    const auto f = fluctuation_potential(ctx, mu_t, ctx.rho_at(t), rho_values, r);
    const double disc = map_discrepancy(sd.map, f, nq);

    r.values["t"] = t;
    r.values["w2"] = sd.cost;
    r.values["discrepancy"] = disc;
    r.values["relative"] = disc / sd.cost;
    r.values["ratio"] = disc / approximation_rate(r.n);
    r.values["split_mass"] = sd.split_mass;
    r.flags["split_flagged"] = sd.split_mass > 0.05;

    if (r.n <= config.arrow_export_max_n) {
      std::filesystem::create_directories(config.output);
      const auto path = config.output / ("map_arrows_n" + std::to_string(r.n) + "_trial" + std::to_string(r.trial) + ".csv");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path.string());
      const auto grad = gradient_at_nodes(f.field, nq);
      out << "cell_x,cell_y,map_x,map_y,exp_x,exp_y\n";
      char buf[160];
      for (std::size_t i = 0; i < sd.map.domain.size(); ++i) {
        const auto& x = sd.map.domain.atom(i);
        const auto& y = sd.map.targets[sd.map.target_index[i]];
        const auto e = exp_map(x, Vec2{grad[0][i], grad[1][i]});
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", x.x1(), x.x2(), y.x1(), y.x2(),
                      e.x1(), e.x2());
        out << buf;
      }
    }
  });
  return make_table("map",
                    {{"w2", "mean_w2", "se"},
                     {"discrepancy", "discrepancy", "se_discrepancy"},
                     {"relative", "relative", "se_relative"},
                     {"ratio", "ratio", "se_ratio"},
                     {"split_mass", "split_mass", "se_split_mass"}},
                    std::move(records), config.trials);
}

RateTable run_fluctuation(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const Schedule& s = config.schedule;
    const double t = s.t(r.n), threshold = s.threshold(r.n), bound = s.derivative_bound(r.n);
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto mu_t = ctx.smoothed(mu, t);
    const auto rho_t = ctx.rho_at(t);
    const auto rho_delta = ctx.rho_at(s.delta(r.n));

    const double deviation = sup_deviation(mu_t, rho_t);
    // (I - Laplace) u = (mu^{n,t} - rho_t) / rho_delta
    const auto u = solve_screened(rho_delta, mu_t.field - rho_t.field, config.solver.tol, "u_delta");
    record_solve(r, u);
    const double u_norm = derivative_sup_norm(u, ctx.grid);
    // -div(rho_delta grad f_delta) = mu^{n,t} - rho_t
    const auto f_delta =
        solve_divform(rho_delta, density_difference(mu_t.field, rho_t.field), config.solver.tol, 0, "f_delta");
    record_solve(r, f_delta);
    const double f_norm = derivative_sup_norm(f_delta, ctx.grid);

    const bool a = deviation <= threshold, b = u_norm <= threshold;
    r.values["t"] = t;
    r.values["deviation"] = deviation / threshold;
    r.values["u_norm"] = u_norm / threshold;
    r.values["f_norm"] = f_norm / bound;
    r.flags["event_a"] = a;
    r.flags["event_b"] = b;
    r.flags["event_ab"] = a && b;
    r.flags["bound"] = f_norm <= bound;
    r.flags["conclusion"] = !(a && b) || f_norm <= bound;
  });
  return make_table("fluctuation",
                    {{"event_a", "freq_a", "se_a"},
                     {"event_b", "freq_b", "se_b"},
                     {"event_ab", "freq_ab", "se_ab"},
                     {"bound", "freq_bound", "se_bound"},
                     {"conclusion", "freq_conclusion", "se_conclusion"}},
                    std::move(records), config.trials);
}

RateTable run_lq(const ExperimentConfig& config, const RunOptions& options) {
  const Context ctx(config);
  const GridValues rho_values = ctx.rho.sample_on(ctx.grid);
  const double eta = config.sampler.eta();
  auto records = detail::run_trials(config, options, [&](TrialRecord& r) {
    const double t = config.schedule.t(r.n);
    const auto mu = ctx.cloud(r.n, mix_seed(r.seed, 0));
    const auto mu_t = ctx.smoothed(mu, t);
    const auto f = fluctuation_potential(ctx, mu_t, ctx.rho_at(t), rho_values, r);
    const double mixing = std::isinf(eta) ? 1.0 : std::pow(log_n(r.n), 1.0 / eta);
    const double normalizer = static_cast<double>(r.n) / (std::abs(std::log(t)) + mixing);
    r.values["t"] = t;
    for (double q : config.q_values) {
      char key[32];
      std::snprintf(key, sizeof key, "%g", q);
      const double norm = lq_gradient_norm(f, ctx.grid, q);
      r.values[std::string("lq_") + key] = norm;
      r.values[std::string("ratio_") + key] = norm * normalizer;
    }
  });
  std::vector<RateColumn> columns;
  for (double q : config.q_values) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", q);
    const std::string k = key;
    columns.push_back({"lq_" + k, "lq_" + k, "se_lq_" + k});
    columns.push_back({"ratio_" + k, "ratio_" + k, "se_ratio_" + k});
  }
  return make_table("lq", std::move(columns), std::move(records), config.trials);
}

}  // namespace matchkit
