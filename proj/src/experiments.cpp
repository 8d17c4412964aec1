#include "matchkit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "experiment_runner.hpp"

#ifndef MATCHKIT_GIT_DESCRIBE
#define MATCHKIT_GIT_DESCRIBE "unknown"
#endif

namespace matchkit {

using nlohmann::json;

// Config -------------------------------------------------------------------------

double SamplerConfig::eta() const {
  return kind == "iid" ? std::numeric_limits<double>::infinity() : 1.0;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  experiment_id(experiment);
  if (n_values.empty()) fail("n_values must not be empty");
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (n_values[i] < 16) fail("every n must be >= 16");
    if (i > 0 && n_values[i] <= n_values[i - 1]) fail("n_values must be strictly increasing");
  }
  if (trials < 1) fail("trials must be >= 1");
  schedule.validate();
  if (sampler.kind != "iid" && sampler.kind != "ifs") fail("sampler.kind must be iid or ifs");
  if (sampler.contraction != "sine" && sampler.contraction != "constant") {
    fail("sampler.contraction must be sine or constant");
  }
  if (sampler.burn_in < 0) fail("sampler.burn_in must be >= 0");
  DensityModel::by_label(density);
  DensityModel::by_label(sampler.noise);
  if (solver.cutoff < 1) fail("solver.K must be >= 1");
  if (2 * solver.resolution < 5 * solver.cutoff) fail("solver.N must be at least 2.5 K");
  if (!(solver.tol > 0.0)) fail("solver.tol must be > 0");
  if (!(solver.cells_per_atom >= 1.0)) fail("solver.cells_per_atom must be >= 1");
  if (!(solver.smoothed_cells_per_atom >= 1.0)) fail("solver.smoothed_cells_per_atom must be >= 1");
  if (solver.atom_budget < 2) fail("solver.atom_budget must be >= 2");
  if (!(m_ratio >= 1.0)) fail("m_ratio must be >= 1");
  for (double q : q_values) {
    if (!(q >= 2.0 && q <= 4.0)) fail("q_values must lie in [2, 4]");
  }
}

json ExperimentConfig::to_json() const {
  return {
      {"experiment", experiment},
      {"n_values", n_values},
      {"trials", trials},
      {"sampler",
       {{"kind", sampler.kind},
        {"contraction", sampler.contraction},
        {"lipschitz", sampler.lipschitz},
        {"center", {sampler.center.x1(), sampler.center.x2()}},
        {"noise", sampler.noise},
        {"burn_in", sampler.burn_in}}},
      {"density", density},
      {"schedule",
       {{"kappa1", schedule.kappa1},
        {"kappa2", schedule.kappa2},
        {"upsilon", schedule.upsilon},
        {"kappa", schedule.schauder}}},
      {"solver",
       {{"K", solver.cutoff},
        {"N", solver.resolution},
        {"tol", solver.tol},
        {"cells_per_atom", solver.cells_per_atom},
        {"smoothed_cells_per_atom", solver.smoothed_cells_per_atom},
        {"atom_budget", solver.atom_budget}}},
      {"seed", seed},
      {"output", output.string()},
      {"m_ratio", m_ratio},
      {"q_values", q_values},
      {"regularize", regularize},
      {"arrow_export_max_n", arrow_export_max_n},
  };
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j,
             {"experiment", "n_values", "trials", "sampler", "density", "schedule", "solver", "seed",
              "output", "m_ratio", "q_values", "regularize", "arrow_export_max_n"},
             "config");
  ExperimentConfig c;
  try {
    read(j, "experiment", c.experiment);
    read(j, "n_values", c.n_values);
    read(j, "trials", c.trials);
    read(j, "density", c.density);
    read(j, "seed", c.seed);
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    read(j, "m_ratio", c.m_ratio);
    read(j, "q_values", c.q_values);
    read(j, "regularize", c.regularize);
    read(j, "arrow_export_max_n", c.arrow_export_max_n);
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      check_keys(s, {"kind", "contraction", "lipschitz", "center", "noise", "burn_in"}, "sampler");
      read(s, "kind", c.sampler.kind);
      read(s, "contraction", c.sampler.contraction);
      read(s, "lipschitz", c.sampler.lipschitz);
      read(s, "noise", c.sampler.noise);
      read(s, "burn_in", c.sampler.burn_in);
      if (s.contains("center")) {
        const auto xy = s.at("center").get<std::vector<double>>();
        if (xy.size() != 2) throw std::invalid_argument("sampler.center needs two coordinates");
        c.sampler.center = TorusPoint(xy[0], xy[1]);
      }
    }
    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      check_keys(s, {"kappa1", "kappa2", "upsilon", "kappa"}, "schedule");
      read(s, "kappa1", c.schedule.kappa1);
      read(s, "kappa2", c.schedule.kappa2);
      read(s, "upsilon", c.schedule.upsilon);
      read(s, "kappa", c.schedule.schauder);
    }
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      check_keys(s, {"K", "N", "tol", "cells_per_atom", "smoothed_cells_per_atom", "atom_budget"}, "solver");
      read(s, "K", c.solver.cutoff);
      read(s, "N", c.solver.resolution);
      read(s, "tol", c.solver.tol);
      read(s, "cells_per_atom", c.solver.cells_per_atom);
      read(s, "smoothed_cells_per_atom", c.solver.smoothed_cells_per_atom);
      read(s, "atom_budget", c.solver.atom_budget);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::make_quick() {
  n_values = {64, 256};
  trials = 8;
}

// Names and seeds ------------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"cost", "semidiscrete", "contractivity", "plan",
                                              "map",  "fluctuation",  "lq"};
  return names;
}

int experiment_id(const std::string& name) {
  const auto& names = experiment_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown experiment '" + name + "' (valid: " + valid + ")");
  }
  return static_cast<int>(it - names.begin());
}

std::uint64_t trial_seed(std::uint64_t base, int experiment, std::size_t n, std::size_t trial) {
  return mix_seed(mix_seed(mix_seed(base, static_cast<std::uint64_t>(experiment)), n), trial);
}

// Aggregation ------------------------------------------------------------------------

namespace {

double quantile_sorted(const std::vector<double>& s, double p) {
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

Aggregate aggregate(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("aggregate of no samples");
  Aggregate a;
  const double k = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += v;
  a.mean = sum / k;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - a.mean) * (v - a.mean);
    a.se = std::sqrt(ss / (k - 1.0) / k);
  }
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  a.q10 = quantile_sorted(sorted, 0.1);
  a.median = quantile_sorted(sorted, 0.5);
  a.q90 = quantile_sorted(sorted, 0.9);
  return a;
}

const RateRow& RateTable::row(std::size_t n) const {
  for (const auto& r : rows) {
    if (r.n == n) return r;
  }
  throw std::out_of_range("no row for n = " + std::to_string(n));
}

const Aggregate& RateTable::at(std::size_t n, const std::string& quantity) const {
  const auto& r = row(n);
  const auto it = r.stats.find(quantity);
  if (it == r.stats.end()) throw std::out_of_range("no quantity '" + quantity + "'");
  return it->second;
}

RateTable make_table(std::string experiment, std::vector<RateColumn> columns,
                     std::vector<TrialRecord> records, std::size_t trials) {
  std::sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return a.n != b.n ? a.n < b.n : a.trial < b.trial;
  });
  RateTable table{std::move(experiment), std::move(columns), {}, std::move(records)};
  std::size_t i = 0;
  while (i < table.records.size()) {
    std::size_t j = i;
    while (j < table.records.size() && table.records[j].n == table.records[i].n) ++j;
    if (j - i != trials) {
      throw std::logic_error("rate table row built from " + std::to_string(j - i) + " records, expected " +
                             std::to_string(trials));
    }
    RateRow row{table.records[i].n, trials, {}};
    std::map<std::string, std::vector<double>> samples;
    for (std::size_t k = i; k < j; ++k) {
      for (const auto& [key, v] : table.records[k].values) {
        if (!std::isfinite(v)) throw std::logic_error("non-finite trial quantity '" + key + "'");
        samples[key].push_back(v);
      }
      for (const auto& [key, f] : table.records[k].flags) samples[key].push_back(f ? 1.0 : 0.0);
    }
    for (const auto& [key, s] : samples) {
      if (s.size() != trials) throw std::logic_error("quantity '" + key + "' missing in some trials");
      row.stats[key] = aggregate(s);
    }
    table.rows.push_back(std::move(row));
    i = j;
  }
  return table;
}

std::optional<double> loglog_slope(const RateTable& table, const std::string& quantity) {
  std::vector<double> x, y;
  for (const auto& r : table.rows) {
    const double m = std::abs(r.stats.at(quantity).mean);
    if (!(m > 0.0) || !std::isfinite(m)) return std::nullopt;
    x.push_back(std::log(static_cast<double>(r.n)));
    y.push_back(std::log(m));
  }
  if (x.size() < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

json RateTable::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json stats;
    for (const auto& [key, a] : r.stats) {
      stats[key] = {{"mean", a.mean}, {"se", a.se}, {"q10", a.q10}, {"median", a.median}, {"q90", a.q90}};
    }
    rows_json.push_back({{"n", r.n}, {"trials", r.trials}, {"stats", stats}});
  }
  json cols = json::array();
  for (const auto& c : columns) {
    json col{{"quantity", c.quantity}, {"mean", c.mean_header}, {"se", c.se_header}};
    if (const auto slope = loglog_slope(*this, c.quantity)) col["loglog_slope"] = *slope;
    cols.push_back(std::move(col));
  }
  return {{"experiment", experiment}, {"columns", cols}, {"rows", rows_json}};
}

// Runner -----------------------------------------------------------------------------

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MATCHKIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return 1;
}

namespace detail {

std::vector<TrialRecord> run_trials(const ExperimentConfig& config, const RunOptions& options,
                                    const TrialFunction& trial_fn) {
  struct Job {
    std::size_t n, trial;
  };
  std::vector<Job> jobs;
  for (std::size_t n : config.n_values)
    for (std::size_t t = 0; t < config.trials; ++t) jobs.push_back({n, t});

  const int id = experiment_id(config.experiment);
  std::vector<TrialRecord> records(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      TrialRecord& r = records[k];
      r.n = jobs[k].n;
      r.trial = jobs[k].trial;
      r.seed = trial_seed(config.seed, id, r.n, r.trial);
      const auto start = std::chrono::steady_clock::now();
      try {
        trial_fn(r);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (options.verbose) {
        std::fprintf(stderr, "[%s] n=%zu trial=%zu %.2fs%s\n", config.experiment.c_str(), r.n, r.trial,
                     r.wall_seconds, errors[k].empty() ? "" : " FAILED");
      }
    }
  };
  const int threads = std::max(1, std::min<int>(resolve_threads(options.threads), static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::string failures;
  std::size_t failed = 0;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (errors[k].empty()) continue;
    ++failed;
    std::fprintf(stderr, "[%s] n=%zu trial=%zu aborted: %s\n", config.experiment.c_str(), jobs[k].n,
                 jobs[k].trial, errors[k].c_str());
    if (failures.empty()) failures = errors[k];
  }
  if (failed > 0) {
    throw ExperimentFailure(std::to_string(failed) + " trial(s) aborted; first: " + failures);
  }
  return records;
}

}  // namespace detail

RateTable run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  switch (experiment_id(config.experiment)) {
    case 0: return run_cost_asymptotics(config, options);
    case 1: return run_semidiscrete_cost(config, options);
    case 2: return run_contractivity(config, options);
    case 3: return run_plan_approximation(config, options);
    case 4: return run_map_approximation(config, options);
    case 5: return run_fluctuation(config, options);
    default: return run_lq(config, options);
  }
}

// Output -----------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_outputs(const std::filesystem::path& dir, const RateTable& table, const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / (table.experiment + "_rates.csv"));
    out << "n,trials";
    for (const auto& c : table.columns) out << ',' << c.mean_header << ',' << c.se_header;
    out << '\n';
    for (const auto& r : table.rows) {
      out << r.n << ',' << r.trials;
      for (const auto& c : table.columns) {
        const auto& a = r.stats.at(c.quantity);
        out << ',' << fmt(a.mean) << ',' << fmt(a.se);
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / (table.experiment + "_trials.csv"));
    out << "n,trial,seed";
    std::vector<std::string> values, flags;
    if (!table.records.empty()) {
      for (const auto& [k, _] : table.records.front().values) values.push_back(k);
      for (const auto& [k, _] : table.records.front().flags) flags.push_back(k);
    }
    for (const auto& k : values) out << ',' << k;
    for (const auto& k : flags) out << ',' << k;
    out << '\n';
    for (const auto& r : table.records) {
      out << r.n << ',' << r.trial << ',' << r.seed;
      for (const auto& k : values) out << ',' << fmt(r.values.at(k));
      for (const auto& k : flags) out << ',' << (r.flags.at(k) ? 1 : 0);
      out << '\n';
    }
  }
  json trials = json::array();
  for (const auto& r : table.records) {
    trials.push_back({{"n", r.n}, {"trial", r.trial}, {"seed", r.seed}, {"values", r.values},
                      {"flags", r.flags}, {"solves", r.solves}, {"wall_seconds", r.wall_seconds}});
  }
  const json summary{{"experiment", table.experiment},
                     {"config_hash", config_hash(config)},
                     {"git_describe", MATCHKIT_GIT_DESCRIBE},
                     {"config", config.to_json()},
                     {"tables", json::array({table.to_json()})},
                     {"trials", trials}};
  auto out = open_out(dir / (table.experiment + "_summary.json"));
  out << summary.dump(2) << '\n';
}

}  // namespace matchkit
