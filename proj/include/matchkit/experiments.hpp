#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "matchkit/sampling.hpp"
#include "matchkit/smoothing.hpp"

namespace matchkit {

/// Where the point clouds come from. For "ifs" the reference density rho is
/// the stationary law of the chain; for "iid" it is the configured density.
struct SamplerConfig {
  std::string kind = "iid";
  std::string contraction = "sine";
  double lipschitz = 0.5;
  TorusPoint center{0.5, 0.5};
  std::string noise = "bump";
  int burn_in = kDefaultBurnIn;

  /// Decay exponent of the mixing class: infinity for i.i.d., 1 for the chain.
  double eta() const;
};

struct SolverConfig {
  /// Spectral cutoff K and grid resolution N (N >= 2.5 K).
  int cutoff = 100;
  int resolution = 256;
  double tol = 1e-10;
  /// Grid cells per atom for quantized measures; the quantization grid has
  /// the smallest even side N_q with N_q^2 >= cells_per_atom * n.
  double cells_per_atom = 4.0;
  /// The same for mu^{n,t} in the contractivity run, whose transport cost is
  /// dominated there by the mass moved between cells, not within them.
  double smoothed_cells_per_atom = 1.0;
  std::size_t atom_budget = 4000;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::size_t> n_values{256, 1024, 4096};
  std::size_t trials = 32;
  SamplerConfig sampler;
  std::string density = "uniform";
  Schedule schedule;
  SolverConfig solver;
  std::uint64_t seed = 1;
  std::filesystem::path output = "results";
  /// Second cloud size m = ceil(m_ratio * n).
  double m_ratio = 1.0;
  std::vector<double> q_values{2.0, 4.0};
  /// Regularized potential h_delta alongside h in the plan run.
  bool regularize = true;
  /// Per-cell arrow export (map run) for n at most this size.
  std::size_t arrow_export_max_n = 16;

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// n_values = {64, 256}, trials = 8.
  void make_quick();
};

/// Names accepted by run_experiment, in a fixed order that also fixes the
/// experiment ids used for seeding.
const std::vector<std::string>& experiment_names();
/// Throws std::invalid_argument listing the valid names.
int experiment_id(const std::string& name);

/// Per-trial seed from (base, experiment, n, trial).
std::uint64_t trial_seed(std::uint64_t base, int experiment, std::size_t n, std::size_t trial);

struct TrialRecord {
  std::size_t n = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> values;
  std::map<std::string, bool> flags;
  std::vector<nlohmann::json> solves;
  double wall_seconds = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  /// Standard error of the mean, sd / sqrt(trials).
  double se = 0.0;
  double q10 = 0.0, median = 0.0, q90 = 0.0;
};

Aggregate aggregate(const std::vector<double>& samples);

/// A rate-table column: a trial quantity and the headers of its mean and SE.
struct RateColumn {
  std::string quantity;
  std::string mean_header;
  std::string se_header;
};

struct RateRow {
  std::size_t n = 0;
  std::size_t trials = 0;
  std::map<std::string, Aggregate> stats;
};

struct RateTable {
  std::string experiment;
  std::vector<RateColumn> columns;
  std::vector<RateRow> rows;
  std::vector<TrialRecord> records;

  const RateRow& row(std::size_t n) const;
  const Aggregate& at(std::size_t n, const std::string& quantity) const;
  nlohmann::json to_json() const;
};

/// Builds the table from records sorted by (n, trial). Flags enter as 0/1
/// quantities so their means are frequencies.
RateTable make_table(std::string experiment, std::vector<RateColumn> columns,
                     std::vector<TrialRecord> records, std::size_t trials);

/// Least-squares slope of log|mean| against log n. Empty when fewer than
/// two rows exist or some mean is zero. Reported, never asserted.
std::optional<double> loglog_slope(const RateTable& table, const std::string& quantity);

/// One or more trials aborted; the message carries the first cause.
class ExperimentFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  /// Worker threads for trials; 0 reads MATCHKIT_THREADS, then uses 1.
  int threads = 0;
  /// Progress lines on stderr.
  bool verbose = false;
};

int resolve_threads(int requested);

RateTable run_cost_asymptotics(const ExperimentConfig& config, const RunOptions& options = {});
RateTable run_semidiscrete_cost(const ExperimentConfig& config, const RunOptions& options = {});
RateTable run_contractivity(const ExperimentConfig& config, const RunOptions& options = {});
RateTable run_plan_approximation(const ExperimentConfig& config, const RunOptions& options = {});
RateTable run_map_approximation(const ExperimentConfig& config, const RunOptions& options = {});
RateTable run_fluctuation(const ExperimentConfig& config, const RunOptions& options = {});
RateTable run_lq(const ExperimentConfig& config, const RunOptions& options = {});

/// Dispatches on config.experiment.
RateTable run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Reference density rho of the configured sampler.
DensityModel reference_density(const ExperimentConfig& config);
PointCloud sample_cloud(const ExperimentConfig& config, const DensityModel& rho, std::size_t n,
                        std::uint64_t seed);
/// Smallest even side N with N^2 >= cells_per_atom * n.
int quantization_resolution(double cells_per_atom, std::size_t n);

/// Writes <experiment>_rates.csv, <experiment>_trials.csv and
/// <experiment>_summary.json into dir. CSV files depend only on the config
/// and seed; timings appear only in the JSON summary.
void write_outputs(const std::filesystem::path& dir, const RateTable& table,
                   const ExperimentConfig& config);

/// 64-bit FNV-1a of the canonical config JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace matchkit
