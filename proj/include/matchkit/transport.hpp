#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "matchkit/elliptic.hpp"
#include "matchkit/sampling.hpp"
#include "matchkit/smoothing.hpp"
#include "matchkit/torus.hpp"

namespace matchkit {

/// A point of M x M, compared with delta^2 = d^2(x, z) + d^2(y, w).
struct PointPair {
  TorusPoint x;
  TorusPoint y;
  bool operator==(const PointPair&) const = default;
};

/// Probability measure with finitely many atoms; weights are nonnegative and
/// sum to 1 within 1e-12.
template <class Atom>
class AtomicMeasure {
 public:
  AtomicMeasure(std::vector<Atom> atoms, std::vector<double> weights);
  static AtomicMeasure uniform(std::vector<Atom> atoms);

  std::size_t size() const { return atoms_.size(); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  const Atom& atom(std::size_t i) const { return atoms_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

 private:
  std::vector<Atom> atoms_;
  std::vector<double> weights_;
};

using DiscreteMeasure = AtomicMeasure<TorusPoint>;
using PlanMeasure = AtomicMeasure<PointPair>;

extern template class AtomicMeasure<TorusPoint>;
extern template class AtomicMeasure<PointPair>;

double distance2(const PointPair& a, const PointPair& b);

/// Row-wise access to a cost matrix that is never stored.
class CostOracle {
 public:
  virtual ~CostOracle() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  /// Writes c(i, 0..cols-1) into out.
  virtual void row(std::size_t i, double* out) const = 0;
  virtual double at(std::size_t i, std::size_t j) const = 0;
};

/// Squared distances between two atom lists, wrapped on the torus or in the
/// product metric.
template <class Atom>
class SquaredDistanceCost final : public CostOracle {
 public:
  SquaredDistanceCost(const std::vector<Atom>& from, const std::vector<Atom>& to)
      : from_(&from), to_(&to) {}
  std::size_t rows() const override { return from_->size(); }
  std::size_t cols() const override { return to_->size(); }
  void row(std::size_t i, double* out) const override;
  double at(std::size_t i, std::size_t j) const override;

 private:
  const std::vector<Atom>* from_;
  const std::vector<Atom>* to_;
};

struct CouplingEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double mass = 0.0;
};

struct Coupling {
  std::vector<CouplingEntry> pairs;
  double cost = 0.0;

  std::vector<double> first_marginal(std::size_t n) const;
  std::vector<double> second_marginal(std::size_t m) const;
};

struct OtOptions {
  /// Initial candidate arcs per row; all other arcs enter by pricing.
  std::size_t neighbors = 8;
  /// Cost-matrix size guard.
  std::size_t max_entries = 100'000'000;
  std::size_t max_rounds = 500;
  /// Optional guess of the column potentials g (size m), e.g. from a coarser
  /// solve. Rows then start from the arcs with the smallest c_ij - g_j
  /// instead of the nearest columns. Affects speed only, never the optimum.
  std::vector<double> column_hint;
};

struct OtResult {
  /// Primal cost of the returned coupling.
  double cost = 0.0;
  Coupling coupling;
  /// Feasible dual potentials, f_i + g_j <= c_ij on every pair.
  std::vector<double> f, g;
  double dual = 0.0;
  double gap = 0.0;
  std::size_t pivots = 0;
  std::size_t rounds = 0;
  std::size_t arcs = 0;
  /// Integer mass unit: weights are solved as multiples of 1/units.
  std::int64_t units = 0;
};

/// Exact transportation problem between weight vectors a and b (both summing
/// to 1) by network simplex with column generation. Rejects a mass mismatch
/// above 1e-9 and cost matrices above max_entries.
OtResult solve_transport(const std::vector<double>& a, const std::vector<double>& b,
                         const CostOracle& cost, const OtOptions& options = {});

OtResult solve_discrete_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const OtOptions& options = {});
OtResult solve_discrete_ot(const PlanMeasure& mu, const PlanMeasure& nu,
                           const OtOptions& options = {});

class SinkhornFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SinkhornResult {
  double cost = 0.0;
  /// Row-major n x m plan.
  std::vector<double> plan;
  int iterations = 0;
  double marginal_error = 0.0;
};

/// Log-domain entropic transport. Throws SinkhornFailure when the marginal
/// error is still above tol after iters sweeps.
SinkhornResult sinkhorn_ot(const std::vector<double>& a, const std::vector<double>& b,
                           const CostOracle& cost, double epsilon, int iters = 10000,
                           double tol = 1e-9);
SinkhornResult sinkhorn_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double epsilon,
                           int iters = 10000, double tol = 1e-9);

/// Atoms at the nodes of Grid(Torus, N) with weights f(node) / sum f.
DiscreteMeasure quantize_density(const SmoothedDensity& f, int resolution);
DiscreteMeasure quantize_density(const DensityModel& f, int resolution);

/// Transports the N-grid quantization of a density onto the given atoms.
/// Solves up to two halved grids first (down to 16) and seeds each finer
/// level with the coarser column potentials; the optimum is that of the
/// direct solve, reached with far fewer pivots.
OtResult solve_quantized(const SmoothedDensity& f, const DiscreteMeasure& atoms, int resolution,
                         const OtOptions& options = {});
OtResult solve_quantized(const DensityModel& f, const DiscreteMeasure& atoms, int resolution,
                         const OtOptions& options = {});

struct TransportMap {
  DiscreteMeasure domain;
  /// Index into the target atoms for every domain atom.
  std::vector<std::size_t> target_index;
  std::vector<TorusPoint> targets;
};

struct SemidiscreteResult {
  double cost = 0.0;
  TransportMap map;
  /// Mass of cells whose optimal plan splits between atoms, minus the part
  /// that follows each cell's majority atom.
  double split_mass = 0.0;
  /// Cost at the second resolution and the extrapolated cost, when requested.
  std::optional<double> second_cost;
  std::optional<double> richardson;
  int resolution = 0;
  int second_resolution = 0;
  OtResult solve;
};

struct SemidiscreteOptions {
  bool richardson = false;
  OtOptions ot;
};

/// Quantizes rho on the N-grid and transports the cells onto the atoms of
/// mu. Requires N^2 >= 4n. The Richardson pass reuses 2N when the cost matrix
/// fits the guard and N/2 otherwise.
SemidiscreteResult semidiscrete_map(const DensityModel& rho, const EmpiricalMeasure& mu,
                                    int resolution, const SemidiscreteOptions& options = {});

/// Gradient of a spectral field at the nodes of Grid(Torus, N), computed on a
/// finer multiple of N when the cutoff requires it.
std::array<GridValues, 2> gradient_at_nodes(const SpectralField& h, int resolution);
GridValues values_at_nodes(const SpectralField& f, int resolution);

/// (Id, exp(grad h))_# mu^{n,t} with first-marginal atoms at the N-grid.
PlanMeasure build_plan_gamma(const SmoothedDensity& mu_t, const PotentialField& h, int resolution);

/// A coupling as a measure on M x M.
PlanMeasure coupling_measure(const Coupling& pi, const std::vector<TorusPoint>& from,
                             const std::vector<TorusPoint>& to);

struct PlanDistance {
  double value = 0.0;
  /// Cells of the shared 4-D partition, 0 when no coarsening was needed.
  int coarsening_level = 0;
  /// sum mass * delta^2(atom, cell barycenter) for each measure.
  double coarsening_error_first = 0.0;
  double coarsening_error_second = 0.0;
  std::size_t atoms_first = 0;
  std::size_t atoms_second = 0;
  double gap = 0.0;
};

inline constexpr std::size_t kDefaultAtomBudget = 4000;

/// W_2^2 in the product metric. When the combined atom count exceeds the
/// budget both measures are merged into per-cell barycenters of one 4-D
/// partition. The partition grows by median splits of the cell with the
/// largest merge error for as long as the merged atoms fit the budget.
PlanDistance plan_distance(const PlanMeasure& pi, const PlanMeasure& gamma,
                           std::size_t budget = kDefaultAtomBudget);

/// sum over domain atoms of weight * d^2(T(x), exp(x, grad h(x))).
double map_discrepancy(const TransportMap& map, const PotentialField& h, int resolution);

struct FlowResult {
  DiscreteMeasure flowed;
  /// Particle positions before weighting, in grid-node order.
  std::vector<TorusPoint> positions;
  /// W_2^2 between the flowed measure and the quantized target.
  std::optional<double> w2_to_target;
};

/// Carries the nodes of Grid(Torus, N), weighted by mu, along
/// v(s, x) = rho_delta grad h / ((1 - s) mu + s nu) with `steps` RK4 steps on
/// s in [0, 1]. h must solve -div(rho_delta grad h) = nu - mu. Throws when
/// the interpolating density is not positive.
FlowResult flow_transport(const SpectralField& mu, const SpectralField& nu,
                          const PotentialField& h, const SpectralField& rho_delta, int steps,
                          int resolution, bool measure_target = true);

/// Lipschitz constant of x -> exp(x, grad h(x)) over all pairs of the atoms.
double pushforward_lipschitz(const std::vector<TorusPoint>& atoms, const PotentialField& h);

/// Pointwise evaluation of a torus field and its gradient.
struct FieldSample {
  double value = 0.0;
  Vec2 gradient;
};
FieldSample sample_field(const SpectralField& f, const TorusPoint& x);

void write_coupling_csv(const std::filesystem::path& path, const Coupling& pi,
                        const CostOracle& cost);
void write_map_csv(const std::filesystem::path& path, const TransportMap& map);

}  // namespace matchkit
