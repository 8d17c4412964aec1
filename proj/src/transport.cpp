#include "matchkit/transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <tuple>

namespace matchkit {
namespace {

std::vector<TorusPoint> grid_nodes(int resolution) {
  const Grid grid(Geometry::Torus, resolution);
  std::vector<TorusPoint> nodes(grid.node_count());
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = grid.node(i);
  return nodes;
}

std::vector<double> normalized(const std::vector<double>& w) {
  long double total = 0.0L;
  for (double v : w) total += v;
  if (!(total > 0.0L)) throw std::invalid_argument("measure has no mass");
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<double>(w[i] / total);
  return out;
}

DiscreteMeasure measure_from_values(const GridValues& values, int resolution) {
  for (double v : values) {
    if (v < 0.0) throw std::invalid_argument("density is negative on the quantization grid");
  }
  return DiscreteMeasure(grid_nodes(resolution), normalized(values));
}

// Resolution that is a multiple of N and resolves every mode up to the cutoff.
int fine_resolution(int cutoff, int resolution) {
  const int need = 2 * cutoff + 2;
  return resolution * std::max(1, (need + resolution - 1) / resolution);
}

GridValues subsample(const GridValues& fine, int fine_n, int n) {
  const int stride = fine_n / n;
  GridValues out(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(i) * n + j] =
          fine[static_cast<std::size_t>(i) * stride * fine_n + static_cast<std::size_t>(j) * stride];
    }
  }
  return out;
}

void require_torus(const SpectralField& f) {
  if (f.geometry() != Geometry::Torus) throw std::invalid_argument("transport operations are defined on the torus");
}

// e^{2 pi i k x1} for k = 0..K and e^{2 pi i k x2} for k = -K..K.
struct PointBasis {
  int cutoff = 0;
  std::vector<std::complex<double>> e1, e2;

  void reset(const TorusPoint& x, int k) {
    cutoff = k;
    e1.resize(k + 1);
    e2.resize(2 * k + 1);
    const std::complex<double> w1 = std::polar(1.0, kTwoPi * x.x1());
    const std::complex<double> w2 = std::polar(1.0, kTwoPi * x.x2());
    std::complex<double> p(1.0, 0.0);
    for (int a = 0; a <= k; ++a, p *= w1) e1[a] = p;
    p = 1.0;
    for (int b = 0; b <= k; ++b, p *= w2) {
      e2[k + b] = p;
      e2[k - b] = std::conj(p);
    }
  }
};

FieldSample sample_with(const SpectralField& f, const PointBasis& basis) {
  const auto c = f.coeffs();
  const int k = f.cutoff();
  const int kb = basis.cutoff;
  const double s2 = std::sqrt(2.0);
  FieldSample out;
  out.value = c[0];
  double g1 = 0.0, g2 = 0.0;
  // sqrt2 (a cos theta + b sin theta) and its gradient 2 pi k sqrt2 (b cos - a sin)
  auto add = [&](std::complex<double> z, double ac, double as, int k1, int k2) {
    out.value += s2 * (ac * z.real() + as * z.imag());
    const double d = s2 * kTwoPi * (as * z.real() - ac * z.imag());
    g1 += d * k1;
    g2 += d * k2;
  };
  std::size_t idx = 1;
  for (int b = 1; b <= k; ++b, idx += 2) add(basis.e2[kb + b], c[idx], c[idx + 1], 0, b);
  for (int a = 1; a <= k; ++a) {
    for (int b = -k; b <= k; ++b, idx += 2) add(basis.e1[a] * basis.e2[kb + b], c[idx], c[idx + 1], a, b);
  }
  out.gradient = {g1, g2};
  return out;
}

}  // namespace

FieldSample sample_field(const SpectralField& f, const TorusPoint& x) {
  require_torus(f);
  PointBasis basis;
  basis.reset(x, f.cutoff());
  return sample_with(f, basis);
}

GridValues values_at_nodes(const SpectralField& f, int resolution) {
  require_torus(f);
  const int fine = fine_resolution(f.cutoff(), resolution);
  return subsample(spectral_to_grid(f, Grid(Geometry::Torus, fine)), fine, resolution);
}

std::array<GridValues, 2> gradient_at_nodes(const SpectralField& h, int resolution) {
  require_torus(h);
  const int fine = fine_resolution(h.cutoff(), resolution);
  auto g = gradient_to_grid(h, Grid(Geometry::Torus, fine));
  return {subsample(g[0], fine, resolution), subsample(g[1], fine, resolution)};
}

DiscreteMeasure quantize_density(const SmoothedDensity& f, int resolution) {
  if (resolution < 1) throw std::invalid_argument("resolution must be >= 1");
  if (f.grid.geometry() == Geometry::Torus && f.grid.resolution() == resolution) {
    return measure_from_values(f.values, resolution);
  }
  return measure_from_values(values_at_nodes(f.field, resolution), resolution);
}

DiscreteMeasure quantize_density(const DensityModel& f, int resolution) {
  if (resolution < 1) throw std::invalid_argument("resolution must be >= 1");
  return measure_from_values(f.sample_on(Grid(Geometry::Torus, resolution)), resolution);
}

namespace {

template <class Density>
OtResult solve_coarse_to_fine(const Density& f, const DiscreteMeasure& atoms, int resolution,
                              const OtOptions& options) {
  std::vector<int> levels{resolution};
  while (levels.size() < 3 && levels.back() % 2 == 0 && levels.back() / 2 >= 16) {
    levels.push_back(levels.back() / 2);
  }
  OtOptions level_options = options;
  OtResult r;
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    r = solve_discrete_ot(quantize_density(f, *it), atoms, level_options);
    level_options.column_hint = r.g;
  }
  return r;
}

}  // namespace

OtResult solve_quantized(const SmoothedDensity& f, const DiscreteMeasure& atoms, int resolution,
                         const OtOptions& options) {
  return solve_coarse_to_fine(f, atoms, resolution, options);
}

OtResult solve_quantized(const DensityModel& f, const DiscreteMeasure& atoms, int resolution,
                         const OtOptions& options) {
  return solve_coarse_to_fine(f, atoms, resolution, options);
}

SemidiscreteResult semidiscrete_map(const DensityModel& rho, const EmpiricalMeasure& mu, int resolution,
                                    const SemidiscreteOptions& options) {
  const double n = static_cast<double>(mu.size());
  if (static_cast<double>(resolution) * resolution < 4.0 * n) {
    throw std::invalid_argument("semi-discrete resolution requires N^2 >= 4n");
  }
  const DiscreteMeasure target = DiscreteMeasure::uniform(mu.atoms());
  const DiscreteMeasure cells = quantize_density(rho, resolution);

  OtResult solve = solve_quantized(rho, target, resolution, options.ot);

  std::vector<std::size_t> best(cells.size(), 0);
  std::vector<double> best_mass(cells.size(), -1.0);
  for (const auto& e : solve.coupling.pairs) {
    if (e.mass > best_mass[e.i]) {
      best_mass[e.i] = e.mass;
      best[e.i] = e.j;
    }
  }
  long double split = 0.0L;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (best_mass[i] >= 0.0) split += cells.weight(i) - best_mass[i];
  }
  SemidiscreteResult out{solve.cost, TransportMap{cells, std::move(best), mu.atoms()},
                         static_cast<double>(split), std::nullopt, std::nullopt, resolution, 0,
                         std::move(solve)};

  if (options.richardson) {
    const double fine = 2.0 * resolution;
    const int second = fine * fine * n <= static_cast<double>(options.ot.max_entries) ? 2 * resolution
                                                                                      : resolution / 2;
    if (second >= 1) {
      const DiscreteMeasure other = quantize_density(rho, second);
      OtOptions warm = options.ot;
      warm.column_hint = out.solve.g;
      const double c2 = solve_discrete_ot(other, target, warm).cost;
      const double a = static_cast<double>(resolution) * resolution;
      const double b = static_cast<double>(second) * second;
      out.second_resolution = second;
      out.second_cost = c2;
      out.richardson = (b * c2 - a * out.cost) / (b - a);
    }
  }
  return out;
}

PlanMeasure build_plan_gamma(const SmoothedDensity& mu_t, const PotentialField& h, int resolution) {
  require_torus(h.field);
  const GridValues weights = values_at_nodes(mu_t.field, resolution);
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("smoothed density is negative on the plan grid");
  }
  const auto grad = gradient_at_nodes(h.field, resolution);
  const auto nodes = grid_nodes(resolution);
  std::vector<PointPair> atoms(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    atoms[i] = {nodes[i], exp_map(nodes[i], Vec2{grad[0][i], grad[1][i]})};
  }
  return PlanMeasure(std::move(atoms), normalized(weights));
}

PlanMeasure coupling_measure(const Coupling& pi, const std::vector<TorusPoint>& from,
                             const std::vector<TorusPoint>& to) {
  std::vector<PointPair> atoms;
  std::vector<double> weights;
  atoms.reserve(pi.pairs.size());
  weights.reserve(pi.pairs.size());
  for (const auto& e : pi.pairs) {
    atoms.push_back({from.at(e.i), to.at(e.j)});
    weights.push_back(e.mass);
  }
  return PlanMeasure(std::move(atoms), normalized(weights));
}

namespace {

// Leaf of the shared 4-D partition: a range of `items` plus per-measure
// moments of its atoms.
struct PartitionItem {
  std::array<double, 4> c;
  double w;
  int side;
  std::size_t index;
};

struct PartitionCell {
  std::size_t begin = 0, end = 0;
  long double mass[2] = {0.0L, 0.0L};
  long double sum[2][4] = {};
  long double sq[2] = {0.0L, 0.0L};
  double error = 0.0;

  bool holds(int side) const { return mass[side] > 0.0L; }
  int atoms() const { return holds(0) + holds(1); }
};

PartitionCell make_cell(const std::vector<PartitionItem>& items, std::size_t begin, std::size_t end) {
  PartitionCell cell;
  cell.begin = begin;
  cell.end = end;
  for (std::size_t k = begin; k < end; ++k) {
    const auto& it = items[k];
    cell.mass[it.side] += it.w;
    for (int d = 0; d < 4; ++d) {
      cell.sum[it.side][d] += static_cast<long double>(it.w) * it.c[d];
      cell.sq[it.side] += static_cast<long double>(it.w) * it.c[d] * it.c[d];
    }
  }
  long double err = 0.0L;
  for (int s = 0; s < 2; ++s) {
    if (!cell.holds(s)) continue;
    long double norm = 0.0L;
    for (int d = 0; d < 4; ++d) norm += cell.sum[s][d] * cell.sum[s][d];
    err += cell.sq[s] - norm / cell.mass[s];
  }
  cell.error = std::max(0.0, static_cast<double>(err));
  return cell;
}

// Splits at the mass median of the coordinate with the largest spread.
// Returns false when every atom of the cell sits at one point.
bool split_cell(std::vector<PartitionItem>& items, const PartitionCell& cell, PartitionCell& left,
                PartitionCell& right) {
  long double total = cell.mass[0] + cell.mass[1];
  int axis = 0;
  long double widest = -1.0L;
  for (int d = 0; d < 4; ++d) {
    long double s = 0.0L, q = 0.0L;
    for (std::size_t k = cell.begin; k < cell.end; ++k) {
      s += static_cast<long double>(items[k].w) * items[k].c[d];
      q += static_cast<long double>(items[k].w) * items[k].c[d] * items[k].c[d];
    }
    const long double var = q / total - (s / total) * (s / total);
    if (var > widest) {
      widest = var;
      axis = d;
    }
  }
  const auto first = items.begin() + static_cast<std::ptrdiff_t>(cell.begin);
  const auto last = items.begin() + static_cast<std::ptrdiff_t>(cell.end);
  std::sort(first, last, [axis](const PartitionItem& x, const PartitionItem& y) {
    return std::tie(x.c[axis], x.side, x.index) < std::tie(y.c[axis], y.side, y.index);
  });
  if (items[cell.begin].c[axis] == items[cell.end - 1].c[axis]) return false;
  long double acc = 0.0L;
  std::size_t mid = cell.begin;
  while (mid < cell.end - 1 && acc + items[mid].w <= total / 2) acc += items[mid++].w;
  if (mid == cell.begin) mid = cell.begin + 1;
  // Equal coordinates stay on one side.
  while (mid < cell.end && items[mid].c[axis] == items[mid - 1].c[axis]) ++mid;
  if (mid == cell.end) {
    mid = cell.begin + 1;
    while (items[mid].c[axis] == items[mid - 1].c[axis]) ++mid;
  }
  left = make_cell(items, cell.begin, mid);
  right = make_cell(items, mid, cell.end);
  return true;
}

PlanMeasure merge_by_cell(const std::vector<PartitionItem>& items, const std::vector<PartitionCell>& cells,
                          const PlanMeasure& m, int side, double* error) {
  std::vector<PointPair> atoms;
  std::vector<double> weights;
  long double e = 0.0L;
  for (const auto& cell : cells) {
    if (!cell.holds(side)) continue;
    const long double mass = cell.mass[side];
    const PointPair bary{TorusPoint(static_cast<double>(cell.sum[side][0] / mass),
                                    static_cast<double>(cell.sum[side][1] / mass)),
                         TorusPoint(static_cast<double>(cell.sum[side][2] / mass),
                                    static_cast<double>(cell.sum[side][3] / mass))};
    for (std::size_t k = cell.begin; k < cell.end; ++k) {
      if (items[k].side == side) e += static_cast<long double>(items[k].w) * distance2(m.atom(items[k].index), bary);
    }
    atoms.push_back(bary);
    weights.push_back(static_cast<double>(mass));
  }
  *error = static_cast<double>(e);
  return PlanMeasure(std::move(atoms), normalized(weights));
}

}  // namespace

PlanDistance plan_distance(const PlanMeasure& pi, const PlanMeasure& gamma, std::size_t budget) {
  if (budget < 2) throw std::invalid_argument("atom budget must be >= 2");
  PlanDistance out;
  if (pi.size() + gamma.size() <= budget) {
    const OtResult r = solve_discrete_ot(pi, gamma);
    out.value = r.cost;
    out.gap = r.gap;
    out.atoms_first = pi.size();
    out.atoms_second = gamma.size();
    return out;
  }

  std::vector<PartitionItem> items;
  items.reserve(pi.size() + gamma.size());
  for (int side = 0; side < 2; ++side) {
    const PlanMeasure& m = side == 0 ? pi : gamma;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.weight(i) <= 0.0) continue;
      const auto& p = m.atom(i);
      items.push_back({{p.x.x1(), p.x.x2(), p.y.x1(), p.y.x2()}, m.weight(i), side, i});
    }
  }

  // Greedy refinement: split the cell with the largest merge error while
  // both merged measures together stay within the budget.
  std::vector<PartitionCell> cells{make_cell(items, 0, items.size())};
  auto by_error = [&cells](std::size_t x, std::size_t y) { return cells[x].error < cells[y].error; };
  std::vector<std::size_t> heap{0};
  std::size_t atoms = static_cast<std::size_t>(cells[0].atoms());
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end(), by_error);
    const std::size_t top = heap.back();
    heap.pop_back();
    if (cells[top].error <= 0.0) break;
    PartitionCell left, right;
    if (!split_cell(items, cells[top], left, right)) continue;
    const std::size_t next = atoms - cells[top].atoms() + left.atoms() + right.atoms();
    if (next > budget) break;
    atoms = next;
    cells[top] = left;
    cells.push_back(right);
    heap.push_back(top);
    std::push_heap(heap.begin(), heap.end(), by_error);
    heap.push_back(cells.size() - 1);
    std::push_heap(heap.begin(), heap.end(), by_error);
  }

  double e1 = 0.0, e2 = 0.0;
  const PlanMeasure a = merge_by_cell(items, cells, pi, 0, &e1);
  const PlanMeasure b = merge_by_cell(items, cells, gamma, 1, &e2);
  const OtResult r = solve_discrete_ot(a, b);
  out.value = r.cost;
  out.gap = r.gap;
  out.coarsening_level = static_cast<int>(cells.size());
  out.coarsening_error_first = e1;
  out.coarsening_error_second = e2;
  out.atoms_first = a.size();
  out.atoms_second = b.size();
  return out;
}

double map_discrepancy(const TransportMap& map, const PotentialField& h, int resolution) {
  const std::size_t cells = static_cast<std::size_t>(resolution) * resolution;
  if (map.domain.size() != cells) throw std::invalid_argument("map domain is not the N-grid");
  const auto grad = gradient_at_nodes(h.field, resolution);
  long double s = 0.0L;
  for (std::size_t i = 0; i < cells; ++i) {
    const TorusPoint& x = map.domain.atom(i);
    const TorusPoint moved = exp_map(x, Vec2{grad[0][i], grad[1][i]});
    s += static_cast<long double>(map.domain.weight(i)) * torus_distance2(map.targets.at(map.target_index[i]), moved);
  }
  return static_cast<double>(s);
}

FlowResult flow_transport(const SpectralField& mu, const SpectralField& nu, const PotentialField& h,
                          const SpectralField& rho_delta, int steps, int resolution, bool measure_target) {
  for (const auto* f : {&mu, &nu, &h.field, &rho_delta}) require_torus(*f);
  if (steps < 1) throw std::invalid_argument("flow needs at least one step");
  const GridValues mu_nodes = values_at_nodes(mu, resolution);
  const GridValues nu_nodes = values_at_nodes(nu, resolution);
  for (std::size_t i = 0; i < mu_nodes.size(); ++i) {
    if (!(mu_nodes[i] > 0.0) || !(nu_nodes[i] > 0.0)) {
      throw std::runtime_error("interpolating density is not positive at grid node " + std::to_string(i));
    }
  }
  const int kmax = std::max({mu.cutoff(), nu.cutoff(), h.field.cutoff(), rho_delta.cutoff()});

  PointBasis basis;
  auto velocity = [&](double s, double x1, double x2) {
    const TorusPoint p(x1, x2);
    basis.reset(p, kmax);
    const double eta = (1.0 - s) * sample_with(mu, basis).value + s * sample_with(nu, basis).value;
    if (!(eta > 0.0)) {
      char msg[160];
      std::snprintf(msg, sizeof msg, "interpolating density %.3g <= 0 at (%.6f, %.6f), s = %.4f", eta,
                    p.x1(), p.x2(), s);
      throw std::runtime_error(msg);
    }
    const double r = sample_with(rho_delta, basis).value;
    const Vec2 g = sample_with(h.field, basis).gradient;
    return g * (r / eta);
  };

  const auto nodes = grid_nodes(resolution);
  FlowResult out{DiscreteMeasure(nodes, normalized(mu_nodes)), {}, std::nullopt};
  out.positions.resize(nodes.size());
  const double ds = 1.0 / steps;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double x1 = nodes[i].x1(), x2 = nodes[i].x2();
    for (int k = 0; k < steps; ++k) {
      const double s = k * ds;
      const Vec2 k1 = velocity(s, x1, x2);
      const Vec2 k2 = velocity(s + 0.5 * ds, x1 + 0.5 * ds * k1.x1, x2 + 0.5 * ds * k1.x2);
      const Vec2 k3 = velocity(s + 0.5 * ds, x1 + 0.5 * ds * k2.x1, x2 + 0.5 * ds * k2.x2);
      const Vec2 k4 = velocity(s + ds, x1 + ds * k3.x1, x2 + ds * k3.x2);
      x1 += ds / 6.0 * (k1.x1 + 2.0 * k2.x1 + 2.0 * k3.x1 + k4.x1);
      x2 += ds / 6.0 * (k1.x2 + 2.0 * k2.x2 + 2.0 * k3.x2 + k4.x2);
    }
    out.positions[i] = TorusPoint(x1, x2);
  }
  out.flowed = DiscreteMeasure(out.positions, out.flowed.weights());
  if (measure_target) {
    const DiscreteMeasure target(nodes, normalized(nu_nodes));
    out.w2_to_target = solve_discrete_ot(out.flowed, target).cost;
  }
  return out;
}

double pushforward_lipschitz(const std::vector<TorusPoint>& atoms, const PotentialField& h) {
  std::vector<TorusPoint> moved(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    moved[i] = exp_map(atoms[i], sample_field(h.field, atoms[i]).gradient);
  }
  double l2 = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      const double d = torus_distance2(atoms[i], atoms[j]);
      if (d > 0.0) l2 = std::max(l2, torus_distance2(moved[i], moved[j]) / d);
    }
  }
  return std::sqrt(l2);
}

void write_coupling_csv(const std::filesystem::path& path, const Coupling& pi, const CostOracle& cost) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "i,j,mass,cost_ij\n");
  for (const auto& e : pi.pairs) std::fprintf(f, "%zu,%zu,%.17g,%.17g\n", e.i, e.j, e.mass, cost.at(e.i, e.j));
  std::fclose(f);
}

void write_map_csv(const std::filesystem::path& path, const TransportMap& map) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "cell_x,cell_y,target_index\n");
  for (std::size_t i = 0; i < map.domain.size(); ++i) {
    const auto& x = map.domain.atom(i);
    std::fprintf(f, "%.17g,%.17g,%zu\n", x.x1(), x.x2(), map.target_index[i]);
  }
  std::fclose(f);
}

}  // namespace matchkit
