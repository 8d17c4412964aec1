#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "matchkit/transport.hpp"
#include "network_simplex.hpp"

namespace matchkit {

template <class Atom>
AtomicMeasure<Atom>::AtomicMeasure(std::vector<Atom> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty()) throw std::invalid_argument("measure needs at least one atom");
  if (atoms_.size() != weights_.size()) throw std::invalid_argument("atom and weight counts differ");
  long double total = 0.0L;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-12) {
    throw std::invalid_argument("weights must sum to 1");
  }
}

template <class Atom>
AtomicMeasure<Atom> AtomicMeasure<Atom>::uniform(std::vector<Atom> atoms) {
  const std::size_t n = atoms.size();
  if (n == 0) throw std::invalid_argument("measure needs at least one atom");
  return AtomicMeasure(std::move(atoms), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

template class AtomicMeasure<TorusPoint>;
template class AtomicMeasure<PointPair>;

double distance2(const PointPair& a, const PointPair& b) {
  return torus_distance2(a.x, b.x) + torus_distance2(a.y, b.y);
}

namespace {

double atom_distance2(const TorusPoint& a, const TorusPoint& b) { return torus_distance2(a, b); }
double atom_distance2(const PointPair& a, const PointPair& b) { return distance2(a, b); }

}  // namespace

template <class Atom>
void SquaredDistanceCost<Atom>::row(std::size_t i, double* out) const {
  const Atom& x = (*from_)[i];
  const auto& to = *to_;
  for (std::size_t j = 0; j < to.size(); ++j) out[j] = atom_distance2(x, to[j]);
}

template <class Atom>
double SquaredDistanceCost<Atom>::at(std::size_t i, std::size_t j) const {
  return atom_distance2((*from_)[i], (*to_)[j]);
}

template class SquaredDistanceCost<TorusPoint>;
template class SquaredDistanceCost<PointPair>;

std::vector<double> Coupling::first_marginal(std::size_t n) const {
  std::vector<double> m(n, 0.0);
  for (const auto& e : pairs) m.at(e.i) += e.mass;
  return m;
}

std::vector<double> Coupling::second_marginal(std::size_t n) const {
  std::vector<double> m(n, 0.0);
  for (const auto& e : pairs) m.at(e.j) += e.mass;
  return m;
}

namespace {

constexpr std::int64_t kMaxDenominator = std::int64_t{1} << 40;

// Smallest q <= 2^24 with |w - p/q| <= 1e-13, via continued fractions.
std::int64_t rational_denominator(double w) {
  double x = w;
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  for (int iter = 0; iter < 64; ++iter) {
    const double a = std::floor(x);
    if (a > 1e12) return 0;
    const auto ai = static_cast<std::int64_t>(a);
    const std::int64_t h2 = ai * h1 + h0, k2 = ai * k1 + k0;
    if (k2 > (std::int64_t{1} << 24)) return 0;
    if (std::abs(w - static_cast<double>(h2) / static_cast<double>(k2)) <= 1e-13) return k2;
    h0 = h1;
    h1 = h2;
    k0 = k1;
    k1 = k2;
    const double frac = x - a;
    if (frac <= 0.0) return 0;
    x = 1.0 / frac;
  }
  return 0;
}

// Rounds normalized weights to integers summing to `units`, handing the
// remainder to the largest fractional parts (lowest index on ties).
std::vector<std::int64_t> largest_remainder(const std::vector<double>& w, std::int64_t units) {
  long double total = 0.0L;
  for (double v : w) total += v;
  std::vector<std::int64_t> out(w.size());
  std::vector<std::pair<long double, std::size_t>> frac(w.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const long double exact = static_cast<long double>(w[i]) / total * static_cast<long double>(units);
    out[i] = static_cast<std::int64_t>(std::floor(exact));
    frac[i] = {exact - static_cast<long double>(out[i]), i};
    assigned += out[i];
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::int64_t r = 0; r < units - assigned; ++r) ++out[frac[static_cast<std::size_t>(r)].second];
  return out;
}

struct IntegerMasses {
  std::vector<std::int64_t> a, b;
  std::int64_t units = 0;
};

IntegerMasses integerize(const std::vector<double>& a, const std::vector<double>& b) {
  std::int64_t d = 1;
  bool rational = true;
  for (const auto* side : {&a, &b}) {
    for (double w : *side) {
      if (w == 0.0) continue;
      const std::int64_t q = rational_denominator(w);
      if (q == 0) {
        rational = false;
        break;
      }
      d = std::lcm(d, q);
      if (d > kMaxDenominator) {
        rational = false;
        break;
      }
    }
    if (!rational) break;
  }
  if (rational) {
    IntegerMasses out{std::vector<std::int64_t>(a.size()), std::vector<std::int64_t>(b.size()), d};
    std::int64_t sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sa += out.a[i] = std::llround(a[i] * static_cast<double>(d));
    for (std::size_t j = 0; j < b.size(); ++j) sb += out.b[j] = std::llround(b[j] * static_cast<double>(d));
    if (sa == d && sb == d) return out;
  }
  return {largest_remainder(a, kMaxDenominator), largest_remainder(b, kMaxDenominator), kMaxDenominator};
}

// Keeps the k smallest (cost, index) pairs seen so far, sorted ascending.
class SmallestK {
 public:
  explicit SmallestK(std::size_t k) : k_(k) { items_.reserve(k + 1); }
  void clear() { items_.clear(); }
  void offer(double c, std::uint32_t j) {
    if (items_.size() == k_ && !(c < items_.back().first)) return;
    auto it = std::upper_bound(items_.begin(), items_.end(), std::make_pair(c, j));
    items_.insert(it, {c, j});
    if (items_.size() > k_) items_.pop_back();
  }
  const std::vector<std::pair<double, std::uint32_t>>& items() const { return items_; }

 private:
  std::size_t k_;
  std::vector<std::pair<double, std::uint32_t>> items_;
};

}  // namespace

OtResult solve_transport(const std::vector<double>& a, const std::vector<double>& b,
                         const CostOracle& cost, const OtOptions& options) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw std::invalid_argument("empty marginal");
  if (cost.rows() != n || cost.cols() != m) throw std::invalid_argument("cost matrix shape mismatch");
  if (static_cast<double>(n) * static_cast<double>(m) > static_cast<double>(options.max_entries)) {
    throw std::length_error("cost matrix exceeds the memory guard of " +
                            std::to_string(options.max_entries) + " entries");
  }
  long double sa = 0.0L, sb = 0.0L;
  for (double w : a) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    sa += w;
  }
  for (double w : b) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    sb += w;
  }
  if (std::abs(static_cast<double>(sa - sb)) > 1e-9) throw std::invalid_argument("mass mismatch between marginals");

  const IntegerMasses units = integerize(a, b);
  const double unit = 1.0 / static_cast<double>(units.units);

  std::vector<std::size_t> rows, cols;
  std::vector<std::int64_t> col_local(m, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (units.a[i] > 0) rows.push_back(i);
  for (std::size_t j = 0; j < m; ++j) {
    if (units.b[j] > 0) {
      col_local[j] = static_cast<std::int64_t>(cols.size());
      cols.push_back(j);
    }
  }
  const std::size_t na = rows.size(), nb = cols.size();

  std::vector<double> buf(m);
  double max_cost = 0.0;
  const std::size_t k = std::min(options.neighbors, nb);
  const bool dense = na * nb <= 4096;
  const bool hinted = !options.column_hint.empty();
  if (hinted && options.column_hint.size() != m) throw std::invalid_argument("column hint has the wrong size");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> candidates;
  std::vector<double> col_best(nb, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> col_best_row(nb, 0);
  SmallestK nearest(k);
  for (std::size_t r = 0; r < na; ++r) {
    cost.row(rows[r], buf.data());
    nearest.clear();
    for (std::size_t c = 0; c < nb; ++c) {
      const double v = buf[cols[c]];
      max_cost = std::max(max_cost, v);
      if (v < col_best[c]) {
        col_best[c] = v;
        col_best_row[c] = static_cast<std::uint32_t>(r);
      }
      if (dense) candidates.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c));
      else nearest.offer(hinted ? v - options.column_hint[cols[c]] : v, static_cast<std::uint32_t>(c));
    }
    if (!dense) {
      for (const auto& [v, c] : nearest.items()) candidates.emplace_back(static_cast<std::uint32_t>(r), c);
    }
  }
  if (!dense) {
    for (std::size_t c = 0; c < nb; ++c) candidates.emplace_back(col_best_row[c], static_cast<std::uint32_t>(c));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<std::int64_t> supply(na + nb);
  for (std::size_t r = 0; r < na; ++r) supply[r] = units.a[rows[r]];
  for (std::size_t c = 0; c < nb; ++c) supply[na + c] = -units.b[cols[c]];
  // Any unit routed through the root can be rerouted along a direct arc of
  // cost <= max_cost, so this artificial cost keeps the root empty at optimum.
  const double artificial = 2.0 * max_cost + 1.0;
  detail::NetworkSimplex ns(supply, artificial);
  const double eps = 1e-14 * artificial;

  std::unordered_set<std::uint64_t> present;
  present.reserve(candidates.size() * 2);
  {
    std::size_t last_row = std::numeric_limits<std::size_t>::max();
    for (const auto& [r, c] : candidates) {
      if (r != last_row) {
        cost.row(rows[r], buf.data());
        last_row = r;
      }
      present.insert(static_cast<std::uint64_t>(r) * nb + c);
      ns.add_arc(static_cast<int>(r), static_cast<int>(na + c), buf[cols[c]]);
    }
  }

  OtResult result;
  result.units = units.units;
  std::vector<double> g_active(nb);
  std::vector<double> col_rc(nb);
  std::vector<std::uint32_t> col_rc_row(nb);
  const std::size_t pivot_cap = 200 * (ns.arc_count() + ns.node_count()) + 10'000'000;
  while (true) {
    result.pivots += ns.run(eps, pivot_cap);
    ++result.rounds;

    // Price every pair; the pass also forms the c-transform g_j = min_i c_ij + pi_i.
    std::fill(g_active.begin(), g_active.end(), std::numeric_limits<double>::infinity());
    std::fill(col_rc.begin(), col_rc.end(), -eps);
    std::fill(col_rc_row.begin(), col_rc_row.end(), std::numeric_limits<std::uint32_t>::max());
    std::vector<std::pair<std::uint32_t, std::uint32_t>> entering;
    for (std::size_t r = 0; r < na; ++r) {
      cost.row(rows[r], buf.data());
      const double pr = ns.potential(static_cast<int>(r));
      double best = -eps;
      std::uint32_t best_c = std::numeric_limits<std::uint32_t>::max();
      for (std::size_t c = 0; c < nb; ++c) {
        const double v = buf[cols[c]];
        const double shifted = v + pr;
        if (shifted < g_active[c]) g_active[c] = shifted;
        const double rc = shifted - ns.potential(static_cast<int>(na + c));
        if (rc < best) {
          best = rc;
          best_c = static_cast<std::uint32_t>(c);
        }
        if (rc < col_rc[c]) {
          col_rc[c] = rc;
          col_rc_row[c] = static_cast<std::uint32_t>(r);
        }
      }
      if (best_c != std::numeric_limits<std::uint32_t>::max()) entering.emplace_back(static_cast<std::uint32_t>(r), best_c);
    }
    for (std::size_t c = 0; c < nb; ++c) {
      if (col_rc_row[c] != std::numeric_limits<std::uint32_t>::max()) {
        entering.emplace_back(col_rc_row[c], static_cast<std::uint32_t>(c));
      }
    }
    std::sort(entering.begin(), entering.end());
    entering.erase(std::unique(entering.begin(), entering.end()), entering.end());
    std::size_t added = 0;
    std::size_t last_row = std::numeric_limits<std::size_t>::max();
    for (const auto& [r, c] : entering) {
      if (!present.insert(static_cast<std::uint64_t>(r) * nb + c).second) continue;
      if (r != last_row) {
        cost.row(rows[r], buf.data());
        last_row = r;
      }
      ns.add_arc(static_cast<int>(r), static_cast<int>(na + c), buf[cols[c]]);
      ++added;
    }
    if (added == 0) break;
    if (result.rounds >= options.max_rounds) throw std::runtime_error("column generation did not converge");
  }
  result.arcs = ns.arc_count() - ns.first_real_arc();

  // Primal coupling from the arcs that carry flow.
  for (std::size_t e = ns.first_real_arc(); e < ns.arc_count(); ++e) {
    if (ns.flow(e) == 0) continue;
    const std::size_t r = static_cast<std::size_t>(ns.source(e));
    const std::size_t c = static_cast<std::size_t>(ns.target(e)) - na;
    result.coupling.pairs.push_back({rows[r], cols[c], static_cast<double>(ns.flow(e)) * unit});
  }
  for (std::size_t u = 0; u < ns.first_real_arc(); ++u) {
    if (ns.flow(u) != 0) throw std::logic_error("artificial arc carries flow at optimum");
  }
  std::sort(result.coupling.pairs.begin(), result.coupling.pairs.end(),
            [](const CouplingEntry& x, const CouplingEntry& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
  long double primal = 0.0L;
  for (const auto& e : result.coupling.pairs) primal += static_cast<long double>(e.mass) * cost.at(e.i, e.j);
  result.cost = static_cast<double>(primal);
  result.coupling.cost = result.cost;

  // Dual: f_i = -pi_i on active rows, g the c-transform; zero-mass atoms get
  // the c-transform of g so that f_i + g_j <= c_ij holds everywhere.
  result.f.assign(n, 0.0);
  result.g.assign(m, std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < na; ++r) result.f[rows[r]] = -ns.potential(static_cast<int>(r));
  for (std::size_t c = 0; c < nb; ++c) result.g[cols[c]] = g_active[c];
  if (nb < m) {
    for (std::size_t r = 0; r < na; ++r) {
      cost.row(rows[r], buf.data());
      for (std::size_t j = 0; j < m; ++j) {
        if (col_local[j] < 0) result.g[j] = std::min(result.g[j], buf[j] - result.f[rows[r]]);
      }
    }
  }
  if (na < n) {
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r < na && rows[r] == i) {
        ++r;
        continue;
      }
      cost.row(i, buf.data());
      double f = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) f = std::min(f, buf[j] - result.g[j]);
      result.f[i] = f;
    }
  }
  long double dual = 0.0L;
  for (std::size_t i = 0; i < n; ++i) dual += static_cast<long double>(units.a[i]) * unit * result.f[i];
  for (std::size_t j = 0; j < m; ++j) dual += static_cast<long double>(units.b[j]) * unit * result.g[j];
  result.dual = static_cast<double>(dual);
  result.gap = result.cost - result.dual;
  return result;
}

OtResult solve_discrete_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const OtOptions& options) {
  const SquaredDistanceCost<TorusPoint> cost(mu.atoms(), nu.atoms());
  return solve_transport(mu.weights(), nu.weights(), cost, options);
}

OtResult solve_discrete_ot(const PlanMeasure& mu, const PlanMeasure& nu, const OtOptions& options) {
  const SquaredDistanceCost<PointPair> cost(mu.atoms(), nu.atoms());
  return solve_transport(mu.weights(), nu.weights(), cost, options);
}

namespace {

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace

SinkhornResult sinkhorn_ot(const std::vector<double>& a, const std::vector<double>& b,
                           const CostOracle& cost, double epsilon, int iters, double tol) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("entropic regularization must be > 0");
  const std::size_t n = a.size(), m = b.size();
  if (n * m > 10'000'000) throw std::length_error("Sinkhorn keeps a dense plan; problem too large");
  std::vector<double> c(n * m);
  for (std::size_t i = 0; i < n; ++i) cost.row(i, c.data() + i * m);
  std::vector<double> loga(n), logb(m);
  for (std::size_t i = 0; i < n; ++i) loga[i] = std::log(a[i]);
  for (std::size_t j = 0; j < m; ++j) logb[j] = std::log(b[j]);

  std::vector<double> f(n, 0.0), g(m, 0.0), tmp(std::max(n, m));
  SinkhornResult out;
  auto marginal_error = [&]() {
    double err = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::exp((f[i] + g[j] - c[i * m + j]) / epsilon);
      err += std::abs(s - b[j]);
    }
    return err;
  };
  for (out.iterations = 1; out.iterations <= iters; ++out.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) tmp[j] = (g[j] - c[i * m + j]) / epsilon;
      f[i] = a[i] > 0.0 ? epsilon * (loga[i] - log_sum_exp(tmp.data(), m))
                        : -std::numeric_limits<double>::infinity();
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = (f[i] - c[i * m + j]) / epsilon;
      g[j] = b[j] > 0.0 ? epsilon * (logb[j] - log_sum_exp(tmp.data(), n))
                        : -std::numeric_limits<double>::infinity();
    }
    // After the f-update rows are exact; the column error measures convergence.
    if (out.iterations % 10 == 0 || out.iterations == iters) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) tmp[j] = (g[j] - c[i * m + j]) / epsilon;
        f[i] = a[i] > 0.0 ? epsilon * (loga[i] - log_sum_exp(tmp.data(), m))
                          : -std::numeric_limits<double>::infinity();
      }
      out.marginal_error = marginal_error();
      if (out.marginal_error <= tol) break;
    }
  }
  if (out.marginal_error > tol) {
    throw SinkhornFailure("Sinkhorn did not converge: marginal error " + std::to_string(out.marginal_error));
  }
  out.plan.resize(n * m);
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp((f[i] + g[j] - c[i * m + j]) / epsilon);
      out.plan[i * m + j] = p;
      total += static_cast<long double>(p) * c[i * m + j];
    }
  }
  out.cost = static_cast<double>(total);
  out.iterations = std::min(out.iterations, iters);
  return out;
}

SinkhornResult sinkhorn_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double epsilon,
                           int iters, double tol) {
  const SquaredDistanceCost<TorusPoint> cost(mu.atoms(), nu.atoms());
  return sinkhorn_ot(mu.weights(), nu.weights(), cost, epsilon, iters, tol);
}

}  // namespace matchkit
