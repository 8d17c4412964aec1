#pragma once

// Exhaustive optimal transport for tiny instances.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "matchkit/transport.hpp"

namespace oracle {

/// min over permutations of (1/n) sum_i c(i, sigma(i)).
inline double permutation_cost(const matchkit::CostOracle& c) {
  const std::size_t n = c.rows();
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c.at(i, sigma[i]);
    best = std::min(best, s / static_cast<double>(n));
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return best;
}

/// Integer transportation problem solved by dynamic programming over the
/// vector of remaining target capacities. Supplies a and demands b are unit
/// counts with equal sums; the result is divided by that sum. Integral
/// supplies admit an integral optimal plan, so this search is exhaustive.
class CapacityDp {
 public:
  CapacityDp(std::vector<int> a, std::vector<int> b, const matchkit::CostOracle& c)
      : a_(std::move(a)), b_(std::move(b)), c_(c) {
    total_ = std::accumulate(a_.begin(), a_.end(), 0);
  }

  double solve() {
    return best(0, b_) / static_cast<double>(total_);
  }

 private:
  double best(std::size_t i, const std::vector<int>& rem) {
    if (i == a_.size()) return 0.0;
    const auto key = std::make_pair(i, rem);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    double out = std::numeric_limits<double>::infinity();
    std::vector<int> x(rem.size(), 0);
    std::vector<int> next = rem;
    distribute(i, 0, a_[i], rem, x, next, out);
    memo_[key] = out;
    return out;
  }

  void distribute(std::size_t i, std::size_t j, int left, const std::vector<int>& rem,
                  std::vector<int>& x, std::vector<int>& next, double& out) {
    if (j == rem.size()) {
      if (left != 0) return;
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * c_.at(i, k);
      out = std::min(out, s + best(i + 1, next));
      return;
    }
    for (int v = 0; v <= std::min(left, rem[j]); ++v) {
      x[j] = v;
      next[j] = rem[j] - v;
      distribute(i, j + 1, left - v, rem, x, next, out);
    }
    x[j] = 0;
    next[j] = rem[j];
  }

  std::vector<int> a_, b_;
  const matchkit::CostOracle& c_;
  int total_ = 0;
  std::map<std::pair<std::size_t, std::vector<int>>, double> memo_;
};

/// Random composition of `total` into `parts` positive integers.
template <class Rng>
std::vector<int> composition(int total, std::size_t parts, Rng& rng) {
  std::vector<int> out(parts, 1);
  for (int r = static_cast<int>(parts); r < total; ++r) {
    out[static_cast<std::size_t>(rng.uniform() * static_cast<double>(parts))] += 1;
  }
  return out;
}

}  // namespace oracle
