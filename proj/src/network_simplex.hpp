#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace matchkit::detail {

// Primal network simplex for uncapacitated min-cost flow with integer
// supplies. A virtual root joined to every node by an artificial arc gives
// the initial strongly feasible tree; the leaving arc follows Cunningham's
// rule, so degenerate pivots cannot cycle. Arcs may be appended between runs
// without losing the current basis.
class NetworkSimplex {
 public:
  // supply[u] > 0 for sources, < 0 for sinks, summing to zero.
  NetworkSimplex(const std::vector<std::int64_t>& supply, double artificial_cost);

  std::size_t add_arc(int source, int target, double cost);

  // Pivots until no arc has reduced cost below -eps. Returns pivot count.
  std::size_t run(double eps, std::size_t max_pivots);

  std::size_t node_count() const { return nodes_; }
  std::size_t arc_count() const { return source_.size(); }
  // Artificial arcs occupy indices [0, node_count()).
  std::size_t first_real_arc() const { return nodes_; }

  int source(std::size_t a) const { return source_[a]; }
  int target(std::size_t a) const { return target_[a]; }
  double cost(std::size_t a) const { return cost_[a]; }
  std::int64_t flow(std::size_t a) const { return flow_[a]; }
  // Reduced costs are cost + pi(source) - pi(target).
  double potential(int u) const { return pi_[u]; }

 private:
  void pivot(std::size_t in);
  void unlink(int child);
  void link(int parent, int child);
  void recompute_potentials();
  void shift_subtree(int top, double sigma);

  static constexpr std::size_t kRefreshInterval = 4096;

  std::size_t nodes_;
  int root_;
  std::vector<int> source_, target_;
  std::vector<double> cost_;
  std::vector<std::int64_t> flow_;
  std::vector<char> in_tree_;

  std::vector<int> parent_, pred_;
  std::vector<int> succ_;  // subtree sizes
  std::vector<char> up_;  // pred arc points from the node to its parent
  std::vector<int> first_child_, next_sib_, prev_sib_;
  std::vector<double> pi_;

  std::size_t next_arc_ = 0;
  std::size_t since_refresh_ = 0;
  std::vector<int> stem_, stack_;
  std::vector<int> stem_pred_;
  std::vector<char> stem_up_;
};

}  // namespace matchkit::detail
