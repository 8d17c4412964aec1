#include "network_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace matchkit::detail {

NetworkSimplex::NetworkSimplex(const std::vector<std::int64_t>& supply, double artificial_cost)
    : nodes_(supply.size()), root_(static_cast<int>(supply.size())) {
  const std::size_t total = nodes_ + 1;
  parent_.assign(total, -1);
  pred_.assign(total, -1);
  succ_.assign(total, 1);
  up_.assign(total, 0);
  first_child_.assign(total, -1);
  next_sib_.assign(total, -1);
  prev_sib_.assign(total, -1);
  pi_.assign(total, 0.0);

  std::int64_t balance = 0;
  for (std::size_t u = 0; u < nodes_; ++u) {
    const std::int64_t s = supply[u];
    if (s == 0) throw std::invalid_argument("network simplex requires nonzero supplies");
    balance += s;
    const int v = static_cast<int>(u);
    if (s > 0) {
      add_arc(v, root_, 0.0);
      flow_[u] = s;
      up_[u] = 1;
      pi_[u] = 0.0;
    } else {
      add_arc(root_, v, artificial_cost);
      flow_[u] = -s;
      up_[u] = 0;
      pi_[u] = artificial_cost;
    }
    in_tree_[u] = 1;
    pred_[u] = v;
    link(root_, v);
  }
  if (balance != 0) throw std::invalid_argument("supplies must balance");
  succ_[root_] = static_cast<int>(total);
}

std::size_t NetworkSimplex::add_arc(int source, int target, double cost) {
  source_.push_back(source);
  target_.push_back(target);
  cost_.push_back(cost);
  flow_.push_back(0);
  in_tree_.push_back(0);
  return source_.size() - 1;
}

void NetworkSimplex::unlink(int child) {
  const int p = parent_[child];
  const int prev = prev_sib_[child], next = next_sib_[child];
  if (prev >= 0) next_sib_[prev] = next;
  else first_child_[p] = next;
  if (next >= 0) prev_sib_[next] = prev;
  prev_sib_[child] = next_sib_[child] = -1;
}

void NetworkSimplex::link(int parent, int child) {
  parent_[child] = parent;
  const int head = first_child_[parent];
  next_sib_[child] = head;
  prev_sib_[child] = -1;
  if (head >= 0) prev_sib_[head] = child;
  first_child_[parent] = child;
}

// Recomputes every potential from the tree arcs. Pivots shift potentials
// incrementally; this bounds the rounding that accumulates between calls.
void NetworkSimplex::recompute_potentials() {
  stack_.clear();
  for (int c = first_child_[root_]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
  while (!stack_.empty()) {
    const int u = stack_.back();
    stack_.pop_back();
    const int p = parent_[u];
    const double c = cost_[pred_[u]];
    pi_[u] = up_[u] ? pi_[p] - c : pi_[p] + c;
    for (int c2 = first_child_[u]; c2 >= 0; c2 = next_sib_[c2]) stack_.push_back(c2);
  }
}

void NetworkSimplex::shift_subtree(int top, double sigma) {
  stack_.clear();
  stack_.push_back(top);
  while (!stack_.empty()) {
    const int u = stack_.back();
    stack_.pop_back();
    pi_[u] += sigma;
    for (int c = first_child_[u]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
  }
}

void NetworkSimplex::pivot(std::size_t in) {
  const int first = source_[in], second = target_[in];

  // An ancestor always has the larger subtree, so climbing from the smaller
  // side meets at the join without needing depths.
  int u = first, v = second;
  while (u != v) {
    if (succ_[u] < succ_[v]) u = parent_[u];
    else v = parent_[v];
  }
  const int join = u;
  const double rc = cost_[in] + pi_[first] - pi_[second];

  // Flow runs join -> first -> second -> join. The last blocking arc in that
  // order leaves, which keeps the tree strongly feasible.
  std::int64_t delta = std::numeric_limits<std::int64_t>::max();
  int out = -1;
  bool first_side = true;
  for (int w = first; w != join; w = parent_[w]) {
    if (up_[w] && flow_[pred_[w]] < delta) {
      delta = flow_[pred_[w]];
      out = w;
    }
  }
  for (int w = second; w != join; w = parent_[w]) {
    if (!up_[w] && flow_[pred_[w]] <= delta) {
      delta = flow_[pred_[w]];
      out = w;
      first_side = false;
    }
  }
  if (out < 0) throw std::logic_error("network simplex: unbounded cycle");

  if (delta > 0) {
    flow_[in] += delta;
    for (int w = first; w != join; w = parent_[w]) flow_[pred_[w]] += up_[w] ? -delta : delta;
    for (int w = second; w != join; w = parent_[w]) flow_[pred_[w]] += up_[w] ? delta : -delta;
  }
  in_tree_[in] = 1;
  in_tree_[pred_[out]] = 0;

  const int u_in = first_side ? first : second;
  const int v_in = first_side ? second : first;

  // The subtree below `out` moves from below parent(out) to below v_in.
  const int moved = succ_[out];
  for (int w = parent_[out]; w != join; w = parent_[w]) succ_[w] -= moved;
  for (int w = v_in; w != join; w = parent_[w]) succ_[w] += moved;

  // Reverse the stem u_in .. out and hang it below v_in.
  stem_.clear();
  for (int w = u_in;; w = parent_[w]) {
    stem_.push_back(w);
    if (w == out) break;
  }
  stem_pred_.resize(stem_.size());
  stem_up_.resize(stem_.size());
  for (std::size_t i = 0; i < stem_.size(); ++i) {
    stem_pred_[i] = pred_[stem_[i]];
    stem_up_[i] = up_[stem_[i]];
    unlink(stem_[i]);
  }
  // Reversed stem: w_i keeps its old subtree minus w_{i-1}'s, plus w_{i+1}'s new one.
  for (std::size_t i = stem_.size() - 1; i > 0; --i) {
    const int below = i + 1 < stem_.size() ? succ_[stem_[i + 1]] : 0;
    succ_[stem_[i]] = succ_[stem_[i]] - succ_[stem_[i - 1]] + below;
  }
  succ_[u_in] = moved;
  pred_[u_in] = static_cast<int>(in);
  up_[u_in] = source_[in] == u_in;
  link(v_in, u_in);
  for (std::size_t i = 1; i < stem_.size(); ++i) {
    pred_[stem_[i]] = stem_pred_[i - 1];
    up_[stem_[i]] = !stem_up_[i - 1];
    link(stem_[i - 1], stem_[i]);
  }
  // Zero reduced cost on the entering arc fixes the shift of the moved side.
  shift_subtree(u_in, u_in == first ? -rc : rc);
}

std::size_t NetworkSimplex::run(double eps, std::size_t max_pivots) {
  const std::size_t arcs = source_.size();
  const std::size_t block =
      std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs))));
  std::size_t pivots = 0;
  if (next_arc_ >= arcs) next_arc_ = 0;
  while (true) {
    std::size_t best_arc = arcs;
    double best = -eps;
    std::size_t in_block = 0;
    for (std::size_t scanned = 0; scanned < arcs; ++scanned) {
      const std::size_t a = next_arc_;
      if (++next_arc_ == arcs) next_arc_ = 0;
      if (!in_tree_[a]) {
        const double rc = cost_[a] + pi_[source_[a]] - pi_[target_[a]];
        if (rc < best) {
          best = rc;
          best_arc = a;
        }
      }
      if (++in_block == block) {
        if (best_arc < arcs) break;
        in_block = 0;
      }
    }
    if (best_arc == arcs) {
      if (since_refresh_ == 0) return pivots;
      // Confirm optimality against exact potentials.
      recompute_potentials();
      since_refresh_ = 0;
      continue;
    }
    pivot(best_arc);
    if (++since_refresh_ == kRefreshInterval) {
      recompute_potentials();
      since_refresh_ = 0;
    }
    if (++pivots > max_pivots) throw std::runtime_error("network simplex: pivot limit exceeded");
  }
}

}  // namespace matchkit::detail
