#pragma once

// Classification tree: Gini splits grown to the size limits, then
// cost-complexity (weakest-link) pruning. One grown tree answers every
// complexity parameter: each internal node stores the alpha at which it
// collapses into a leaf, so pruning at cp is a threshold on that value.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dendro/dataset.hpp"

namespace dendro::cart {

struct GrowParams {
  int min_split = 20;
  int min_bucket = 7;
  int max_depth = 30;
};

struct Node {
  int feature = -1;  // -1 for a grown leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  int depth = 0;
  std::vector<double> counts;
  double collapse_alpha = std::numeric_limits<double>::infinity();

  double n() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }
  bool grown_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root
  int n_classes = 0;
  double root_risk = 0.0;

  /// Internal nodes whose collapse alpha is at most this act as leaves.
  double prune_limit(double cp) const { return cp * root_risk; }

  bool acts_as_leaf(const Node& nd, double limit) const { return nd.grown_leaf() || nd.collapse_alpha <= limit; }

  int leaf_for(const double* x, double cp) const {
    const double limit = prune_limit(cp);
    int i = 0;
    while (!acts_as_leaf(nodes[static_cast<std::size_t>(i)], limit)) {
      const Node& nd = nodes[static_cast<std::size_t>(i)];
      i = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return i;
  }

  std::size_t leaf_count(double cp) const {
    const double limit = prune_limit(cp);
    std::size_t leaves = 0;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const Node& nd = nodes[static_cast<std::size_t>(stack.back())];
      stack.pop_back();
      if (acts_as_leaf(nd, limit)) {
        ++leaves;
      } else {
        stack.push_back(nd.left);
        stack.push_back(nd.right);
      }
    }
    return leaves;
  }
};

/// Laplace-smoothed leaf distribution: (c_i + 1) / (n + k).
inline void leaf_probabilities(const std::vector<double>& counts, double* out) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double denom = total + static_cast<double>(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) out[c] = (counts[c] + 1.0) / denom;
}

inline double node_risk(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  return total - *std::max_element(counts.begin(), counts.end());
}

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

// Maximises sum_L c^2/n_L + sum_R c^2/n_R, which is the Gini decrease up to
// terms constant for the node.
inline SplitChoice best_split(const Matrix& x, const Labels& y, int k, const std::vector<std::vector<int>>& sorted,
                              std::size_t begin, std::size_t end, const std::vector<double>& counts, int min_bucket) {
  SplitChoice best;
  const auto n = static_cast<double>(end - begin);
  double parent_score = 0.0;
  for (double c : counts) parent_score += c * c;
  parent_score /= n;
  const double min_gain = 1e-12 * n;

  std::vector<double> left(static_cast<std::size_t>(k));
  for (std::size_t f = 0; f < sorted.size(); ++f) {
    std::fill(left.begin(), left.end(), 0.0);
    double sum_l2 = 0.0, sum_r2 = parent_score * n;
    std::vector<double> right = counts;
    const auto& order = sorted[f];
    for (std::size_t pos = begin; pos + 1 < end; ++pos) {
      const int row = order[pos];
      const auto c = static_cast<std::size_t>(y[static_cast<std::size_t>(row)]);
      sum_l2 += 2.0 * left[c] + 1.0;
      sum_r2 -= 2.0 * right[c] - 1.0;
      left[c] += 1.0;
      right[c] -= 1.0;
      const auto n_left = static_cast<double>(pos - begin + 1);
      const double n_right = n - n_left;
      if (n_left < min_bucket) continue;
      if (n_right < min_bucket) break;
      const double v = x(row, static_cast<Eigen::Index>(f));
      const double v_next = x(order[pos + 1], static_cast<Eigen::Index>(f));
      if (!(v < v_next)) continue;
      const double score = sum_l2 / n_left + sum_r2 / n_right;
      if (score - parent_score > min_gain && score > best.score) {
        best.score = score;
        best.feature = static_cast<int>(f);
        best.threshold = v + (v_next - v) / 2.0;
        if (!(best.threshold < v_next)) best.threshold = v;
      }
    }
  }
  return best;
}

}  // namespace detail

/// Grows an unpruned tree on rows `rows` of (x, y).
inline Tree grow(const Matrix& x, const Labels& y, int n_classes, const GrowParams& params) {
  const auto m = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  Tree tree;
  tree.n_classes = n_classes;

  // Per-feature row orders; node r owns positions [begin, end) in every order.
  std::vector<std::vector<int>> sorted(p, std::vector<int>(m));
  for (std::size_t f = 0; f < p; ++f) {
    auto& o = sorted[f];
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) {
      return x(a, static_cast<Eigen::Index>(f)) < x(b, static_cast<Eigen::Index>(f));
    });
  }

  struct Pending {
    int node;
    std::size_t begin, end;
  };
  Node root;
  root.counts.assign(static_cast<std::size_t>(n_classes), 0.0);
  for (int v : y) root.counts[static_cast<std::size_t>(v)] += 1.0;
  tree.root_risk = node_risk(root.counts);
  tree.nodes.push_back(std::move(root));

  std::vector<char> goes_left(m, 0);
  std::vector<int> scratch(m);
  std::vector<Pending> stack{{0, 0, m}};
  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const std::size_t n = job.end - job.begin;
    auto counts = tree.nodes[static_cast<std::size_t>(job.node)].counts;
    const int depth = tree.nodes[static_cast<std::size_t>(job.node)].depth;
    if (static_cast<int>(n) < params.min_split || depth >= params.max_depth || node_risk(counts) == 0.0) continue;

    auto choice = detail::best_split(x, y, n_classes, sorted, job.begin, job.end, counts, params.min_bucket);
    if (choice.feature < 0) continue;

    std::size_t n_left = 0;
    for (std::size_t pos = job.begin; pos < job.end; ++pos) {
      const int row = sorted[0][pos];
      const bool l = x(row, choice.feature) <= choice.threshold;
      goes_left[static_cast<std::size_t>(row)] = l;
      n_left += l;
    }
    for (auto& order : sorted) {
      std::size_t li = job.begin, ri = 0;
      for (std::size_t pos = job.begin; pos < job.end; ++pos) {
        const int row = order[pos];
        if (goes_left[static_cast<std::size_t>(row)]) order[li++] = row;
        else scratch[ri++] = row;
      }
      std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(ri), order.begin() + static_cast<std::ptrdiff_t>(li));
    }

    Node l, r;
    l.depth = r.depth = depth + 1;
    l.counts.assign(static_cast<std::size_t>(n_classes), 0.0);
    r.counts.assign(static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t pos = job.begin; pos < job.end; ++pos) {
      const int row = sorted[0][pos];
      (pos < job.begin + n_left ? l : r).counts[static_cast<std::size_t>(y[static_cast<std::size_t>(row)])] += 1.0;
    }
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(std::move(l));
    tree.nodes.push_back(std::move(r));
    Node& parent = tree.nodes[static_cast<std::size_t>(job.node)];
    parent.feature = choice.feature;
    parent.threshold = choice.threshold;
    parent.left = li;
    parent.right = li + 1;
    stack.push_back({li + 1, job.begin + n_left, job.end});
    stack.push_back({li, job.begin, job.begin + n_left});
  }
  return tree;
}

/// Weakest-link pruning sequence. Repeatedly collapses the internal node(s)
/// with the smallest g(t) = (R(t) - R(T_t)) / (|T_t| - 1) and records the
/// running maximum of g as that node's collapse alpha.
inline void compute_collapse_alphas(Tree& tree) {
  const std::size_t count = tree.nodes.size();
  std::vector<char> collapsed(count, 0);
  std::vector<double> subtree_risk(count), leaves(count), g(count);
  double running = 0.0;
  std::vector<int> post;
  post.reserve(count);
  while (true) {
    // post-order over the currently uncollapsed tree
    post.clear();
    std::vector<std::pair<int, bool>> st{{0, false}};
    while (!st.empty()) {
      auto [i, expanded] = st.back();
      st.pop_back();
      const Node& nd = tree.nodes[static_cast<std::size_t>(i)];
      if (expanded || nd.grown_leaf() || collapsed[static_cast<std::size_t>(i)]) {
        post.push_back(i);
        continue;
      }
      st.push_back({i, true});
      st.push_back({nd.right, false});
      st.push_back({nd.left, false});
    }
    double min_g = std::numeric_limits<double>::infinity();
    for (int i : post) {
      const auto u = static_cast<std::size_t>(i);
      const Node& nd = tree.nodes[u];
      const double own = node_risk(nd.counts);
      if (nd.grown_leaf() || collapsed[u]) {
        subtree_risk[u] = own;
        leaves[u] = 1;
        continue;
      }
      const auto l = static_cast<std::size_t>(nd.left), r = static_cast<std::size_t>(nd.right);
      subtree_risk[u] = subtree_risk[l] + subtree_risk[r];
      leaves[u] = leaves[l] + leaves[r];
      g[u] = (own - subtree_risk[u]) / (leaves[u] - 1.0);
      min_g = std::min(min_g, g[u]);
    }
    if (!std::isfinite(min_g)) break;
    running = std::max(running, min_g);
    for (int i : post) {
      const auto u = static_cast<std::size_t>(i);
      const Node& nd = tree.nodes[u];
      if (!nd.grown_leaf() && !collapsed[u] && g[u] <= min_g) {
        collapsed[u] = 1;
        tree.nodes[u].collapse_alpha = running;
      }
    }
  }
  // Nodes swallowed by a collapsing ancestor go with it. Children always have
  // larger indices than their parent.
  for (std::size_t u = 0; u < count; ++u) {
    const Node& nd = tree.nodes[u];
    if (nd.grown_leaf()) continue;
    for (int c : {nd.left, nd.right}) {
      auto& child = tree.nodes[static_cast<std::size_t>(c)];
      child.collapse_alpha = std::min(child.collapse_alpha, nd.collapse_alpha);
    }
  }
}

}  // namespace dendro::cart
