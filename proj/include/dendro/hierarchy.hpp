#pragma once

// Rooted binary class dendrograms: construction (average-link agglomeration,
// recursive 2-means, uniform random sampling), counting, depth statistics and
// Newick import/export.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "dendro/dissimilarity.hpp"
#include "dendro/error.hpp"
#include "dendro/rng.hpp"

namespace dendro {

class Hierarchy {
 public:
  struct Node {
    int left = -1;
    int right = -1;
    int parent = -1;
    int leaf_class = -1;  // class index for leaves, -1 for internal nodes

    bool is_leaf() const { return leaf_class >= 0; }
  };

  Hierarchy() = default;

  int add_leaf(int cls) {
    nodes_.push_back(Node{-1, -1, -1, cls});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int join(int left, int right) {
    nodes_.push_back(Node{left, right, -1, -1});
    const int id = static_cast<int>(nodes_.size()) - 1;
    nodes_[static_cast<std::size_t>(left)].parent = id;
    nodes_[static_cast<std::size_t>(right)].parent = id;
    return id;
  }

  void set_root(int r) { root_ = r; }

  int root() const { return root_; }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::size_t node_count() const { return nodes_.size(); }

  int n_classes() const {
    int n = 0;
    for (const auto& nd : nodes_) n += nd.is_leaf();
    return n;
  }

  /// Internal node ids in pre-order (root first, left before right).
  std::vector<int> internal_nodes() const {
    std::vector<int> out;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      if (node(i).is_leaf()) continue;
      out.push_back(i);
      stack.push_back(node(i).right);
      stack.push_back(node(i).left);
    }
    return out;
  }

  /// Sorted class indices under node i.
  std::vector<int> classes_under(int i) const {
    std::vector<int> out;
    std::vector<int> stack{i};
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      if (node(j).is_leaf()) out.push_back(node(j).leaf_class);
      else {
        stack.push_back(node(j).right);
        stack.push_back(node(j).left);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Node id of the leaf for each class.
  std::vector<int> leaf_of_class() const {
    std::vector<int> out(static_cast<std::size_t>(n_classes()), -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_leaf()) out[static_cast<std::size_t>(nodes_[i].leaf_class)] = static_cast<int>(i);
    return out;
  }

  int depth_of(int i) const {
    int d = 0;
    while (node(i).parent >= 0) {
      i = node(i).parent;
      ++d;
    }
    return d;
  }

  /// Leaves biject with 0..n-1, every internal node has two children, and all
  /// nodes are reachable from the root.
  void validate() const {
    if (root_ < 0 || static_cast<std::size_t>(root_) >= nodes_.size()) throw InvalidArgument("hierarchy: no root");
    const int n = n_classes();
    std::vector<char> seen_class(static_cast<std::size_t>(n), 0);
    std::size_t reached = 0;
    int internal = 0;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      ++reached;
      const Node& nd = node(i);
      if (nd.is_leaf()) {
        if (nd.leaf_class >= n || seen_class[static_cast<std::size_t>(nd.leaf_class)])
          throw InvalidArgument("hierarchy: leaves do not biject with classes");
        seen_class[static_cast<std::size_t>(nd.leaf_class)] = 1;
      } else {
        if (nd.left < 0 || nd.right < 0) throw InvalidArgument("hierarchy: internal node without two children");
        if (node(nd.left).parent != i || node(nd.right).parent != i) throw InvalidArgument("hierarchy: broken parent link");
        ++internal;
        stack.push_back(nd.left);
        stack.push_back(nd.right);
      }
    }
    if (reached != nodes_.size()) throw InvalidArgument("hierarchy: unreachable nodes");
    if (internal != n - 1) throw InvalidArgument("hierarchy: internal node count is not n-1");
  }

  /// Ordered structural equality (left/right distinguished).
  friend bool operator==(const Hierarchy& a, const Hierarchy& b) {
    if (a.nodes_.size() != b.nodes_.size()) return false;
    std::function<bool(int, int)> eq = [&](int i, int j) {
      const Node& x = a.node(i);
      const Node& y = b.node(j);
      if (x.is_leaf() || y.is_leaf()) return x.leaf_class == y.leaf_class;
      return eq(x.left, y.left) && eq(x.right, y.right);
    };
    return eq(a.root_, b.root_);
  }

  /// Topology key ignoring child order: children sorted by smallest class.
  std::string canonical() const {
    std::function<std::pair<int, std::string>(int)> rec = [&](int i) -> std::pair<int, std::string> {
      const Node& nd = node(i);
      if (nd.is_leaf()) return {nd.leaf_class, std::to_string(nd.leaf_class)};
      auto l = rec(nd.left), r = rec(nd.right);
      if (r.first < l.first) std::swap(l, r);
      return {l.first, "(" + l.second + "," + r.second + ")"};
    };
    return rec(root_).second;
  }

 private:
  std::vector<Node> nodes_;
  int root_ = -1;
};

// ------------------------------------------------------------------ counting

/// (2n-3)!!, the number of rooted binary leaf-labelled topologies.
inline boost::multiprecision::cpp_int count_hierarchies(int n) {
  if (n < 2) throw InvalidArgument("count_hierarchies: n must be at least 2");
  boost::multiprecision::cpp_int v = 1;
  for (int k = 2 * n - 3; k > 1; k -= 2) v *= k;
  return v;
}

// ------------------------------------------------------------------ sampling

/// Uniform over all (2n-3)!! topologies by sequential leaf insertion: leaf k
/// is spliced into one of the 2k-1 slots (an edge of the k-leaf tree, or above
/// the root), chosen uniformly.
inline Hierarchy sample_random_hierarchy(int n, Rng& rng) {
  if (n < 2) throw InvalidArgument("sample_random_hierarchy: n must be at least 2");
  // Build on a parent/children table first, then emit a Hierarchy.
  struct Tmp {
    int left = -1, right = -1, parent = -1, cls = -1;
  };
  std::vector<Tmp> t;
  t.push_back({-1, -1, 2, 0});
  t.push_back({-1, -1, 2, 1});
  t.push_back({0, 1, -1, -1});
  int root = 2;
  for (int k = 2; k < n; ++k) {
    // Slots: every non-root node (its parent edge) plus the root itself.
    std::vector<int> slots;
    slots.reserve(t.size());
    for (int i = 0; i < static_cast<int>(t.size()); ++i) slots.push_back(i);
    const int target = slots[static_cast<std::size_t>(uniform_index(rng, slots.size()))];
    const int leaf = static_cast<int>(t.size());
    t.push_back({-1, -1, -1, k});
    const int mid = static_cast<int>(t.size());
    const int old_parent = t[static_cast<std::size_t>(target)].parent;
    // Which side the new leaf goes is fixed (right); child order is cosmetic
    // for topology and does not bias the distribution.
    t.push_back({target, leaf, old_parent, -1});
    t[static_cast<std::size_t>(target)].parent = mid;
    t[static_cast<std::size_t>(leaf)].parent = mid;
    if (old_parent < 0) {
      root = mid;
    } else {
      auto& p = t[static_cast<std::size_t>(old_parent)];
      (p.left == target ? p.left : p.right) = mid;
    }
  }
  Hierarchy h;
  std::function<int(int)> emit = [&](int i) -> int {
    const Tmp& x = t[static_cast<std::size_t>(i)];
    if (x.cls >= 0) return h.add_leaf(x.cls);
    const int l = emit(x.left);
    const int r = emit(x.right);
    return h.join(l, r);
  };
  h.set_root(emit(root));
  return h;
}

// ------------------------------------------------------- agglomerative (HAC)

/// Average-link agglomeration over the original class-pair dissimilarities.
/// Each step merges the cluster pair with the smallest mean cross-pair
/// dissimilarity; ties go to the pair whose (smaller min-member, larger
/// min-member) is lexicographically smallest. The cluster with the smaller
/// min-member becomes the left child.
inline Hierarchy hac_build(const DissimilarityMatrix& d) {
  d.check();
  const int n = d.n();
  if (n < 2) throw InvalidArgument("hac_build: need at least two classes");
  Hierarchy h;
  struct Cluster {
    std::vector<int> members;  // sorted
    int node;
  };
  std::vector<Cluster> active;
  for (int c = 0; c < n; ++c) active.push_back({{c}, h.add_leaf(c)});

  auto average = [&](const Cluster& a, const Cluster& b) {
    double s = 0.0;
    for (int i : a.members)
      for (int j : b.members) s += d(i, j);
    return s / static_cast<double>(a.members.size() * b.members.size());
  };

  while (active.size() > 1) {
    // active is kept sorted by min member, so (a, b) with a < b is already
    // in lexicographic order.
    std::size_t best_a = 0, best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const double v = average(active[a], active[b]);
        if (v < best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    Cluster merged;
    merged.members = active[best_a].members;
    merged.members.insert(merged.members.end(), active[best_b].members.begin(), active[best_b].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    merged.node = h.join(active[best_a].node, active[best_b].node);
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    active[best_a] = std::move(merged);
  }
  h.set_root(active.front().node);
  return h;
}

// ------------------------------------------------- divisive (hierarchical 2-means)

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 100;
};

namespace detail {

/// Lloyd's 2-means on the given points. Returns a side (0/1) per point with
/// both sides nonempty.
inline std::vector<int> two_means(const Matrix& pts, Rng& rng, const KMeansOptions& opt) {
  const auto m = static_cast<std::size_t>(pts.rows());
  std::vector<int> best_assign;
  double best_obj = std::numeric_limits<double>::infinity();

  auto repair = [&](std::vector<int>& assign) {
    std::size_t n1 = 0;
    for (int a : assign) n1 += static_cast<std::size_t>(a);
    if (n1 != 0 && n1 != m) return;
    const int full = n1 == 0 ? 0 : 1;
    Eigen::RowVectorXd mean = pts.colwise().mean();
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double dd = (pts.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
      if (dd > far_d) {
        far_d = dd;
        far = i;
      }
    }
    assign[far] = 1 - full;
  };

  for (int r = 0; r < opt.restarts; ++r) {
    const auto s0 = static_cast<std::size_t>(uniform_index(rng, m));
    auto s1 = static_cast<std::size_t>(uniform_index(rng, m - 1));
    if (s1 >= s0) ++s1;
    Eigen::RowVectorXd c[2] = {pts.row(static_cast<Eigen::Index>(s0)), pts.row(static_cast<Eigen::Index>(s1))};
    std::vector<int> assign(m, -1);
    for (int it = 0; it < opt.max_iter; ++it) {
      bool changed = false;
      for (std::size_t i = 0; i < m; ++i) {
        const auto row = pts.row(static_cast<Eigen::Index>(i));
        const int a = (row - c[1]).squaredNorm() < (row - c[0]).squaredNorm() ? 1 : 0;
        if (a != assign[i]) {
          assign[i] = a;
          changed = true;
        }
      }
      repair(assign);
      if (!changed && it > 0) break;
      for (int side = 0; side < 2; ++side) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(pts.cols());
        double cnt = 0;
        for (std::size_t i = 0; i < m; ++i)
          if (assign[i] == side) {
            sum += pts.row(static_cast<Eigen::Index>(i));
            cnt += 1;
          }
        c[side] = sum / cnt;
      }
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < m; ++i) obj += (pts.row(static_cast<Eigen::Index>(i)) - c[assign[i]]).squaredNorm();
    if (obj < best_obj) {
      best_obj = obj;
      best_assign = assign;
    }
  }
  return best_assign;
}

}  // namespace detail

/// Top-down recursive 2-means. At each node the classes are embedded as their
/// rows of `d` restricted to the node's classes. Each node draws from its own
/// stream derived from `seed` and the node's position in the tree.
inline Hierarchy hkm_build(const DissimilarityMatrix& d, std::uint64_t seed, const KMeansOptions& opt = {}) {
  d.check();
  const int n = d.n();
  if (n < 2) throw InvalidArgument("hkm_build: need at least two classes");
  Hierarchy h;
  std::function<int(const std::vector<int>&, std::uint64_t)> build = [&](const std::vector<int>& cls,
                                                                           std::uint64_t path) -> int {
    if (cls.size() == 1) return h.add_leaf(cls.front());
    std::vector<int> side;
    if (cls.size() == 2) {
      side = {0, 1};
    } else {
      Matrix pts(static_cast<Eigen::Index>(cls.size()), static_cast<Eigen::Index>(cls.size()));
      for (std::size_t a = 0; a < cls.size(); ++a)
        for (std::size_t b = 0; b < cls.size(); ++b)
          pts(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = d(cls[a], cls[b]);
      Rng rng(derive_seed(seed, {path}));
      side = detail::two_means(pts, rng, opt);
    }
    std::vector<int> left, right;
    const int left_side = side.front();  // the side holding the smallest class
    for (std::size_t i = 0; i < cls.size(); ++i) (side[i] == left_side ? left : right).push_back(cls[i]);
    const int l = build(left, path * 2 + 1);
    const int r = build(right, path * 2 + 2);
    return h.join(l, r);
  };
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  h.set_root(build(all, 0));
  return h;
}

// ----------------------------------------------------------------- statistics

struct DepthStats {
  int max_depth = 0;
  double mean_leaf_depth = 0.0;
};

/// Leaf depths with the root at depth 0.
inline DepthStats depth_stats(const Hierarchy& h) {
  DepthStats s;
  double sum = 0.0;
  int leaves = 0;
  for (int node : h.leaf_of_class()) {
    const int dpt = h.depth_of(node);
    s.max_depth = std::max(s.max_depth, dpt);
    sum += dpt;
    ++leaves;
  }
  s.mean_leaf_depth = leaves ? sum / leaves : 0.0;
  return s;
}

// --------------------------------------------------------------------- Newick

inline std::vector<std::string> default_class_names(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back(std::to_string(i));
  return v;
}

inline std::string to_newick(const Hierarchy& h, const std::vector<std::string>& class_names) {
  std::string out;
  std::function<void(int)> rec = [&](int i) {
    const auto& nd = h.node(i);
    if (nd.is_leaf()) {
      const auto& name = class_names.at(static_cast<std::size_t>(nd.leaf_class));
      if (name.empty() || name.find_first_of("(),;") != std::string::npos)
        throw InvalidArgument("to_newick: class name '" + name + "' is empty or contains Newick metacharacters");
      out += name;
      return;
    }
    out += '(';
    rec(nd.left);
    out += ',';
    rec(nd.right);
    out += ')';
  };
  rec(h.root());
  out += ';';
  return out;
}

inline std::string to_newick(const Hierarchy& h) { return to_newick(h, default_class_names(h.n_classes())); }

/// Parses a strictly binary Newick tree whose leaf labels are class names.
/// Whitespace between tokens is ignored. Errors carry the byte offset.
inline Hierarchy from_newick(const std::string& s, const std::vector<std::string>& class_names) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < class_names.size(); ++i) index[class_names[i]] = static_cast<int>(i);
  Hierarchy h;
  std::vector<char> used(class_names.size(), 0);
  std::size_t pos = 0;

  auto skip_ws = [&] {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r')) ++pos;
  };
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("newick: " + what + " at offset " + std::to_string(pos), pos);
  };
  auto expect = [&](char c) {
    skip_ws();
    if (pos >= s.size()) throw fail(std::string("expected '") + c + "' but input ended");
    if (s[pos] != c) throw fail(std::string("expected '") + c + "', found '" + s[pos] + "'");
    ++pos;
  };

  std::function<int()> subtree = [&]() -> int {
    skip_ws();
    if (pos >= s.size()) throw fail("unexpected end of input");
    if (s[pos] == '(') {
      ++pos;
      const int l = subtree();
      expect(',');
      const int r = subtree();
      expect(')');
      return h.join(l, r);
    }
    const std::size_t start = pos;
    while (pos < s.size() && std::string_view("(),; \t\r\n").find(s[pos]) == std::string_view::npos) ++pos;
    if (pos == start) throw fail(std::string("expected a class name, found '") + s[pos] + "'");
    const std::string name = s.substr(start, pos - start);
    auto it = index.find(name);
    if (it == index.end()) {
      pos = start;
      throw fail("unknown class '" + name + "'");
    }
    if (used[static_cast<std::size_t>(it->second)]) {
      pos = start;
      throw fail("class '" + name + "' appears twice");
    }
    used[static_cast<std::size_t>(it->second)] = 1;
    return h.add_leaf(it->second);
  };

  const int root = subtree();
  expect(';');
  skip_ws();
  if (pos != s.size()) throw fail("trailing characters");
  for (std::size_t c = 0; c < used.size(); ++c)
    if (!used[c]) throw ParseError("newick: class '" + class_names[c] + "' missing from tree", s.size());
  h.set_root(root);
  h.validate();
  return h;
}

}  // namespace dendro
