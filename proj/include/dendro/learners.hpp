#pragma once

// Probabilistic classifier contract: fit / predict_proba over dense features,
// with CART and logistic regression as concrete learners, a constant model for
// degenerate inputs, and the single-classifier and One-vs-All wrappers.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dendro/cart.hpp"
#include "dendro/dataset.hpp"
#include "dendro/logistic.hpp"

namespace dendro {

enum class LearnerKind { cart, logistic };

inline std::string to_string(LearnerKind k) { return k == LearnerKind::cart ? "cart" : "logistic"; }

/// {1, 1e-1, ..., 1e-6}
inline std::vector<double> default_cp_grid() { return {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}; }

struct ClassifierSpec {
  LearnerKind kind = LearnerKind::cart;
  std::vector<double> cart_cp_grid = default_cp_grid();
  int cart_min_split = 20;
  int cart_min_bucket = 7;
  int cart_max_depth = 30;
  int logistic_max_iter = 25;
  double logistic_tol = 1e-8;
  int tuning_folds = 3;

  static ClassifierSpec cart() { return {}; }
  static ClassifierSpec logistic() {
    ClassifierSpec s;
    s.kind = LearnerKind::logistic;
    return s;
  }

  void validate() const {
    if (cart_cp_grid.empty()) throw InvalidArgument("classifier spec: empty cp grid");
    for (std::size_t i = 0; i < cart_cp_grid.size(); ++i) {
      if (!(cart_cp_grid[i] > 0.0 && cart_cp_grid[i] <= 1.0)) throw InvalidArgument("classifier spec: cp outside (0,1]");
      if (i && !(cart_cp_grid[i] < cart_cp_grid[i - 1]))
        throw InvalidArgument("classifier spec: cp grid must be strictly decreasing");
    }
    if (cart_min_split < 1 || cart_min_bucket < 1 || cart_max_depth < 1)
      throw InvalidArgument("classifier spec: tree limits must be positive");
    if (cart_min_bucket > cart_min_split) throw InvalidArgument("classifier spec: min_bucket exceeds min_split");
    if (logistic_max_iter < 1 || !(logistic_tol > 0.0)) throw InvalidArgument("classifier spec: bad logistic settings");
    if (tuning_folds < 1) throw InvalidArgument("classifier spec: tuning_folds must be positive");
  }

  cart::GrowParams grow_params() const { return {cart_min_split, cart_min_bucket, cart_max_depth}; }
};

struct ConstantParams {
  std::vector<double> counts;
};
struct TreeParams {
  cart::Tree tree;
};
struct LogisticParams {
  Vector coef;
  double log_likelihood = 0.0;
};

struct FittedModel {
  ClassifierSpec spec;
  int class_arity = 2;
  std::size_t n_features = 0;
  std::variant<ConstantParams, TreeParams, LogisticParams> params;
  double chosen_cp = std::numeric_limits<double>::quiet_NaN();
  double tuning_accuracy = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
  int iterations = 0;

  bool is_constant() const { return std::holds_alternative<ConstantParams>(params); }
};

namespace detail {

inline int distinct_labels(const Labels& y, int arity) {
  std::vector<char> seen(static_cast<std::size_t>(arity), 0);
  int d = 0;
  for (int v : y) {
    if (v < 0 || v >= arity) throw InvalidArgument("fit: label outside [0, arity)");
    if (!seen[static_cast<std::size_t>(v)]) {
      seen[static_cast<std::size_t>(v)] = 1;
      ++d;
    }
  }
  return d;
}

inline Matrix take_rows(const Matrix& x, const Indices& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline Labels take(const Labels& y, const Indices& rows) {
  Labels out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

/// Index of the cp with the best k-fold accuracy; ties go to the larger cp.
inline std::pair<std::size_t, double> tune_cp(const ClassifierSpec& spec, const Matrix& x, const Labels& y, int arity,
                                              std::uint64_t seed) {
  const auto& grid = spec.cart_cp_grid;
  if (grid.size() == 1 || spec.tuning_folds < 2 || y.size() < static_cast<std::size_t>(spec.tuning_folds))
    return {0, std::numeric_limits<double>::quiet_NaN()};
  std::vector<double> correct(grid.size(), 0.0);
  for (const auto& fold : stratified_kfold(y, arity, spec.tuning_folds, seed)) {
    const Matrix xt = take_rows(x, fold.train);
    const Labels yt = take(y, fold.train);
    cart::Tree tree = cart::grow(xt, yt, arity, spec.grow_params());
    cart::compute_collapse_alphas(tree);
    std::vector<double> prob(static_cast<std::size_t>(arity));
    for (auto r : fold.test) {
      const double* row = x.row(static_cast<Eigen::Index>(r)).data();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto& leaf = tree.nodes[static_cast<std::size_t>(tree.leaf_for(row, grid[g]))];
        cart::leaf_probabilities(leaf.counts, prob.data());
        const auto pred = std::max_element(prob.begin(), prob.end()) - prob.begin();
        if (pred == y[r]) correct[g] += 1.0;
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (correct[g] > correct[best]) best = g;
  return {best, correct[best] / static_cast<double>(y.size())};
}

}  // namespace detail

/// Majority model with Laplace-smoothed class frequencies.
inline FittedModel fit_constant(const ClassifierSpec& spec, std::size_t n_features, const Labels& y, int arity) {
  FittedModel m;
  m.spec = spec;
  m.class_arity = arity;
  m.n_features = n_features;
  ConstantParams c;
  c.counts.assign(static_cast<std::size_t>(arity), 0.0);
  for (int v : y) c.counts[static_cast<std::size_t>(v)] += 1.0;
  m.params = std::move(c);
  return m;
}

/// Fits one model on labels 0..arity-1. Throws DegenerateInput when fewer
/// than two labels occur; logistic regression accepts arity 2 only.
inline FittedModel fit(const ClassifierSpec& spec, const Matrix& x, const Labels& y, int arity, std::uint64_t seed) {
  spec.validate();
  if (arity < 2) throw InvalidArgument("fit: arity must be at least 2");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw InvalidArgument("fit: row/label count mismatch");
  if (y.size() < 2) throw DegenerateInput("fit: fewer than two rows");
  if (detail::distinct_labels(y, arity) < 2) throw DegenerateInput("fit: single class present");

  FittedModel m;
  m.spec = spec;
  m.class_arity = arity;
  m.n_features = static_cast<std::size_t>(x.cols());
  if (spec.kind == LearnerKind::cart) {
    auto [best, acc] = detail::tune_cp(spec, x, y, arity, seed);
    cart::Tree tree = cart::grow(x, y, arity, spec.grow_params());
    cart::compute_collapse_alphas(tree);
    m.chosen_cp = spec.cart_cp_grid[best];
    m.tuning_accuracy = acc;
    m.params = TreeParams{std::move(tree)};
  } else {
    if (arity != 2) throw InvalidArgument("fit: logistic regression is binary; use One-vs-All or a hierarchy");
    auto f = logistic::fit(x, y, spec.logistic_max_iter, spec.logistic_tol);
    m.converged = f.converged;
    m.iterations = f.iterations;
    m.params = LogisticParams{std::move(f.coef), f.log_likelihood};
  }
  return m;
}

/// fit(), falling back to the constant model on degenerate input.
inline FittedModel fit_or_constant(const ClassifierSpec& spec, const Matrix& x, const Labels& y, int arity,
                                   std::uint64_t seed) {
  try {
    return fit(spec, x, y, arity, seed);
  } catch (const DegenerateInput&) {
    return fit_constant(spec, static_cast<std::size_t>(x.cols()), y, arity);
  }
}

/// Rows are class distributions summing to one.
inline Matrix predict_proba(const FittedModel& m, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.n_features)
    throw InvalidArgument("predict_proba: expected " + std::to_string(m.n_features) + " columns, got " +
                          std::to_string(x.cols()));
  Matrix out(x.rows(), m.class_arity);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          std::vector<double> row(static_cast<std::size_t>(m.class_arity));
          cart::leaf_probabilities(p.counts, row.data());
          for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (int c = 0; c < m.class_arity; ++c) out(i, c) = row[static_cast<std::size_t>(c)];
        } else if constexpr (std::is_same_v<P, TreeParams>) {
          for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const auto& leaf = p.tree.nodes[static_cast<std::size_t>(p.tree.leaf_for(x.row(i).data(), m.chosen_cp))];
            cart::leaf_probabilities(leaf.counts, out.row(i).data());
          }
        } else {
          const Vector pos = logistic::predict(p.coef, x);
          out.col(1) = pos;
          out.col(0) = (1.0 - pos.array()).matrix();
        }
      },
      m.params);
  return out;
}

/// Row-wise argmax, ties to the lowest index.
inline Labels argmax_rows(const Matrix& scores) {
  Labels out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

inline Labels predict(const FittedModel& m, const Matrix& x) { return argmax_rows(predict_proba(m, x)); }

/// One model over all n classes. CART splits natively on multi-class Gini.
inline FittedModel fit_single_multiclass(const ClassifierSpec& spec, const Matrix& x, const Labels& y, int n_classes,
                                         std::uint64_t seed) {
  if (spec.kind == LearnerKind::logistic && n_classes > 2)
    throw InvalidArgument("single multi-class classifier: logistic regression is binary only");
  return fit(spec, x, y, n_classes, seed);
}

struct OvaModel {
  std::vector<FittedModel> binaries;  // binaries[c]: class c (label 1) vs rest
  int n_classes = 0;
};

inline OvaModel fit_ova(const ClassifierSpec& spec, const Matrix& x, const Labels& y, int n_classes,
                        std::uint64_t seed) {
  if (n_classes < 2) throw InvalidArgument("One-vs-All: need at least two classes");
  OvaModel ova;
  ova.n_classes = n_classes;
  for (int c = 0; c < n_classes; ++c) {
    Labels yc(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) yc[i] = y[i] == c ? 1 : 0;
    ova.binaries.push_back(fit_or_constant(spec, x, yc, 2, derive_seed(seed, {static_cast<std::uint64_t>(c)})));
  }
  return ova;
}

/// Positive-class probabilities of each binary model, renormalised per row.
inline Matrix predict_proba(const OvaModel& ova, const Matrix& x) {
  Matrix out(x.rows(), ova.n_classes);
  for (int c = 0; c < ova.n_classes; ++c) out.col(c) = predict_proba(ova.binaries[static_cast<std::size_t>(c)], x).col(1);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0) out.row(i) /= s;
    else out.row(i).setConstant(1.0 / ova.n_classes);
  }
  return out;
}

inline Labels predict(const OvaModel& ova, const Matrix& x) { return argmax_rows(predict_proba(ova, x)); }

// ---------------------------------------------------------------- JSON dumps

inline nlohmann::json to_json(const ClassifierSpec& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  if (s.kind == LearnerKind::cart) {
    j["cp_grid"] = s.cart_cp_grid;
    j["min_split"] = s.cart_min_split;
    j["min_bucket"] = s.cart_min_bucket;
    j["max_depth"] = s.cart_max_depth;
    j["tuning_folds"] = s.tuning_folds;
  } else {
    j["max_iter"] = s.logistic_max_iter;
    j["tol"] = s.logistic_tol;
  }
  return j;
}

inline ClassifierSpec classifier_spec_from_json(const nlohmann::json& j) {
  ClassifierSpec s;
  const std::string kind = j.value("kind", "cart");
  if (kind == "cart") s.kind = LearnerKind::cart;
  else if (kind == "logistic") s.kind = LearnerKind::logistic;
  else throw InvalidArgument("classifier spec: unknown kind '" + kind + "'");
  if (j.contains("cp_grid")) s.cart_cp_grid = j.at("cp_grid").get<std::vector<double>>();
  s.cart_min_split = j.value("min_split", s.cart_min_split);
  s.cart_min_bucket = j.value("min_bucket", s.cart_min_bucket);
  s.cart_max_depth = j.value("max_depth", s.cart_max_depth);
  s.tuning_folds = j.value("tuning_folds", s.tuning_folds);
  s.logistic_max_iter = j.value("max_iter", s.logistic_max_iter);
  s.logistic_tol = j.value("tol", s.logistic_tol);
  s.validate();
  return s;
}

/// Inspection summary; trees are exported pruned at the chosen cp.
inline nlohmann::json to_json(const FittedModel& m) {
  nlohmann::json j;
  j["spec"] = to_json(m.spec);
  j["class_arity"] = m.class_arity;
  j["n_features"] = m.n_features;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          j["model"] = "constant";
          j["counts"] = p.counts;
        } else if constexpr (std::is_same_v<P, TreeParams>) {
          j["model"] = "tree";
          j["chosen_cp"] = m.chosen_cp;
          if (!std::isnan(m.tuning_accuracy)) j["tuning_accuracy"] = m.tuning_accuracy;
          const double limit = p.tree.prune_limit(m.chosen_cp);
          std::function<nlohmann::json(int)> node = [&](int i) {
            const auto& nd = p.tree.nodes[static_cast<std::size_t>(i)];
            nlohmann::json n;
            n["counts"] = nd.counts;
            if (!p.tree.acts_as_leaf(nd, limit)) {
              n["feature"] = nd.feature;
              n["threshold"] = nd.threshold;
              n["left"] = node(nd.left);
              n["right"] = node(nd.right);
            }
            return n;
          };
          j["tree"] = node(0);
          j["leaves"] = p.tree.leaf_count(m.chosen_cp);
        } else {
          j["model"] = "logistic";
          j["coefficients"] = std::vector<double>(p.coef.data(), p.coef.data() + p.coef.size());
          j["log_likelihood"] = p.log_likelihood;
          j["converged"] = m.converged;
          j["iterations"] = m.iterations;
        }
      },
      m.params);
  return j;
}

}  // namespace dendro
