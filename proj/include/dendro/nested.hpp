#pragma once

// Hierarchical multi-class classification over a dendrogram: one binary model
// per internal node (left subtree = 0, right subtree = 1), hard root-to-leaf
// routing at prediction time, and Best-of-N hierarchy selection.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dendro/audit.hpp"
#include "dendro/dataset.hpp"
#include "dendro/hierarchy.hpp"
#include "dendro/learners.hpp"

namespace dendro {

struct NodeSummary {
  int node = -1;
  std::vector<int> classes;
  std::size_t train_rows = 0;
  bool constant = false;
  double chosen_cp = std::numeric_limits<double>::quiet_NaN();
  double tuning_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedHierarchy {
  Hierarchy hierarchy;
  std::vector<int> model_of_node;  // index into models, -1 for leaves
  std::vector<FittedModel> models;
  std::vector<std::string> class_names;
  std::vector<NodeSummary> summaries;

  const FittedModel& model_at(int node) const {
    return models[static_cast<std::size_t>(model_of_node[static_cast<std::size_t>(node)])];
  }
};

struct Routing {
  int predicted_class = -1;
  std::vector<int> path;  // internal nodes visited, root first
  int evaluations = 0;
};

/// Routes one instance with an arbitrary decision rule
/// `go_right(node_id) -> bool`.
template <typename Decide>
Routing route_with(const Hierarchy& h, Decide&& go_right) {
  Routing r;
  int i = h.root();
  while (!h.node(i).is_leaf()) {
    r.path.push_back(i);
    i = go_right(i) ? h.node(i).right : h.node(i).left;
  }
  r.predicted_class = h.node(i).leaf_class;
  r.evaluations = static_cast<int>(r.path.size());
  return r;
}

/// Fits the node models. Each node sees only rows whose class lies below it;
/// single-sided nodes get the constant model.
inline TrainedHierarchy train_hmc(const Hierarchy& h, const Dataset& train, const ClassifierSpec& spec,
                                  std::uint64_t seed) {
  h.validate();
  audit::touch(train, "train_hmc");
  if (h.n_classes() != train.n_classes()) throw InvalidArgument("train_hmc: hierarchy and dataset class counts differ");
  const auto counts = train.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0) throw InvalidArgument("train_hmc: class '" + train.class_names[c] + "' missing from training data");

  TrainedHierarchy th;
  th.hierarchy = h;
  th.class_names = train.class_names;
  th.model_of_node.assign(h.node_count(), -1);

  std::vector<int> side(static_cast<std::size_t>(train.n_classes()));
  for (int node : h.internal_nodes()) {
    std::fill(side.begin(), side.end(), -1);
    for (int c : h.classes_under(h.node(node).left)) side[static_cast<std::size_t>(c)] = 0;
    for (int c : h.classes_under(h.node(node).right)) side[static_cast<std::size_t>(c)] = 1;
    Indices rows;
    Labels y;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      const int s = side[static_cast<std::size_t>(train.labels[i])];
      if (s < 0) continue;
      rows.push_back(i);
      y.push_back(s);
    }
    const Matrix x = detail::take_rows(train.features, rows);
    FittedModel m = fit_or_constant(spec, x, y, 2, derive_seed(seed, {static_cast<std::uint64_t>(node)}));

    NodeSummary s;
    s.node = node;
    s.classes = h.classes_under(node);
    s.train_rows = rows.size();
    s.constant = m.is_constant();
    s.chosen_cp = m.chosen_cp;
    s.tuning_accuracy = m.tuning_accuracy;
    th.summaries.push_back(std::move(s));

    th.model_of_node[static_cast<std::size_t>(node)] = static_cast<int>(th.models.size());
    th.models.push_back(std::move(m));
  }
  return th;
}

/// Hard routing; at each node the argmax of the binary model decides, ties
/// going left.
inline Routing predict_route(const TrainedHierarchy& th, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  Matrix row = x;
  if (th.models.empty()) throw InvalidArgument("predict_route: untrained hierarchy");
  if (static_cast<std::size_t>(row.cols()) != th.models.front().n_features)
    throw InvalidArgument("predict_route: feature arity mismatch");
  return route_with(th.hierarchy, [&](int node) {
    const Matrix p = predict_proba(th.model_at(node), row);
    return p(0, 1) > p(0, 0);
  });
}

struct Evaluation {
  double accuracy = 0.0;
  double mean_evaluations = 0.0;
  int max_evaluations = 0;
  Labels predictions;
  std::vector<int> evaluations;
};

/// Batch version of predict_route over every row: rows are partitioned
/// node by node so each node model predicts once on its share.
inline Evaluation evaluate(const TrainedHierarchy& th, const Dataset& test) {
  if (test.rows() == 0) throw InvalidArgument("evaluate: empty test set");
  const Hierarchy& h = th.hierarchy;
  Evaluation ev;
  ev.predictions.assign(test.rows(), -1);
  ev.evaluations.assign(test.rows(), 0);

  struct Job {
    int node;
    Indices rows;
  };
  Indices all(test.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<Job> stack;
  stack.push_back({h.root(), std::move(all)});
  while (!stack.empty()) {
    Job job = std::move(stack.back());
    stack.pop_back();
    const auto& nd = h.node(job.node);
    if (nd.is_leaf()) {
      for (auto r : job.rows) ev.predictions[r] = nd.leaf_class;
      continue;
    }
    if (job.rows.empty()) continue;
    const Matrix p = predict_proba(th.model_at(job.node), detail::take_rows(test.features, job.rows));
    Job left{nd.left, {}}, right{nd.right, {}};
    for (std::size_t i = 0; i < job.rows.size(); ++i) {
      ++ev.evaluations[job.rows[i]];
      (p(static_cast<Eigen::Index>(i), 1) > p(static_cast<Eigen::Index>(i), 0) ? right : left).rows.push_back(job.rows[i]);
    }
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  std::size_t correct = 0;
  double evals = 0.0;
  for (std::size_t i = 0; i < test.rows(); ++i) {
    correct += ev.predictions[i] == test.labels[i];
    evals += ev.evaluations[i];
    ev.max_evaluations = std::max(ev.max_evaluations, ev.evaluations[i]);
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(test.rows());
  ev.mean_evaluations = evals / static_cast<double>(test.rows());
  return ev;
}

/// Per-node CSV: node id, classes below it, rows seen, chosen cp, tuning accuracy.
inline void write_node_summaries(std::ostream& os, const TrainedHierarchy& th) {
  csv::write_row(os, {"node", "depth", "classes", "train_rows", "constant", "chosen_cp", "tuning_accuracy"});
  for (const auto& s : th.summaries) {
    std::string cls;
    for (std::size_t i = 0; i < s.classes.size(); ++i) {
      if (i) cls += ' ';
      cls += th.class_names[static_cast<std::size_t>(s.classes[i])];
    }
    auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format_exact(v); };
    csv::write_row(os, {std::to_string(s.node), std::to_string(th.hierarchy.depth_of(s.node)), cls,
                        std::to_string(s.train_rows), s.constant ? "1" : "0", num(s.chosen_cp),
                        num(s.tuning_accuracy)});
  }
}

// --------------------------------------------------------------- Best-of-N

struct SelectionResult {
  std::size_t chosen = 0;
  std::vector<double> cv_accuracy;
};

/// Scores every candidate by stratified k-fold accuracy of a hierarchy
/// trained on the remaining folds; the first best candidate wins.
inline SelectionResult select_best_hierarchy(const Dataset& train, const std::vector<Hierarchy>& candidates,
                                             const ClassifierSpec& spec, int cv_folds, std::uint64_t seed) {
  audit::touch(train, "select_best_hierarchy");
  if (candidates.empty()) throw InvalidArgument("select_best_hierarchy: no candidates");
  SelectionResult res;
  if (candidates.size() == 1) {
    res.cv_accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
    return res;
  }
  for (auto c : train.class_counts())
    if (c < 2) throw InvalidArgument("select_best_hierarchy: every class needs two rows for cross-validation");
  const auto folds = stratified_kfold(train.labels, train.n_classes(), cv_folds, derive_seed(seed, {0xB0}));
  std::vector<Dataset> fold_train, fold_test;
  for (const auto& f : folds) {
    fold_train.push_back(train.subset(f.train, SliceRole::internal));
    fold_test.push_back(train.subset(f.test, SliceRole::internal));
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double correct = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto th = train_hmc(candidates[i], fold_train[f], spec, derive_seed(seed, {i, f}));
      correct += evaluate(th, fold_test[f]).accuracy * static_cast<double>(fold_test[f].rows());
    }
    res.cv_accuracy.push_back(correct / static_cast<double>(train.rows()));
    if (res.cv_accuracy.back() > res.cv_accuracy[res.chosen]) res.chosen = i;
  }
  return res;
}

/// Samples `n_candidates` uniform hierarchies and keeps the best by
/// cross-validation on the training data only.
inline Hierarchy best_of(const Dataset& train, const ClassifierSpec& spec, int n_candidates, int cv_folds,
                         std::uint64_t seed) {
  if (n_candidates < 1) throw InvalidArgument("best_of: need at least one candidate");
  Rng rng(derive_seed(seed, {0x5A}));
  std::vector<Hierarchy> cands;
  for (int i = 0; i < n_candidates; ++i) cands.push_back(sample_random_hierarchy(train.n_classes(), rng));
  const auto sel = select_best_hierarchy(train, cands, spec, cv_folds, seed);
  return cands[sel.chosen];
}

inline Hierarchy best_of_50(const Dataset& train, const ClassifierSpec& spec, std::uint64_t seed) {
  return best_of(train, spec, 50, 3, seed);
}

}  // namespace dendro
