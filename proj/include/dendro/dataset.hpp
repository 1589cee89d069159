#pragma once

// Dataset container, CSV ingestion and stratified resampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dendro/csv.hpp"
#include "dendro/error.hpp"
#include "dendro/rng.hpp"

namespace dendro {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using Indices = std::vector<std::size_t>;

/// Where a slice of data came from. Slices remember the row ids of the
/// originally loaded table so that resampling code can be audited.
enum class SliceRole { full, train, test, internal };

struct Dataset {
  Matrix features;
  Labels labels;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::string name;

  Indices origin;  // row ids in the loaded table
  SliceRole role = SliceRole::full;

  std::size_t rows() const { return labels.size(); }
  std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }
  int n_classes() const { return static_cast<int>(class_names.size()); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  /// Rows in the given order. Class registry is kept intact, so a subset may
  /// have classes with zero instances.
  Dataset subset(std::span<const std::size_t> idx, SliceRole slice_role) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    out.labels.reserve(idx.size());
    out.origin.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= rows()) throw InvalidArgument("subset: row index out of range");
      out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
      out.labels.push_back(labels[idx[i]]);
      out.origin.push_back(origin.empty() ? idx[i] : origin[idx[i]]);
    }
    out.class_names = class_names;
    out.feature_names = feature_names;
    out.name = name;
    out.role = slice_role;
    return out;
  }

  /// Checks the structural invariants. `require_all_classes` is false for
  /// resampled slices.
  void validate(bool require_all_classes = true) const {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw InvalidArgument("dataset: feature rows do not match label count");
    if (!origin.empty() && origin.size() != labels.size())
      throw InvalidArgument("dataset: provenance length mismatch");
    if (!features.allFinite()) throw InvalidArgument("dataset: non-finite feature value");
    const int n = n_classes();
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (int y : labels) {
      if (y < 0 || y >= n) throw InvalidArgument("dataset: label index out of range");
      seen[static_cast<std::size_t>(y)] = 1;
    }
    if (require_all_classes) {
      for (int c = 0; c < n; ++c)
        if (!seen[static_cast<std::size_t>(c)])
          throw InvalidArgument("dataset: class '" + class_names[static_cast<std::size_t>(c)] +
                                "' has zero instances");
    }
  }
};

/// Builds a dataset from numeric features and string labels; class names are
/// sorted lexicographically.
inline Dataset make_dataset(Matrix features, const std::vector<std::string>& raw_labels, std::string name = {}) {
  std::set<std::string> distinct(raw_labels.begin(), raw_labels.end());
  Dataset ds;
  ds.class_names.assign(distinct.begin(), distinct.end());
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < ds.class_names.size(); ++i) index[ds.class_names[i]] = static_cast<int>(i);
  ds.labels.reserve(raw_labels.size());
  for (const auto& l : raw_labels) ds.labels.push_back(index[l]);
  ds.features = std::move(features);
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.name = std::move(name);
  ds.origin.resize(ds.labels.size());
  std::iota(ds.origin.begin(), ds.origin.end(), std::size_t{0});
  ds.validate();
  return ds;
}

/// Same, from integer labels 0..n-1 with generated class names.
inline Dataset make_dataset(Matrix features, const Labels& labels, int n_classes, std::string name = {}) {
  Dataset ds;
  ds.features = std::move(features);
  ds.labels = labels;
  for (int c = 0; c < n_classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.name = std::move(name);
  ds.origin.resize(ds.labels.size());
  std::iota(ds.origin.begin(), ds.origin.end(), std::size_t{0});
  ds.validate();
  return ds;
}

/// Label column given by header name or 0-based index.
using LabelColumn = std::variant<std::string, std::size_t>;

inline Dataset load_csv(const std::string& path, const LabelColumn& label_column, bool header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (csv::trim(line).empty()) continue;
    auto fields = csv::split_line(line);
    if (!fields) throw IoError(path + ": line " + std::to_string(line_no) + ": unterminated quote");
    for (auto& f : *fields) f = csv::trim(f);
    if (header && names.empty()) {
      names = std::move(*fields);
      continue;
    }
    rows.push_back(std::move(*fields));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");
  const std::size_t ncol = header ? names.size() : rows.front().size();
  if (!header)
    for (std::size_t j = 0; j < ncol; ++j) names.push_back("col" + std::to_string(j));
  {
    std::set<std::string> uniq;
    for (const auto& n : names)
      if (!uniq.insert(n).second) throw IoError(path + ": duplicate column name '" + n + "'");
  }

  std::size_t label_idx = 0;
  if (const auto* s = std::get_if<std::string>(&label_column)) {
    auto it = std::find(names.begin(), names.end(), *s);
    if (it == names.end()) throw IoError(path + ": label column '" + *s + "' not found");
    label_idx = static_cast<std::size_t>(it - names.begin());
  } else {
    label_idx = std::get<std::size_t>(label_column);
    if (label_idx >= ncol) throw IoError(path + ": label column index out of range");
  }

  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncol - 1));
  std::vector<std::string> raw_labels;
  raw_labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::size_t data_row = i + 1;
    if (r.size() != ncol)
      throw IoError(path + ": row " + std::to_string(data_row) + " has " + std::to_string(r.size()) +
                    " fields, expected " + std::to_string(ncol));
    Eigen::Index out_col = 0;
    for (std::size_t j = 0; j < ncol; ++j) {
      if (j == label_idx) continue;
      auto v = csv::parse_finite(r[j]);
      if (!v)
        throw IoError(path + ": row " + std::to_string(data_row) + ", column " + std::to_string(j) + " ('" +
                      names[j] + "'): cannot parse '" + r[j] + "' as a finite number");
      x(static_cast<Eigen::Index>(i), out_col++) = *v;
    }
    if (r[label_idx].empty()) throw IoError(path + ": row " + std::to_string(data_row) + ": empty label");
    raw_labels.push_back(r[label_idx]);
  }

  std::string stem = path;
  if (auto p = stem.find_last_of('/'); p != std::string::npos) stem = stem.substr(p + 1);
  if (auto p = stem.find_last_of('.'); p != std::string::npos) stem = stem.substr(0, p);
  Dataset ds = make_dataset(std::move(x), raw_labels, stem);
  ds.feature_names.clear();
  for (std::size_t j = 0; j < ncol; ++j)
    if (j != label_idx) ds.feature_names.push_back(names[j]);
  return ds;
}

/// Writes features then a trailing "label" column; reloads exactly.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  std::vector<std::string> head = ds.feature_names;
  head.push_back("label");
  csv::write_row(out, head);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    std::vector<std::string> f;
    f.reserve(ds.cols() + 1);
    for (std::size_t j = 0; j < ds.cols(); ++j)
      f.push_back(csv::format_exact(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    f.push_back(ds.class_names[static_cast<std::size_t>(ds.labels[i])]);
    csv::write_row(out, f);
  }
}

struct SplitPlan {
  std::uint64_t seed = 0;
  int n_folds = 20;
  double train_fraction = 0.9;
};

struct Split {
  Indices train;
  Indices test;
};

namespace detail {
inline std::vector<Indices> rows_by_class(const Labels& labels, int n_classes) {
  std::vector<Indices> by(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by[static_cast<std::size_t>(labels[i])].push_back(i);
  return by;
}
}  // namespace detail

/// Number of training rows a class of `count` instances contributes:
/// ceil(fraction * count), but a class with two or more rows always keeps one
/// for testing.
inline std::size_t stratified_train_count(std::size_t count, double train_fraction) {
  const double want = train_fraction * static_cast<double>(count);
  auto k = static_cast<std::size_t>(std::ceil(want - 1e-9));
  return count >= 2 ? std::min(k, count - 1) : std::min(k, count);
}

/// One stratified Monte Carlo fold. Pure function of (labels, plan, fold).
inline Split monte_carlo_fold(const Dataset& ds, const SplitPlan& plan, int fold) {
  Rng rng(derive_seed(plan.seed, {static_cast<std::uint64_t>(fold)}));
  Split s;
  for (auto& members : detail::rows_by_class(ds.labels, ds.n_classes())) {
    if (members.empty()) continue;
    shuffle(std::span<std::size_t>(members), rng);
    const std::size_t k = stratified_train_count(members.size(), plan.train_fraction);
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline std::vector<Split> monte_carlo_splits(const Dataset& ds, const SplitPlan& plan) {
  if (plan.n_folds < 1) throw InvalidArgument("split plan: n_folds must be positive");
  if (!(plan.train_fraction > 0.0 && plan.train_fraction < 1.0))
    throw InvalidArgument("split plan: train_fraction must lie in (0,1)");
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0 && stratified_train_count(counts[c], plan.train_fraction) < 1)
      throw InvalidArgument("split plan: class '" + ds.class_names[c] + "' cannot appear in training");
  std::vector<Split> out;
  out.reserve(static_cast<std::size_t>(plan.n_folds));
  for (int f = 0; f < plan.n_folds; ++f) out.push_back(monte_carlo_fold(ds, plan, f));
  return out;
}

/// Stratified k-fold partition: each class is shuffled and dealt round-robin
/// over the folds, continuing where the previous class stopped.
inline std::vector<Split> stratified_kfold(const Labels& labels, int n_classes, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k-fold: need at least 2 folds");
  if (labels.size() < static_cast<std::size_t>(k)) throw InvalidArgument("k-fold: fewer rows than folds");
  Rng rng(seed);
  std::vector<int> fold_of(labels.size(), 0);
  std::size_t next = 0;
  for (auto& members : detail::rows_by_class(labels, n_classes)) {
    shuffle(std::span<std::size_t>(members), rng);
    for (auto r : members) fold_of[r] = static_cast<int>(next++ % static_cast<std::size_t>(k));
  }
  std::vector<Split> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (int f = 0; f < k; ++f) (fold_of[i] == f ? out[f].test : out[f].train).push_back(i);
  return out;
}

/// Per-column z-scoring fitted on one slice and applied to others.
struct ZScore {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static ZScore fit(const Matrix& x) {
    ZScore z;
    z.mean = x.colwise().mean();
    z.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - z.mean(j)).square().sum() / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
      z.scale(j) = var > 0 ? std::sqrt(var) : 1.0;
    }
    return z;
  }

  void apply(Matrix& x) const {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = (x.row(i) - mean).cwiseQuotient(scale);
  }
};

}  // namespace dendro
