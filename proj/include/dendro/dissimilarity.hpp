#pragma once

// Class-pairwise dissimilarities. Representative-based: distances between
// class centroids. Classifier-based: separability read off a resampled
// auxiliary classifier, either from its confusion matrix (pairwise subset
// accuracy, or distances between normalised confusion rows) or from its
// probability outputs restricted to each class pair.
//
// Larger values always mean "easier to separate", i.e. more dissimilar.

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dendro/audit.hpp"
#include "dendro/dataset.hpp"
#include "dendro/learners.hpp"

namespace dendro {

struct DissimilarityMatrix {
  Matrix values;
  std::string method_tag;

  int n() const { return static_cast<int>(values.rows()); }
  double operator()(int j, int k) const { return values(j, k); }

  void check() const {
    if (values.rows() != values.cols()) throw InvalidArgument("dissimilarity: matrix not square");
    for (Eigen::Index j = 0; j < values.rows(); ++j) {
      if (values(j, j) != 0.0) throw InvalidArgument("dissimilarity: nonzero diagonal");
      for (Eigen::Index k = 0; k < values.cols(); ++k) {
        if (!std::isfinite(values(j, k)) || values(j, k) < 0.0)
          throw InvalidArgument("dissimilarity: negative or non-finite entry");
        if (std::abs(values(j, k) - values(k, j)) > 1e-12) throw InvalidArgument("dissimilarity: not symmetric");
      }
    }
  }
};

struct ConfusionMatrix {
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts;  // rows true, cols predicted

  long long operator()(int t, int p) const { return counts(t, p); }
  int n() const { return static_cast<int>(counts.rows()); }
};

enum class Metric { euclidean, cosine };

// --------------------------------------------------------- representative based

/// Row c is the arithmetic mean of the rows labelled c.
inline Matrix class_centroids(const Dataset& ds) {
  audit::touch(ds, "class_centroids");
  const int n = ds.n_classes();
  Matrix c = Matrix::Zero(n, static_cast<Eigen::Index>(ds.cols()));
  std::vector<double> counts(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    c.row(ds.labels[i]) += ds.features.row(static_cast<Eigen::Index>(i));
    counts[static_cast<std::size_t>(ds.labels[i])] += 1.0;
  }
  for (int k = 0; k < n; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0.0)
      throw InvalidArgument("class_centroids: class '" + ds.class_names[static_cast<std::size_t>(k)] + "' is empty");
    c.row(k) /= counts[static_cast<std::size_t>(k)];
  }
  return c;
}

inline double metric_distance(Metric metric, const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  if (metric == Metric::euclidean) return (a - b).norm();
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine distance: zero-norm representative");
  return std::max(0.0, 1.0 - a.dot(b) / (na * nb));
}

inline DissimilarityMatrix distance_matrix(const Matrix& representatives, Metric metric, std::string tag) {
  const auto n = representatives.rows();
  DissimilarityMatrix d{Matrix::Zero(n, n), std::move(tag)};
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = j + 1; k < n; ++k)
      d.values(j, k) = d.values(k, j) = metric_distance(metric, representatives.row(j), representatives.row(k));
  d.check();
  return d;
}

inline DissimilarityMatrix rbd_matrix(const Dataset& ds, Metric metric = Metric::euclidean) {
  audit::touch(ds, "rbd_matrix");
  return distance_matrix(class_centroids(ds), metric, metric == Metric::euclidean ? "rbd-euclidean" : "rbd-cosine");
}

// --------------------------------------------------------------- classifier based

inline ConfusionMatrix confusion_matrix(const Labels& truth, const Labels& predicted, int n) {
  if (truth.size() != predicted.size()) throw InvalidArgument("confusion_matrix: length mismatch");
  ConfusionMatrix m{decltype(ConfusionMatrix::counts)::Zero(n, n)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n || predicted[i] < 0 || predicted[i] >= n)
      throw InvalidArgument("confusion_matrix: label out of range");
    ++m.counts(truth[i], predicted[i]);
  }
  return m;
}

/// Accuracy inside the 2x2 sub-block of classes j and k:
/// (m_jj + m_kk) / (m_jj + m_kk + m_jk + m_kj). nullopt when the block is empty.
inline std::optional<double> confusion_subset_dissimilarity(const ConfusionMatrix& m, int j, int k) {
  const long long hit = m(j, j) + m(k, k);
  const long long total = hit + m(j, k) + m(k, j);
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

/// Pairwise proxy: among rows whose true label is j or k, the fraction where
/// the larger of P(j|x), P(k|x) points at the true label (ties go to the lower
/// class index). nullopt when no such rows exist.
inline std::optional<double> ava_proxy_dissimilarity(const Matrix& probas, const Labels& truth, int j, int k) {
  if (static_cast<std::size_t>(probas.rows()) != truth.size()) throw InvalidArgument("ava_proxy: length mismatch");
  const int lo = std::min(j, k), hi = std::max(j, k);
  std::size_t rows = 0, correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int y = truth[i];
    if (y != lo && y != hi) continue;
    ++rows;
    const auto r = static_cast<Eigen::Index>(i);
    const int pick = probas(r, hi) > probas(r, lo) ? hi : lo;
    if (pick == y) ++correct;
  }
  if (rows == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(rows);
}

/// Euclidean distances between rows of the row-normalised confusion matrix.
inline DissimilarityMatrix confusion_row_matrix(const ConfusionMatrix& m) {
  const int n = m.n();
  Matrix rows(n, n);
  for (int t = 0; t < n; ++t) {
    const double s = static_cast<double>(m.counts.row(t).sum());
    if (s <= 0) throw InvalidArgument("confusion_row_matrix: class " + std::to_string(t) + " has an empty row");
    for (int p = 0; p < n; ++p) rows(t, p) = static_cast<double>(m(t, p)) / s;
  }
  return distance_matrix(rows, Metric::euclidean, "cbd-confusion-rows");
}

enum class CbdScheme { single_multiclass, ova };
enum class CbdVariant { ava_proxy, confusion_subset, confusion_rows };

/// What to do with a pair that never has held-out evidence.
enum class NoEvidencePolicy { error, coin_flip };

struct CbdPlan {
  ClassifierSpec classifier = ClassifierSpec::cart();
  CbdScheme scheme = CbdScheme::single_multiclass;
  int mc_folds = 10;
  CbdVariant variant = CbdVariant::ava_proxy;
  double train_fraction = 0.9;
  NoEvidencePolicy no_evidence = NoEvidencePolicy::error;

  void validate() const {
    if (mc_folds < 2) throw InvalidArgument("cbd plan: mc_folds must be at least 2");
    classifier.validate();
  }
};

inline std::string to_string(CbdVariant v) {
  switch (v) {
    case CbdVariant::ava_proxy: return "ava_proxy";
    case CbdVariant::confusion_subset: return "confusion_subset";
    case CbdVariant::confusion_rows: return "confusion_rows";
  }
  return "?";
}

struct FoldDissimilarity {
  Matrix values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> has_evidence;
};

/// One resampling fold's matrix from held-out probabilities.
inline FoldDissimilarity fold_dissimilarity(const Matrix& probas, const Labels& truth, int n, CbdVariant variant) {
  FoldDissimilarity f{Matrix::Zero(n, n), decltype(FoldDissimilarity::has_evidence)::Constant(n, n, false)};
  if (variant == CbdVariant::ava_proxy) {
    for (int j = 0; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        if (auto d = ava_proxy_dissimilarity(probas, truth, j, k)) {
          f.values(j, k) = f.values(k, j) = *d;
          f.has_evidence(j, k) = f.has_evidence(k, j) = true;
        }
    return f;
  }
  const auto cm = confusion_matrix(truth, argmax_rows(probas), n);
  if (variant == CbdVariant::confusion_subset) {
    for (int j = 0; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        if (auto d = confusion_subset_dissimilarity(cm, j, k)) {
          f.values(j, k) = f.values(k, j) = *d;
          f.has_evidence(j, k) = f.has_evidence(k, j) = true;
        }
    return f;
  }
  // Confusion rows: classes absent from this held-out set contribute nothing.
  Matrix rows = Matrix::Zero(n, n);
  std::vector<char> present(static_cast<std::size_t>(n), 0);
  for (int t = 0; t < n; ++t) {
    const double s = static_cast<double>(cm.counts.row(t).sum());
    if (s <= 0) continue;
    present[static_cast<std::size_t>(t)] = 1;
    for (int p = 0; p < n; ++p) rows(t, p) = static_cast<double>(cm(t, p)) / s;
  }
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k)
      if (present[static_cast<std::size_t>(j)] && present[static_cast<std::size_t>(k)]) {
        f.values(j, k) = f.values(k, j) = (rows.row(j) - rows.row(k)).norm();
        f.has_evidence(j, k) = f.has_evidence(k, j) = true;
      }
  return f;
}

/// Held-out class probabilities of the auxiliary classifier trained on `train`.
inline Matrix cbd_heldout_probas(const Dataset& train, const Dataset& heldout, const CbdPlan& plan, std::uint64_t seed) {
  const int n = train.n_classes();
  if (plan.scheme == CbdScheme::ova)
    return predict_proba(fit_ova(plan.classifier, train.features, train.labels, n, seed), heldout.features);
  return predict_proba(fit_single_multiclass(plan.classifier, train.features, train.labels, n, seed), heldout.features);
}

/// Averages the per-fold matrices of `mc_folds` stratified resamples of the
/// given data. A pair missing evidence in a fold is left out of that fold's
/// average for the entry.
inline DissimilarityMatrix cbd_matrix(const Dataset& ds, const CbdPlan& plan, std::uint64_t seed) {
  plan.validate();
  audit::touch(ds, "cbd_matrix");
  const int n = ds.n_classes();
  const SplitPlan inner{derive_seed(seed, {0xCBD}), plan.mc_folds, plan.train_fraction};
  Matrix sum = Matrix::Zero(n, n);
  Eigen::MatrixXi folds_with_evidence = Eigen::MatrixXi::Zero(n, n);
  for (int f = 0; f < plan.mc_folds; ++f) {
    const Split s = monte_carlo_fold(ds, inner, f);
    const Dataset tr = ds.subset(s.train, SliceRole::internal);
    const Dataset ho = ds.subset(s.test, SliceRole::internal);
    audit::touch(tr, "cbd_fold_train");
    audit::touch(ho, "cbd_fold_heldout");
    if (ho.rows() == 0) continue;
    const Matrix probas = cbd_heldout_probas(tr, ho, plan, derive_seed(seed, {static_cast<std::uint64_t>(f), 1}));
    const auto fd = fold_dissimilarity(probas, ho.labels, n, plan.variant);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        if (fd.has_evidence(j, k)) {
          sum(j, k) += fd.values(j, k);
          ++folds_with_evidence(j, k);
        }
  }
  DissimilarityMatrix d{Matrix::Zero(n, n), "cbd-" + to_string(plan.variant)};
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k) {
      if (folds_with_evidence(j, k) == 0) {
        if (plan.no_evidence == NoEvidencePolicy::error)
          throw NoEvidence("cbd_matrix: no held-out evidence for classes '" + ds.class_names[static_cast<std::size_t>(j)] +
                               "' and '" + ds.class_names[static_cast<std::size_t>(k)] + "' in any fold",
                           j, k);
        d.values(j, k) = d.values(k, j) = 0.5;
        continue;
      }
      d.values(j, k) = d.values(k, j) = sum(j, k) / folds_with_evidence(j, k);
    }
  d.check();
  return d;
}

/// CSV with a header row of class names.
inline void write_dissimilarity_csv(std::ostream& os, const DissimilarityMatrix& d,
                                    const std::vector<std::string>& class_names) {
  std::vector<std::string> head{"class"};
  head.insert(head.end(), class_names.begin(), class_names.end());
  csv::write_row(os, head);
  for (int j = 0; j < d.n(); ++j) {
    std::vector<std::string> row{class_names[static_cast<std::size_t>(j)]};
    for (int k = 0; k < d.n(); ++k) row.push_back(csv::format_exact(d(j, k)));
    csv::write_row(os, row);
  }
}

}  // namespace dendro
