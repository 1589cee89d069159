#pragma once

// Resampled-evaluation statistics: corrected variance for overlapping
// training sets, the corrected resampled paired t-test, significance arrows.

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "dendro/error.hpp"

namespace dendro::stats {

/// Student-t CDF through the regularised incomplete beta function.
inline double t_cdf(double x, double df) {
  if (!(df >= 1.0)) throw InvalidArgument("t_cdf: df must be at least 1");
  if (x == 0.0) return 0.5;
  // P(|T| > |x|) = I_{df/(df+x^2)}(df/2, 1/2)
  const double z = df / (df + x * x);
  const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, z);
  return x > 0 ? 1.0 - tail : tail;
}

struct MeanSe {
  double mean = 0.0;
  double corrected_se = 0.0;
  double sample_variance = 0.0;
};

/// corrected_se = sqrt((1/K + n_test/n_train) * s^2), s^2 the unbiased
/// sample variance of the K values.
inline MeanSe corrected_variance(std::span<const double> values, double n_train, double n_test) {
  const auto k = values.size();
  if (k < 2) throw InvalidArgument("corrected_variance: need at least two folds");
  if (!(n_train > 0) || !(n_test > 0)) throw InvalidArgument("corrected_variance: sizes must be positive");
  MeanSe r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(k);
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.sample_variance = ss / static_cast<double>(k - 1);
  r.corrected_se = std::sqrt((1.0 / static_cast<double>(k) + n_test / n_train) * r.sample_variance);
  return r;
}

struct TTest {
  double mean_diff = 0.0;
  double corrected_se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int df = 0;
  bool degenerate = false;  // zero variance with nonzero mean; p forced to 0
};

inline TTest corrected_resampled_t(std::span<const double> diffs, double n_train, double n_test) {
  const auto ms = corrected_variance(diffs, n_train, n_test);
  TTest t;
  t.mean_diff = ms.mean;
  t.corrected_se = ms.corrected_se;
  t.df = static_cast<int>(diffs.size()) - 1;
  if (ms.corrected_se == 0.0) {
    if (ms.mean == 0.0) return t;
    t.t_stat = ms.mean > 0 ? HUGE_VAL : -HUGE_VAL;
    t.p_value = 0.0;
    t.degenerate = true;
    return t;
  }
  t.t_stat = ms.mean / ms.corrected_se;
  // 2 * (1 - t_cdf(|t|)), evaluated in tail form to keep precision for large |t|.
  const double z = t.df / (t.df + t.t_stat * t.t_stat);
  t.p_value = std::min(1.0, boost::math::ibeta(t.df / 2.0, 0.5, z));
  return t;
}

/// 3 for p <= 0.001, 2 for p <= 0.01, 1 for p <= 0.05, else 0.
inline int arrows_for(double p) {
  if (p <= 0.001) return 3;
  if (p <= 0.01) return 2;
  if (p <= 0.05) return 1;
  return 0;
}

enum class Direction { a_better, b_better, none };

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::a_better: return "a_better";
    case Direction::b_better: return "b_better";
    case Direction::none: return "none";
  }
  return "none";
}

struct FoldAccuracy {
  int fold = 0;
  double accuracy = 0.0;
};

struct ComparisonReport {
  std::string method_a, method_b;
  double mean_diff = 0.0;
  double corrected_se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int arrows = 0;
  Direction direction = Direction::none;
};

/// Paired corrected t-test of a against b. Folds must match one-to-one.
inline ComparisonReport compare(const std::string& tag_a, std::span<const FoldAccuracy> a, const std::string& tag_b,
                                std::span<const FoldAccuracy> b, double n_train, double n_test) {
  if (a.size() != b.size()) throw InvalidArgument("compare: fold counts differ");
  std::vector<double> diffs;
  diffs.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].fold != b[i].fold) throw InvalidArgument("compare: fold ids do not match");
    diffs.push_back(a[i].accuracy - b[i].accuracy);
  }
  const auto t = corrected_resampled_t(diffs, n_train, n_test);
  ComparisonReport r;
  r.method_a = tag_a;
  r.method_b = tag_b;
  r.mean_diff = t.mean_diff;
  r.corrected_se = t.corrected_se;
  r.t_stat = t.t_stat;
  r.p_value = t.p_value;
  r.arrows = arrows_for(t.p_value);
  if (r.arrows > 0) r.direction = t.mean_diff > 0 ? Direction::a_better : Direction::b_better;
  return r;
}

}  // namespace dendro::stats
