#pragma once

// Unregularised binary logistic regression fitted by iteratively reweighted
// least squares (Newton-Raphson on the log-likelihood) with step halving.

#include <cmath>
#include <limits>
#include <vector>

#include "dendro/dataset.hpp"

namespace dendro::logistic {

struct Fit {
  Vector coef;  // intercept first
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // log-likelihood after each accepted iterate
};

inline double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Matrix with_intercept(const Matrix& x) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

/// y in {0,1}. Log-likelihood sum_i y_i z_i - log(1 + e^{z_i}).
inline double log_likelihood(const Matrix& a, const Labels& y, const Vector& beta) {
  const Vector z = a * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) ll += (y[static_cast<std::size_t>(i)] ? z(i) : 0.0) - log1p_exp(z(i));
  return ll;
}

inline Fit fit(const Matrix& x, const Labels& y, int max_iter, double tol) {
  const Matrix a = with_intercept(x);
  const Eigen::Index p = a.cols();
  Fit out;
  out.coef = Vector::Zero(p);
  double ll = log_likelihood(a, y, out.coef);
  out.trace.push_back(ll);
  Vector yv(a.rows());
  for (Eigen::Index i = 0; i < yv.size(); ++i) yv(i) = y[static_cast<std::size_t>(i)];

  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    const Vector z = a * out.coef;
    Vector prob(z.size()), w(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      prob(i) = sigmoid(z(i));
      w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-300);
    }
    const Vector grad = a.transpose() * (yv - prob);
    const Matrix hess = a.transpose() * w.asDiagonal() * a;
    // Minimum-norm Newton direction; aliased columns get zero weight.
    const Vector step = hess.completeOrthogonalDecomposition().solve(grad);
    if (!step.allFinite()) break;

    double scale = 1.0;
    Vector cand = out.coef + step;
    double ll_new = log_likelihood(a, y, cand);
    for (int h = 0; h < 30 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++h) {
      scale *= 0.5;
      cand = out.coef + scale * step;
      ll_new = log_likelihood(a, y, cand);
    }
    if (!(ll_new >= ll - 1e-12 * std::abs(ll))) break;
    const double change = std::abs(ll_new - ll) / std::max(std::abs(ll_new), std::numeric_limits<double>::min());
    out.coef = cand;
    ll = ll_new;
    out.trace.push_back(ll);
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.log_likelihood = ll;
  return out;
}

/// P(y = 1 | x) per row.
inline Vector predict(const Vector& coef, const Matrix& x) {
  Vector z = (x * coef.tail(coef.size() - 1)).array() + coef(0);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
  return z;
}

}  // namespace dendro::logistic
