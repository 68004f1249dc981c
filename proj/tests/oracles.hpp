#pragma once

// Independent reference computations shared by the test executables. Nothing
// here calls into the library's numerical code.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ssai/date.hpp"
#include "ssai/equity_curve.hpp"

namespace oracle {

/// O(n^2) mid-ranks: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double v : x) {
      if (v < x[i]) less += 1.0;
      else if (v == x[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

/// Solves [X 1]' [X 1] beta + diag(lambda, ..., lambda, 0) beta = [X 1]' y with a
/// full-pivot LU. Returns (w_1..w_p, b).
inline Eigen::VectorXd ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  const auto n = X.rows(), p = X.cols();
  Eigen::MatrixXd A(n, p + 1);
  A.leftCols(p) = X;
  A.col(p).setOnes();
  Eigen::MatrixXd M = A.transpose() * A;
  for (Eigen::Index j = 0; j < p; ++j) M(j, j) += lambda;
  return M.fullPivLu().solve(A.transpose() * y);
}

/// One-sample Kolmogorov-Smirnov p-value against U(0, 1) via the asymptotic
/// series with the Stephens small-sample correction.
inline double ks_uniform_p(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / n);
  }
  const double lam = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    q += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lam * lam);
  }
  return std::clamp(q, 0.0, 1.0);
}

inline ssai::EquityCurve curve_from_wealth(const std::vector<double>& wealth,
                                           ssai::Date start = ssai::Date{2020, 1, 6}) {
  ssai::EquityCurve c;
  c.label = "curve";
  c.dates = ssai::business_days(start, wealth.size());
  c.wealth = wealth;
  c.daily_returns.assign(wealth.size(), 0.0);
  for (std::size_t i = 1; i < wealth.size(); ++i) c.daily_returns[i] = wealth[i] / wealth[i - 1] - 1.0;
  c.cost_paid.assign(wealth.size(), 0.0);
  c.holdings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(wealth.size()), 0);
  return c;
}

}  // namespace oracle
