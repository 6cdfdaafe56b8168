#pragma once

// Brute-force reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace rftl::oracle {

/// Average log evidence from y ~ N(0, F F^T / alpha + I / beta).
inline double evidence(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, double alpha, double beta) {
  const double n = static_cast<double>(F.rows());
  const Eigen::MatrixXd cov =
      F * F.transpose() / alpha + Eigen::MatrixXd::Identity(F.rows(), F.rows()) / beta;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const double logdet = ldlt.vectorD().array().log().sum();
  const double quad = y.dot(ldlt.solve(y));
  return (-0.5 * n * std::log(2 * std::numbers::pi) - 0.5 * logdet - 0.5 * quad) / n;
}

/// Log-grid search over [1e-4, 1e4]^2 followed by successive local zooms.
inline double evidence_grid_max(const Eigen::MatrixXd& F, const Eigen::VectorXd& y) {
  double lo_a = -4, hi_a = 4, lo_b = -4, hi_b = 4;
  double best = -std::numeric_limits<double>::infinity(), ba = 0, bb = 0;
  for (int round = 0; round < 6; ++round) {
    const int g = 60;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double la = lo_a + (hi_a - lo_a) * i / (g - 1);
        const double lb = lo_b + (hi_b - lo_b) * j / (g - 1);
        const double e = evidence(F, y, std::pow(10.0, la), std::pow(10.0, lb));
        if (e > best) best = e, ba = la, bb = lb;
      }
    }
    const double wa = (hi_a - lo_a) / 10, wb = (hi_b - lo_b) / 10;
    lo_a = std::max(-4.0, ba - wa), hi_a = std::min(4.0, ba + wa);
    lo_b = std::max(-4.0, bb - wb), hi_b = std::min(4.0, bb + wb);
  }
  return best;
}

/// Pairwise weighted tau, ranking by a (ties broken by b, then index).
inline double tau_one_side(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a[i] != a[j]) return a[i] > a[j];
    if (b[i] != b[j]) return b[i] > b[j];
    return i < j;
  });
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[order[r]] = 1.0 / (1.0 + static_cast<double>(r));
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double pw = w[i] + w[j];
      den += pw;
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) num += pw;
      if (s < 0) num -= pw;
    }
  }
  return num / den;
}

inline double weighted_tau(const std::vector<double>& x, const std::vector<double>& y) {
  return 0.5 * (tau_one_side(x, y) + tau_one_side(y, x));
}

}  // namespace rftl::oracle
