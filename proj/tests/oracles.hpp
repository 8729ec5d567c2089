#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library's numerical routines.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Mean of the truncated sum-of-gammas representation of PG(1, c):
/// (1 / 2 pi^2) sum_k 1 / ((k - 1/2)^2 + c^2 / (4 pi^2)).
inline double pg_truncated_mean(double c, int terms) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  double s = 0.0;
  for (int k = terms; k >= 1; --k) {
    const double h = k - 0.5;
    s += 1.0 / (h * h + c * c / (4.0 * pi2));
  }
  return s / (2.0 * pi2);
}

/// One draw of the truncated sum-of-gammas PG(1, c) using exponential
/// variates produced by `exp1`.
template <class Exp1>
double pg_truncated_draw(double c, int terms, Exp1&& exp1) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  double s = 0.0;
  for (int k = 1; k <= terms; ++k) {
    const double h = k - 0.5;
    s += exp1() / (h * h + c * c / (4.0 * pi2));
  }
  return s / (2.0 * pi2);
}

inline double exponential_correlation(double phi, double d) { return std::exp(-phi * d); }

inline Eigen::MatrixXd dense_covariance(const Eigen::MatrixX2d& coords, double phi, double sigma_sq) {
  const Eigen::Index n = coords.rows();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      c(a, b) = sigma_sq * exponential_correlation(phi, (coords.row(a) - coords.row(b)).norm());
    }
  }
  return c;
}

/// log N(w | 0, cov) through an Eigen LDLT factorisation.
inline double dense_mvn_log_density(const Eigen::VectorXd& w, const Eigen::MatrixXd& cov) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const double logdet = ldlt.vectorD().array().log().sum();
  const double quad = w.dot(ldlt.solve(w));
  return -0.5 * (static_cast<double>(w.size()) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

struct Kriging {
  double mean;
  double variance;
};

/// Simple kriging of a zero-mean GP at `s` given values at every site.
inline Kriging dense_kriging(const Eigen::MatrixX2d& coords, const Eigen::VectorXd& w,
                             const Eigen::Vector2d& s, double phi, double sigma_sq) {
  const Eigen::MatrixXd c = dense_covariance(coords, phi, sigma_sq);
  Eigen::VectorXd c0(coords.rows());
  for (Eigen::Index a = 0; a < coords.rows(); ++a) {
    c0(a) = sigma_sq * exponential_correlation(phi, (coords.row(a).transpose() - s).norm());
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
  const Eigen::VectorXd k = ldlt.solve(c0);
  return {k.dot(w), sigma_sq - c0.dot(k)};
}

/// m nearest predecessors of ordered position `pos` by exhaustive search;
/// ties go to the lower ordered position. Returns ordered positions.
inline std::vector<int> brute_force_neighbors(const Eigen::MatrixX2d& ordered_coords, int pos, int m) {
  std::vector<std::pair<double, int>> cand;
  for (int b = 0; b < pos; ++b) {
    cand.emplace_back((ordered_coords.row(pos) - ordered_coords.row(b)).norm(), b);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<int> out;
  for (int t = 0; t < std::min<int>(m, static_cast<int>(cand.size())); ++t) out.push_back(cand[t].second);
  return out;
}

/// P(z = 1 | y) by enumerating z in {0, 1} against the joint
/// p(z) prod_k p(y_k | z); y entries of -1 are skipped.
inline double enumerate_occupancy(double psi, const std::vector<double>& p, const std::vector<int>& y) {
  double joint[2];
  for (int z = 0; z <= 1; ++z) {
    double lik = z == 1 ? psi : 1.0 - psi;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y[k] < 0) continue;
      const double det = z == 1 ? p[k] : 0.0;
      lik *= y[k] == 1 ? det : 1.0 - det;
    }
    joint[z] = lik;
  }
  return joint[1] / (joint[0] + joint[1]);
}

}  // namespace oracle
