#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sfocc/rngmath.hpp"

using namespace sfocc;

namespace {

// Truncated sum-of-gammas PG(1, c) moments, 200 terms, computed offline.
struct PgMoments {
  double c, mean, var;
};
constexpr PgMoments kPgOracle[] = {
    {0.0, 0.24974669756860407, 0.041666666559730677},
    {0.5, 0.24466535998567984, 0.03965980070152264},
    {1.0, 0.23080527625207733, 0.03444664528158714},
    {2.0, 0.1901452367714169, 0.02135123828942301},
    {5.0, 0.09840812872043411, 0.00368053481884017},
};

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST(RandomStream, SameSeedAndStreamReproduce) {
  RandomStream a(7, 1), b(7, 1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
  RandomStream c(7, 1), d(7, 1);
  for (int i = 0; i < 200; ++i) {
    ASSERT_EQ(c.normal(), d.normal());
    ASSERT_EQ(c.gamma(0.7, 2.0), d.gamma(0.7, 2.0));
    ASSERT_EQ(sample_polya_gamma(1.3, c), sample_polya_gamma(1.3, d));
  }
}

TEST(RandomStream, DistinctStreamsDiffer) {
  RandomStream a(7, 1), b(7, 2), c(8, 1);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a(), y = b(), z = c();
    same_ab += x == y;
    same_ac += x == z;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(RandomStream, DistinctStreamsUncorrelated) {
  RandomStream a(11, 0), b(11, 1);
  const int n = 100000;
  double sxy = 0.0;
  for (int i = 0; i < n; ++i) sxy += a.normal() * b.normal();
  EXPECT_LT(std::abs(sxy / n), 4.0 / std::sqrt(n));
}

TEST(RandomStream, SubstreamDeterministic) {
  const RandomStream parent(3, 4);
  RandomStream a = parent.substream(9), b = parent.substream(9), c = parent.substream(10);
  EXPECT_EQ(a(), b());
  EXPECT_NE(a(), c());
}

TEST(RandomStream, UniformIsOpenInterval) {
  RandomStream s(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = s.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(RandomStream, InverseGammaMean) {
  RandomStream s(5, 0);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += s.inverse_gamma(5.0, 4.0);
  EXPECT_NEAR(sum / n, 1.0, 0.01);  // scale / (shape - 1)
}

TEST(PolyaGamma, OracleMatchesClosedFormWithinTruncation) {
  for (const auto& o : kPgOracle) {
    EXPECT_NEAR(oracle::pg_truncated_mean(o.c, 200), o.mean, 1e-15);
    // Tail of the series beyond 200 terms is about 1 / (2 pi^2 200).
    EXPECT_NEAR(polya_gamma_mean(o.c), o.mean, 3e-4);
  }
}

TEST(PolyaGamma, ZeroTiltMean) {
  RandomStream s(21, 0);
  double sum = 0.0;
  for (int i = 0; i < 1000000; ++i) sum += sample_polya_gamma(0.0, s);
  EXPECT_NEAR(sum / 1e6, 0.25, 0.002);
}

TEST(PolyaGamma, UnitTiltMean) {
  RandomStream s(22, 0);
  double sum = 0.0;
  for (int i = 0; i < 1000000; ++i) sum += sample_polya_gamma(1.0, s);
  EXPECT_NEAR(sum / 1e6, 0.231059, 0.002);
}

TEST(PolyaGamma, MeanAndVarianceWithinOnePercentOfOracle) {
  RandomStream s(23, 0);
  for (const auto& o : kPgOracle) {
    const int n = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_polya_gamma(o.c, s);
      ASSERT_GT(x, 0.0);
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = (sum2 - n * mean * mean) / (n - 1);
    EXPECT_LT(std::abs(mean - o.mean) / o.mean, 0.01) << "c=" << o.c;
    EXPECT_LT(std::abs(var - o.var) / o.var, 0.01) << "c=" << o.c;
  }
}

TEST(PolyaGamma, SignSymmetric) {
  RandomStream a(31, 0), b(31, 1);
  const int n = 100000;
  std::vector<double> pos(n), neg(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = sample_polya_gamma(1.7, a);
    neg[i] = sample_polya_gamma(-1.7, b);
  }
  // 1% critical value of the two-sample statistic.
  EXPECT_LT(ks_statistic(pos, neg), 1.628 * std::sqrt(2.0 / n));
}

TEST(PolyaGamma, LargeTiltPositive) {
  RandomStream s(32, 0);
  for (double c : {30.0, 200.0, -500.0}) {
    for (int i = 0; i < 1000; ++i) ASSERT_GT(sample_polya_gamma(c, s), 0.0);
  }
}

TEST(PolyaGamma, NonFiniteTiltRejected) {
  RandomStream s(1, 0);
  EXPECT_THROW(sample_polya_gamma(NAN, s), std::invalid_argument);
  EXPECT_THROW(sample_polya_gamma(INFINITY, s), std::invalid_argument);
}

TEST(SampleMvn, IdentityVariances) {
  RandomStream s(41, 0);
  const int n = 100000;
  Eigen::Vector2d sum2 = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) sum2 += sample_mvn(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), s).array().square().matrix();
  EXPECT_NEAR(sum2(0) / n, 1.0, 0.02);
  EXPECT_NEAR(sum2(1) / n, 1.0, 0.02);
}

TEST(SampleMvn, NearDegenerate) {
  RandomStream s(42, 0);
  Eigen::VectorXd mean(1);
  mean << 5.0;
  Eigen::MatrixXd l(1, 1);
  l << 1e-4;
  for (int i = 0; i < 10000; ++i) ASSERT_NEAR(sample_mvn(mean, l, s)(0), 5.0, 0.01);
}

TEST(SampleMvn, CovarianceMoments) {
  RandomStream s(43, 0);
  Eigen::Matrix2d cov;
  cov << 4, 2, 2, 3;
  const Eigen::MatrixXd l = cholesky(cov);
  const int n = 100000;
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_mvn(Eigen::Vector2d::Zero(), l, s);
    acc += x * x.transpose();
  }
  EXPECT_LT(((acc / n) - cov).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SampleMvn, DimensionMismatch) {
  RandomStream s(1, 0);
  EXPECT_THROW(sample_mvn(Eigen::Vector3d::Zero(), Eigen::Matrix2d::Identity(), s), std::invalid_argument);
}

TEST(SampleMvnCanonical, MatchesMomentForm) {
  RandomStream s(44, 0);
  Eigen::Matrix2d prec;
  prec << 2.0, 0.5, 0.5, 1.0;
  const Eigen::Vector2d b(1.0, -1.0);
  const Eigen::Matrix2d cov = prec.inverse();
  const Eigen::Vector2d mean = cov * b;
  const int n = 100000;
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_mvn_canonical(prec, b, s);
    m += x;
    acc += (x - mean) * (x - mean).transpose();
  }
  EXPECT_LT((m / n - mean).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT((acc / n - cov).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Cholesky, Identity) {
  EXPECT_TRUE(cholesky(Eigen::Matrix3d::Identity()).isApprox(Eigen::Matrix3d::Identity()));
}

TEST(Cholesky, TwoByTwo) {
  Eigen::Matrix2d a;
  a << 4, 2, 2, 3;
  Eigen::Matrix2d expect;
  expect << 2, 0, 1, 1.4142135623730951;
  const Eigen::MatrixXd l = cholesky(a);
  EXPECT_LT((l - expect).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((l * l.transpose() - a).norm() / a.norm(), 1e-10);
}

TEST(Cholesky, IndefiniteReportsPivot) {
  Eigen::Matrix2d a;
  a << 1, 2, 2, 1;
  try {
    cholesky(a);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.index(), 1);
  }
}

TEST(Cholesky, ReconstructsRandomSpd) {
  RandomStream s(45, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 1 + rep % 40;
    Eigen::MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = s.normal();
    const Eigen::MatrixXd a = g * g.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd l = cholesky(a);
    EXPECT_TRUE(l.isLowerTriangular());
    EXPECT_LT((l * l.transpose() - a).norm() / a.norm(), 1e-10);
  }
}

TEST(Logistic, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
  EXPECT_GT(logistic(-800.0), -1e-300);
  EXPECT_LE(logistic(800.0), 1.0);
  EXPECT_NEAR(logit(logistic(1.25)), 1.25, 1e-12);
}
