#include "sfocc/rngmath.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace sfocc {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Weyl increments with few bit transitions give correlated outputs; patch
// them the same way SplitMix does when splitting.
std::uint64_t mix_increment(std::uint64_t z) {
  z = mix64(z) | 1ULL;
  if (std::popcount(z ^ (z >> 1)) < 24) z ^= 0xaaaaaaaaaaaaaaaaULL;
  return z;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  key_ = mix64(seed ^ mix64(stream_id * kGolden + 0x632be59bd9b4e019ULL));
  increment_ = mix_increment(key_ ^ mix64(stream_id + 0x8cb92ba72f3d8dd7ULL));
}

RandomStream::result_type RandomStream::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * increment_);
}

double RandomStream::uniform() {
  // 53 random bits, shifted by half an ulp so 0 and 1 are excluded.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() { return normal_(*this); }

double RandomStream::exponential() { return -std::log(uniform()); }

double RandomStream::gamma(double shape, double scale) {
  return std::gamma_distribution<double>(shape, scale)(*this);
}

double RandomStream::inverse_gamma(double shape, double scale) {
  return 1.0 / gamma(shape, 1.0 / scale);
}

bool RandomStream::bernoulli(double p) { return uniform() < p; }

RandomStream RandomStream::substream(std::uint64_t id) const {
  return RandomStream(mix64(key_ ^ mix64(id + kGolden)), stream_id_);
}

// ---------------------------------------------------------------------------
// Polya-Gamma PG(1, c), Devroye alternating-series sampler.

namespace {

using std::numbers::pi;
constexpr double kTrunc = 0.64;

double log_normal_cdf(double x) {
  return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

// Probability of the truncated-exponential proposal piece.
double exponential_mass(double z, double rate) {
  const double b = std::sqrt(1.0 / kTrunc) * (kTrunc * z - 1.0);
  const double a = -std::sqrt(1.0 / kTrunc) * (kTrunc * z + 1.0);
  const double x0 = std::log(rate) + rate * kTrunc;
  const double xb = x0 - z + log_normal_cdf(b);
  const double xa = x0 + z + log_normal_cdf(a);
  const double q_over_p = 4.0 / pi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse-Gaussian(1/z, 1) truncated to (0, kTrunc).
double truncated_inverse_gaussian(double z, RandomStream& rng) {
  double x = kTrunc + 1.0;
  if (z < 1.0 / kTrunc) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > kTrunc) {
      double y = rng.normal();
      y *= y;
      const double mu_y = mu * y;
      x = mu + 0.5 * mu * mu_y - 0.5 * mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

// n-th term of the alternating series for the Jacobi density.
double series_term(int n, double x) {
  const double k = (n + 0.5) * pi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double log_term = -1.5 * (std::log(0.5 * pi) + std::log(x)) +
                          std::log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(log_term);
}

}  // namespace

double sample_polya_gamma(double c, RandomStream& stream) {
  if (!std::isfinite(c)) {
    throw std::invalid_argument("sample_polya_gamma: non-finite tilt " +
                                std::to_string(c));
  }
  const double z = 0.5 * std::fabs(c);
  const double rate = 0.125 * pi * pi + 0.5 * z * z;
  const double mass = exponential_mass(z, rate);
  for (;;) {
    double x = stream.uniform() < mass
                   ? kTrunc + stream.exponential() / rate
                   : truncated_inverse_gaussian(z, stream);
    double s = series_term(0, x);
    const double u = stream.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_term(n, x);
        if (u <= s) return 0.25 * x;
      } else {
        s += series_term(n, x);
        if (u > s) break;
      }
    }
  }
}

double polya_gamma_mean(double c) {
  if (std::fabs(c) < 1e-8) return 0.25;
  return std::tanh(0.5 * c) / (2.0 * c);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd cholesky(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("cholesky: matrix is not square");
  }
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  const double scale = n > 0 ? a.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double tol = 1e-14 * (scale > 0.0 ? scale : 1.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > tol)) {
      throw NumericError("cholesky: matrix not positive definite at pivot " +
                             std::to_string(j),
                         static_cast<long>(j));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& chol_lower,
                           RandomStream& stream) {
  if (chol_lower.rows() != mean.size() || chol_lower.cols() != mean.size()) {
    throw std::invalid_argument("sample_mvn: dimension mismatch");
  }
  Eigen::VectorXd e(mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = stream.normal();
  return mean + chol_lower.triangularView<Eigen::Lower>() * e;
}

Eigen::VectorXd sample_mvn_canonical(const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& information,
                                     RandomStream& stream) {
  if (precision.rows() != information.size()) {
    throw std::invalid_argument("sample_mvn_canonical: dimension mismatch");
  }
  const Eigen::MatrixXd l = cholesky(precision);
  const auto lower = l.triangularView<Eigen::Lower>();
  Eigen::VectorXd mean = lower.solve(information);
  mean = lower.transpose().solve(mean);
  Eigen::VectorXd e(information.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = stream.normal();
  return mean + lower.transpose().solve(e);
}

}  // namespace sfocc
