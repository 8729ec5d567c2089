#pragma once

// Random streams and the small numeric kernels shared by every sampler:
// Polya-Gamma PG(1, c) draws, multivariate normal draws and a dense Cholesky
// with pivot reporting.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sfocc {

/// Thrown when a factorization or linear solve breaks down. `index` names the
/// failing pivot, site or species depending on the caller.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, long index)
      : std::runtime_error(what), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

/// Counter-based generator. The output at position n is a bijective mix of
/// (key, n * increment) where key and increment are derived from
/// (seed, stream_id); substreams are derived without shared state.
/// Satisfies UniformRandomBitGenerator so std distributions accept it.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double exponential();
  double gamma(double shape, double scale);
  /// Inverse-gamma with density proportional to x^(-shape-1) exp(-scale/x).
  double inverse_gamma(double shape, double scale);
  bool bernoulli(double p);

  /// Independent child stream; deterministic in (seed, stream_id, id).
  RandomStream substream(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t increment_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Exact draw from PG(1, c) by Devroye's alternating-series method.
double sample_polya_gamma(double c, RandomStream& stream);

/// Mean of PG(1, c): tanh(c/2) / (2c), 1/4 at c = 0.
double polya_gamma_mean(double c);

/// Lower Cholesky factor of a symmetric positive-definite matrix.
/// Throws NumericError carrying the index of the first non-positive pivot.
Eigen::MatrixXd cholesky(const Eigen::MatrixXd& a);

/// Draw from N(mean, L L^T) given the lower factor L.
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& chol_lower,
                           RandomStream& stream);

/// Draw from N(P^-1 b, P^-1) given a precision P and information vector b.
/// This is the form every conjugate Gibbs update produces.
Eigen::VectorXd sample_mvn_canonical(const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& information,
                                     RandomStream& stream);

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace sfocc
