#pragma once

// Spatial correlation functions and the Nearest Neighbor Gaussian Process.
//
// Per-site quantities (neighbor lists, conditional weights, w values) are
// indexed by the site's row in the coordinate matrix. The NNGP ordering is
// recorded separately in NngpGraph::ordering().

#include <algorithm>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sfocc {

enum class CovarianceFamily { exponential, spherical, gaussian, matern };

CovarianceFamily parse_covariance_family(std::string_view name);
std::string_view to_string(CovarianceFamily family);

struct CovarianceSpec {
  CovarianceFamily family = CovarianceFamily::exponential;
  double phi = 1.0;       // decay, units 1/distance
  double sigma_sq = 1.0;  // marginal variance
  double nu = 0.5;        // Matern smoothness: 0.5, 1.5 or 2.5

  /// Throws std::invalid_argument on out-of-domain parameters.
  void check() const;
};

/// Correlation at distance d; exp(-phi d) for the exponential family.
double correlation(const CovarianceSpec& spec, double d);

inline double covariance(const CovarianceSpec& spec, double d) {
  return spec.sigma_sq * correlation(spec, d);
}

/// A site t that lists some site j as its `slot`-th neighbor.
struct NeighborUse {
  int site;
  int slot;
};

class NngpGraph {
 public:
  NngpGraph() = default;

  /// Orders sites by first coordinate (ties: second) and keeps for each site
  /// the m nearest predecessors; m is clamped to J - 1. Throws
  /// std::invalid_argument naming the pair on duplicate coordinates.
  NngpGraph(const Eigen::MatrixX2d& coords, int m);

  int size() const { return static_cast<int>(coords_.rows()); }
  int m() const { return m_; }
  const Eigen::MatrixX2d& coords() const { return coords_; }

  /// ordering()[pos] is the site placed at position pos.
  std::span<const int> ordering() const { return ordering_; }
  int position(int site) const { return position_[site]; }

  /// Neighbors of `site` sorted by distance, ties by lower ordered position.
  std::span<const int> neighbors(int site) const;
  /// Distances from `site` to each of its neighbors.
  std::span<const double> neighbor_distances(int site) const;
  /// Row-major |N|x|N| distances among the neighbors of `site`.
  std::span<const double> neighbor_gram(int site) const;
  /// Sites that condition on `site`.
  std::span<const NeighborUse> uses(int site) const;

  /// Neighbor count for a new location: m, or every site when the graph
  /// is complete (m = J - 1) so prediction reproduces the full GP.
  int prediction_neighbors() const { return m_ >= size() - 1 ? size() : std::max(m_, 1); }

  int total_neighbors() const { return static_cast<int>(neighbors_.size()); }
  int neighbor_offset(int site) const { return offset_[site]; }

  /// Indices of the k sites nearest to `point` (all sites, not only
  /// predecessors), sorted by distance then site index.
  std::vector<int> nearest_sites(const Eigen::Vector2d& point, int k) const;

 private:
  Eigen::MatrixX2d coords_;
  int m_ = 0;
  std::vector<int> ordering_;
  std::vector<int> position_;
  std::vector<int> offset_;  // size J + 1 into neighbors_
  std::vector<int> neighbors_;
  std::vector<double> neighbor_dists_;
  std::vector<int> gram_offset_;
  std::vector<double> gram_;
  std::vector<int> use_offset_;
  std::vector<NeighborUse> uses_;
};

/// Conditional weights B_j and variances F_j of the NNGP, one block per site.
struct NngpFactors {
  std::vector<double> weights;    // aligned with the graph's neighbor storage
  std::vector<int> offset;        // size J + 1
  std::vector<double> variances;  // F_j

  std::span<const double> b(int site) const {
    return {weights.data() + offset[site],
            static_cast<std::size_t>(offset[site + 1] - offset[site])};
  }
  double f(int site) const { return variances[site]; }
};

/// Throws NumericError naming the site whose neighbor covariance is singular.
NngpFactors nngp_factors(const NngpGraph& graph, const CovarianceSpec& spec);

/// log N(w | 0, C~) where the factors were computed with `spec`; when the
/// factors were built at unit variance, `variance_scale` rescales them.
double nngp_log_density(std::span<const double> w, const NngpGraph& graph,
                        const NngpFactors& factors,
                        double variance_scale = 1.0);

double nngp_log_density(std::span<const double> w, const NngpGraph& graph,
                        const CovarianceSpec& spec);

struct KrigingResult {
  double mean;
  double variance;
};

/// NNGP conditional distribution of the process at an unobserved location
/// given realized values `w` at all graph sites. A location coincident with
/// a graph site returns that site's value with zero variance.
KrigingResult conditional_at_new_site(const NngpGraph& graph,
                                      const CovarianceSpec& spec,
                                      const Eigen::Vector2d& new_coord,
                                      std::span<const double> w);

/// Same as above with a precomputed neighbor set (from nearest_sites).
KrigingResult conditional_at_new_site(const NngpGraph& graph,
                                      const CovarianceSpec& spec,
                                      const Eigen::Vector2d& new_coord,
                                      std::span<const int> neighbor_sites,
                                      std::span<const double> w);

/// Smallest and largest nonzero inter-site distances.
std::pair<double, double> distance_range(const Eigen::MatrixX2d& coords);

}  // namespace sfocc
