#include "sfocc/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "sfocc/rngmath.hpp"

namespace sfocc {

CovarianceFamily parse_covariance_family(std::string_view name) {
  if (name == "exponential") return CovarianceFamily::exponential;
  if (name == "spherical") return CovarianceFamily::spherical;
  if (name == "gaussian") return CovarianceFamily::gaussian;
  if (name == "matern") return CovarianceFamily::matern;
  throw std::invalid_argument("unknown covariance family '" +
                              std::string(name) + "'");
}

std::string_view to_string(CovarianceFamily family) {
  switch (family) {
    case CovarianceFamily::exponential: return "exponential";
    case CovarianceFamily::spherical: return "spherical";
    case CovarianceFamily::gaussian: return "gaussian";
    case CovarianceFamily::matern: return "matern";
  }
  return "?";
}

void CovarianceSpec::check() const {
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw std::invalid_argument("covariance: phi must be positive");
  }
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
    throw std::invalid_argument("covariance: sigma_sq must be positive");
  }
  if (family == CovarianceFamily::matern && nu != 0.5 && nu != 1.5 &&
      nu != 2.5) {
    throw std::invalid_argument(
        "covariance: Matern smoothness must be 0.5, 1.5 or 2.5, got " +
        std::to_string(nu));
  }
}

double correlation(const CovarianceSpec& spec, double d) {
  if (!(d >= 0.0)) {
    throw std::invalid_argument("correlation: negative distance");
  }
  const double h = spec.phi * d;
  switch (spec.family) {
    case CovarianceFamily::exponential:
      return std::exp(-h);
    case CovarianceFamily::spherical:
      return h <= 1.0 ? 1.0 - 1.5 * h + 0.5 * h * h * h : 0.0;
    case CovarianceFamily::gaussian:
      return std::exp(-h * h);
    case CovarianceFamily::matern:
      if (spec.nu == 0.5) return std::exp(-h);
      if (spec.nu == 1.5) return (1.0 + h) * std::exp(-h);
      if (spec.nu == 2.5) return (1.0 + h + h * h / 3.0) * std::exp(-h);
      spec.check();
  }
  return 0.0;
}

namespace {

double distance(const Eigen::MatrixX2d& c, int a, int b) {
  return std::hypot(c(a, 0) - c(b, 0), c(a, 1) - c(b, 1));
}

}  // namespace

NngpGraph::NngpGraph(const Eigen::MatrixX2d& coords, int m)
    : coords_(coords) {
  const int n = static_cast<int>(coords.rows());
  if (n < 1) throw std::invalid_argument("NngpGraph: no sites");
  if (m < 1) throw std::invalid_argument("NngpGraph: m must be >= 1");
  if (!coords.allFinite()) {
    throw std::invalid_argument("NngpGraph: non-finite coordinates");
  }
  m_ = std::min(m, std::max(n - 1, 0));

  ordering_.resize(n);
  std::iota(ordering_.begin(), ordering_.end(), 0);
  std::stable_sort(ordering_.begin(), ordering_.end(), [&](int a, int b) {
    if (coords(a, 0) != coords(b, 0)) return coords(a, 0) < coords(b, 0);
    return coords(a, 1) < coords(b, 1);
  });
  position_.resize(n);
  for (int p = 0; p < n; ++p) position_[ordering_[p]] = p;
  for (int p = 1; p < n; ++p) {
    const int a = ordering_[p - 1];
    const int b = ordering_[p];
    if (coords(a, 0) == coords(b, 0) && coords(a, 1) == coords(b, 1)) {
      throw std::invalid_argument("NngpGraph: duplicate coordinates at sites " +
                                  std::to_string(std::min(a, b) + 1) + " and " +
                                  std::to_string(std::max(a, b) + 1));
    }
  }

  // Brute-force nearest predecessors; (distance, position) keys make ties
  // resolve to the lower ordered position.
  offset_.assign(n + 1, 0);
  std::vector<std::vector<int>> lists(n);
  std::vector<std::pair<double, int>> cand;
  for (int p = 1; p < n; ++p) {
    const int site = ordering_[p];
    cand.clear();
    for (int r = 0; r < p; ++r) {
      cand.emplace_back(distance(coords, site, ordering_[r]), r);
    }
    const int k = std::min(m_, p);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& list = lists[site];
    for (int i = 0; i < k; ++i) list.push_back(ordering_[cand[i].second]);
  }
  for (int s = 0; s < n; ++s) {
    offset_[s + 1] = offset_[s] + static_cast<int>(lists[s].size());
  }
  neighbors_.reserve(offset_[n]);
  neighbor_dists_.reserve(offset_[n]);
  gram_offset_.assign(n + 1, 0);
  for (int s = 0; s < n; ++s) {
    for (int nb : lists[s]) {
      neighbors_.push_back(nb);
      neighbor_dists_.push_back(distance(coords, s, nb));
    }
    const int k = static_cast<int>(lists[s].size());
    gram_offset_[s + 1] = gram_offset_[s] + k * k;
  }
  gram_.resize(gram_offset_[n]);
  for (int s = 0; s < n; ++s) {
    const auto& list = lists[s];
    const int k = static_cast<int>(list.size());
    double* g = gram_.data() + gram_offset_[s];
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) g[a * k + b] = distance(coords, list[a], list[b]);
    }
  }

  std::vector<std::vector<NeighborUse>> use_lists(n);
  for (int t = 0; t < n; ++t) {
    for (int slot = 0; slot < static_cast<int>(lists[t].size()); ++slot) {
      use_lists[lists[t][slot]].push_back({t, slot});
    }
  }
  use_offset_.assign(n + 1, 0);
  for (int s = 0; s < n; ++s) {
    use_offset_[s + 1] = use_offset_[s] + static_cast<int>(use_lists[s].size());
    uses_.insert(uses_.end(), use_lists[s].begin(), use_lists[s].end());
  }
}

std::span<const int> NngpGraph::neighbors(int site) const {
  return {neighbors_.data() + offset_[site],
          static_cast<std::size_t>(offset_[site + 1] - offset_[site])};
}

std::span<const double> NngpGraph::neighbor_distances(int site) const {
  return {neighbor_dists_.data() + offset_[site],
          static_cast<std::size_t>(offset_[site + 1] - offset_[site])};
}

std::span<const double> NngpGraph::neighbor_gram(int site) const {
  return {gram_.data() + gram_offset_[site],
          static_cast<std::size_t>(gram_offset_[site + 1] - gram_offset_[site])};
}

std::span<const NeighborUse> NngpGraph::uses(int site) const {
  return {uses_.data() + use_offset_[site],
          static_cast<std::size_t>(use_offset_[site + 1] - use_offset_[site])};
}

std::vector<int> NngpGraph::nearest_sites(const Eigen::Vector2d& point,
                                          int k) const {
  const int n = size();
  k = std::clamp(k, 0, n);
  std::vector<std::pair<double, int>> cand(n);
  for (int s = 0; s < n; ++s) {
    cand[s] = {std::hypot(coords_(s, 0) - point(0), coords_(s, 1) - point(1)), s};
  }
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = cand[i].second;
  return out;
}

NngpFactors nngp_factors(const NngpGraph& graph, const CovarianceSpec& spec) {
  spec.check();
  const int n = graph.size();
  NngpFactors f;
  f.weights.resize(graph.total_neighbors());
  f.offset.resize(n + 1);
  f.variances.resize(n);
  Eigen::MatrixXd c;
  Eigen::VectorXd c0;
  for (int s = 0; s < n; ++s) {
    f.offset[s] = graph.neighbor_offset(s);
    const auto nb = graph.neighbors(s);
    const int k = static_cast<int>(nb.size());
    if (k == 0) {
      f.variances[s] = spec.sigma_sq;
      continue;
    }
    const auto gram = graph.neighbor_gram(s);
    const auto dist = graph.neighbor_distances(s);
    c.resize(k, k);
    c0.resize(k);
    for (int a = 0; a < k; ++a) {
      c0(a) = covariance(spec, dist[a]);
      for (int b = 0; b <= a; ++b) c(a, b) = c(b, a) = covariance(spec, gram[a * k + b]);
    }
    Eigen::MatrixXd l;
    try {
      l = cholesky(c);
    } catch (const NumericError&) {
      throw NumericError("nngp_factors: singular neighbor covariance at site " +
                             std::to_string(s),
                         s);
    }
    const auto lower = l.triangularView<Eigen::Lower>();
    Eigen::VectorXd b = l.transpose().triangularView<Eigen::Upper>().solve(lower.solve(c0));
    std::copy(b.data(), b.data() + k, f.weights.begin() + f.offset[s]);
    const double var = spec.sigma_sq - b.dot(c0);
    if (!(var > 0.0)) {
      throw NumericError("nngp_factors: non-positive conditional variance at site " +
                             std::to_string(s),
                         s);
    }
    f.variances[s] = var;
  }
  f.offset[n] = graph.total_neighbors();
  return f;
}

double nngp_log_density(std::span<const double> w, const NngpGraph& graph,
                        const NngpFactors& factors, double variance_scale) {
  const int n = graph.size();
  if (static_cast<int>(w.size()) != n) {
    throw std::invalid_argument("nngp_log_density: w has wrong length");
  }
  constexpr double log_2pi = 1.8378770664093454836;
  double out = 0.0;
  for (int s = 0; s < n; ++s) {
    const auto nb = graph.neighbors(s);
    const auto b = factors.b(s);
    double mean = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a) mean += b[a] * w[nb[a]];
    const double var = variance_scale * factors.f(s);
    const double e = w[s] - mean;
    out -= 0.5 * (log_2pi + std::log(var) + e * e / var);
  }
  return out;
}

double nngp_log_density(std::span<const double> w, const NngpGraph& graph,
                        const CovarianceSpec& spec) {
  return nngp_log_density(w, graph, nngp_factors(graph, spec));
}

KrigingResult conditional_at_new_site(const NngpGraph& graph,
                                      const CovarianceSpec& spec,
                                      const Eigen::Vector2d& new_coord,
                                      std::span<const int> neighbor_sites,
                                      std::span<const double> w) {
  spec.check();
  const int k = static_cast<int>(neighbor_sites.size());
  const auto& xy = graph.coords();
  Eigen::VectorXd c0(k);
  for (int a = 0; a < k; ++a) {
    const int s = neighbor_sites[a];
    const double d = std::hypot(xy(s, 0) - new_coord(0), xy(s, 1) - new_coord(1));
    if (d == 0.0) return {w[s], 0.0};
    c0(a) = covariance(spec, d);
  }
  if (k == 0) return {0.0, spec.sigma_sq};
  Eigen::MatrixXd c(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b <= a; ++b) {
      const int sa = neighbor_sites[a];
      const int sb = neighbor_sites[b];
      c(a, b) = c(b, a) = covariance(
          spec, std::hypot(xy(sa, 0) - xy(sb, 0), xy(sa, 1) - xy(sb, 1)));
    }
  }
  const Eigen::MatrixXd l = cholesky(c);
  const auto lower = l.triangularView<Eigen::Lower>();
  const Eigen::VectorXd b = l.transpose().triangularView<Eigen::Upper>().solve(lower.solve(c0));
  double mean = 0.0;
  for (int a = 0; a < k; ++a) mean += b(a) * w[neighbor_sites[a]];
  const double var = std::max(spec.sigma_sq - b.dot(c0), 0.0);
  return {mean, var};
}

KrigingResult conditional_at_new_site(const NngpGraph& graph,
                                      const CovarianceSpec& spec,
                                      const Eigen::Vector2d& new_coord,
                                      std::span<const double> w) {
  if (static_cast<int>(w.size()) != graph.size()) {
    throw std::invalid_argument("conditional_at_new_site: w has wrong length");
  }
  const auto nb = graph.nearest_sites(new_coord, graph.prediction_neighbors());
  return conditional_at_new_site(graph, spec, new_coord, nb, w);
}

std::pair<double, double> distance_range(const Eigen::MatrixX2d& coords) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  const int n = static_cast<int>(coords.rows());
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double d = distance(coords, a, b);
      if (d > 0.0) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
    }
  }
  return {lo, hi};
}

}  // namespace sfocc
