#include "sfocc/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfocc/gibbs.hpp"

namespace sfocc {

void PredictionGrid::check(int p_occ) const {
  if (coords.rows() == 0) throw std::invalid_argument("prediction grid is empty");
  if (x_occ.rows() != coords.rows()) {
    throw std::invalid_argument("prediction grid: covariate rows do not match coordinates");
  }
  if (x_occ.cols() != p_occ) {
    throw std::invalid_argument("prediction grid: expected " + std::to_string(p_occ) +
                                " occurrence design columns, got " + std::to_string(x_occ.cols()));
  }
  if (!coords.allFinite() || !x_occ.allFinite()) {
    throw std::invalid_argument("prediction grid contains non-finite values");
  }
}

Eigen::MatrixXd PredictionResult::psi_mean() const {
  const Eigen::VectorXd m = psi.colwise().mean().transpose();
  Eigen::MatrixXd out(n_species, n_sites);
  for (int i = 0; i < n_species; ++i) {
    for (int j = 0; j < n_sites; ++j) out(i, j) = m(i * n_sites + j);
  }
  return out;
}

PredictionResult predict_occurrence(const PosteriorSamples& fit, const PredictionGrid& grid,
                                    const NngpGraph* graph, RandomStream& stream) {
  grid.check(fit.p_occ);
  const Variant v = fit.spec.variant;
  const int n = fit.n_species, p = fit.p_occ, q = fit.spec.q;
  const int j_train = fit.n_sites;
  const int j_new = static_cast<int>(grid.coords.rows());
  const int procs = fit.n_processes();
  if (is_spatial(v) && graph == nullptr) {
    throw std::invalid_argument("predict_occurrence: spatial variant needs the training graph");
  }

  // New sites are visited in coordinate order (x, then y) so the draw
  // sequence does not depend on how the grid rows happen to be listed.
  std::vector<int> visit(j_new);
  std::iota(visit.begin(), visit.end(), 0);
  std::stable_sort(visit.begin(), visit.end(), [&](int a, int b) {
    if (grid.coords(a, 0) != grid.coords(b, 0)) return grid.coords(a, 0) < grid.coords(b, 0);
    return grid.coords(a, 1) < grid.coords(b, 1);
  });
  std::vector<std::vector<int>> nbrs(j_new);
  if (is_spatial(v)) {
    for (int s = 0; s < j_new; ++s) {
      nbrs[s] = graph->nearest_sites(grid.coords.row(s).transpose(), graph->prediction_neighbors());
    }
  }

  PredictionResult out;
  out.n_species = n;
  out.n_sites = j_new;
  const int total = fit.total_draws();
  out.psi.resize(total, static_cast<Eigen::Index>(n) * j_new);
  out.z.resize(total, static_cast<Eigen::Index>(n) * j_new);
  if (procs > 0) out.w.resize(total, static_cast<Eigen::Index>(procs) * j_new);

  Eigen::MatrixXd beta(n, p), w_new(procs, j_new), lambda(n, q);
  std::vector<double> w_train(j_train);
  int row = 0;
  for (const ChainDraws& c : fit.chains) {
    for (Eigen::Index d = 0; d < c.beta.rows(); ++d, ++row) {
      for (int i = 0; i < n; ++i) {
        for (int t = 0; t < p; ++t) beta(i, t) = c.beta(d, i * p + t);
      }
      Eigen::MatrixXd eta = beta * grid.x_occ.transpose();
      if (procs > 0) {
        for (int r = 0; r < procs; ++r) {
          if (is_spatial(v)) {
            const double sigma_sq = v == Variant::spMsPGOcc ? c.sigma_sq(d, r) : 1.0;
            const CovarianceSpec cov{fit.spec.cov_family, c.phi(d, r), sigma_sq, fit.spec.nu};
            for (int j = 0; j < j_train; ++j) w_train[j] = c.w(d, r * j_train + j);
            for (int s : visit) {
              const auto k = conditional_at_new_site(*graph, cov, grid.coords.row(s).transpose(),
                                                     nbrs[s], w_train);
              w_new(r, s) = k.mean + std::sqrt(k.variance) * stream.normal();
            }
          } else {
            for (int s : visit) w_new(r, s) = stream.normal();
          }
        }
        for (int r = 0; r < procs; ++r) {
          for (int s = 0; s < j_new; ++s) out.w(row, r * j_new + s) = w_new(r, s);
        }
        if (has_factors(v)) {
          for (int i = 0; i < n; ++i) {
            for (int r = 0; r < q; ++r) lambda(i, r) = c.lambda(d, i * q + r);
          }
          eta += lambda * w_new;
        } else {
          eta += w_new;
        }
      }
      for (int i = 0; i < n; ++i) {
        for (int s : visit) {
          const double psi = open_unit(logistic(eta(i, s)));
          out.psi(row, i * j_new + s) = psi;
          out.z(row, i * j_new + s) = stream.bernoulli(psi) ? 1.0 : 0.0;
        }
      }
    }
  }
  return out;
}

PredictionResult predict_occurrence(const PosteriorSamples& fit, const PredictionGrid& grid,
                                    std::uint64_t seed) {
  std::optional<NngpGraph> graph;
  if (is_spatial(fit.spec.variant)) graph.emplace(fit.coords, fit.spec.m);
  RandomStream stream(seed, 0);
  return predict_occurrence(fit, grid, graph ? &*graph : nullptr, stream);
}

RichnessSummary richness(const Eigen::MatrixXd& z_draws, int n_species,
                         std::span<const int> subset) {
  if (subset.empty()) throw std::invalid_argument("richness: empty species subset");
  if (n_species < 1 || z_draws.cols() % n_species != 0) {
    throw std::invalid_argument("richness: z draws do not match species count");
  }
  const int j_n = static_cast<int>(z_draws.cols() / n_species);
  for (int i : subset) {
    if (i < 0 || i >= n_species) {
      throw std::invalid_argument("richness: species index " + std::to_string(i) + " out of range");
    }
  }
  RichnessSummary out;
  out.draws = Eigen::MatrixXd::Zero(z_draws.rows(), j_n);
  for (int i : subset) out.draws += z_draws.middleCols(static_cast<Eigen::Index>(i) * j_n, j_n);
  out.mean = out.draws.colwise().mean().transpose();
  out.sd.resize(j_n);
  const double denom = std::max<Eigen::Index>(z_draws.rows() - 1, 1);
  for (int j = 0; j < j_n; ++j) {
    out.sd(j) = std::sqrt((out.draws.col(j).array() - out.mean(j)).square().sum() / denom);
  }
  return out;
}

}  // namespace sfocc
