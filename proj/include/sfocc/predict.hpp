#pragma once

// Posterior prediction at new locations and species richness.

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "sfocc/model.hpp"
#include "sfocc/rngmath.hpp"
#include "sfocc/spatial.hpp"

namespace sfocc {

struct PredictionGrid {
  Eigen::MatrixX2d coords;
  Eigen::MatrixXd x_occ;  // leading column of ones

  /// Throws std::invalid_argument on shape mismatch or non-finite values.
  void check(int p_occ) const;
};

/// Per retained draw (rows, chain-major) values at the new sites; columns
/// i * J* + j for psi and z, r * J* + j for w.
struct PredictionResult {
  int n_species = 0;
  int n_sites = 0;
  Eigen::MatrixXd psi;
  Eigen::MatrixXd z;
  Eigen::MatrixXd w;  // empty for variants without latent processes

  /// Posterior mean psi as an N x J* matrix.
  Eigen::MatrixXd psi_mean() const;
};

/// Composition sampling: for each retained draw, latent processes at the new
/// sites are drawn given that draw's training-site values (spatial variants)
/// or from N(0, I) (lfJSDM, lfMsPGOcc); psi follows from the occurrence
/// predictor and z ~ Bernoulli(psi). Each new site conditions only on
/// training sites.
PredictionResult predict_occurrence(const PosteriorSamples& fit, const PredictionGrid& grid,
                                    const NngpGraph* graph, RandomStream& stream);

/// Builds the training graph from the fit when needed; uses stream (seed, 0).
PredictionResult predict_occurrence(const PosteriorSamples& fit, const PredictionGrid& grid,
                                    std::uint64_t seed);

struct RichnessSummary {
  Eigen::MatrixXd draws;  // draws x J
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

/// Per draw and site, the number of species in `subset` with z = 1.
/// z_draws is draws x (n_species * J) with columns i * J + j.
RichnessSummary richness(const Eigen::MatrixXd& z_draws, int n_species,
                         std::span<const int> subset);

}  // namespace sfocc
