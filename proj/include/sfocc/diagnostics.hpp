#pragma once

// Convergence diagnostics, information criteria, predictive scoring and
// parameter-recovery metrics.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfocc/model.hpp"
#include "sfocc/simulate.hpp"

namespace sfocc {

struct ScalarDiagnostic {
  std::string block;
  int index = 0;
  double rhat = 1.0;  // NaN when fewer than two chains
  double ess = 0.0;
  bool zero_variance = false;
  bool flagged = false;  // rhat > 1.1
};

/// Rank-normalized split R-hat (max of bulk and folded) for draws arranged
/// one column per chain.
double split_rhat(const Eigen::MatrixXd& chains);
/// Multi-chain effective sample size with Geyer's initial monotone sequence.
double effective_sample_size(const Eigen::MatrixXd& chains);

/// Diagnostics for every scalar of the listed blocks (all blocks if empty).
/// Needs >= 4 retained draws per chain; R-hat needs >= 2 chains.
std::vector<ScalarDiagnostic> convergence(const PosteriorSamples& samples,
                                          const std::vector<std::string>& blocks = {});

struct WaicResult {
  double waic = 0.0;
  double elpd = 0.0;
  double p_waic = 0.0;
};

/// WAIC from a draws x points matrix of pointwise log-likelihoods.
WaicResult waic_from_log_lik(const Eigen::MatrixXd& log_lik);

/// draws x (N * J) log-likelihood with one point per species-site. Occupancy
/// variants integrate z out; JSDM variants score the collapsed data.
Eigen::MatrixXd pointwise_log_lik(const PosteriorSamples& samples, const SurveyData& data);

WaicResult waic(const PosteriorSamples& samples, const SurveyData& data);

/// -2 sum_points log(mean_draws Bern(y | p)). `prob` is draws x points.
double deviance_from_probabilities(const Eigen::MatrixXd& prob, const Eigen::VectorXi& y);

/// Bernoulli plug-in deviance of probabilities against targets in [0, 1].
double plugin_deviance(std::span<const double> prob, std::span<const double> target);

/// Holdout deviance of the collapsed holdout detections. Spatial variants
/// predict the latent processes at holdout locations with `seed`.
double holdout_deviance_data(const PosteriorSamples& fit, const SurveyData& holdout,
                             std::uint64_t seed = 1);

/// Latent-state deviance: posterior-mean psi at holdout sites (N x H) scored
/// against each reference posterior-mean z (N x H), averaged over references.
double holdout_deviance_latent(const Eigen::MatrixXd& psi_mean,
                               std::span<const Eigen::MatrixXd> reference_z_mean);

/// Same, extracting the references from full-data occupancy fits;
/// `sites` indexes the holdout sites inside the reference fits.
double holdout_deviance_latent(const Eigen::MatrixXd& psi_mean,
                               std::span<const PosteriorSamples> references,
                               std::span<const int> sites);

/// Posterior mean of z (N x J) for an occupancy fit.
Eigen::MatrixXd posterior_mean_z(const PosteriorSamples& fit);

struct RecoveryReport {
  double coverage_psi = 0.0;   // percent
  double coverage_beta = 0.0;  // percent, covariate effects (intercept excluded)
  double rmse_psi = 0.0;       // per-species RMSE averaged over species
  double rmse_beta = 0.0;
  std::vector<double> species_coverage_psi, species_coverage_beta;
  std::vector<double> species_rmse_psi, species_rmse_beta;
};

RecoveryReport recovery_metrics(const PosteriorSamples& samples, const ScenarioTruth& truth);

struct FactorSummary {
  int factor = 0;
  std::vector<double> mean, median;  // per species
  double fraction_covering_zero = 0.0;  // among free loadings
  bool prune = false;
};

/// Pruning is suggested when every free loading's 95% interval covers zero
/// and every |posterior mean| is below the threshold.
std::vector<FactorSummary> factor_pruning_report(const PosteriorSamples& samples,
                                                 double threshold);

/// Empirical quantile (type 7) of a sample.
double quantile(std::vector<double> values, double prob);

}  // namespace sfocc
