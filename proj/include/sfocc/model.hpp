#pragma once

// Survey data, model specifications for the six candidate variants, priors,
// MCMC configuration, the Gibbs state and posterior storage.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sfocc/spatial.hpp"

namespace sfocc {

inline constexpr std::int8_t kMissing = -1;

/// Replicated detection-nondetection data. Detections are stored flat with
/// replicate fastest: index ((species * n_sites) + site) * max_replicates + k.
/// Detection covariates are stored per site-replicate, row site * K + k.
struct SurveyData {
  int n_species = 0;
  int n_sites = 0;
  int max_replicates = 0;
  std::vector<std::int8_t> y;
  Eigen::MatrixX2d coords;
  Eigen::MatrixXd x_occ;  // n_sites x p_occ, leading column of ones
  Eigen::MatrixXd v_det;  // (n_sites * max_replicates) x p_det, leading ones
  std::vector<int> replicates;
  std::vector<std::string> species_names;
  std::vector<std::string> site_ids;
  std::vector<std::string> occ_covariate_names;  // excludes the intercept
  std::vector<std::string> det_covariate_names;

  int p_occ() const { return static_cast<int>(x_occ.cols()); }
  int p_det() const { return static_cast<int>(v_det.cols()); }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_sites + j) * max_replicates + k;
  }
  std::int8_t at(int i, int j, int k) const { return y[index(i, j, k)]; }
  std::int8_t& at(int i, int j, int k) { return y[index(i, j, k)]; }
  int det_row(int j, int k) const { return j * max_replicates + k; }

  /// Fills default species names ("sp1"...) and site ids ("1"...) if empty.
  void fill_default_labels();
};

enum class Variant { lfJSDM, sfJSDM, msPGOcc, spMsPGOcc, lfMsPGOcc, sfMsPGOcc };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

/// Occupancy variants model detection; JSDM variants use collapsed data.
bool models_detection(Variant v);
bool has_factors(Variant v);
bool is_spatial(Variant v);

struct NormalPrior {
  double mean = 0.0;
  double var = 2.72;
};

struct InverseGammaPrior {
  double shape = 0.1;
  double scale = 0.1;
};

struct UniformBounds {
  double lower = 0.0;
  double upper = 0.0;
};

struct PriorSpec {
  NormalPrior mu_beta;
  NormalPrior mu_alpha;
  InverseGammaPrior tau_sq_beta;
  InverseGammaPrior tau_sq_alpha;
  /// Support for every spatial decay parameter; defaults to
  /// (3 / d_max, 3 / d_min) over the observed coordinates.
  std::optional<UniformBounds> phi_bounds;
  /// Species spatial variances, spMsPGOcc only.
  InverseGammaPrior sigma_sq{2.0, 1.0};
};

struct ModelSpec {
  Variant variant = Variant::sfMsPGOcc;
  int q = 0;   // factor count, factor variants only
  int m = 15;  // NNGP neighbors, spatial variants only
  CovarianceFamily cov_family = CovarianceFamily::exponential;
  double nu = 0.5;
  PriorSpec priors;
};

/// Throws std::invalid_argument if the spec is inconsistent with n_species.
void check_spec(const ModelSpec& spec, int n_species);

/// Resolved phi support, falling back to the distance-based default.
UniformBounds phi_support(const PriorSpec& priors, const Eigen::MatrixX2d& coords);

struct McmcConfig {
  int n_chains = 3;
  int n_iterations = 15000;
  int n_burn = 10000;
  int n_thin = 5;
  std::uint64_t seed = 1;

  void check() const;
  int n_retained() const { return (n_iterations - n_burn) / n_thin; }
};

/// One complete Gibbs state. Matrices of absent blocks are empty.
struct ParamState {
  Eigen::MatrixXd beta;   // N x p_occ
  Eigen::MatrixXd alpha;  // N x p_det
  Eigen::VectorXd mu_beta, tau_sq_beta;
  Eigen::VectorXd mu_alpha, tau_sq_alpha;
  Eigen::MatrixXd lambda;     // N x q
  Eigen::MatrixXd w;          // processes x J (q for factors, N for spMsPGOcc)
  Eigen::MatrixXi z;          // N x J
  Eigen::MatrixXd omega_occ;  // N x J
  Eigen::MatrixXd omega_det;  // N x (J * K), zero where undefined
  Eigen::VectorXd phi;        // one per spatial process
  Eigen::VectorXd sigma_sq;   // spMsPGOcc only
};

/// Post-burn-in thinned draws of one chain; each block stores one draw per
/// row. Flattening: beta/alpha i * p + t, lambda i * q + r, w r * J + j,
/// z/psi i * J + j.
struct ChainDraws {
  Eigen::MatrixXd beta, alpha;
  Eigen::MatrixXd mu_beta, tau_sq_beta, mu_alpha, tau_sq_alpha;
  Eigen::MatrixXd lambda, w, phi, sigma_sq;
  Eigen::MatrixXd z, psi;
  double phi_acceptance = 0.0;  // post-burn-in acceptance rate, spatial only
};

struct NamedBlock {
  std::string name;
  const Eigen::MatrixXd* draws;
};

struct PosteriorSamples {
  ModelSpec spec;
  McmcConfig mcmc;
  std::string data_digest;
  int n_species = 0;
  int n_sites = 0;
  int p_occ = 0;
  int p_det = 0;
  Eigen::MatrixX2d coords;  // training coordinates, used for prediction
  std::vector<ChainDraws> chains;

  int n_processes() const;
  int draws_per_chain() const;
  int total_draws() const;
  /// Non-empty blocks of one chain in a fixed order.
  std::vector<NamedBlock> blocks(int chain) const;
  /// Draws of a block stacked over chains (rows: chain-major).
  Eigen::MatrixXd pooled(const std::string& block) const;
};

/// Human-readable label for column `col` of block `name`, e.g. beta[sp2,x3].
std::string parameter_label(const PosteriorSamples& s, const std::string& name,
                            int col);

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

ValidationReport validate(const SurveyData& data, const ModelSpec& spec);

/// y*_i(s_j) = 1 iff any non-missing replicate is a detection. Throws if a
/// site has every replicate missing for every species.
Eigen::MatrixXi collapse_replicates(const SurveyData& data);

/// Permutes the species axis; order[new] = old.
SurveyData reorder_species(const SurveyData& data, std::span<const int> order);

/// Species indices by descending naive detection frequency (ties by index).
std::vector<int> detection_frequency_order(const SurveyData& data);

/// Hex SHA-256 of the numeric content of the data.
std::string data_digest(const SurveyData& data);

}  // namespace sfocc
