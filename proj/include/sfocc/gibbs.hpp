#pragma once

// Polya-Gamma Metropolis-within-Gibbs sampler for the six candidate models.
//
// One iteration updates, in order: occurrence PG variables, latent occupancy,
// detection PG variables, detection coefficients, occurrence coefficients,
// community hyperparameters, factor loadings, latent processes, and spatial
// decay (with species spatial variances for spMsPGOcc).

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfocc/model.hpp"
#include "sfocc/rngmath.hpp"
#include "sfocc/spatial.hpp"

namespace sfocc {

enum class Stage { occurrence, detection };

struct SamplerOptions {
  int adapt_batch = 25;
  double target_acceptance = 0.43;
  double initial_log_tuning = 0.0;
  /// Holds the loading matrix fixed at this value instead of sampling it.
  std::optional<Eigen::MatrixXd> fixed_loadings;
};

/// Gibbs state plus the per-chain caches that depend on it.
struct ChainState {
  ParamState params;
  /// Unit-variance NNGP factors of each spatial process at its current phi.
  std::vector<NngpFactors> correlation_factors;
  Eigen::VectorXd log_tuning;
  Eigen::VectorXi batch_accepted;
  int batch_iterations = 0;
  int batches_done = 0;
  long accepted = 0;
  long proposed = 0;
};

/// Normal full conditional in canonical form.
struct CanonicalNormal {
  Eigen::MatrixXd precision;
  Eigen::VectorXd information;
};

/// P(z = 1 | y, psi, p) for one species-site. Returns 1 when any
/// non-missing replicate is a detection; missing replicates are skipped.
double occupancy_conditional_probability(double psi,
                                         std::span<const double> p_detect,
                                         std::span<const std::int8_t> y);

/// Conjugate normal update of a community mean given species values.
NormalPrior community_mean_conditional(std::span<const double> values,
                                       double tau_sq, const NormalPrior& prior);
/// Conjugate inverse-gamma update of a community variance.
InverseGammaPrior community_variance_conditional(std::span<const double> values,
                                                 double mu,
                                                 const InverseGammaPrior& prior);

/// Metropolis decision: accept iff log(u) < log_ratio.
bool metropolis_accept(double log_ratio, RandomStream& stream);

class GibbsSampler {
 public:
  /// Throws std::invalid_argument when validate(data, spec) reports errors.
  GibbsSampler(ModelSpec spec, const SurveyData& data, SamplerOptions options = {});

  const ModelSpec& spec() const { return spec_; }
  const SurveyData& data() const { return data_; }
  const NngpGraph* graph() const { return graph_ ? &*graph_ : nullptr; }
  UniformBounds phi_bounds() const { return phi_bounds_; }
  int n_processes() const;

  ChainState initial_state(RandomStream& stream) const;
  /// Recomputes caches after external edits to chain.params.
  void refresh(ChainState& chain) const;

  /// Bernoulli response of the occurrence regression: z, or y* for JSDMs.
  const Eigen::MatrixXi& response(const ParamState& s) const;
  /// N x J occurrence linear predictor including latent processes.
  Eigen::MatrixXd occurrence_predictor(const ParamState& s) const;
  /// N x J contribution of the latent processes (zero for msPGOcc).
  Eigen::MatrixXd latent_offset(const ParamState& s) const;
  /// N x (J * K) detection linear predictor.
  Eigen::MatrixXd detection_predictor(const ParamState& s) const;
  /// N x J occurrence probabilities.
  Eigen::MatrixXd occurrence_probability(const ParamState& s) const;

  void update_omega(ParamState& s, Stage stage, RandomStream& stream) const;
  void update_z(ParamState& s, RandomStream& stream) const;

  CanonicalNormal species_coefficient_conditional(const ParamState& s, int species,
                                                  Stage stage) const;
  void update_species_coefficients(ParamState& s, Stage stage, RandomStream& stream) const;
  void update_community(ParamState& s, RandomStream& stream) const;

  /// Conditional of the free (lower-triangle) loadings of one species; empty
  /// when the species has no free entries.
  CanonicalNormal loadings_conditional(const ParamState& s, int species) const;
  void update_loadings(ParamState& s, RandomStream& stream) const;

  /// Conditional of the latent process values at one site given all other
  /// sites: a q-vector for factor variants, one entry per species process
  /// for spMsPGOcc (each conditionally independent, so the precision is
  /// diagonal).
  CanonicalNormal factor_site_conditional(const ChainState& chain, int site) const;
  void update_factors(ChainState& chain, RandomStream& stream) const;

  /// NNGP log-density of process r at decay phi plus the log-Jacobian of the
  /// logit transform, given unit-variance factors at that phi.
  double phi_log_target(const ChainState& chain, int r, double phi,
                        const NngpFactors& factors) const;
  /// Metropolis update of every phi (and Gibbs update of sigma_sq for
  /// spMsPGOcc). `adapt` enables batch tuning toward the target acceptance.
  void update_phi(ChainState& chain, bool adapt, RandomStream& stream) const;

  /// One full sweep in the fixed update order.
  void iterate(ChainState& chain, bool adapt, RandomStream& stream) const;

 private:
  ModelSpec spec_;
  const SurveyData& data_;
  SamplerOptions options_;
  std::optional<NngpGraph> graph_;
  UniformBounds phi_bounds_{};
  Eigen::MatrixXi ystar_;  // collapsed detections
};

/// Runs mcmc.n_chains independent chains; chain c uses RandomStream(seed, c).
/// `workers` > 1 runs chains on separate threads with identical output.
PosteriorSamples run_model(const ModelSpec& spec, const SurveyData& data,
                           const McmcConfig& mcmc, const SamplerOptions& options = {},
                           int workers = 1);

/// Occurrence probabilities for every retained draw, recomputed from the
/// stored coefficient and process blocks.
Eigen::MatrixXd derive_psi(const PosteriorSamples& samples, const ChainDraws& chain,
                           const SurveyData& data);

/// Clamps a probability into the open unit interval.
double open_unit(double p);

}  // namespace sfocc
