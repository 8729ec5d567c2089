#pragma once

// Simulation-study driver: scenario x model x replicate fits scored against
// the generating truth, plus site subsetting for holdout comparisons.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sfocc/diagnostics.hpp"
#include "sfocc/model.hpp"

namespace sfocc {

/// Runs fn(0..n-1) on up to `workers` threads. Results must be written to
/// per-index slots; the first exception (lowest index) is rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Model specification used for a variant in the study: q factors for factor
/// variants, m neighbors for spatial variants, default priors.
ModelSpec study_model_spec(Variant v, int q = 3, int m = 15);

/// Seed of the simulated data set for one scenario replicate; every model in
/// the study is fitted to the same data set.
std::uint64_t replicate_data_seed(std::uint64_t seed, int scenario, int replicate);
/// MCMC seed of one model fitted to one replicate data set.
std::uint64_t replicate_fit_seed(std::uint64_t data_seed, Variant v);

struct StudyConfig {
  std::vector<int> scenarios;
  std::vector<Variant> models;
  int n_replicates = 1;
  std::uint64_t seed = 1;
  McmcConfig mcmc;
  int q = 3;
  int m = 15;
  int workers = 1;
};

struct ReplicateResult {
  int scenario = 0;
  Variant model = Variant::msPGOcc;
  int replicate = 0;
  std::uint64_t data_seed = 0;
  bool ok = false;
  std::string error;
  RecoveryReport metrics;
  double seconds = 0.0;
};

/// One result per (scenario, model, replicate) in that nesting order. Failed
/// replicates carry the error message and are excluded from aggregates.
std::vector<ReplicateResult> run_study(
    const StudyConfig& config,
    const std::function<void(const ReplicateResult&)>& on_done = {});

/// CSV texts: scenario rows by model columns for each metric, the
/// per-replicate records, and per-cell success counts.
struct StudyTables {
  std::string coverage_psi, coverage_beta, rmse_psi, rmse_beta;
  std::string replicates, counts;
};
StudyTables study_tables(const StudyConfig& config, const std::vector<ReplicateResult>& results);

/// Keeps the listed sites (in the given order) of a data set.
SurveyData subset_sites(const SurveyData& data, std::span<const int> sites);

struct HoldoutSplit {
  std::vector<int> train, holdout;  // ascending site indices
};
/// Random split with round(fraction * J) training sites.
HoldoutSplit holdout_split(int n_sites, double train_fraction, std::uint64_t seed);

}  // namespace sfocc
