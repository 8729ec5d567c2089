#pragma once

// Forward simulation of multi-species detection-nondetection data with the
// generating values kept as ground truth.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sfocc/model.hpp"
#include "sfocc/rngmath.hpp"
#include "sfocc/spatial.hpp"

namespace sfocc {

enum class LatentStructure { none, factor, spatial_factor, species_spatial };

/// Generating values for one data set. Coefficient blocks include the
/// intercept; when an explicit matrix is absent the species values are drawn
/// from N(mean, var) per coefficient.
struct CustomScenario {
  int n_species = 10;
  /// Site locations. When absent, n_sites sites are laid out as a regular
  /// grid on the unit square if n_sites is a perfect square, otherwise drawn
  /// uniformly on it.
  std::optional<Eigen::MatrixX2d> coords;
  int n_sites = 225;
  int replicates = 3;

  std::vector<double> beta_mean{0.2};
  std::vector<double> beta_var{1.5};
  std::optional<Eigen::MatrixXd> beta;

  /// Constant detection probability; replaces the detection regression.
  std::optional<double> constant_detection;
  std::vector<double> alpha_mean{0.0};
  std::vector<double> alpha_var{0.2};
  std::optional<Eigen::MatrixXd> alpha;

  LatentStructure latent = LatentStructure::none;
  int q = 0;
  /// N x q; lower-triangle entries default to N(0, 1) draws.
  std::optional<Eigen::MatrixXd> lambda;
  /// Decay per spatial process; drawn from U(phi_range) when empty.
  std::vector<double> phi;
  std::pair<double, double> phi_range{3.0 / 0.8, 3.0 / 0.1};
  /// Species spatial variances (species_spatial); drawn from U(sigma_sq_range)
  /// when empty.
  std::vector<double> sigma_sq;
  std::pair<double, double> sigma_sq_range{0.5, 2.0};
  CovarianceFamily cov_family = CovarianceFamily::exponential;
  double nu = 0.5;

  void check() const;
};

struct ScenarioTruth {
  int scenario = 0;  // 0 for custom
  std::uint64_t seed = 0;
  Eigen::MatrixXd psi;  // N x J
  Eigen::MatrixXi z;    // N x J
  Eigen::MatrixXd beta;
  std::optional<Eigen::MatrixXd> alpha;
  std::optional<double> constant_detection;
  Eigen::MatrixXd lambda;  // empty without factors
  Eigen::MatrixXd w;       // processes x J, empty without latent processes
  Eigen::VectorXd phi;
  Eigen::VectorXd sigma_sq;
  std::vector<double> beta_mean, beta_var;
  std::vector<double> alpha_mean, alpha_var;
};

struct SimulatedData {
  SurveyData data;
  ScenarioTruth truth;
};

/// Generating values of one of the six study designs (N=10, J=225 grid,
/// K=3, 15 occurrence covariates), before species-level draws.
CustomScenario scenario_design(int id, RandomStream& stream);

/// Throws std::invalid_argument for id outside 1..6.
SimulatedData simulate_scenario(int id, std::uint64_t seed);

SimulatedData simulate_custom(const CustomScenario& scenario, std::uint64_t seed);

/// Shared forward model; consumes draws from `stream`.
SimulatedData simulate_with_stream(const CustomScenario& scenario, RandomStream& stream);

/// Regular side x side grid on the unit square.
Eigen::MatrixX2d unit_grid(int side);

}  // namespace sfocc
