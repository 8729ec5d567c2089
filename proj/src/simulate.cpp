#include "sfocc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sfocc/rngmath.hpp"

namespace sfocc {

Eigen::MatrixX2d unit_grid(int side) {
  Eigen::MatrixX2d c(static_cast<Eigen::Index>(side) * side, 2);
  const double step = side > 1 ? 1.0 / (side - 1) : 0.0;
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      c(a * side + b, 0) = a * step;
      c(a * side + b, 1) = b * step;
    }
  }
  return c;
}

void CustomScenario::check() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("simulate: " + m); };
  if (n_species < 1 || replicates < 1) fail("dimensions must be >= 1");
  const int j_n = coords ? static_cast<int>(coords->rows()) : n_sites;
  if (j_n < 1) fail("need at least one site");
  const int p_occ = beta ? static_cast<int>(beta->cols()) : static_cast<int>(beta_mean.size());
  if (p_occ < 1) fail("need at least an occurrence intercept");
  if (beta && beta->rows() != n_species) fail("beta must have one row per species");
  if (!beta && beta_var.size() != beta_mean.size()) fail("beta_mean and beta_var lengths differ");
  if (beta && !beta->allFinite()) fail("beta must be finite");
  if (constant_detection && !(*constant_detection >= 0.0 && *constant_detection <= 1.0)) {
    fail("constant detection must lie in [0, 1]");
  }
  if (!constant_detection) {
    if (alpha && alpha->rows() != n_species) fail("alpha must have one row per species");
    if (!alpha && (alpha_mean.empty() || alpha_var.size() != alpha_mean.size())) {
      fail("alpha_mean and alpha_var must be non-empty and equal length");
    }
  }
  const bool factor = latent == LatentStructure::factor || latent == LatentStructure::spatial_factor;
  if (factor && (q < 1 || q > n_species)) fail("factor count q must lie in [1, N]");
  if (factor && lambda && (lambda->rows() != n_species || lambda->cols() != q)) {
    fail("lambda must be N x q");
  }
  const int procs = latent == LatentStructure::species_spatial ? n_species
                    : latent == LatentStructure::spatial_factor ? q
                                                                : 0;
  if (!phi.empty() && static_cast<int>(phi.size()) != procs) fail("phi needs one value per process");
  if (!sigma_sq.empty() && static_cast<int>(sigma_sq.size()) != procs) {
    fail("sigma_sq needs one value per species");
  }
  for (double v : beta_mean) if (!std::isfinite(v)) fail("non-finite generating value");
  for (double v : beta_var) if (!(v >= 0.0)) fail("variances must be >= 0");
}

CustomScenario scenario_design(int id, RandomStream& stream) {
  if (id < 1 || id > 6) {
    throw std::invalid_argument("simulate_scenario: scenario id must be 1..6, got " +
                                std::to_string(id));
  }
  CustomScenario s;
  s.n_species = 10;
  s.coords = unit_grid(15);
  s.replicates = 3;
  s.beta_mean = {0.2};
  s.beta_var = {1.5};
  for (int t = 0; t < 15; ++t) {
    s.beta_mean.push_back(-1.0 + 2.0 * stream.uniform());
    s.beta_var.push_back(2.0 * stream.uniform());
  }
  if (id <= 2) {
    s.constant_detection = 0.8;
  } else {
    s.alpha_mean = {0.0};
    s.alpha_var = {0.2};
    for (int t = 0; t < 5; ++t) {
      s.alpha_mean.push_back(-1.0 + 2.0 * stream.uniform());
      s.alpha_var.push_back(2.0 * stream.uniform());
    }
  }
  switch (id) {
    case 1: case 5: s.latent = LatentStructure::factor; s.q = 3; break;
    case 2: case 6: s.latent = LatentStructure::spatial_factor; s.q = 3; break;
    case 4: s.latent = LatentStructure::species_spatial; break;
    default: break;
  }
  return s;
}

namespace {

Eigen::MatrixXd draw_coefficients(int n, const std::vector<double>& mean,
                                  const std::vector<double>& var, RandomStream& rng) {
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(mean.size()));
  for (int i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < mean.size(); ++t) {
      out(i, static_cast<Eigen::Index>(t)) = mean[t] + std::sqrt(var[t]) * rng.normal();
    }
  }
  return out;
}

// Exact draw from the full Gaussian process at the given sites.
Eigen::VectorXd draw_gp(const Eigen::MatrixX2d& coords, const CovarianceSpec& cov,
                        RandomStream& rng) {
  const Eigen::Index n = coords.rows();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double d = (coords.row(a) - coords.row(b)).norm();
      c(a, b) = c(b, a) = covariance(cov, d);
    }
  }
  c.diagonal().array() += 1e-10 * cov.sigma_sq;
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw NumericError("simulate: spatial covariance not positive definite", -1);
  }
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = rng.normal();
  return llt.matrixL() * e;
}

}  // namespace

SimulatedData simulate_with_stream(const CustomScenario& sc, RandomStream& rng) {
  sc.check();
  SimulatedData out;
  SurveyData& d = out.data;
  ScenarioTruth& t = out.truth;
  const int n = sc.n_species;

  if (sc.coords) {
    d.coords = *sc.coords;
  } else {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(sc.n_sites))));
    if (side * side == sc.n_sites) {
      d.coords = unit_grid(side);
    } else {
      d.coords.resize(sc.n_sites, 2);
      for (int j = 0; j < sc.n_sites; ++j) {
        d.coords(j, 0) = rng.uniform();
        d.coords(j, 1) = rng.uniform();
      }
    }
  }
  const int j_n = static_cast<int>(d.coords.rows());
  const int k_n = sc.replicates;
  d.n_species = n;
  d.n_sites = j_n;
  d.max_replicates = k_n;
  d.replicates.assign(j_n, k_n);

  // Occurrence design and coefficients.
  t.beta_mean = sc.beta_mean;
  t.beta_var = sc.beta_var;
  t.beta = sc.beta ? *sc.beta : draw_coefficients(n, sc.beta_mean, sc.beta_var, rng);
  const int p_occ = static_cast<int>(t.beta.cols());
  d.x_occ.resize(j_n, p_occ);
  d.x_occ.col(0).setOnes();
  for (int j = 0; j < j_n; ++j) {
    for (int c = 1; c < p_occ; ++c) d.x_occ(j, c) = rng.normal();
  }

  // Detection design and coefficients.
  if (sc.constant_detection) {
    t.constant_detection = sc.constant_detection;
    d.v_det = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(j_n) * k_n, 1);
    const double p = std::clamp(*sc.constant_detection, 1e-12, 1.0 - 1e-12);
    t.alpha = Eigen::MatrixXd::Constant(n, 1, logit(p));
  } else {
    t.alpha_mean = sc.alpha_mean;
    t.alpha_var = sc.alpha_var;
    t.alpha = sc.alpha ? *sc.alpha : draw_coefficients(n, sc.alpha_mean, sc.alpha_var, rng);
    const int p_det = static_cast<int>(t.alpha->cols());
    d.v_det.resize(static_cast<Eigen::Index>(j_n) * k_n, p_det);
    d.v_det.col(0).setOnes();
    for (Eigen::Index r = 0; r < d.v_det.rows(); ++r) {
      for (int c = 1; c < p_det; ++c) d.v_det(r, c) = rng.normal();
    }
  }

  // Latent structure.
  Eigen::MatrixXd offset = Eigen::MatrixXd::Zero(n, j_n);
  const bool factor = sc.latent == LatentStructure::factor || sc.latent == LatentStructure::spatial_factor;
  if (factor) {
    if (sc.lambda) {
      t.lambda = *sc.lambda;
    } else {
      t.lambda = Eigen::MatrixXd::Zero(n, sc.q);
      for (int i = 0; i < n; ++i) {
        for (int r = 0; r < sc.q; ++r) {
          if (r < i) t.lambda(i, r) = rng.normal();
          else if (r == i) t.lambda(i, r) = 1.0;
        }
      }
    }
    t.w.resize(sc.q, j_n);
    if (sc.latent == LatentStructure::spatial_factor) {
      t.phi.resize(sc.q);
      for (int r = 0; r < sc.q; ++r) {
        t.phi(r) = sc.phi.empty()
                       ? sc.phi_range.first + (sc.phi_range.second - sc.phi_range.first) * rng.uniform()
                       : sc.phi[r];
        t.w.row(r) = draw_gp(d.coords, {sc.cov_family, t.phi(r), 1.0, sc.nu}, rng).transpose();
      }
    } else {
      for (int r = 0; r < sc.q; ++r) {
        for (int j = 0; j < j_n; ++j) t.w(r, j) = rng.normal();
      }
    }
    offset = t.lambda * t.w;
  } else if (sc.latent == LatentStructure::species_spatial) {
    t.phi.resize(n);
    t.sigma_sq.resize(n);
    t.w.resize(n, j_n);
    for (int i = 0; i < n; ++i) {
      t.sigma_sq(i) = sc.sigma_sq.empty()
                          ? sc.sigma_sq_range.first +
                                (sc.sigma_sq_range.second - sc.sigma_sq_range.first) * rng.uniform()
                          : sc.sigma_sq[i];
      t.phi(i) = sc.phi.empty()
                     ? sc.phi_range.first + (sc.phi_range.second - sc.phi_range.first) * rng.uniform()
                     : sc.phi[i];
      t.w.row(i) = draw_gp(d.coords, {sc.cov_family, t.phi(i), t.sigma_sq(i), sc.nu}, rng).transpose();
    }
    offset = t.w;
  }

  const Eigen::MatrixXd eta = t.beta * d.x_occ.transpose() + offset;
  t.psi = eta.unaryExpr([](double e) { return logistic(e); });
  t.z.resize(n, j_n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < j_n; ++j) t.z(i, j) = rng.bernoulli(t.psi(i, j)) ? 1 : 0;
  }

  d.y.assign(static_cast<std::size_t>(n) * j_n * k_n, 0);
  const Eigen::MatrixXd det_eta = *t.alpha * d.v_det.transpose();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < j_n; ++j) {
      for (int k = 0; k < k_n; ++k) {
        const double p = sc.constant_detection ? *sc.constant_detection
                                               : logistic(det_eta(i, d.det_row(j, k)));
        const bool hit = rng.bernoulli(p);
        d.at(i, j, k) = static_cast<std::int8_t>(t.z(i, j) == 1 && hit);
      }
    }
  }
  d.fill_default_labels();
  return out;
}

SimulatedData simulate_custom(const CustomScenario& scenario, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  auto out = simulate_with_stream(scenario, rng);
  out.truth.seed = seed;
  return out;
}

SimulatedData simulate_scenario(int id, std::uint64_t seed) {
  if (id < 1 || id > 6) {
    throw std::invalid_argument("simulate_scenario: scenario id must be 1..6, got " +
                                std::to_string(id));
  }
  RandomStream rng(seed, static_cast<std::uint64_t>(id));
  const CustomScenario design = scenario_design(id, rng);
  auto out = simulate_with_stream(design, rng);
  out.truth.scenario = id;
  out.truth.seed = seed;
  return out;
}

}  // namespace sfocc
