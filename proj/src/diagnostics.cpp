#include "sfocc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "sfocc/gibbs.hpp"
#include "sfocc/predict.hpp"
#include "sfocc/rngmath.hpp"

namespace sfocc {

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

namespace {

// Halves each chain (dropping the middle draw of odd lengths).
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& chains) {
  const Eigen::Index n = chains.rows() / 2;
  Eigen::MatrixXd out(n, 2 * chains.cols());
  for (Eigen::Index c = 0; c < chains.cols(); ++c) {
    out.col(2 * c) = chains.col(c).head(n);
    out.col(2 * c + 1) = chains.col(c).tail(n);
  }
  return out;
}

// Normal scores of pooled fractional ranks (ties get the average rank).
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& x) {
  const Eigen::Index total = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  const double* v = x.data();
  std::stable_sort(order.begin(), order.end(), [v](auto a, auto b) { return v[a] < v[b]; });
  Eigen::MatrixXd out(x.rows(), x.cols());
  double* o = out.data();
  const boost::math::normal_distribution<double> std_normal;
  const double s = static_cast<double>(total);
  for (Eigen::Index a = 0; a < total;) {
    Eigen::Index b = a;
    while (b + 1 < total && v[order[b + 1]] == v[order[a]]) ++b;
    const double rank = 0.5 * static_cast<double>(a + b) + 1.0;
    const double z = boost::math::quantile(std_normal, (rank - 0.375) / (s + 0.25));
    for (Eigen::Index t = a; t <= b; ++t) o[order[t]] = z;
    a = b + 1;
  }
  return out;
}

double classic_rhat(const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd means = x.colwise().mean().transpose();
  double w = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    w += (x.col(c).array() - means(c)).square().sum() / (n - 1.0);
  }
  w /= static_cast<double>(x.cols());
  const double b_over_n =
      (means.array() - means.mean()).square().sum() / static_cast<double>(x.cols() - 1);
  if (w <= 0.0) return b_over_n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return std::sqrt(((n - 1.0) / n * w + b_over_n) / w);
}

void require_draws(const Eigen::MatrixXd& chains) {
  if (chains.rows() < 4) throw std::invalid_argument("convergence diagnostics need >= 4 draws per chain");
  if (chains.cols() < 1) throw std::invalid_argument("convergence diagnostics need a chain");
}

bool constant(const Eigen::MatrixXd& x) { return x.maxCoeff() == x.minCoeff(); }

}  // namespace

double split_rhat(const Eigen::MatrixXd& chains) {
  require_draws(chains);
  if (chains.cols() < 2) return std::numeric_limits<double>::quiet_NaN();
  if (constant(chains)) return 1.0;
  const Eigen::MatrixXd split = split_chains(chains);
  const double bulk = classic_rhat(rank_normalize(split));
  std::vector<double> all(split.data(), split.data() + split.size());
  const double med = quantile(all, 0.5);
  const Eigen::MatrixXd folded = (split.array() - med).abs().matrix();
  const double tail = classic_rhat(rank_normalize(folded));
  return std::max(bulk, tail);
}

double effective_sample_size(const Eigen::MatrixXd& chains) {
  require_draws(chains);
  const Eigen::Index n = chains.rows();
  const Eigen::Index m = chains.cols();
  const double total = static_cast<double>(n * m);
  if (constant(chains)) return total;
  const double nd = static_cast<double>(n);

  const Eigen::VectorXd means = chains.colwise().mean().transpose();
  Eigen::MatrixXd centered = chains;
  for (Eigen::Index c = 0; c < m; ++c) centered.col(c).array() -= means(c);
  auto acov = [&](Eigen::Index lag) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      sum += centered.col(c).head(n - lag).dot(centered.col(c).tail(n - lag)) / nd;
    }
    return sum / static_cast<double>(m);
  };
  const double mean_var = acov(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
  if (var_plus <= 0.0) return total;
  auto rho = [&](Eigen::Index lag) { return 1.0 - (mean_var - acov(lag)) / var_plus; };

  // Geyer initial positive and monotone sequence over lag pairs.
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    sum_pairs += pair;
    prev_pair = pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum_pairs, 1.0 / std::log10(total));
  return total / tau;
}

std::vector<ScalarDiagnostic> convergence(const PosteriorSamples& samples,
                                          const std::vector<std::string>& blocks) {
  if (samples.chains.empty()) throw std::invalid_argument("convergence: no chains");
  std::vector<ScalarDiagnostic> out;
  const int n = samples.draws_per_chain();
  const int m = static_cast<int>(samples.chains.size());
  std::vector<std::vector<NamedBlock>> per_chain;
  for (int c = 0; c < m; ++c) per_chain.push_back(samples.blocks(c));
  for (std::size_t b = 0; b < per_chain[0].size(); ++b) {
    const std::string& name = per_chain[0][b].name;
    if (name == "psi") continue;
    if (!blocks.empty() && std::find(blocks.begin(), blocks.end(), name) == blocks.end()) continue;
    const Eigen::Index cols = per_chain[0][b].draws->cols();
    Eigen::MatrixXd x(n, m);
    for (Eigen::Index col = 0; col < cols; ++col) {
      for (int c = 0; c < m; ++c) x.col(c) = per_chain[c][b].draws->col(col);
      ScalarDiagnostic d;
      d.block = name;
      d.index = static_cast<int>(col);
      d.zero_variance = constant(x);
      d.rhat = split_rhat(x);
      d.ess = effective_sample_size(x);
      d.flagged = std::isfinite(d.rhat) ? d.rhat > 1.1 : !std::isnan(d.rhat);
      out.push_back(std::move(d));
    }
  }
  return out;
}

WaicResult waic_from_log_lik(const Eigen::MatrixXd& log_lik) {
  if (log_lik.rows() < 1) throw std::invalid_argument("waic: no draws");
  WaicResult r;
  const double s = static_cast<double>(log_lik.rows());
  for (Eigen::Index pt = 0; pt < log_lik.cols(); ++pt) {
    const auto col = log_lik.col(pt);
    const double mx = col.maxCoeff();
    if (!std::isfinite(mx)) {
      throw std::domain_error("waic: likelihood is zero for every draw at point " + std::to_string(pt));
    }
    const double lppd = mx + std::log((col.array() - mx).exp().sum() / s);
    double var = 0.0;
    if (log_lik.rows() > 1) var = (col.array() - col.mean()).square().sum() / (s - 1.0);
    r.elpd += lppd;
    r.p_waic += var;
  }
  r.waic = -2.0 * r.elpd + 2.0 * r.p_waic;
  return r;
}

namespace {

const Eigen::MatrixXd& chain_psi(const ChainDraws& c) {
  if (c.psi.size() == 0) throw std::invalid_argument("posterior samples carry no psi draws");
  return c.psi;
}

void check_fit_matches(const PosteriorSamples& s, const SurveyData& data) {
  if (s.n_species != data.n_species || s.n_sites != data.n_sites) {
    throw std::invalid_argument("fit and data dimensions differ");
  }
}

// Per-replicate detection probabilities of one species-site for one draw.
void detection_probs(const SurveyData& data, const Eigen::MatrixXd& alpha_draws, Eigen::Index d,
                     int species, int site, std::vector<double>& out) {
  const int p = data.p_det();
  const int kj = data.replicates[site];
  out.resize(kj);
  for (int k = 0; k < kj; ++k) {
    double e = 0.0;
    const int row = data.det_row(site, k);
    for (int t = 0; t < p; ++t) e += alpha_draws(d, species * p + t) * data.v_det(row, t);
    out[k] = logistic(e);
  }
}

}  // namespace

Eigen::MatrixXd pointwise_log_lik(const PosteriorSamples& samples, const SurveyData& data) {
  check_fit_matches(samples, data);
  const int n = data.n_species, j_n = data.n_sites;
  Eigen::MatrixXd ll(samples.total_draws(), static_cast<Eigen::Index>(n) * j_n);
  const bool occupancy = models_detection(samples.spec.variant);
  const Eigen::MatrixXi ystar = collapse_replicates(data);
  std::vector<double> p;
  int row = 0;
  for (const ChainDraws& c : samples.chains) {
    const Eigen::MatrixXd& psi = chain_psi(c);
    for (Eigen::Index d = 0; d < psi.rows(); ++d, ++row) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < j_n; ++j) {
          const double ps = psi(d, i * j_n + j);
          double value;
          if (!occupancy) {
            value = ystar(i, j) == 1 ? std::log(ps) : std::log1p(-ps);
          } else {
            detection_probs(data, c.alpha, d, i, j, p);
            double log_detect = 0.0;
            bool any = false;
            for (int k = 0; k < data.replicates[j]; ++k) {
              const auto y = data.at(i, j, k);
              if (y == kMissing) continue;
              if (y == 1) any = true;
              log_detect += y == 1 ? std::log(p[k]) : std::log1p(-p[k]);
            }
            const double present = std::log(ps) + log_detect;
            if (any) {
              value = present;
            } else {
              const double absent = std::log1p(-ps);
              const double mx = std::max(present, absent);
              value = mx + std::log(std::exp(present - mx) + std::exp(absent - mx));
            }
          }
          ll(row, i * j_n + j) = value;
        }
      }
    }
  }
  return ll;
}

WaicResult waic(const PosteriorSamples& samples, const SurveyData& data) {
  return waic_from_log_lik(pointwise_log_lik(samples, data));
}

double deviance_from_probabilities(const Eigen::MatrixXd& prob, const Eigen::VectorXi& y) {
  if (prob.cols() != y.size()) throw std::invalid_argument("deviance: probability and response sizes differ");
  double dev = 0.0;
  for (Eigen::Index pt = 0; pt < prob.cols(); ++pt) {
    const double mean_lik = y(pt) == 1 ? prob.col(pt).mean() : 1.0 - prob.col(pt).mean();
    if (!(mean_lik > 0.0)) {
      throw std::domain_error("deviance: zero predictive probability at point " + std::to_string(pt));
    }
    dev += std::log(mean_lik);
  }
  return -2.0 * dev;
}

double plugin_deviance(std::span<const double> prob, std::span<const double> target) {
  if (prob.size() != target.size()) throw std::invalid_argument("plugin_deviance: size mismatch");
  double dev = 0.0;
  for (std::size_t a = 0; a < prob.size(); ++a) {
    const double p = open_unit(prob[a]);
    const double t = target[a];
    if (t > 0.0) dev += t * std::log(p);
    if (t < 1.0) dev += (1.0 - t) * std::log1p(-p);
  }
  return -2.0 * dev;
}

double holdout_deviance_data(const PosteriorSamples& fit, const SurveyData& holdout,
                             std::uint64_t seed) {
  if (fit.n_species != holdout.n_species) throw std::invalid_argument("holdout species count differs from fit");
  PredictionGrid grid{holdout.coords, holdout.x_occ};
  const PredictionResult pred = predict_occurrence(fit, grid, seed);
  const int n = holdout.n_species, h = holdout.n_sites;
  const Eigen::MatrixXi ystar = collapse_replicates(holdout);
  Eigen::MatrixXd prob = pred.psi;
  if (models_detection(fit.spec.variant)) {
    if (holdout.p_det() != fit.p_det) throw std::invalid_argument("holdout detection design differs from fit");
    std::vector<double> p;
    int row = 0;
    for (const ChainDraws& c : fit.chains) {
      for (Eigen::Index d = 0; d < c.alpha.rows(); ++d, ++row) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < h; ++j) {
            detection_probs(holdout, c.alpha, d, i, j, p);
            double miss = 1.0;
            for (int k = 0; k < holdout.replicates[j]; ++k) {
              if (holdout.at(i, j, k) != kMissing) miss *= 1.0 - p[k];
            }
            prob(row, i * h + j) *= 1.0 - miss;
          }
        }
      }
    }
  }
  Eigen::VectorXi y(static_cast<Eigen::Index>(n) * h);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < h; ++j) y(i * h + j) = ystar(i, j);
  }
  return deviance_from_probabilities(prob, y);
}

double holdout_deviance_latent(const Eigen::MatrixXd& psi_mean,
                               std::span<const Eigen::MatrixXd> reference_z_mean) {
  if (reference_z_mean.empty()) throw std::invalid_argument("latent deviance needs a reference fit");
  std::vector<double> p(psi_mean.data(), psi_mean.data() + psi_mean.size());
  double total = 0.0;
  for (const Eigen::MatrixXd& z : reference_z_mean) {
    if (z.rows() != psi_mean.rows() || z.cols() != psi_mean.cols()) {
      throw std::invalid_argument("latent deviance: reference dimensions differ");
    }
    total += plugin_deviance(p, {z.data(), static_cast<std::size_t>(z.size())});
  }
  return total / static_cast<double>(reference_z_mean.size());
}

Eigen::MatrixXd posterior_mean_z(const PosteriorSamples& fit) {
  if (!models_detection(fit.spec.variant)) {
    throw std::invalid_argument("posterior_mean_z: variant has no latent occupancy");
  }
  const Eigen::VectorXd m = fit.pooled("z").colwise().mean().transpose();
  Eigen::MatrixXd out(fit.n_species, fit.n_sites);
  for (int i = 0; i < fit.n_species; ++i) {
    for (int j = 0; j < fit.n_sites; ++j) out(i, j) = m(i * fit.n_sites + j);
  }
  return out;
}

double holdout_deviance_latent(const Eigen::MatrixXd& psi_mean,
                               std::span<const PosteriorSamples> references,
                               std::span<const int> sites) {
  std::vector<Eigen::MatrixXd> refs;
  for (const PosteriorSamples& r : references) {
    const Eigen::MatrixXd full = posterior_mean_z(r);
    Eigen::MatrixXd sub(full.rows(), static_cast<Eigen::Index>(sites.size()));
    for (std::size_t a = 0; a < sites.size(); ++a) {
      if (sites[a] < 0 || sites[a] >= full.cols()) throw std::invalid_argument("latent deviance: site out of range");
      sub.col(static_cast<Eigen::Index>(a)) = full.col(sites[a]);
    }
    refs.push_back(std::move(sub));
  }
  return holdout_deviance_latent(psi_mean, refs);
}

namespace {

struct CellSummary {
  bool covered;
  double error;
};

CellSummary summarize_cell(const Eigen::MatrixXd& draws, Eigen::Index col, double truth,
                           std::vector<double>& scratch) {
  const auto c = draws.col(col);
  scratch.assign(c.data(), c.data() + c.size());
  const double lo = quantile(scratch, 0.025);
  const double hi = quantile(scratch, 0.975);
  return {lo <= truth && truth <= hi, c.mean() - truth};
}

}  // namespace

RecoveryReport recovery_metrics(const PosteriorSamples& samples, const ScenarioTruth& truth) {
  const int n = samples.n_species, j_n = samples.n_sites, p = samples.p_occ;
  if (truth.psi.rows() != n || truth.psi.cols() != j_n || truth.beta.cols() != p) {
    throw std::invalid_argument("recovery_metrics: truth dimensions differ from fit");
  }
  Eigen::MatrixXd psi(samples.total_draws(), static_cast<Eigen::Index>(n) * j_n);
  {
    int row = 0;
    for (const ChainDraws& c : samples.chains) {
      psi.middleRows(row, c.psi.rows()) = chain_psi(c);
      row += static_cast<int>(c.psi.rows());
    }
  }
  const Eigen::MatrixXd beta = samples.pooled("beta");
  RecoveryReport r;
  std::vector<double> scratch;
  int covered_psi = 0, covered_beta = 0;
  for (int i = 0; i < n; ++i) {
    int cov_psi = 0, cov_beta = 0;
    double se_psi = 0.0, se_beta = 0.0;
    for (int j = 0; j < j_n; ++j) {
      const auto s = summarize_cell(psi, i * j_n + j, truth.psi(i, j), scratch);
      cov_psi += s.covered;
      se_psi += s.error * s.error;
    }
    for (int t = 1; t < p; ++t) {
      const auto s = summarize_cell(beta, i * p + t, truth.beta(i, t), scratch);
      cov_beta += s.covered;
      se_beta += s.error * s.error;
    }
    covered_psi += cov_psi;
    covered_beta += cov_beta;
    r.species_coverage_psi.push_back(100.0 * cov_psi / j_n);
    r.species_rmse_psi.push_back(std::sqrt(se_psi / j_n));
    if (p > 1) {
      r.species_coverage_beta.push_back(100.0 * cov_beta / (p - 1));
      r.species_rmse_beta.push_back(std::sqrt(se_beta / (p - 1)));
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  r.coverage_psi = 100.0 * covered_psi / (static_cast<double>(n) * j_n);
  r.coverage_beta = p > 1 ? 100.0 * covered_beta / (static_cast<double>(n) * (p - 1)) : 0.0;
  r.rmse_psi = mean(r.species_rmse_psi);
  r.rmse_beta = mean(r.species_rmse_beta);
  return r;
}

std::vector<FactorSummary> factor_pruning_report(const PosteriorSamples& samples,
                                                 double threshold) {
  if (!has_factors(samples.spec.variant)) {
    throw std::invalid_argument("factor_pruning_report: variant has no factor loadings");
  }
  const int n = samples.n_species, q = samples.spec.q;
  const Eigen::MatrixXd lambda = samples.pooled("lambda");
  std::vector<FactorSummary> out;
  std::vector<double> scratch;
  for (int r = 0; r < q; ++r) {
    FactorSummary f;
    f.factor = r;
    int free = 0, covering = 0;
    bool small = true;
    for (int i = 0; i < n; ++i) {
      const auto col = lambda.col(i * q + r);
      scratch.assign(col.data(), col.data() + col.size());
      f.mean.push_back(col.mean());
      f.median.push_back(quantile(scratch, 0.5));
      if (i <= r) continue;
      ++free;
      const double lo = quantile(scratch, 0.025), hi = quantile(scratch, 0.975);
      if (lo <= 0.0 && 0.0 <= hi) ++covering;
      if (!(std::abs(col.mean()) < threshold)) small = false;
    }
    f.fraction_covering_zero = free > 0 ? static_cast<double>(covering) / free : 0.0;
    f.prune = free > 0 && covering == free && small;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace sfocc
