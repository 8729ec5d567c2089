#include "sfocc/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

namespace sfocc {

double open_unit(double p) {
  constexpr double eps = 1e-15;
  return std::clamp(p, eps, 1.0 - eps);
}

double occupancy_conditional_probability(double psi, std::span<const double> p_detect,
                                         std::span<const std::int8_t> y) {
  double miss = 1.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] == kMissing) continue;
    if (y[k] == 1) return 1.0;
    miss *= 1.0 - p_detect[k];
  }
  const double present = psi * miss;
  return present / (present + (1.0 - psi));
}

NormalPrior community_mean_conditional(std::span<const double> values, double tau_sq,
                                       const NormalPrior& prior) {
  double sum = 0.0;
  for (double v : values) sum += v;
  const double var = 1.0 / (static_cast<double>(values.size()) / tau_sq + 1.0 / prior.var);
  return {var * (sum / tau_sq + prior.mean / prior.var), var};
}

InverseGammaPrior community_variance_conditional(std::span<const double> values, double mu,
                                                 const InverseGammaPrior& prior) {
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return {prior.shape + 0.5 * static_cast<double>(values.size()), prior.scale + 0.5 * ss};
}

bool metropolis_accept(double log_ratio, RandomStream& stream) {
  return std::log(stream.uniform()) < log_ratio;
}

GibbsSampler::GibbsSampler(ModelSpec spec, const SurveyData& data, SamplerOptions options)
    : spec_(std::move(spec)), data_(data), options_(std::move(options)) {
  const auto report = validate(data_, spec_);
  if (!report.ok()) {
    std::string msg = "invalid model/data: ";
    for (const auto& e : report.errors) msg += e + "; ";
    throw std::invalid_argument(msg);
  }
  if (is_spatial(spec_.variant)) {
    graph_.emplace(data_.coords, spec_.m);
    phi_bounds_ = phi_support(spec_.priors, data_.coords);
  }
  if (!models_detection(spec_.variant)) ystar_ = collapse_replicates(data_);
  if (options_.fixed_loadings) {
    const auto& l = *options_.fixed_loadings;
    if (!has_factors(spec_.variant) || l.rows() != data_.n_species || l.cols() != spec_.q) {
      throw std::invalid_argument("fixed loadings must be N x q for a factor variant");
    }
  }
}

int GibbsSampler::n_processes() const {
  if (spec_.variant == Variant::spMsPGOcc) return data_.n_species;
  return has_factors(spec_.variant) ? spec_.q : 0;
}

ChainState GibbsSampler::initial_state(RandomStream& stream) const {
  const int n = data_.n_species, j_n = data_.n_sites, q = spec_.q;
  ChainState chain;
  ParamState& s = chain.params;
  s.beta = Eigen::MatrixXd::Constant(n, data_.p_occ(), 0.0);
  s.mu_beta = Eigen::VectorXd::Constant(data_.p_occ(), spec_.priors.mu_beta.mean);
  s.tau_sq_beta = Eigen::VectorXd::Ones(data_.p_occ());
  for (int i = 0; i < n; ++i) s.beta.row(i) = s.mu_beta.transpose();
  s.omega_occ = Eigen::MatrixXd::Constant(n, j_n, 0.25);
  if (models_detection(spec_.variant)) {
    s.alpha = Eigen::MatrixXd::Constant(n, data_.p_det(), 0.0);
    s.mu_alpha = Eigen::VectorXd::Constant(data_.p_det(), spec_.priors.mu_alpha.mean);
    s.tau_sq_alpha = Eigen::VectorXd::Ones(data_.p_det());
    for (int i = 0; i < n; ++i) s.alpha.row(i) = s.mu_alpha.transpose();
    s.z = collapse_replicates(data_);
    s.omega_det = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(j_n) * data_.max_replicates);
  }
  if (has_factors(spec_.variant)) {
    if (options_.fixed_loadings) {
      s.lambda = *options_.fixed_loadings;
    } else {
      s.lambda = Eigen::MatrixXd::Zero(n, q);
      for (int i = 0; i < n; ++i) {
        for (int r = 0; r < q; ++r) {
          if (r < i) s.lambda(i, r) = stream.normal();
          else if (r == i) s.lambda(i, r) = 1.0;
        }
      }
    }
  }
  const int procs = n_processes();
  if (procs > 0) {
    s.w.resize(procs, j_n);
    for (int r = 0; r < procs; ++r) {
      for (int j = 0; j < j_n; ++j) s.w(r, j) = stream.normal();
    }
  }
  if (is_spatial(spec_.variant)) {
    s.phi = Eigen::VectorXd::Constant(procs, 0.5 * (phi_bounds_.lower + phi_bounds_.upper));
    if (spec_.variant == Variant::spMsPGOcc) s.sigma_sq = Eigen::VectorXd::Ones(procs);
    chain.log_tuning = Eigen::VectorXd::Constant(procs, options_.initial_log_tuning);
    chain.batch_accepted = Eigen::VectorXi::Zero(procs);
  }
  refresh(chain);
  return chain;
}

void GibbsSampler::refresh(ChainState& chain) const {
  chain.correlation_factors.clear();
  if (!graph_) return;
  for (Eigen::Index r = 0; r < chain.params.phi.size(); ++r) {
    chain.correlation_factors.push_back(nngp_factors(
        *graph_, {spec_.cov_family, chain.params.phi(r), 1.0, spec_.nu}));
  }
  if (chain.log_tuning.size() != chain.params.phi.size()) {
    chain.log_tuning = Eigen::VectorXd::Constant(chain.params.phi.size(), options_.initial_log_tuning);
    chain.batch_accepted = Eigen::VectorXi::Zero(chain.params.phi.size());
  }
}

const Eigen::MatrixXi& GibbsSampler::response(const ParamState& s) const {
  return models_detection(spec_.variant) ? s.z : ystar_;
}

Eigen::MatrixXd GibbsSampler::latent_offset(const ParamState& s) const {
  if (has_factors(spec_.variant)) return s.lambda * s.w;
  if (spec_.variant == Variant::spMsPGOcc) return s.w;
  return Eigen::MatrixXd::Zero(data_.n_species, data_.n_sites);
}

Eigen::MatrixXd GibbsSampler::occurrence_predictor(const ParamState& s) const {
  Eigen::MatrixXd eta = s.beta * data_.x_occ.transpose();
  if (spec_.variant != Variant::msPGOcc) eta += latent_offset(s);
  return eta;
}

Eigen::MatrixXd GibbsSampler::detection_predictor(const ParamState& s) const {
  return s.alpha * data_.v_det.transpose();
}

Eigen::MatrixXd GibbsSampler::occurrence_probability(const ParamState& s) const {
  return occurrence_predictor(s).unaryExpr([](double e) { return open_unit(logistic(e)); });
}

void GibbsSampler::update_omega(ParamState& s, Stage stage, RandomStream& stream) const {
  const int n = data_.n_species, j_n = data_.n_sites;
  if (stage == Stage::occurrence) {
    const Eigen::MatrixXd eta = occurrence_predictor(s);
    for (int j = 0; j < j_n; ++j) {
      for (int i = 0; i < n; ++i) s.omega_occ(i, j) = sample_polya_gamma(eta(i, j), stream);
    }
    return;
  }
  if (!models_detection(spec_.variant)) return;
  const Eigen::MatrixXd eta = detection_predictor(s);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < j_n; ++j) {
      if (s.z(i, j) != 1) continue;
      for (int k = 0; k < data_.replicates[j]; ++k) {
        if (data_.at(i, j, k) == kMissing) continue;
        const int row = data_.det_row(j, k);
        s.omega_det(i, row) = sample_polya_gamma(eta(i, row), stream);
      }
    }
  }
}

void GibbsSampler::update_z(ParamState& s, RandomStream& stream) const {
  if (!models_detection(spec_.variant)) return;
  const Eigen::MatrixXd psi = occurrence_probability(s);
  const Eigen::MatrixXd eta = detection_predictor(s);
  const int k_max = data_.max_replicates;
  std::vector<double> p(k_max);
  for (int i = 0; i < data_.n_species; ++i) {
    for (int j = 0; j < data_.n_sites; ++j) {
      const int kj = data_.replicates[j];
      for (int k = 0; k < kj; ++k) p[k] = logistic(eta(i, data_.det_row(j, k)));
      const std::span<const std::int8_t> y(&data_.y[data_.index(i, j, 0)], kj);
      const double prob = occupancy_conditional_probability(psi(i, j), {p.data(), static_cast<std::size_t>(kj)}, y);
      s.z(i, j) = prob >= 1.0 ? 1 : static_cast<int>(stream.bernoulli(prob));
    }
  }
}

CanonicalNormal GibbsSampler::species_coefficient_conditional(const ParamState& s, int i,
                                                              Stage stage) const {
  CanonicalNormal out;
  if (stage == Stage::occurrence) {
    const auto& x = data_.x_occ;
    const Eigen::MatrixXi& r = response(s);
    Eigen::VectorXd omega = s.omega_occ.row(i).transpose();
    Eigen::VectorXd kappa(data_.n_sites);
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(data_.n_sites);
    if (spec_.variant != Variant::msPGOcc) {
      if (has_factors(spec_.variant)) offset = (s.lambda.row(i) * s.w).transpose();
      else offset = s.w.row(i).transpose();
    }
    for (int j = 0; j < data_.n_sites; ++j) kappa(j) = r(i, j) - 0.5 - omega(j) * offset(j);
    out.precision = x.transpose() * (x.array().colwise() * omega.array()).matrix();
    out.information = x.transpose() * kappa;
    out.precision.diagonal() += s.tau_sq_beta.cwiseInverse();
    out.information += s.mu_beta.cwiseQuotient(s.tau_sq_beta);
    return out;
  }
  const int p = data_.p_det();
  out.precision = Eigen::MatrixXd::Zero(p, p);
  out.information = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < data_.n_sites; ++j) {
    if (s.z(i, j) != 1) continue;
    for (int k = 0; k < data_.replicates[j]; ++k) {
      const auto y = data_.at(i, j, k);
      if (y == kMissing) continue;
      const int row = data_.det_row(j, k);
      const auto v = data_.v_det.row(row);
      out.precision.noalias() += s.omega_det(i, row) * v.transpose() * v;
      out.information += (y - 0.5) * v.transpose();
    }
  }
  out.precision.diagonal() += s.tau_sq_alpha.cwiseInverse();
  out.information += s.mu_alpha.cwiseQuotient(s.tau_sq_alpha);
  return out;
}

void GibbsSampler::update_species_coefficients(ParamState& s, Stage stage,
                                               RandomStream& stream) const {
  if (stage == Stage::detection && !models_detection(spec_.variant)) return;
  auto& coef = stage == Stage::occurrence ? s.beta : s.alpha;
  for (int i = 0; i < data_.n_species; ++i) {
    const auto cond = species_coefficient_conditional(s, i, stage);
    try {
      coef.row(i) = sample_mvn_canonical(cond.precision, cond.information, stream).transpose();
    } catch (const NumericError&) {
      throw NumericError("singular coefficient precision for species " + std::to_string(i + 1), i);
    }
  }
}

void GibbsSampler::update_community(ParamState& s, RandomStream& stream) const {
  auto update = [&](const Eigen::MatrixXd& coef, Eigen::VectorXd& mu, Eigen::VectorXd& tau_sq,
                    const NormalPrior& mp, const InverseGammaPrior& vp) {
    for (Eigen::Index t = 0; t < coef.cols(); ++t) {
      const Eigen::VectorXd col = coef.col(t);
      const std::span<const double> values(col.data(), static_cast<std::size_t>(col.size()));
      const auto m = community_mean_conditional(values, tau_sq(t), mp);
      mu(t) = m.mean + std::sqrt(m.var) * stream.normal();
      const auto v = community_variance_conditional(values, mu(t), vp);
      tau_sq(t) = stream.inverse_gamma(v.shape, v.scale);
    }
  };
  update(s.beta, s.mu_beta, s.tau_sq_beta, spec_.priors.mu_beta, spec_.priors.tau_sq_beta);
  if (models_detection(spec_.variant)) {
    update(s.alpha, s.mu_alpha, s.tau_sq_alpha, spec_.priors.mu_alpha, spec_.priors.tau_sq_alpha);
  }
}

CanonicalNormal GibbsSampler::loadings_conditional(const ParamState& s, int i) const {
  const int q = spec_.q;
  const int n_free = std::min(i, q);
  CanonicalNormal out;
  out.precision = Eigen::MatrixXd::Identity(n_free, n_free);
  out.information = Eigen::VectorXd::Zero(n_free);
  if (n_free == 0) return out;
  const Eigen::MatrixXi& r = response(s);
  const Eigen::VectorXd xb = data_.x_occ * s.beta.row(i).transpose();
  for (int j = 0; j < data_.n_sites; ++j) {
    const double omega = s.omega_occ(i, j);
    const double fixed = i < q ? s.w(i, j) : 0.0;
    const double kappa = r(i, j) - 0.5 - omega * (xb(j) + fixed);
    const auto wj = s.w.col(j).head(n_free);
    out.precision.noalias() += omega * wj * wj.transpose();
    out.information += kappa * wj;
  }
  return out;
}

void GibbsSampler::update_loadings(ParamState& s, RandomStream& stream) const {
  if (!has_factors(spec_.variant) || options_.fixed_loadings) return;
  for (int i = 1; i < data_.n_species; ++i) {
    const auto cond = loadings_conditional(s, i);
    const Eigen::VectorXd draw = sample_mvn_canonical(cond.precision, cond.information, stream);
    s.lambda.row(i).head(draw.size()) = draw.transpose();
  }
}

namespace {

// NNGP prior precision and information for the value at `site` given every
// other site, for one process with factors scaled by `scale`.
std::pair<double, double> nngp_site_prior(const NngpGraph& g, const NngpFactors& f,
                                          const Eigen::MatrixXd& w, int r, int site,
                                          double scale) {
  const auto nb = g.neighbors(site);
  const auto b = f.b(site);
  double mean = 0.0;
  for (std::size_t a = 0; a < nb.size(); ++a) mean += b[a] * w(r, nb[a]);
  const double f_site = scale * f.f(site);
  double prec = 1.0 / f_site;
  double info = mean / f_site;
  for (const auto& use : g.uses(site)) {
    const auto nb_t = g.neighbors(use.site);
    const auto b_t = f.b(use.site);
    double rest = w(r, use.site);
    for (std::size_t a = 0; a < nb_t.size(); ++a) {
      if (static_cast<int>(a) != use.slot) rest -= b_t[a] * w(r, nb_t[a]);
    }
    const double f_t = scale * f.f(use.site);
    const double bj = b_t[use.slot];
    prec += bj * bj / f_t;
    info += bj * rest / f_t;
  }
  return {prec, info};
}

}  // namespace

CanonicalNormal GibbsSampler::factor_site_conditional(const ChainState& chain, int j) const {
  const ParamState& s = chain.params;
  const int procs = n_processes();
  const Eigen::MatrixXi& r = response(s);
  CanonicalNormal out;
  out.precision = Eigen::MatrixXd::Zero(procs, procs);
  out.information = Eigen::VectorXd::Zero(procs);
  const Eigen::VectorXd xb = s.beta * data_.x_occ.row(j).transpose();
  for (int i = 0; i < data_.n_species; ++i) {
    const double omega = s.omega_occ(i, j);
    const double kappa = r(i, j) - 0.5 - omega * xb(i);
    if (spec_.variant == Variant::spMsPGOcc) {
      out.precision(i, i) += omega;
      out.information(i) += kappa;
    } else {
      const auto l = s.lambda.row(i).transpose();
      out.precision.noalias() += omega * l * l.transpose();
      out.information += kappa * l;
    }
  }
  for (int p = 0; p < procs; ++p) {
    if (graph_) {
      const double scale = spec_.variant == Variant::spMsPGOcc ? s.sigma_sq(p) : 1.0;
      const auto [prec, info] =
          nngp_site_prior(*graph_, chain.correlation_factors[p], s.w, p, j, scale);
      out.precision(p, p) += prec;
      out.information(p) += info;
    } else {
      out.precision(p, p) += 1.0;
    }
  }
  return out;
}

void GibbsSampler::update_factors(ChainState& chain, RandomStream& stream) const {
  const int procs = n_processes();
  if (procs == 0) return;
  ParamState& s = chain.params;
  for (int j = 0; j < data_.n_sites; ++j) {
    const auto cond = factor_site_conditional(chain, j);
    if (spec_.variant == Variant::spMsPGOcc) {
      for (int p = 0; p < procs; ++p) {
        const double var = 1.0 / cond.precision(p, p);
        s.w(p, j) = var * cond.information(p) + std::sqrt(var) * stream.normal();
      }
      continue;
    }
    try {
      s.w.col(j) = sample_mvn_canonical(cond.precision, cond.information, stream);
    } catch (const NumericError&) {
      throw NumericError("singular factor precision at site " + std::to_string(j + 1), j);
    }
  }
}

double GibbsSampler::phi_log_target(const ChainState& chain, int r, double phi,
                                    const NngpFactors& factors) const {
  const ParamState& s = chain.params;
  const Eigen::VectorXd w = s.w.row(r).transpose();
  const double scale = spec_.variant == Variant::spMsPGOcc ? s.sigma_sq(r) : 1.0;
  const double ld = nngp_log_density({w.data(), static_cast<std::size_t>(w.size())}, *graph_,
                                     factors, scale);
  return ld + std::log(phi - phi_bounds_.lower) + std::log(phi_bounds_.upper - phi);
}

void GibbsSampler::update_phi(ChainState& chain, bool adapt, RandomStream& stream) const {
  if (!graph_) return;
  ParamState& s = chain.params;
  const double a = phi_bounds_.lower, b = phi_bounds_.upper;
  for (Eigen::Index r = 0; r < s.phi.size(); ++r) {
    if (spec_.variant == Variant::spMsPGOcc) {
      const auto& f = chain.correlation_factors[r];
      double ss = 0.0;
      for (int j = 0; j < data_.n_sites; ++j) {
        const auto nb = graph_->neighbors(j);
        const auto bj = f.b(j);
        double e = s.w(r, j);
        for (std::size_t k = 0; k < nb.size(); ++k) e -= bj[k] * s.w(r, nb[k]);
        ss += e * e / f.f(j);
      }
      const auto& prior = spec_.priors.sigma_sq;
      s.sigma_sq(r) = stream.inverse_gamma(prior.shape + 0.5 * data_.n_sites, prior.scale + 0.5 * ss);
    }
    const double cur = s.phi(r);
    const double eta = logit((cur - a) / (b - a)) + std::exp(chain.log_tuning(r)) * stream.normal();
    const double cand = a + (b - a) * logistic(eta);
    bool accepted = false;
    if (cand > a && cand < b) {
      NngpFactors cand_factors =
          nngp_factors(*graph_, {spec_.cov_family, cand, 1.0, spec_.nu});
      const double ratio = phi_log_target(chain, static_cast<int>(r), cand, cand_factors) -
                           phi_log_target(chain, static_cast<int>(r), cur,
                                          chain.correlation_factors[r]);
      if (metropolis_accept(ratio, stream)) {
        s.phi(r) = cand;
        chain.correlation_factors[r] = std::move(cand_factors);
        accepted = true;
      }
    }
    if (adapt) {
      chain.batch_accepted(r) += accepted;
    } else {
      chain.accepted += accepted;
      ++chain.proposed;
    }
  }
  if (!adapt) return;
  if (++chain.batch_iterations < options_.adapt_batch) return;
  ++chain.batches_done;
  const double delta = std::min(0.01, 1.0 / std::sqrt(static_cast<double>(chain.batches_done)));
  for (Eigen::Index r = 0; r < s.phi.size(); ++r) {
    const double rate = static_cast<double>(chain.batch_accepted(r)) / options_.adapt_batch;
    chain.log_tuning(r) += rate > options_.target_acceptance ? delta : -delta;
    chain.batch_accepted(r) = 0;
  }
  chain.batch_iterations = 0;
}

void GibbsSampler::iterate(ChainState& chain, bool adapt, RandomStream& stream) const {
  ParamState& s = chain.params;
  update_omega(s, Stage::occurrence, stream);
  update_z(s, stream);
  update_omega(s, Stage::detection, stream);
  update_species_coefficients(s, Stage::detection, stream);
  update_species_coefficients(s, Stage::occurrence, stream);
  update_community(s, stream);
  update_loadings(s, stream);
  update_factors(chain, stream);
  update_phi(chain, adapt, stream);
}

// ---------------------------------------------------------------------------

namespace {

void store_row(Eigen::MatrixXd& block, int row, const Eigen::MatrixXd& m, bool transpose) {
  // Row-major flattening of the state matrix into one draw row.
  const Eigen::Index rows = transpose ? m.cols() : m.rows();
  const Eigen::Index cols = transpose ? m.rows() : m.cols();
  for (Eigen::Index a = 0; a < rows; ++a) {
    for (Eigen::Index b = 0; b < cols; ++b) {
      block(row, a * cols + b) = transpose ? m(b, a) : m(a, b);
    }
  }
}

ChainDraws run_chain(const GibbsSampler& sampler, const McmcConfig& mcmc, int chain_id) {
  RandomStream stream(mcmc.seed, static_cast<std::uint64_t>(chain_id));
  ChainState chain = sampler.initial_state(stream);
  const auto& spec = sampler.spec();
  const auto& data = sampler.data();
  const int keep = mcmc.n_retained();
  const int n = data.n_species, j_n = data.n_sites;
  const bool det = models_detection(spec.variant);
  const int procs = sampler.n_processes();

  ChainDraws out;
  out.beta.resize(keep, n * data.p_occ());
  out.mu_beta.resize(keep, data.p_occ());
  out.tau_sq_beta.resize(keep, data.p_occ());
  if (det) {
    out.alpha.resize(keep, n * data.p_det());
    out.mu_alpha.resize(keep, data.p_det());
    out.tau_sq_alpha.resize(keep, data.p_det());
    out.z.resize(keep, n * j_n);
  }
  if (has_factors(spec.variant)) out.lambda.resize(keep, n * spec.q);
  if (procs > 0) out.w.resize(keep, procs * j_n);
  if (is_spatial(spec.variant)) out.phi.resize(keep, procs);
  if (spec.variant == Variant::spMsPGOcc) out.sigma_sq.resize(keep, procs);
  out.psi.resize(keep, n * j_n);

  int row = 0;
  for (int it = 0; it < mcmc.n_iterations; ++it) {
    try {
      sampler.iterate(chain, it < mcmc.n_burn, stream);
    } catch (const NumericError& e) {
      throw NumericError("chain " + std::to_string(chain_id + 1) + ", iteration " +
                             std::to_string(it + 1) + ": " + e.what(),
                         e.index());
    } catch (const std::exception& e) {
      throw std::runtime_error("chain " + std::to_string(chain_id + 1) + ", iteration " +
                               std::to_string(it + 1) + ": " + e.what());
    }
    if (it < mcmc.n_burn || (it - mcmc.n_burn + 1) % mcmc.n_thin != 0) continue;
    const ParamState& s = chain.params;
    const Eigen::MatrixXd eta = sampler.occurrence_predictor(s);
    if (!eta.allFinite()) {
      throw std::runtime_error("chain " + std::to_string(chain_id + 1) + ", iteration " +
                               std::to_string(it + 1) + ": non-finite occurrence linear predictor");
    }
    store_row(out.beta, row, s.beta, false);
    out.mu_beta.row(row) = s.mu_beta.transpose();
    out.tau_sq_beta.row(row) = s.tau_sq_beta.transpose();
    if (det) {
      store_row(out.alpha, row, s.alpha, false);
      out.mu_alpha.row(row) = s.mu_alpha.transpose();
      out.tau_sq_alpha.row(row) = s.tau_sq_alpha.transpose();
      store_row(out.z, row, s.z.cast<double>(), false);
    }
    if (has_factors(spec.variant)) store_row(out.lambda, row, s.lambda, false);
    if (procs > 0) store_row(out.w, row, s.w, false);
    if (is_spatial(spec.variant)) out.phi.row(row) = s.phi.transpose();
    if (spec.variant == Variant::spMsPGOcc) out.sigma_sq.row(row) = s.sigma_sq.transpose();
    store_row(out.psi, row, eta.unaryExpr([](double e) { return open_unit(logistic(e)); }), false);
    ++row;
  }
  out.phi_acceptance =
      chain.proposed > 0 ? static_cast<double>(chain.accepted) / static_cast<double>(chain.proposed) : 0.0;
  return out;
}

}  // namespace

PosteriorSamples run_model(const ModelSpec& spec, const SurveyData& data, const McmcConfig& mcmc,
                           const SamplerOptions& options, int workers) {
  mcmc.check();
  const GibbsSampler sampler(spec, data, options);
  PosteriorSamples out;
  out.spec = spec;
  out.mcmc = mcmc;
  out.data_digest = data_digest(data);
  out.n_species = data.n_species;
  out.n_sites = data.n_sites;
  out.p_occ = data.p_occ();
  out.p_det = models_detection(spec.variant) ? data.p_det() : 0;
  out.coords = data.coords;
  out.chains.resize(mcmc.n_chains);

  if (workers <= 1 || mcmc.n_chains == 1) {
    for (int c = 0; c < mcmc.n_chains; ++c) out.chains[c] = run_chain(sampler, mcmc, c);
    return out;
  }
  std::vector<std::exception_ptr> errors(mcmc.n_chains);
  int next = 0;
  while (next < mcmc.n_chains) {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers && next < mcmc.n_chains; ++t, ++next) {
      pool.emplace_back([&, c = next] {
        try {
          out.chains[c] = run_chain(sampler, mcmc, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Eigen::MatrixXd derive_psi(const PosteriorSamples& samples, const ChainDraws& chain,
                           const SurveyData& data) {
  const int n = samples.n_species, j_n = samples.n_sites, p = samples.p_occ;
  const int q = samples.spec.q;
  const Variant v = samples.spec.variant;
  const Eigen::Index draws = chain.beta.rows();
  Eigen::MatrixXd psi(draws, static_cast<Eigen::Index>(n) * j_n);
  Eigen::MatrixXd beta(n, p), eta;
  for (Eigen::Index d = 0; d < draws; ++d) {
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < p; ++t) beta(i, t) = chain.beta(d, i * p + t);
    }
    eta = beta * data.x_occ.transpose();
    if (has_factors(v)) {
      Eigen::MatrixXd lambda(n, q), w(q, j_n);
      for (int i = 0; i < n; ++i) {
        for (int r = 0; r < q; ++r) lambda(i, r) = chain.lambda(d, i * q + r);
      }
      for (int r = 0; r < q; ++r) {
        for (int j = 0; j < j_n; ++j) w(r, j) = chain.w(d, r * j_n + j);
      }
      eta += lambda * w;
    } else if (v == Variant::spMsPGOcc) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < j_n; ++j) eta(i, j) += chain.w(d, i * j_n + j);
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < j_n; ++j) psi(d, i * j_n + j) = open_unit(logistic(eta(i, j)));
    }
  }
  return psi;
}

}  // namespace sfocc
