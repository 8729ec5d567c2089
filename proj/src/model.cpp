#include "sfocc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sfocc/digest.hpp"

namespace sfocc {

void SurveyData::fill_default_labels() {
  if (species_names.empty()) {
    for (int i = 0; i < n_species; ++i) species_names.push_back("sp" + std::to_string(i + 1));
  }
  if (site_ids.empty()) {
    for (int j = 0; j < n_sites; ++j) site_ids.push_back(std::to_string(j + 1));
  }
  for (int t = static_cast<int>(occ_covariate_names.size()); t + 1 < p_occ(); ++t) {
    occ_covariate_names.push_back("x" + std::to_string(t + 1));
  }
  for (int t = static_cast<int>(det_covariate_names.size()); t + 1 < p_det(); ++t) {
    det_covariate_names.push_back("v" + std::to_string(t + 1));
  }
}

Variant parse_variant(std::string_view name) {
  if (name == "lfJSDM") return Variant::lfJSDM;
  if (name == "sfJSDM") return Variant::sfJSDM;
  if (name == "msPGOcc") return Variant::msPGOcc;
  if (name == "spMsPGOcc") return Variant::spMsPGOcc;
  if (name == "lfMsPGOcc") return Variant::lfMsPGOcc;
  if (name == "sfMsPGOcc") return Variant::sfMsPGOcc;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::lfJSDM: return "lfJSDM";
    case Variant::sfJSDM: return "sfJSDM";
    case Variant::msPGOcc: return "msPGOcc";
    case Variant::spMsPGOcc: return "spMsPGOcc";
    case Variant::lfMsPGOcc: return "lfMsPGOcc";
    case Variant::sfMsPGOcc: return "sfMsPGOcc";
  }
  return "?";
}

bool models_detection(Variant v) {
  return v != Variant::lfJSDM && v != Variant::sfJSDM;
}

bool has_factors(Variant v) {
  return v == Variant::lfJSDM || v == Variant::sfJSDM ||
         v == Variant::lfMsPGOcc || v == Variant::sfMsPGOcc;
}

bool is_spatial(Variant v) {
  return v == Variant::sfJSDM || v == Variant::spMsPGOcc ||
         v == Variant::sfMsPGOcc;
}

void check_spec(const ModelSpec& spec, int n_species) {
  const auto name = std::string(to_string(spec.variant));
  if (has_factors(spec.variant)) {
    if (spec.q < 1 || spec.q > n_species) {
      throw std::invalid_argument(name + ": factor count q=" + std::to_string(spec.q) +
                                  " must lie in [1, " + std::to_string(n_species) + "]");
    }
  } else if (spec.q != 0) {
    throw std::invalid_argument(name + ": q is only valid for factor variants");
  }
  if (is_spatial(spec.variant)) {
    if (spec.m < 1) throw std::invalid_argument(name + ": m must be >= 1");
    CovarianceSpec cov{spec.cov_family, 1.0, 1.0, spec.nu};
    cov.check();
  }
  const auto& p = spec.priors;
  auto check_ig = [&](const InverseGammaPrior& ig, const char* what) {
    if (!(ig.shape > 0.0) || !(ig.scale > 0.0)) {
      throw std::invalid_argument(name + ": inverse-gamma " + what +
                                  " prior needs positive shape and scale");
    }
  };
  check_ig(p.tau_sq_beta, "tau_sq_beta");
  check_ig(p.tau_sq_alpha, "tau_sq_alpha");
  check_ig(p.sigma_sq, "sigma_sq");
  if (!(p.mu_beta.var > 0.0) || !(p.mu_alpha.var > 0.0)) {
    throw std::invalid_argument(name + ": hyperprior variances must be positive");
  }
  if (p.phi_bounds && !(0.0 < p.phi_bounds->lower && p.phi_bounds->lower < p.phi_bounds->upper)) {
    throw std::invalid_argument(name + ": phi bounds must satisfy 0 < a < b");
  }
}

UniformBounds phi_support(const PriorSpec& priors, const Eigen::MatrixX2d& coords) {
  if (priors.phi_bounds) return *priors.phi_bounds;
  const auto [lo, hi] = distance_range(coords);
  if (!(hi > 0.0)) throw std::invalid_argument("phi_support: need two distinct sites");
  return {3.0 / hi, 3.0 / lo};
}

void McmcConfig::check() const {
  if (n_chains < 1) throw std::invalid_argument("mcmc: n_chains must be >= 1");
  if (n_iterations < 1) throw std::invalid_argument("mcmc: n_iterations must be >= 1");
  if (n_burn < 0 || n_burn >= n_iterations) {
    throw std::invalid_argument("mcmc: n_burn must satisfy 0 <= n_burn < n_iterations");
  }
  if (n_thin < 1) throw std::invalid_argument("mcmc: n_thin must be >= 1");
  if (n_retained() < 1) {
    throw std::invalid_argument("mcmc: no draws retained after burn-in and thinning");
  }
}

int PosteriorSamples::n_processes() const {
  if (spec.variant == Variant::spMsPGOcc) return n_species;
  return has_factors(spec.variant) ? spec.q : 0;
}

int PosteriorSamples::draws_per_chain() const {
  return chains.empty() ? 0 : static_cast<int>(chains.front().beta.rows());
}

int PosteriorSamples::total_draws() const {
  int n = 0;
  for (const auto& c : chains) n += static_cast<int>(c.beta.rows());
  return n;
}

std::vector<NamedBlock> PosteriorSamples::blocks(int chain) const {
  const ChainDraws& c = chains.at(chain);
  std::vector<NamedBlock> out;
  auto add = [&](const char* name, const Eigen::MatrixXd& m) {
    if (m.size() > 0) out.push_back({name, &m});
  };
  add("beta", c.beta);
  add("mu_beta", c.mu_beta);
  add("tau_sq_beta", c.tau_sq_beta);
  add("alpha", c.alpha);
  add("mu_alpha", c.mu_alpha);
  add("tau_sq_alpha", c.tau_sq_alpha);
  add("lambda", c.lambda);
  add("w", c.w);
  add("phi", c.phi);
  add("sigma_sq", c.sigma_sq);
  add("z", c.z);
  add("psi", c.psi);
  return out;
}

Eigen::MatrixXd PosteriorSamples::pooled(const std::string& block) const {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (int c = 0; c < static_cast<int>(chains.size()); ++c) {
    for (const auto& b : blocks(c)) {
      if (b.name == block) {
        rows += b.draws->rows();
        cols = b.draws->cols();
      }
    }
  }
  if (cols < 0) return {};
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (int c = 0; c < static_cast<int>(chains.size()); ++c) {
    for (const auto& b : blocks(c)) {
      if (b.name == block) {
        out.middleRows(r, b.draws->rows()) = *b.draws;
        r += b.draws->rows();
      }
    }
  }
  return out;
}

std::string parameter_label(const PosteriorSamples& s, const std::string& name, int col) {
  auto two = [&](int ncol, const char* a, const char* b) {
    return name + "[" + a + std::to_string(col / ncol + 1) + "," + b +
           std::to_string(col % ncol + 1) + "]";
  };
  if (name == "beta") return two(s.p_occ, "sp", "x");
  if (name == "alpha") return two(s.p_det, "sp", "v");
  if (name == "lambda") return two(s.spec.q, "sp", "f");
  if (name == "w") return two(s.n_sites, "p", "site");
  if (name == "z" || name == "psi") return two(s.n_sites, "sp", "site");
  return name + "[" + std::to_string(col + 1) + "]";
}

namespace {

int column_rank(const Eigen::MatrixXd& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  return static_cast<int>(qr.rank());
}

}  // namespace

ValidationReport validate(const SurveyData& d, const ModelSpec& spec) {
  ValidationReport r;
  auto err = [&](std::string s) { r.errors.push_back(std::move(s)); };
  auto warn = [&](std::string s) { r.warnings.push_back(std::move(s)); };

  try {
    check_spec(spec, d.n_species);
  } catch (const std::invalid_argument& e) {
    err(e.what());
  }
  const int n = d.n_species, j_n = d.n_sites, k_max = d.max_replicates;
  if (n < 1 || j_n < 1 || k_max < 1) {
    err("data: need at least one species, site and replicate");
    return r;
  }
  if (d.y.size() != static_cast<std::size_t>(n) * j_n * k_max) {
    err("data: detection array has wrong size");
    return r;
  }
  if (d.coords.rows() != j_n) err("data: coordinates must have one row per site");
  if (d.x_occ.rows() != j_n) err("data: occurrence design must have one row per site");
  if (static_cast<int>(d.replicates.size()) != j_n) err("data: replicate counts must have one entry per site");
  if (!r.ok()) return r;
  if (models_detection(spec.variant) && d.v_det.rows() != static_cast<Eigen::Index>(j_n) * k_max) {
    err("data: detection design must have one row per site-replicate");
    return r;
  }

  for (int j = 0; j < j_n; ++j) {
    if (d.replicates[j] < 1 || d.replicates[j] > k_max) {
      err("site " + std::to_string(j + 1) + ": replicate count K_j=" +
          std::to_string(d.replicates[j]) + " outside [1, " + std::to_string(k_max) + "]");
    }
  }
  if (!r.ok()) return r;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < j_n; ++j) {
      for (int k = 0; k < k_max; ++k) {
        const auto v = d.at(i, j, k);
        const std::string where = "(species " + std::to_string(i + 1) + ", site " +
                                  std::to_string(j + 1) + ", replicate " +
                                  std::to_string(k + 1) + ")";
        if (v != 0 && v != 1 && v != kMissing) {
          err("invalid detection value " + std::to_string(v) + " at " + where);
        } else if (k >= d.replicates[j] && v != kMissing) {
          err("detection beyond K_j at " + where);
        }
      }
    }
  }
  for (int j = 0; j < j_n; ++j) {
    bool any = false;
    for (int i = 0; i < n && !any; ++i) {
      for (int k = 0; k < d.replicates[j] && !any; ++k) any = d.at(i, j, k) != kMissing;
    }
    if (!any) err("site " + std::to_string(j + 1) + ": every replicate missing for every species");
  }

  if (d.p_occ() < 1 || !(d.x_occ.col(0).array() == 1.0).all()) {
    err("occurrence design must have a leading column of ones");
  }
  if (!d.x_occ.allFinite()) err("occurrence design contains non-finite values");
  if (column_rank(d.x_occ) < d.p_occ()) err("occurrence design is rank deficient");

  if (models_detection(spec.variant)) {
    int rows = 0;
    for (int j = 0; j < j_n; ++j) rows += d.replicates[j];
    Eigen::MatrixXd used(rows, d.p_det());
    int row = 0;
    bool finite = true;
    for (int j = 0; j < j_n; ++j) {
      for (int k = 0; k < d.replicates[j]; ++k) {
        used.row(row) = d.v_det.row(d.det_row(j, k));
        finite = finite && used.row(row).allFinite();
        ++row;
      }
    }
    if (d.p_det() < 1 || !(used.col(0).array() == 1.0).all()) {
      err("detection design must have a leading column of ones");
    }
    if (!finite) err("detection design contains non-finite values on observed replicates");
    else if (column_rank(used) < d.p_det()) err("detection design is rank deficient");
  }

  for (int i = 0; i < n; ++i) {
    bool seen = false;
    for (std::size_t c = d.index(i, 0, 0); c < d.index(i + 1, 0, 0) && !seen; ++c) seen = d.y[c] == 1;
    if (!seen) {
      const std::string label = i < static_cast<int>(d.species_names.size()) ? d.species_names[i]
                                                                            : std::to_string(i + 1);
      warn("species " + label + " is never detected");
    }
  }

  std::set<std::pair<double, double>> seen_coords;
  for (int j = 0; j < j_n; ++j) {
    if (!std::isfinite(d.coords(j, 0)) || !std::isfinite(d.coords(j, 1))) {
      err("site " + std::to_string(j + 1) + ": non-finite coordinates");
      continue;
    }
    if (!seen_coords.emplace(d.coords(j, 0), d.coords(j, 1)).second) {
      const std::string msg = "site " + std::to_string(j + 1) + ": duplicate coordinates";
      if (is_spatial(spec.variant)) err(msg);
      else warn(msg);
    }
  }
  return r;
}

Eigen::MatrixXi collapse_replicates(const SurveyData& d) {
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(d.n_species, d.n_sites);
  for (int j = 0; j < d.n_sites; ++j) {
    bool any_observed = false;
    for (int i = 0; i < d.n_species; ++i) {
      for (int k = 0; k < d.max_replicates; ++k) {
        const auto v = d.at(i, j, k);
        if (v == kMissing) continue;
        any_observed = true;
        if (v == 1) out(i, j) = 1;
      }
    }
    if (!any_observed) {
      throw std::invalid_argument("collapse_replicates: site " + std::to_string(j + 1) +
                                  " has no observed replicates");
    }
  }
  return out;
}

SurveyData reorder_species(const SurveyData& d, std::span<const int> order) {
  const int n = d.n_species;
  std::vector<int> check(order.begin(), order.end());
  std::sort(check.begin(), check.end());
  bool perm = static_cast<int>(order.size()) == n;
  for (int i = 0; perm && i < n; ++i) perm = check[i] == i;
  if (!perm) throw std::invalid_argument("reorder_species: order is not a permutation");

  SurveyData out = d;
  const std::size_t slab = static_cast<std::size_t>(d.n_sites) * d.max_replicates;
  for (int i = 0; i < n; ++i) {
    std::copy_n(d.y.begin() + order[i] * slab, slab, out.y.begin() + i * slab);
    if (!d.species_names.empty()) out.species_names[i] = d.species_names[order[i]];
  }
  return out;
}

std::vector<int> detection_frequency_order(const SurveyData& d) {
  std::vector<int> count(d.n_species, 0);
  for (int i = 0; i < d.n_species; ++i) {
    for (std::size_t c = d.index(i, 0, 0); c < d.index(i + 1, 0, 0); ++c) count[i] += d.y[c] == 1;
  }
  std::vector<int> order(d.n_species);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return count[a] > count[b]; });
  return order;
}

std::string data_digest(const SurveyData& d) {
  Sha256 h;
  const int dims[3] = {d.n_species, d.n_sites, d.max_replicates};
  h.update(dims, sizeof dims);
  h.update_span(std::span<const std::int8_t>(d.y));
  h.update_span(std::span<const double>(d.coords.data(), d.coords.size()));
  h.update_span(std::span<const double>(d.x_occ.data(), d.x_occ.size()));
  h.update_span(std::span<const double>(d.v_det.data(), d.v_det.size()));
  h.update_span(std::span<const int>(d.replicates));
  return h.hex();
}

}  // namespace sfocc
