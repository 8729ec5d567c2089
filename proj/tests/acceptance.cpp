// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion names
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "sfocc/cli.hpp"
#include "sfocc/diagnostics.hpp"
#include "sfocc/gibbs.hpp"
#include "sfocc/io.hpp"
#include "sfocc/predict.hpp"
#include "sfocc/rngmath.hpp"
#include "sfocc/simulate.hpp"
#include "sfocc/spatial.hpp"
#include "sfocc/study.hpp"

namespace fs = std::filesystem;
using namespace sfocc;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// Protocol of the scaled simulation study.
McmcConfig study_mcmc() {
  McmcConfig m;
  m.n_chains = 3;
  m.n_iterations = 15000;
  m.n_burn = 10000;
  m.n_thin = 5;
  return m;
}

// ---------------------------------------------------------------------------

Outcome pg_moments() {
  const auto start = Clock::now();
  std::string detail;
  bool ok = true;
  RandomStream stream(2024, 0);
  for (double c : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    double sum = 0.0;
    for (int t = 0; t < 1000000; ++t) sum += sample_polya_gamma(c, stream);
    const double mean = sum / 1e6;
    const double ref = oracle::pg_truncated_mean(c, 200);
    const double rel = std::abs(mean - ref) / ref;
    ok = ok && rel < 0.01;
    detail += "c=" + fmt(c) + " rel=" + fmt(rel, 2) + " ";
  }
  const double secs = seconds_since(start);
  ok = ok && secs < 30.0;
  return {ok, detail + "time=" + fmt(secs, 3) + "s"};
}

Outcome nngp_exactness() {
  RandomStream rng(77, 0);
  const int j_n = 50;
  Eigen::MatrixX2d coords(j_n, 2);
  for (int j = 0; j < j_n; ++j) coords.row(j) << rng.uniform(), rng.uniform();
  const CovarianceSpec spec{CovarianceFamily::exponential, 4.0, 1.7, 0.5};
  const NngpGraph graph(coords, j_n - 1);
  const Eigen::MatrixXd dense = oracle::dense_covariance(coords, spec.phi, spec.sigma_sq);
  double worst_ld = 0.0, worst_k = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd w(j_n);
    for (int j = 0; j < j_n; ++j) w(j) = 1.3 * rng.normal();
    const double ld = nngp_log_density({w.data(), static_cast<std::size_t>(j_n)}, graph, spec);
    worst_ld = std::max(worst_ld, std::abs(ld - oracle::dense_mvn_log_density(w, dense)));
    for (int s = 0; s < 4; ++s) {
      const Eigen::Vector2d p(rng.uniform() * 1.2 - 0.1, rng.uniform() * 1.2 - 0.1);
      const auto k = conditional_at_new_site(graph, spec, p, {w.data(), static_cast<std::size_t>(j_n)});
      const auto ref = oracle::dense_kriging(coords, w, p, spec.phi, spec.sigma_sq);
      worst_k = std::max({worst_k, std::abs(k.mean - ref.mean), std::abs(k.variance - ref.variance)});
    }
  }
  return {worst_ld < 1e-8 && worst_k < 1e-8,
          "max|dlogdens|=" + fmt(worst_ld, 3) + " max|dkriging|=" + fmt(worst_k, 3)};
}

Outcome z_update_oracle() {
  RandomStream rng(99, 0);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const double psi = rng.uniform();
    const int k = 1 + static_cast<int>(rng.uniform() * 6);
    std::vector<double> p(k);
    std::vector<int> y(k);
    std::vector<std::int8_t> y8(k);
    for (int t = 0; t < k; ++t) {
      p[t] = rng.uniform();
      const double u = rng.uniform();
      y[t] = u < 0.15 ? -1 : (u < 0.3 ? 1 : 0);
      y8[t] = static_cast<std::int8_t>(y[t]);
    }
    const double got = occupancy_conditional_probability(psi, p, y8);
    worst = std::max(worst, std::abs(got - oracle::enumerate_occupancy(psi, p, y)));
  }
  return {worst <= 1e-12, "max|diff|=" + fmt(worst, 3) + " over 1000 cases"};
}

// Joint-distribution test: forward draws from the prior predictive against a
// chain alternating Gibbs sweeps with data regeneration.
struct GewekeSetup {
  int n = 3, j = 12, k = 2, q = 1;
  ModelSpec spec;
  SurveyData base;
};

GewekeSetup geweke_setup() {
  GewekeSetup g;
  RandomStream rng(4242, 0);
  g.spec.variant = Variant::sfMsPGOcc;
  g.spec.q = g.q;
  g.spec.m = g.j - 1;
  g.spec.priors.mu_beta = {0.0, 1.0};
  g.spec.priors.mu_alpha = {0.0, 1.0};
  g.spec.priors.tau_sq_beta = {5.0, 4.0};
  g.spec.priors.tau_sq_alpha = {5.0, 4.0};
  g.spec.priors.phi_bounds = UniformBounds{3.0, 30.0};
  SurveyData& d = g.base;
  d.n_species = g.n;
  d.n_sites = g.j;
  d.max_replicates = g.k;
  d.replicates.assign(g.j, g.k);
  d.coords.resize(g.j, 2);
  d.x_occ.resize(g.j, 2);
  d.v_det.resize(g.j * g.k, 2);
  for (int j = 0; j < g.j; ++j) {
    d.coords.row(j) << rng.uniform(), rng.uniform();
    d.x_occ.row(j) << 1.0, rng.normal();
    for (int k = 0; k < g.k; ++k) d.v_det.row(j * g.k + k) << 1.0, rng.normal();
  }
  d.y.assign(static_cast<std::size_t>(g.n) * g.j * g.k, 0);
  d.fill_default_labels();
  return g;
}

ParamState geweke_prior_draw(const GewekeSetup& g, RandomStream& rng) {
  ParamState s;
  const auto& pr = g.spec.priors;
  auto coefs = [&](int p, const NormalPrior& mp, const InverseGammaPrior& vp, Eigen::VectorXd& mu,
                   Eigen::VectorXd& tau, Eigen::MatrixXd& coef) {
    mu.resize(p);
    tau.resize(p);
    coef.resize(g.n, p);
    for (int t = 0; t < p; ++t) {
      mu(t) = mp.mean + std::sqrt(mp.var) * rng.normal();
      tau(t) = 1.0 / rng.gamma(vp.shape, 1.0 / vp.scale);
      for (int i = 0; i < g.n; ++i) coef(i, t) = mu(t) + std::sqrt(tau(t)) * rng.normal();
    }
  };
  coefs(2, pr.mu_beta, pr.tau_sq_beta, s.mu_beta, s.tau_sq_beta, s.beta);
  coefs(2, pr.mu_alpha, pr.tau_sq_alpha, s.mu_alpha, s.tau_sq_alpha, s.alpha);
  s.lambda = Eigen::MatrixXd::Zero(g.n, g.q);
  for (int i = 0; i < g.n; ++i) s.lambda(i, 0) = i == 0 ? 1.0 : rng.normal();
  s.phi.resize(1);
  s.phi(0) = pr.phi_bounds->lower + (pr.phi_bounds->upper - pr.phi_bounds->lower) * rng.uniform();
  const Eigen::MatrixXd c = oracle::dense_covariance(g.base.coords, s.phi(0), 1.0);
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(c).matrixL();
  Eigen::VectorXd e(g.j);
  for (int j = 0; j < g.j; ++j) e(j) = rng.normal();
  s.w = (l * e).transpose();
  const Eigen::MatrixXd eta = s.beta * g.base.x_occ.transpose() + s.lambda * s.w;
  s.z.resize(g.n, g.j);
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.j; ++j) s.z(i, j) = rng.bernoulli(1.0 / (1.0 + std::exp(-eta(i, j))));
  }
  s.omega_occ = Eigen::MatrixXd::Zero(g.n, g.j);
  s.omega_det = Eigen::MatrixXd::Zero(g.n, g.j * g.k);
  return s;
}

void geweke_data(const GewekeSetup& g, const ParamState& s, SurveyData& d, RandomStream& rng) {
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.j; ++j) {
      for (int k = 0; k < g.k; ++k) {
        const double e = s.alpha.row(i).dot(d.v_det.row(j * g.k + k));
        const double p = 1.0 / (1.0 + std::exp(-e));
        d.at(i, j, k) = static_cast<std::int8_t>(s.z(i, j) == 1 && rng.bernoulli(p));
      }
    }
  }
}

std::vector<double> geweke_stats(const ParamState& s) {
  std::vector<double> g;
  for (Eigen::Index i = 0; i < s.beta.size(); ++i) g.push_back(s.beta.data()[i]);
  for (Eigen::Index i = 1; i < s.lambda.rows(); ++i) g.push_back(s.lambda(i, 0));
  for (Eigen::Index j = 0; j < s.w.cols(); ++j) g.push_back(s.w(0, j));
  const std::size_t first = g.size();
  for (std::size_t a = 0; a < first; ++a) g.push_back(g[a] * g[a]);
  return g;
}

Outcome geweke_test() {
  const auto start = Clock::now();
  const GewekeSetup g = geweke_setup();
  const int n_draws = 200000;
  std::vector<std::vector<double>> mc, sc;

  RandomStream prior_rng(5, 1);
  for (int t = 0; t < n_draws; ++t) mc.push_back(geweke_stats(geweke_prior_draw(g, prior_rng)));

  RandomStream rng(5, 2);
  SurveyData data = g.base;
  ChainState chain;
  {
    GibbsSampler sampler(g.spec, data);
    chain = sampler.initial_state(rng);
    chain.params = geweke_prior_draw(g, rng);
  }
  geweke_data(g, chain.params, data, rng);
  for (int t = 0; t < n_draws; ++t) {
    GibbsSampler sampler(g.spec, data);
    sampler.refresh(chain);
    sampler.iterate(chain, false, rng);
    geweke_data(g, chain.params, data, rng);
    sc.push_back(geweke_stats(chain.params));
  }

  const std::size_t n_stats = mc.front().size();
  double worst = 0.0;
  int over = 0;
  for (std::size_t a = 0; a < n_stats; ++a) {
    Eigen::VectorXd x(n_draws), y(n_draws);
    for (int t = 0; t < n_draws; ++t) {
      x(t) = mc[t][a];
      y(t) = sc[t][a];
    }
    const double vx = (x.array() - x.mean()).square().sum() / (n_draws - 1);
    const double vy = (y.array() - y.mean()).square().sum() / (n_draws - 1);
    const double ess = effective_sample_size(y);
    const double se = std::sqrt(vx / n_draws + vy / ess);
    const double z = std::abs(x.mean() - y.mean()) / se;
    worst = std::max(worst, z);
    over += z > 3.0;
  }
  const double secs = seconds_since(start);
  return {over == 0 && secs < 600.0, std::to_string(n_stats) + " moments, max |z|=" + fmt(worst, 3) +
                                         ", beyond 3 MCSE: " + std::to_string(over) +
                                         ", time=" + fmt(secs, 3) + "s"};
}

// ---------------------------------------------------------------------------
// Scaled simulation study shared by the coverage and RMSE criteria.

struct StudyRuns {
  std::vector<ReplicateResult> s3_ms, s6_sf, s6_ms;
  bool done = false;
};

StudyRuns& study_runs() {
  static StudyRuns runs;
  if (runs.done) return runs;
  auto run = [](int scenario, Variant v) {
    StudyConfig c;
    c.scenarios = {scenario};
    c.models = {v};
    c.n_replicates = 20;
    c.seed = 2022;
    c.mcmc = study_mcmc();
    c.workers = worker_count();
    const auto start = Clock::now();
    auto r = run_study(c, [&](const ReplicateResult& x) {
      std::cerr << "  scenario " << x.scenario << " " << to_string(x.model) << " replicate "
                << x.replicate + 1 << (x.ok ? "" : " FAILED " + x.error) << " ("
                << fmt(x.seconds, 3) << "s)\n";
    });
    std::cerr << "  study cell done in " << fmt(seconds_since(start), 4) << "s\n";
    return r;
  };
  runs.s3_ms = run(3, Variant::msPGOcc);
  runs.s6_sf = run(6, Variant::sfMsPGOcc);
  runs.s6_ms = run(6, Variant::msPGOcc);
  runs.done = true;
  return runs;
}

double mean_metric(const std::vector<ReplicateResult>& r, double RecoveryReport::*field, int& ok) {
  double s = 0.0;
  ok = 0;
  for (const auto& x : r) {
    if (!x.ok) continue;
    s += x.metrics.*field;
    ++ok;
  }
  return ok > 0 ? s / ok : std::nan("");
}

Outcome coverage_recovery() {
  const StudyRuns& r = study_runs();
  int n1, n2, n3;
  const double beta3 = mean_metric(r.s3_ms, &RecoveryReport::coverage_beta, n1);
  const double psi6_sf = mean_metric(r.s6_sf, &RecoveryReport::coverage_psi, n2);
  const double psi6_ms = mean_metric(r.s6_ms, &RecoveryReport::coverage_psi, n3);
  const bool ok = n1 == 20 && n2 == 20 && n3 == 20 && beta3 >= 91.0 && beta3 <= 98.0 &&
                  psi6_sf >= 91.0 && psi6_sf <= 98.0 && psi6_ms < 85.0;
  return {ok, "s3 msPGOcc beta=" + fmt(beta3) + " s6 sfMsPGOcc psi=" + fmt(psi6_sf) +
                  " s6 msPGOcc psi=" + fmt(psi6_ms) + " (fits ok: " + std::to_string(n1) + "/" +
                  std::to_string(n2) + "/" + std::to_string(n3) + ")"};
}

Outcome rmse_ordering() {
  const StudyRuns& r = study_runs();
  int wins = 0, paired = 0;
  double sf_sum = 0.0, ms_sum = 0.0;
  for (std::size_t a = 0; a < r.s6_sf.size(); ++a) {
    if (!r.s6_sf[a].ok || !r.s6_ms[a].ok) continue;
    ++paired;
    sf_sum += r.s6_sf[a].metrics.rmse_psi;
    ms_sum += r.s6_ms[a].metrics.rmse_psi;
    wins += r.s6_sf[a].metrics.rmse_psi <= r.s6_ms[a].metrics.rmse_psi;
  }
  const bool ok = paired == 20 && wins >= 14;
  return {ok, "sfMsPGOcc <= msPGOcc in " + std::to_string(wins) + "/" + std::to_string(paired) +
                  " (mean rmse " + fmt(sf_sum / std::max(paired, 1), 3) + " vs " +
                  fmt(ms_sum / std::max(paired, 1), 3) + ")"};
}

Outcome model_selection() {
  const auto start = Clock::now();
  const int n_seeds = 10;
  struct Row {
    bool ok = false;
    double waic_sf = 0, waic_ms = 0, dev_sf = 0, dev_ms = 0;
    std::string error;
  };
  std::vector<Row> rows(n_seeds);
  parallel_for(n_seeds * 2, worker_count(), [&](int t) {
    const int s = t / 2;
    const Variant v = t % 2 == 0 ? Variant::sfMsPGOcc : Variant::msPGOcc;
    const std::uint64_t seed = 500 + static_cast<std::uint64_t>(s);
    Row& row = rows[s];
    try {
      const SimulatedData sim = simulate_scenario(6, seed);
      const HoldoutSplit split = holdout_split(sim.data.n_sites, 0.75, seed);
      const SurveyData train = subset_sites(sim.data, split.train);
      const SurveyData hold = subset_sites(sim.data, split.holdout);
      McmcConfig m = study_mcmc();
      m.seed = replicate_fit_seed(seed, v);
      const PosteriorSamples fit = run_model(study_model_spec(v), train, m);
      const double w = waic(fit, train).waic;
      const double d = holdout_deviance_data(fit, hold, seed);
      if (v == Variant::sfMsPGOcc) {
        row.waic_sf = w;
        row.dev_sf = d;
      } else {
        row.waic_ms = w;
        row.dev_ms = d;
      }
      std::cerr << "  seed " << seed << " " << to_string(v) << " waic=" << fmt(w, 7)
                << " deviance=" << fmt(d, 6) << "\n";
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  int waic_wins = 0, dev_wins = 0, both = 0, failed = 0;
  for (const Row& r : rows) {
    if (!r.error.empty()) {
      ++failed;
      continue;
    }
    const bool w = r.waic_sf < r.waic_ms, d = r.dev_sf < r.dev_ms;
    waic_wins += w;
    dev_wins += d;
    both += w && d;
  }
  return {both >= 7, "both criteria favor sfMsPGOcc in " + std::to_string(both) + "/10 (waic " +
                         std::to_string(waic_wins) + ", deviance " + std::to_string(dev_wins) +
                         ", failed " + std::to_string(failed) + ", time " +
                         fmt(seconds_since(start), 4) + "s)"};
}

Outcome performance() {
  const SimulatedData sim = simulate_scenario(6, 31);
  McmcConfig m;
  m.n_chains = 1;
  m.n_iterations = 15000;
  m.n_burn = 10000;
  m.n_thin = 5;
  m.seed = 31;
  const auto start = Clock::now();
  const PosteriorSamples fit = run_model(study_model_spec(Variant::sfMsPGOcc, 3, 15), sim.data, m);
  const double secs = seconds_since(start);
  return {secs < 1800.0 && fit.total_draws() == 1000, "15000 iterations in " + fmt(secs, 4) + "s"};
}

// ---------------------------------------------------------------------------

bool same_bytes(const fs::path& a, const fs::path& b) {
  if (!fs::exists(a) || !fs::exists(b)) return false;
  return read_text(a) == read_text(b);
}

std::vector<fs::path> output_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
      out.push_back(fs::relative(e.path(), dir));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("sfocc_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream log;
  auto run = [&](const std::string& cmd, const fs::path& config, const fs::path& out, int workers = 1) {
    CommandArgs a;
    a.command = cmd;
    a.config = config;
    a.out = out;
    a.workers = workers;
    return run_command(a, log);
  };
  auto write_json = [&](const fs::path& p, const Json& j) { write_text(p, j.dump(2)); };

  // Training and holdout data from a scenario-6 replicate.
  const SimulatedData sim = simulate_scenario(6, 8);
  const HoldoutSplit split = holdout_split(sim.data.n_sites, 0.75, 8);
  auto data_json = [&](const std::string& name, const SurveyData& d) {
    const DataPaths p{root / name / "detections.csv", root / name / "coords.csv",
                      root / name / "occ_covariates.csv", root / name / "det_covariates.csv"};
    write_survey(d, p);
    return to_json(p);
  };
  const Json train = data_json("train", subset_sites(sim.data, split.train));
  const Json hold = data_json("hold", subset_sites(sim.data, split.holdout));
  const Json full = data_json("full", sim.data);
  const Json mcmc{{"n_chains", 2}, {"n_iterations", 300}, {"n_burn", 150}, {"n_thin", 3}};

  write_json(root / "sim.json", Json{{"scenario", 6}, {"seed", 3}});
  write_json(root / "fit_sf.json", Json{{"data", train}, {"model", {{"variant", "sfMsPGOcc"}, {"q", 3}}},
                                        {"mcmc", mcmc}, {"seed", 11}});
  write_json(root / "fit_ref.json", Json{{"data", full}, {"model", {{"variant", "msPGOcc"}}},
                                         {"mcmc", mcmc}, {"seed", 13}});
  write_json(root / "fit_ms.json", Json{{"data", train}, {"model", {{"variant", "msPGOcc"}}},
                                        {"mcmc", mcmc}, {"seed", 12}});
  write_json(root / "predict.json",
             Json{{"fit", (root / "a_fit_sf").string()},
                  {"grid", {{"coords", hold["coords"]}, {"occ_covariates", hold["occ_covariates"]}}},
                  {"seed", 5}});
  write_json(root / "compare.json",
             Json{{"fits", {(root / "a_fit_sf").string(), (root / "a_fit_ms").string()}},
                  {"holdout", hold},
                  {"references", {(root / "a_fit_ref").string()}},
                  {"seed", 5}});
  write_json(root / "study.json",
             Json{{"scenarios", {3}}, {"models", {"msPGOcc"}}, {"n_replicates", 2},
                  {"mcmc", {{"n_chains", 2}, {"n_iterations", 120}, {"n_burn", 60}, {"n_thin", 2}}},
                  {"seed", 9}});

  const std::vector<std::pair<std::string, std::string>> steps{
      {"simulate", "sim"}, {"fit", "fit_sf"}, {"fit", "fit_ms"}, {"fit", "fit_ref"},
      {"predict", "predict"}, {"compare", "compare"}, {"simstudy", "study"}};
  std::string detail;
  bool ok = true;
  for (const auto& [cmd, name] : steps) {
    const fs::path a = root / ("a_" + name), b = root / ("b_" + name);
    const int s1 = run(cmd, root / (name + ".json"), a, cmd == "fit" ? 2 : 1);
    const int s2 = run(cmd, a / "manifest.json", b, 1);
    const auto files = output_files(a);
    bool same = s1 == 0 && s2 == 0 && !files.empty() && files == output_files(b);
    for (const auto& f : files) same = same && same_bytes(a / f, b / f);
    ok = ok && same;
    detail += name + (same ? "=same " : "=DIFF ");
  }
  if (!ok) std::cerr << log.str();
  fs::remove_all(root);
  return {ok, detail};
}

// Random small problems; the constraint checks run after every sweep.
Outcome invariants_fuzz() {
  RandomStream rng(31337, 0);
  const Variant variants[] = {Variant::lfJSDM, Variant::sfJSDM, Variant::msPGOcc,
                              Variant::spMsPGOcc, Variant::lfMsPGOcc, Variant::sfMsPGOcc};
  long iterations = 0, violations = 0;
  std::string first;
  int problem = 0;
  while (iterations < 10000) {
    const Variant v = variants[problem % 6];
    CustomScenario sc;
    sc.n_species = 1 + static_cast<int>(rng.uniform() * 5);
    sc.n_sites = 5 + static_cast<int>(rng.uniform() * 20);
    sc.replicates = 1 + static_cast<int>(rng.uniform() * 4);
    sc.beta_mean = {rng.normal(), 0.0};
    sc.beta_var = {1.0 + 2.0 * rng.uniform(), 1.0};
    sc.alpha_mean = {rng.normal(), 0.5};
    sc.alpha_var = {1.0, 1.0};
    if (has_factors(v)) {
      sc.q = 1 + static_cast<int>(rng.uniform() * sc.n_species);
      sc.latent = is_spatial(v) ? LatentStructure::spatial_factor : LatentStructure::factor;
    } else if (v == Variant::spMsPGOcc) {
      sc.latent = LatentStructure::species_spatial;
    }
    SimulatedData sim = simulate_custom(sc, 1000 + static_cast<std::uint64_t>(problem));
    // Knock out a few replicates to exercise missing cells.
    for (auto& y : sim.data.y) {
      if (rng.uniform() < 0.1) y = kMissing;
    }
    for (int j = 0; j < sim.data.n_sites; ++j) {
      for (int i = 0; i < sim.data.n_species; ++i) {
        if (sim.data.at(i, j, 0) == kMissing) sim.data.at(i, j, 0) = 0;
      }
    }
    ModelSpec spec = study_model_spec(v, std::max(sc.q, 1), 1 + static_cast<int>(rng.uniform() * 8));
    ++problem;
    try {
      const GibbsSampler sampler(spec, sim.data);
      RandomStream stream(problem, 7);
      ChainState chain = sampler.initial_state(stream);
      const UniformBounds pb = sampler.phi_bounds();
      for (int it = 0; it < 100 && iterations < 10000; ++it, ++iterations) {
        sampler.iterate(chain, it < 50, stream);
        const ParamState& s = chain.params;
        std::string bad;
        if (has_factors(v)) {
          for (int i = 0; i < s.lambda.rows(); ++i) {
            for (int r = 0; r < s.lambda.cols(); ++r) {
              if (r == i && s.lambda(i, r) != 1.0) bad = "lambda diagonal";
              if (r > i && s.lambda(i, r) != 0.0) bad = "lambda upper triangle";
            }
          }
        }
        if (models_detection(v)) {
          for (int i = 0; i < sim.data.n_species; ++i) {
            for (int j = 0; j < sim.data.n_sites; ++j) {
              for (int k = 0; k < sim.data.replicates[j]; ++k) {
                if (sim.data.at(i, j, k) == 1 && s.z(i, j) != 1) bad = "z inconsistent with detections";
              }
            }
          }
        }
        for (Eigen::Index r = 0; r < s.phi.size(); ++r) {
          if (!(s.phi(r) > pb.lower && s.phi(r) < pb.upper)) bad = "phi outside bounds";
        }
        const Eigen::MatrixXd psi = sampler.occurrence_probability(s);
        if (!(psi.array() > 0.0).all() || !(psi.array() < 1.0).all()) bad = "psi outside (0,1)";
        if (!bad.empty()) {
          ++violations;
          if (first.empty()) first = std::string(to_string(v)) + ": " + bad;
        }
      }
    } catch (const std::exception& e) {
      ++violations;
      if (first.empty()) first = std::string(to_string(v)) + " threw: " + e.what();
      iterations += 1;
    }
  }
  return {violations == 0, std::to_string(iterations) + " sweeps over " + std::to_string(problem) +
                               " problems, violations=" + std::to_string(violations) +
                               (first.empty() ? "" : " first: " + first)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"pg_moments", pg_moments},
      {"nngp_exactness", nngp_exactness},
      {"z_update_oracle", z_update_oracle},
      {"joint_distribution", geweke_test},
      {"coverage_recovery", coverage_recovery},
      {"rmse_ordering", rmse_ordering},
      {"model_selection_direction", model_selection},
      {"performance_envelope", performance},
      {"determinism", determinism},
      {"invariants_fuzz", invariants_fuzz},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    std::cerr << "running " << name << "\n";
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
