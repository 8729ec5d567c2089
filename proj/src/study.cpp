#include "sfocc/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "sfocc/gibbs.hpp"
#include "sfocc/io.hpp"
#include "sfocc/rngmath.hpp"
#include "sfocc/simulate.hpp"

namespace sfocc {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::clamp(workers, 1, std::max(n, 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  std::atomic<int> next{0};
  auto loop = [&] {
    for (int t = next++; t < n; t = next++) {
      try {
        fn(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ModelSpec study_model_spec(Variant v, int q, int m) {
  ModelSpec s;
  s.variant = v;
  s.q = has_factors(v) ? q : 0;
  s.m = m;
  return s;
}

std::uint64_t replicate_data_seed(std::uint64_t seed, int scenario, int replicate) {
  RandomStream s(seed, 1000000ULL * static_cast<std::uint64_t>(scenario) +
                           static_cast<std::uint64_t>(replicate));
  return s();
}

std::uint64_t replicate_fit_seed(std::uint64_t data_seed, Variant v) {
  RandomStream s(data_seed, 1 + static_cast<std::uint64_t>(v));
  return s();
}

std::vector<ReplicateResult> run_study(const StudyConfig& config,
                                       const std::function<void(const ReplicateResult&)>& on_done) {
  if (config.n_replicates < 1) throw std::invalid_argument("simstudy: n_replicates must be >= 1");
  if (config.scenarios.empty() || config.models.empty()) {
    throw std::invalid_argument("simstudy: need at least one scenario and one model");
  }
  config.mcmc.check();
  for (int s : config.scenarios) {
    if (s < 1 || s > 6) throw std::invalid_argument("simstudy: scenario id must be 1..6");
  }
  const int n_models = static_cast<int>(config.models.size());
  const int per_scenario = n_models * config.n_replicates;
  const int total = static_cast<int>(config.scenarios.size()) * per_scenario;
  std::vector<ReplicateResult> results(static_cast<std::size_t>(total));
  std::mutex report;

  parallel_for(total, config.workers, [&](int t) {
    ReplicateResult& r = results[t];
    r.scenario = config.scenarios[t / per_scenario];
    r.model = config.models[(t % per_scenario) / config.n_replicates];
    r.replicate = t % config.n_replicates;
    r.data_seed = replicate_data_seed(config.seed, r.scenario, r.replicate);
    const auto start = std::chrono::steady_clock::now();
    try {
      const SimulatedData sim = simulate_scenario(r.scenario, r.data_seed);
      McmcConfig mcmc = config.mcmc;
      mcmc.seed = replicate_fit_seed(r.data_seed, r.model);
      const PosteriorSamples fit =
          run_model(study_model_spec(r.model, config.q, config.m), sim.data, mcmc);
      r.metrics = recovery_metrics(fit, sim.truth);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_done) {
      std::lock_guard lock(report);
      on_done(r);
    }
  });
  return results;
}

namespace {

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

StudyTables study_tables(const StudyConfig& config, const std::vector<ReplicateResult>& results) {
  auto cell = [&](int scenario, Variant model, auto metric, double& mean, int& ok, int& failed) {
    double sum = 0.0;
    ok = failed = 0;
    for (const auto& r : results) {
      if (r.scenario != scenario || r.model != model) continue;
      if (r.ok) {
        sum += metric(r.metrics);
        ++ok;
      } else {
        ++failed;
      }
    }
    mean = ok > 0 ? sum / ok : std::nan("");
  };
  auto table = [&](auto metric, int digits) {
    std::string s = "scenario";
    for (Variant v : config.models) s += "," + std::string(to_string(v));
    s += '\n';
    for (int sc : config.scenarios) {
      s += std::to_string(sc);
      for (Variant v : config.models) {
        double mean;
        int ok, failed;
        cell(sc, v, metric, mean, ok, failed);
        s += "," + fixed(mean, digits);
      }
      s += '\n';
    }
    return s;
  };
  StudyTables t;
  t.coverage_psi = table([](const RecoveryReport& m) { return m.coverage_psi; }, 1);
  t.coverage_beta = table([](const RecoveryReport& m) { return m.coverage_beta; }, 1);
  t.rmse_psi = table([](const RecoveryReport& m) { return m.rmse_psi; }, 3);
  t.rmse_beta = table([](const RecoveryReport& m) { return m.rmse_beta; }, 3);

  t.replicates = "scenario,model,replicate,data_seed,status,coverage_psi,coverage_beta,rmse_psi,rmse_beta,error\n";
  for (const auto& r : results) {
    t.replicates += std::to_string(r.scenario) + "," + std::string(to_string(r.model)) + "," +
                    std::to_string(r.replicate + 1) + "," + std::to_string(r.data_seed) + "," +
                    (r.ok ? "ok" : "failed");
    if (r.ok) {
      t.replicates += "," + format_number(r.metrics.coverage_psi) + "," +
                      format_number(r.metrics.coverage_beta) + "," +
                      format_number(r.metrics.rmse_psi) + "," + format_number(r.metrics.rmse_beta) + ",";
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      t.replicates += ",NA,NA,NA,NA,\"" + msg + "\"";
    }
    t.replicates += '\n';
  }
  t.counts = "scenario,model,n_ok,n_failed\n";
  for (int sc : config.scenarios) {
    for (Variant v : config.models) {
      double mean;
      int ok, failed;
      cell(sc, v, [](const RecoveryReport&) { return 0.0; }, mean, ok, failed);
      t.counts += std::to_string(sc) + "," + std::string(to_string(v)) + "," + std::to_string(ok) +
                  "," + std::to_string(failed) + "\n";
    }
  }
  return t;
}

SurveyData subset_sites(const SurveyData& d, std::span<const int> sites) {
  SurveyData out;
  out.n_species = d.n_species;
  out.n_sites = static_cast<int>(sites.size());
  out.species_names = d.species_names;
  out.occ_covariate_names = d.occ_covariate_names;
  out.det_covariate_names = d.det_covariate_names;
  out.coords.resize(out.n_sites, 2);
  out.x_occ.resize(out.n_sites, d.p_occ());
  int k_max = 0;
  for (int j : sites) {
    if (j < 0 || j >= d.n_sites) throw std::out_of_range("subset_sites: site index out of range");
    k_max = std::max(k_max, d.replicates[j]);
  }
  out.max_replicates = k_max;
  out.v_det = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out.n_sites) * k_max, d.p_det());
  out.y.assign(static_cast<std::size_t>(d.n_species) * out.n_sites * k_max, kMissing);
  for (int a = 0; a < out.n_sites; ++a) {
    const int j = sites[a];
    out.coords.row(a) = d.coords.row(j);
    out.x_occ.row(a) = d.x_occ.row(j);
    out.replicates.push_back(d.replicates[j]);
    if (!d.site_ids.empty()) out.site_ids.push_back(d.site_ids[j]);
    for (int k = 0; k < d.replicates[j]; ++k) {
      out.v_det.row(out.det_row(a, k)) = d.v_det.row(d.det_row(j, k));
      for (int i = 0; i < d.n_species; ++i) out.at(i, a, k) = d.at(i, j, k);
    }
  }
  out.fill_default_labels();
  return out;
}

HoldoutSplit holdout_split(int n_sites, double train_fraction, std::uint64_t seed) {
  if (n_sites < 2) throw std::invalid_argument("holdout_split: need at least two sites");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("holdout_split: training fraction must lie in (0, 1)");
  }
  std::vector<int> perm(n_sites);
  std::iota(perm.begin(), perm.end(), 0);
  RandomStream rng(seed, 0);
  for (int a = n_sites - 1; a > 0; --a) {
    const int b = std::min(a, static_cast<int>(rng.uniform() * (a + 1)));
    std::swap(perm[a], perm[b]);
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * n_sites)), 1, n_sites - 1);
  HoldoutSplit s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.holdout.assign(perm.begin() + n_train, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  return s;
}

}  // namespace sfocc
