#include "sfocc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <stdexcept>

#include "sfocc/diagnostics.hpp"
#include "sfocc/digest.hpp"
#include "sfocc/gibbs.hpp"
#include "sfocc/predict.hpp"
#include "sfocc/simulate.hpp"
#include "sfocc/study.hpp"

namespace sfocc {

namespace {

constexpr int kManifestVersion = 1;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path absolute_from(const fs::path& base, const std::string& p) {
  fs::path path = p;
  if (path.is_relative()) path = base / path;
  return fs::weakly_canonical(path);
}

void resolve_path(Json& j, const char* key, const fs::path& base) {
  if (j.contains(key) && j[key].is_string()) j[key] = absolute_from(base, j[key].get<std::string>()).string();
}

void resolve_data(Json& j, const fs::path& base) {
  for (const char* key : {"detections", "coords", "occ_covariates", "det_covariates"}) {
    resolve_path(j, key, base);
  }
}

// Makes every path in the config absolute, relative to the config's folder.
void resolve_paths(const std::string& command, Json& c, const fs::path& base) {
  if (command == "fit" && c.contains("data")) resolve_data(c["data"], base);
  if (command == "predict") {
    resolve_path(c, "fit", base);
    if (c.contains("grid")) {
      resolve_path(c["grid"], "coords", base);
      resolve_path(c["grid"], "occ_covariates", base);
    }
  }
  if (command == "compare") {
    for (const char* key : {"fits", "references"}) {
      if (!c.contains(key)) continue;
      for (auto& f : c[key]) f = absolute_from(base, f.get<std::string>()).string();
    }
    if (c.contains("holdout")) resolve_data(c["holdout"], base);
  }
}

void add_store_files(const fs::path& dir, std::vector<fs::path>& files) {
  files.push_back(dir / "fit.json");
  if (!fs::exists(dir / "samples")) return;
  std::vector<fs::path> csv;
  for (const auto& e : fs::directory_iterator(dir / "samples")) csv.push_back(e.path());
  std::sort(csv.begin(), csv.end());
  files.insert(files.end(), csv.begin(), csv.end());
}

void add_data_files(const Json& d, std::vector<fs::path>& files) {
  for (const char* key : {"detections", "coords", "occ_covariates", "det_covariates"}) {
    if (d.contains(key) && d[key].is_string()) files.emplace_back(d[key].get<std::string>());
  }
}

std::vector<fs::path> input_files(const std::string& command, const Json& c) {
  std::vector<fs::path> files;
  if (command == "fit" && c.contains("data")) add_data_files(c["data"], files);
  if (command == "predict") {
    if (c.contains("fit")) add_store_files(c["fit"].get<std::string>(), files);
    if (c.contains("grid")) add_data_files(c["grid"], files);
  }
  if (command == "compare") {
    for (const char* key : {"fits", "references"}) {
      if (!c.contains(key)) continue;
      for (const auto& f : c[key]) add_store_files(f.get<std::string>(), files);
    }
    if (c.contains("holdout")) add_data_files(c["holdout"], files);
  }
  return files;
}

Json digest_files(const std::vector<fs::path>& files, const fs::path& relative_to = {}) {
  Json out = Json::object();
  for (const auto& f : files) {
    const std::string key = relative_to.empty() ? f.string() : fs::relative(f, relative_to).string();
    out[key] = fs::exists(f) ? sha256_file(f) : std::string("missing");
  }
  return out;
}

std::vector<fs::path> list_outputs(const fs::path& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Json load_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

template <class T>
T required(const Json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ConfigError(std::string(where) + " config needs '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

std::uint64_t config_seed(const Json& c) { return c.value("seed", std::uint64_t{1}); }

}  // namespace

int cmd_simulate(const Json& c, const fs::path& out, std::ostream& log, Json& manifest) {
  const std::uint64_t seed = config_seed(c);
  SimulatedData sim;
  if (c.contains("scenario")) {
    const int id = c["scenario"].get<int>();
    if (id < 1 || id > 6) throw ConfigError("scenario id must be 1..6, got " + std::to_string(id));
    sim = simulate_scenario(id, seed);
  } else if (c.contains("custom")) {
    CustomScenario sc;
    try {
      sc = custom_scenario_from_json(c["custom"]);
      sc.check();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    sim = simulate_custom(sc, seed);
  } else {
    throw ConfigError("simulate config needs 'scenario' or 'custom'");
  }
  const DataPaths paths{out / "detections.csv", out / "coords.csv", out / "occ_covariates.csv",
                        out / "det_covariates.csv"};
  write_survey(sim.data, paths);
  write_text(out / "truth.json", to_json(sim.truth).dump(2) + "\n");
  manifest["data_digests"] = Json{{"simulated", data_digest(sim.data)}};
  log << "simulated " << sim.data.n_species << " species x " << sim.data.n_sites << " sites x "
      << sim.data.max_replicates << " replicates\n";
  return 0;
}

namespace {

Json parameter_summary(const PosteriorSamples& s, const std::string& block,
                       const std::vector<ScalarDiagnostic>& diag) {
  const Eigen::MatrixXd pooled = s.pooled(block);
  std::map<int, const ScalarDiagnostic*> by_index;
  for (const auto& d : diag) {
    if (d.block == block) by_index[d.index] = &d;
  }
  Json arr = Json::array();
  for (Eigen::Index col = 0; col < pooled.cols(); ++col) {
    const auto x = pooled.col(col);
    std::vector<double> v(x.data(), x.data() + x.size());
    const double mean = x.mean();
    const double sd =
        v.size() > 1 ? std::sqrt((x.array() - mean).square().sum() / static_cast<double>(v.size() - 1)) : 0.0;
    Json e;
    e["parameter"] = parameter_label(s, block, static_cast<int>(col));
    e["mean"] = mean;
    e["sd"] = sd;
    e["q2.5"] = quantile(v, 0.025);
    e["q50"] = quantile(v, 0.5);
    e["q97.5"] = quantile(v, 0.975);
    const auto it = by_index.find(static_cast<int>(col));
    const bool have = it != by_index.end();
    e["rhat"] = have && std::isfinite(it->second->rhat) ? Json(it->second->rhat) : Json();
    e["ess"] = have ? Json(it->second->ess) : Json();
    arr.push_back(std::move(e));
  }
  return arr;
}

Json fit_summary(const PosteriorSamples& s, const SurveyData& data, const ValidationReport& report) {
  Json j;
  j["variant"] = std::string(to_string(s.spec.variant));
  Json fam;
  std::vector<std::string> occ{"(Intercept)"}, det{"(Intercept)"};
  occ.insert(occ.end(), data.occ_covariate_names.begin(), data.occ_covariate_names.end());
  det.insert(det.end(), data.det_covariate_names.begin(), data.det_covariate_names.end());
  fam["beta"] = Json{{"count", s.p_occ}, {"names", occ}};
  if (models_detection(s.spec.variant)) fam["alpha"] = Json{{"count", s.p_det}, {"names", det}};
  j["coefficient_families"] = fam;
  j["species"] = data.species_names;
  j["warnings"] = report.warnings;
  Json acc = Json::array();
  for (const auto& c : s.chains) acc.push_back(c.phi_acceptance);
  if (is_spatial(s.spec.variant)) j["phi_acceptance"] = acc;

  std::vector<std::string> names;
  for (const auto& b : s.blocks(0)) {
    if (b.name != "z" && b.name != "psi") names.push_back(b.name);
  }
  std::vector<ScalarDiagnostic> diag;
  if (s.draws_per_chain() >= 4) diag = convergence(s, names);
  int flagged = 0;
  for (const auto& d : diag) flagged += d.flagged;
  j["rhat_flagged"] = flagged;
  Json params;
  for (const auto& n : names) params[n] = parameter_summary(s, n, diag);
  j["parameters"] = params;
  return j;
}

}  // namespace

int cmd_fit(const Json& c, const fs::path& out, int workers, std::ostream& log, Json& manifest) {
  ModelSpec spec;
  McmcConfig mcmc;
  SamplerOptions options;
  try {
    spec = model_spec_from_json(required<Json>(c, "model", "fit"));
    mcmc = mcmc_from_json(c.value("mcmc", Json::object()));
    mcmc.seed = config_seed(c);
    mcmc.check();
    if (c.contains("sampler")) {
      options.adapt_batch = c["sampler"].value("adapt_batch", options.adapt_batch);
      options.target_acceptance = c["sampler"].value("target_acceptance", options.target_acceptance);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const DataPaths paths = data_paths_from_json(required<Json>(c, "data", "fit"), fs::path("/"));
  SurveyData data;
  try {
    data = read_survey(paths);
    check_spec(spec, data.n_species);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.value("order_species_by_detection", false)) {
    data = reorder_species(data, detection_frequency_order(data));
  }
  const ValidationReport report = validate(data, spec);
  for (const auto& w : report.warnings) log << "warning: " << w << "\n";
  if (!report.ok()) {
    std::string msg = "data validation failed:";
    for (const auto& e : report.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  manifest["variant"] = std::string(to_string(spec.variant));
  manifest["data_digests"] = Json{{"training", data_digest(data)}};

  PosteriorSamples samples;
  try {
    samples = run_model(spec, data, mcmc, options, workers);
  } catch (const std::exception& e) {
    write_text(out / "fit.json", Json{{"status", "invalid"}, {"error", e.what()}}.dump(2) + "\n");
    manifest["status"] = "invalid";
    manifest["error"] = e.what();
    log << "error: " << e.what() << "\n";
    return 1;
  }
  write_fit_store(out, samples, data, paths);
  write_text(out / "summary.json", fit_summary(samples, data, report).dump(2) + "\n");
  log << "fit " << to_string(spec.variant) << ": " << samples.total_draws() << " retained draws\n";
  return 0;
}

int cmd_predict(const Json& c, const fs::path& out, std::ostream& log, Json& manifest) {
  const fs::path store_dir = required<std::string>(c, "fit", "predict");
  const Json grid_cfg = required<Json>(c, "grid", "predict");
  FitStore store;
  try {
    store = read_fit_store(store_dir);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const PosteriorSamples& fit = store.samples;
  GridFiles grid;
  try {
    grid = read_grid(required<std::string>(grid_cfg, "coords", "predict grid"),
                     grid_cfg.value("occ_covariates", std::string()),
                     store.data.occ_covariate_names);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::vector<int> subset;
  if (c.contains("species")) {
    for (const auto& name : c["species"]) {
      const auto& names = store.data.species_names;
      const auto it = std::find(names.begin(), names.end(), name.get<std::string>());
      if (it == names.end()) throw ConfigError("unknown species '" + name.get<std::string>() + "'");
      subset.push_back(static_cast<int>(it - names.begin()));
    }
  } else {
    for (int i = 0; i < fit.n_species; ++i) subset.push_back(i);
  }
  if (subset.empty()) throw ConfigError("species subset is empty");

  const PredictionResult pred =
      predict_occurrence(fit, PredictionGrid{grid.coords, grid.x_occ}, config_seed(c));
  const RichnessSummary rich = richness(pred.z, pred.n_species, subset);
  const int jn = pred.n_sites;
  const Eigen::VectorXd pm = pred.psi.colwise().mean().transpose();
  const double denom = std::max<Eigen::Index>(pred.psi.rows() - 1, 1);

  auto site_cols = [&](int j) {
    return grid.site_ids[j] + "," + format_number(grid.coords(j, 0)) + "," + format_number(grid.coords(j, 1));
  };
  std::string text = "quantity,species,site,x,y,mean,sd\n";
  for (int i = 0; i < pred.n_species; ++i) {
    for (int j = 0; j < jn; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(i) * jn + j;
      const double sd = std::sqrt((pred.psi.col(col).array() - pm(col)).square().sum() / denom);
      text += "psi," + store.data.species_names[i] + "," + site_cols(j) + "," + format_number(pm(col)) +
              "," + format_number(sd) + "\n";
    }
  }
  std::string rtext = "site,x,y,mean,sd\n";
  for (int j = 0; j < jn; ++j) {
    text += "richness,," + site_cols(j) + "," + format_number(rich.mean(j)) + "," + format_number(rich.sd(j)) + "\n";
    rtext += site_cols(j) + "," + format_number(rich.mean(j)) + "," + format_number(rich.sd(j)) + "\n";
  }
  write_text(out / "predictions.csv", text);
  write_text(out / "richness.csv", rtext);
  manifest["variant"] = std::string(to_string(fit.spec.variant));
  manifest["data_digests"] = Json{{"training", fit.data_digest}};
  log << "predicted " << pred.n_species << " species at " << jn << " sites\n";
  return 0;
}

int cmd_compare(const Json& c, const fs::path& out, std::ostream& log, Json& manifest) {
  const auto fit_dirs = required<std::vector<std::string>>(c, "fits", "compare");
  if (fit_dirs.empty()) throw ConfigError("compare needs at least one fit");
  std::vector<FitStore> fits;
  for (const auto& d : fit_dirs) {
    try {
      fits.push_back(read_fit_store(d));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (fits.back().samples.data_digest != fits.front().samples.data_digest) {
      throw ConfigError("fits were trained on different data: " + fit_dirs.front() + " vs " + d);
    }
  }
  std::optional<SurveyData> holdout;
  if (c.contains("holdout")) {
    try {
      holdout = read_survey(data_paths_from_json(c["holdout"], fs::path("/")));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  std::vector<PosteriorSamples> refs;
  std::vector<int> ref_sites;
  if (c.contains("references")) {
    if (!holdout) throw ConfigError("reference fits need holdout data");
    for (const auto& d : c["references"]) {
      try {
        FitStore r = read_fit_store(d.get<std::string>());
        if (!models_detection(r.samples.spec.variant)) {
          throw ConfigError("reference fit " + d.get<std::string>() + " is not an occupancy model");
        }
        if (ref_sites.empty()) {
          for (const auto& id : holdout->site_ids) {
            const auto it = std::find(r.data.site_ids.begin(), r.data.site_ids.end(), id);
            if (it == r.data.site_ids.end()) throw ConfigError("holdout site '" + id + "' absent from reference data");
            ref_sites.push_back(static_cast<int>(it - r.data.site_ids.begin()));
          }
        }
        refs.push_back(std::move(r.samples));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
  }

  const std::uint64_t seed = config_seed(c);
  std::string text = "model,fit,class,waic_occupancy,waic_jsdm,p_waic,data_deviance,latent_deviance\n";
  for (std::size_t f = 0; f < fits.size(); ++f) {
    const PosteriorSamples& s = fits[f].samples;
    const bool occ = models_detection(s.spec.variant);
    const WaicResult w = waic(s, fits[f].data);
    std::string data_dev = "NA", latent_dev = "NA";
    if (holdout) {
      data_dev = format_number(holdout_deviance_data(s, *holdout, seed));
      if (!refs.empty()) {
        const PredictionResult pred =
            predict_occurrence(s, PredictionGrid{holdout->coords, holdout->x_occ}, seed);
        latent_dev = format_number(holdout_deviance_latent(pred.psi_mean(), refs, ref_sites));
      }
    }
    text += std::string(to_string(s.spec.variant)) + "," + fs::path(fit_dirs[f]).filename().string() + "," +
            (occ ? "occupancy" : "jsdm") + "," + (occ ? format_number(w.waic) : "NA") + "," +
            (occ ? "NA" : format_number(w.waic)) + "," + format_number(w.p_waic) + "," + data_dev + "," +
            latent_dev + "\n";
    log << "scored " << to_string(s.spec.variant) << "\n";
  }
  write_text(out / "comparison.csv", text);
  manifest["data_digests"] = Json{{"training", fits.front().samples.data_digest}};
  return 0;
}

int cmd_simstudy(const Json& c, const fs::path& out, int workers, std::ostream& log, Json& manifest) {
  StudyConfig sc;
  try {
    sc.scenarios = required<std::vector<int>>(c, "scenarios", "simstudy");
    for (const auto& m : required<std::vector<std::string>>(c, "models", "simstudy")) {
      sc.models.push_back(parse_variant(m));
    }
    sc.n_replicates = c.value("n_replicates", 1);
    sc.mcmc = mcmc_from_json(c.value("mcmc", Json::object()));
    sc.mcmc.check();
    sc.q = c.value("q", sc.q);
    sc.m = c.value("m", sc.m);
    if (sc.n_replicates < 1) throw ConfigError("n_replicates must be >= 1");
    for (int s : sc.scenarios) {
      if (s < 1 || s > 6) throw ConfigError("scenario id must be 1..6, got " + std::to_string(s));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  sc.seed = config_seed(c);
  sc.workers = workers;
  const auto results = run_study(sc, [&](const ReplicateResult& r) {
    log << "scenario " << r.scenario << " " << to_string(r.model) << " replicate " << r.replicate + 1
        << (r.ok ? " ok" : " failed: " + r.error) << "\n";
  });
  const StudyTables t = study_tables(sc, results);
  write_text(out / "coverage_psi.csv", t.coverage_psi);
  write_text(out / "coverage_beta.csv", t.coverage_beta);
  write_text(out / "rmse_psi.csv", t.rmse_psi);
  write_text(out / "rmse_beta.csv", t.rmse_beta);
  write_text(out / "replicates.csv", t.replicates);
  write_text(out / "counts.csv", t.counts);

  Json times = Json::object();
  for (Variant v : sc.models) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : results) {
      if (r.model == v && r.ok) {
        sum += r.seconds;
        ++n;
      }
    }
    times[std::string(to_string(v))] = n > 0 ? Json(sum / n) : Json();
  }
  manifest["mean_fit_seconds"] = times;
  int failed = 0;
  for (const auto& r : results) failed += !r.ok;
  manifest["failed_replicates"] = failed;
  return 0;
}

int run_command(const CommandArgs& args, std::ostream& log) {
  static const std::vector<std::string> commands{"simulate", "fit", "predict", "compare", "simstudy"};
  if (std::find(commands.begin(), commands.end(), args.command) == commands.end()) {
    log << "error: unknown command '" << args.command << "'\n";
    return 2;
  }
  Json manifest;
  const auto start = std::chrono::steady_clock::now();
  manifest["manifest_version"] = kManifestVersion;
  manifest["command"] = args.command;
  manifest["status"] = "failed";
  manifest["started"] = utc_now();
  int status = 1;
  try {
    Json loaded = load_json(args.config);
    Json config;
    if (loaded.contains("manifest_version")) {
      if (loaded.value("command", std::string()) != args.command) {
        throw ConfigError("manifest records command '" + loaded.value("command", std::string()) + "'");
      }
      config = loaded.at("config");
      const Json recorded = loaded.value("inputs", Json::object());
      const Json now = digest_files(input_files(args.command, config));
      if (recorded != now) throw ConfigError("input files changed since the manifest was written");
    } else {
      config = loaded;
      resolve_paths(args.command, config, fs::absolute(args.config).parent_path());
    }
    if (args.seed) config["seed"] = *args.seed;
    if (!config.contains("seed")) config["seed"] = 1;
    manifest["config"] = config;
    manifest["config_digest"] = sha256_hex(config.dump());
    manifest["seed"] = config["seed"];
    manifest["inputs"] = digest_files(input_files(args.command, config));
    manifest["workers"] = args.workers;
    fs::create_directories(args.out);

    if (args.command == "simulate") status = cmd_simulate(config, args.out, log, manifest);
    else if (args.command == "fit") status = cmd_fit(config, args.out, args.workers, log, manifest);
    else if (args.command == "predict") status = cmd_predict(config, args.out, log, manifest);
    else if (args.command == "compare") status = cmd_compare(config, args.out, log, manifest);
    else status = cmd_simstudy(config, args.out, args.workers, log, manifest);
    if (status == 0) manifest["status"] = "complete";
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    manifest["error"] = e.what();
    status = 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    manifest["error"] = e.what();
    status = 1;
  }
  if (!fs::exists(args.out)) return status;
  manifest["finished"] = utc_now();
  manifest["run_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["outputs"] = digest_files(list_outputs(args.out), args.out);
  try {
    write_text(args.out / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}

}  // namespace sfocc
