#include "sfocc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "sfocc/gibbs.hpp"

namespace sfocc {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t a = 0; a < line.size(); ++a) {
    const char ch = line[a];
    if (quoted) {
      if (ch == '"' && a + 1 < line.size() && line[a + 1] == '"') {
        cur += '"';
        ++a;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

int parse_int(const std::string& s, const std::string& context) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(context + ": expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

int CsvTable::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return static_cast<int>(c);
  }
  fail(source + ": missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot read " + path.string());
  CsvTable t;
  t.source = path.string();
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      fail(t.source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
           " fields, expected " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) fail(t.source + ": empty file");
  return t;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) fail("cannot format number");
  return std::string(buf, ptr);
}

double parse_number(const std::string& s, const std::string& context) {
  if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(context + ": expected a number, got '" + s + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path.string());
  out << text;
  if (!out) fail("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DataPaths data_paths_from_json(const Json& j, const fs::path& base) {
  auto resolve = [&](const char* key) -> fs::path {
    if (!j.contains(key) || j[key].is_null()) return {};
    fs::path p = j[key].get<std::string>();
    if (p.is_relative()) p = base / p;
    return fs::weakly_canonical(p);
  };
  DataPaths p{resolve("detections"), resolve("coords"), resolve("occ_covariates"),
              resolve("det_covariates")};
  if (p.detections.empty() || p.coords.empty()) fail("data config needs 'detections' and 'coords'");
  return p;
}

Json to_json(const DataPaths& p) {
  Json j;
  j["detections"] = p.detections.string();
  j["coords"] = p.coords.string();
  j["occ_covariates"] = p.occ_covariates.empty() ? Json() : Json(p.occ_covariates.string());
  j["det_covariates"] = p.det_covariates.empty() ? Json() : Json(p.det_covariates.string());
  return j;
}

namespace {

struct SiteTable {
  std::vector<std::string> ids;
  std::unordered_map<std::string, int> index;
  Eigen::MatrixX2d coords;
};

SiteTable read_sites(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const int cs = t.column("site"), cx = t.column("x"), cy = t.column("y");
  SiteTable s;
  s.coords.resize(static_cast<Eigen::Index>(t.rows.size()), 2);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = t.source + " row " + std::to_string(r + 2);
    if (!s.index.emplace(row[cs], static_cast<int>(r)).second) fail(ctx + ": duplicate site '" + row[cs] + "'");
    s.ids.push_back(row[cs]);
    s.coords(static_cast<Eigen::Index>(r), 0) = parse_number(row[cx], ctx);
    s.coords(static_cast<Eigen::Index>(r), 1) = parse_number(row[cy], ctx);
  }
  if (!s.coords.allFinite()) fail(t.source + ": coordinates must be finite");
  return s;
}

int site_of(const SiteTable& s, const std::string& id, const std::string& ctx) {
  const auto it = s.index.find(id);
  if (it == s.index.end()) fail(ctx + ": unknown site '" + id + "'");
  return it->second;
}

// Site-level covariates with a prepended intercept column.
Eigen::MatrixXd read_site_covariates(const fs::path& path, const SiteTable& sites,
                                     std::vector<std::string>& names) {
  const Eigen::Index j_n = static_cast<Eigen::Index>(sites.ids.size());
  if (path.empty()) return Eigen::MatrixXd::Ones(j_n, 1);
  const CsvTable t = read_csv(path);
  const int cs = t.column("site");
  names.clear();
  std::vector<int> cols;
  for (int c = 0; c < static_cast<int>(t.header.size()); ++c) {
    if (c == cs) continue;
    names.push_back(t.header[c]);
    cols.push_back(c);
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(j_n, static_cast<Eigen::Index>(cols.size()) + 1,
                                                std::numeric_limits<double>::quiet_NaN());
  x.col(0).setOnes();
  std::vector<bool> seen(static_cast<std::size_t>(j_n), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = t.source + " row " + std::to_string(r + 2);
    const int j = site_of(sites, t.rows[r][cs], ctx);
    if (seen[j]) fail(ctx + ": duplicate site '" + t.rows[r][cs] + "'");
    seen[j] = true;
    for (std::size_t a = 0; a < cols.size(); ++a) {
      x(j, static_cast<Eigen::Index>(a) + 1) = parse_number(t.rows[r][cols[a]], ctx);
    }
  }
  for (Eigen::Index j = 0; j < j_n; ++j) {
    if (!seen[j]) fail(t.source + ": no covariate row for site '" + sites.ids[j] + "'");
  }
  return x;
}

}  // namespace

SurveyData read_survey(const DataPaths& paths) {
  const SiteTable sites = read_sites(paths.coords);
  SurveyData d;
  d.n_sites = static_cast<int>(sites.ids.size());
  d.coords = sites.coords;
  d.site_ids = sites.ids;

  const CsvTable det = read_csv(paths.detections);
  const int c_sp = det.column("species"), c_site = det.column("site");
  const int c_rep = det.column("replicate"), c_y = det.column("y");
  std::unordered_map<std::string, int> species;
  struct Cell { int i, j, k; std::int8_t y; };
  std::vector<Cell> cells;
  d.replicates.assign(d.n_sites, 0);
  for (std::size_t r = 0; r < det.rows.size(); ++r) {
    const auto& row = det.rows[r];
    const std::string ctx = det.source + " row " + std::to_string(r + 2);
    auto [it, fresh] = species.emplace(row[c_sp], static_cast<int>(d.species_names.size()));
    if (fresh) d.species_names.push_back(row[c_sp]);
    const int j = site_of(sites, row[c_site], ctx);
    const int k = parse_int(row[c_rep], ctx) - 1;
    if (k < 0) fail(ctx + ": replicate numbers start at 1");
    std::int8_t y;
    if (row[c_y] == "NA" || row[c_y].empty()) y = kMissing;
    else if (row[c_y] == "0") y = 0;
    else if (row[c_y] == "1") y = 1;
    else fail(ctx + ": y must be 0, 1 or NA, got '" + row[c_y] + "'");
    cells.push_back({it->second, j, k, y});
    d.replicates[j] = std::max(d.replicates[j], k + 1);
  }
  if (cells.empty()) fail(det.source + ": no detection rows");
  d.n_species = static_cast<int>(d.species_names.size());
  d.max_replicates = *std::max_element(d.replicates.begin(), d.replicates.end());
  d.y.assign(static_cast<std::size_t>(d.n_species) * d.n_sites * d.max_replicates, kMissing);
  std::vector<bool> filled(d.y.size(), false);
  for (const Cell& c : cells) {
    const std::size_t idx = d.index(c.i, c.j, c.k);
    if (filled[idx]) {
      fail(det.source + ": duplicate record for species '" + d.species_names[c.i] + "', site '" +
           d.site_ids[c.j] + "', replicate " + std::to_string(c.k + 1));
    }
    filled[idx] = true;
    d.y[idx] = c.y;
  }

  d.x_occ = read_site_covariates(paths.occ_covariates, sites, d.occ_covariate_names);

  const Eigen::Index rows = static_cast<Eigen::Index>(d.n_sites) * d.max_replicates;
  if (paths.det_covariates.empty()) {
    d.v_det = Eigen::MatrixXd::Ones(rows, 1);
  } else {
    const CsvTable t = read_csv(paths.det_covariates);
    const int cs = t.column("site"), cr = t.column("replicate");
    std::vector<int> cols;
    for (int c = 0; c < static_cast<int>(t.header.size()); ++c) {
      if (c == cs || c == cr) continue;
      d.det_covariate_names.push_back(t.header[c]);
      cols.push_back(c);
    }
    d.v_det = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(cols.size()) + 1);
    d.v_det.col(0).setOnes();
    std::vector<bool> seen(static_cast<std::size_t>(rows), false);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string ctx = t.source + " row " + std::to_string(r + 2);
      const int j = site_of(sites, t.rows[r][cs], ctx);
      const int k = parse_int(t.rows[r][cr], ctx) - 1;
      if (k < 0 || k >= d.max_replicates) fail(ctx + ": replicate out of range");
      const int row = d.det_row(j, k);
      if (seen[row]) fail(ctx + ": duplicate site-replicate row");
      seen[row] = true;
      for (std::size_t a = 0; a < cols.size(); ++a) {
        d.v_det(row, static_cast<Eigen::Index>(a) + 1) = parse_number(t.rows[r][cols[a]], ctx);
      }
    }
    for (int j = 0; j < d.n_sites; ++j) {
      for (int k = 0; k < d.replicates[j]; ++k) {
        if (!seen[d.det_row(j, k)]) {
          fail(t.source + ": no covariate row for site '" + d.site_ids[j] + "', replicate " +
               std::to_string(k + 1));
        }
      }
    }
  }
  d.fill_default_labels();
  return d;
}

void write_survey(const SurveyData& in, const DataPaths& paths) {
  SurveyData d = in;
  d.fill_default_labels();
  std::string s = "species,site,replicate,y\n";
  for (int i = 0; i < d.n_species; ++i) {
    for (int j = 0; j < d.n_sites; ++j) {
      for (int k = 0; k < d.replicates[j]; ++k) {
        const auto y = d.at(i, j, k);
        s += csv_field(d.species_names[i]) + ',' + csv_field(d.site_ids[j]) + ',' +
             std::to_string(k + 1) + ',' + (y == kMissing ? "NA" : std::to_string(y)) + '\n';
      }
    }
  }
  write_text(paths.detections, s);

  s = "site,x,y\n";
  for (int j = 0; j < d.n_sites; ++j) {
    s += csv_field(d.site_ids[j]) + ',' + format_number(d.coords(j, 0)) + ',' +
         format_number(d.coords(j, 1)) + '\n';
  }
  write_text(paths.coords, s);

  if (!paths.occ_covariates.empty()) {
    s = "site";
    for (const auto& n : d.occ_covariate_names) s += ',' + csv_field(n);
    s += '\n';
    for (int j = 0; j < d.n_sites; ++j) {
      s += csv_field(d.site_ids[j]);
      for (int t = 1; t < d.p_occ(); ++t) s += ',' + format_number(d.x_occ(j, t));
      s += '\n';
    }
    write_text(paths.occ_covariates, s);
  }
  if (!paths.det_covariates.empty()) {
    s = "site,replicate";
    for (const auto& n : d.det_covariate_names) s += ',' + csv_field(n);
    s += '\n';
    for (int j = 0; j < d.n_sites; ++j) {
      for (int k = 0; k < d.replicates[j]; ++k) {
        s += csv_field(d.site_ids[j]) + ',' + std::to_string(k + 1);
        for (int t = 1; t < d.p_det(); ++t) s += ',' + format_number(d.v_det(d.det_row(j, k), t));
        s += '\n';
      }
    }
    write_text(paths.det_covariates, s);
  }
}

GridFiles read_grid(const fs::path& coords, const fs::path& occ_covariates,
                    const std::vector<std::string>& expected_names) {
  const SiteTable sites = read_sites(coords);
  if (sites.ids.empty()) fail(coords.string() + ": prediction grid is empty");
  GridFiles g;
  g.coords = sites.coords;
  g.site_ids = sites.ids;
  std::vector<std::string> names;
  g.x_occ = read_site_covariates(occ_covariates, sites, names);
  if (names != expected_names) {
    std::string want;
    for (const auto& n : expected_names) want += (want.empty() ? "" : ",") + n;
    fail("prediction grid covariates must be [" + want + "] in that order");
  }
  return g;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) fail("expected a matrix (array of rows)");
  if (j.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) fail("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = j[r][c].get<double>();
  }
  return m;
}

namespace {

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Json to_json(const ScenarioTruth& t) {
  Json j;
  j["scenario"] = t.scenario;
  j["seed"] = t.seed;
  j["beta_mean"] = t.beta_mean;
  j["beta_var"] = t.beta_var;
  j["alpha_mean"] = t.alpha_mean;
  j["alpha_var"] = t.alpha_var;
  j["beta"] = matrix_to_json(t.beta);
  j["alpha"] = t.alpha ? matrix_to_json(*t.alpha) : Json();
  j["constant_detection"] = t.constant_detection ? Json(*t.constant_detection) : Json();
  j["lambda"] = matrix_to_json(t.lambda);
  j["w"] = matrix_to_json(t.w);
  j["phi"] = vector_json(t.phi);
  j["sigma_sq"] = vector_json(t.sigma_sq);
  j["psi"] = matrix_to_json(t.psi);
  j["z"] = matrix_to_json(t.z.cast<double>());
  return j;
}

ScenarioTruth truth_from_json(const Json& j) {
  ScenarioTruth t;
  t.scenario = j.at("scenario").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.beta_mean = j.at("beta_mean").get<std::vector<double>>();
  t.beta_var = j.at("beta_var").get<std::vector<double>>();
  t.alpha_mean = j.at("alpha_mean").get<std::vector<double>>();
  t.alpha_var = j.at("alpha_var").get<std::vector<double>>();
  t.beta = matrix_from_json(j.at("beta"));
  if (!j.at("alpha").is_null()) t.alpha = matrix_from_json(j.at("alpha"));
  if (!j.at("constant_detection").is_null()) t.constant_detection = j.at("constant_detection").get<double>();
  t.lambda = matrix_from_json(j.at("lambda"));
  t.w = matrix_from_json(j.at("w"));
  t.phi = vector_from(j.at("phi"));
  t.sigma_sq = vector_from(j.at("sigma_sq"));
  t.psi = matrix_from_json(j.at("psi"));
  t.z = matrix_from_json(j.at("z")).cast<int>();
  return t;
}

Json to_json(const ModelSpec& s) {
  Json j;
  j["variant"] = std::string(to_string(s.variant));
  j["q"] = s.q;
  j["m"] = s.m;
  j["cov_model"] = std::string(to_string(s.cov_family));
  j["nu"] = s.nu;
  Json p;
  auto normal = [](const NormalPrior& n) { return Json{{"mean", n.mean}, {"var", n.var}}; };
  auto ig = [](const InverseGammaPrior& g) { return Json{{"shape", g.shape}, {"scale", g.scale}}; };
  p["mu_beta"] = normal(s.priors.mu_beta);
  p["mu_alpha"] = normal(s.priors.mu_alpha);
  p["tau_sq_beta"] = ig(s.priors.tau_sq_beta);
  p["tau_sq_alpha"] = ig(s.priors.tau_sq_alpha);
  p["phi_bounds"] = s.priors.phi_bounds
                        ? Json::array({s.priors.phi_bounds->lower, s.priors.phi_bounds->upper})
                        : Json();
  p["sigma_sq"] = ig(s.priors.sigma_sq);
  j["priors"] = p;
  return j;
}

ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec s;
  if (!j.contains("variant")) fail("model config needs 'variant'");
  s.variant = parse_variant(j["variant"].get<std::string>());
  s.q = j.value("q", s.q);
  s.m = j.value("m", s.m);
  if (j.contains("cov_model")) s.cov_family = parse_covariance_family(j["cov_model"].get<std::string>());
  s.nu = j.value("nu", s.nu);
  if (j.contains("priors")) {
    const Json& p = j["priors"];
    auto normal = [&](const char* key, NormalPrior& n) {
      if (p.contains(key)) {
        n.mean = p[key].value("mean", n.mean);
        n.var = p[key].value("var", n.var);
      }
    };
    auto ig = [&](const char* key, InverseGammaPrior& g) {
      if (p.contains(key)) {
        g.shape = p[key].value("shape", g.shape);
        g.scale = p[key].value("scale", g.scale);
      }
    };
    normal("mu_beta", s.priors.mu_beta);
    normal("mu_alpha", s.priors.mu_alpha);
    ig("tau_sq_beta", s.priors.tau_sq_beta);
    ig("tau_sq_alpha", s.priors.tau_sq_alpha);
    ig("sigma_sq", s.priors.sigma_sq);
    if (p.contains("phi_bounds") && !p["phi_bounds"].is_null()) {
      const auto b = p["phi_bounds"].get<std::vector<double>>();
      if (b.size() != 2) fail("phi_bounds must be [lower, upper]");
      s.priors.phi_bounds = UniformBounds{b[0], b[1]};
    }
  }
  return s;
}

Json to_json(const McmcConfig& c) {
  return Json{{"n_chains", c.n_chains},
              {"n_iterations", c.n_iterations},
              {"n_burn", c.n_burn},
              {"n_thin", c.n_thin},
              {"seed", c.seed}};
}

McmcConfig mcmc_from_json(const Json& j) {
  McmcConfig c;
  c.n_chains = j.value("n_chains", c.n_chains);
  c.n_iterations = j.value("n_iterations", c.n_iterations);
  c.n_burn = j.value("n_burn", c.n_burn);
  c.n_thin = j.value("n_thin", c.n_thin);
  c.seed = j.value("seed", c.seed);
  return c;
}

CustomScenario custom_scenario_from_json(const Json& j) {
  CustomScenario s;
  s.n_species = j.value("n_species", s.n_species);
  s.n_sites = j.value("n_sites", s.n_sites);
  s.replicates = j.value("replicates", s.replicates);
  if (j.contains("coords")) s.coords = matrix_from_json(j["coords"]);
  s.beta_mean = j.value("beta_mean", s.beta_mean);
  s.beta_var = j.value("beta_var", s.beta_var);
  if (j.contains("beta")) s.beta = matrix_from_json(j["beta"]);
  if (j.contains("constant_detection")) s.constant_detection = j["constant_detection"].get<double>();
  s.alpha_mean = j.value("alpha_mean", s.alpha_mean);
  s.alpha_var = j.value("alpha_var", s.alpha_var);
  if (j.contains("alpha")) s.alpha = matrix_from_json(j["alpha"]);
  const std::string latent = j.value("latent", std::string("none"));
  if (latent == "none") s.latent = LatentStructure::none;
  else if (latent == "factor") s.latent = LatentStructure::factor;
  else if (latent == "spatial_factor") s.latent = LatentStructure::spatial_factor;
  else if (latent == "species_spatial") s.latent = LatentStructure::species_spatial;
  else fail("unknown latent structure '" + latent + "'");
  s.q = j.value("q", s.q);
  if (j.contains("lambda")) s.lambda = matrix_from_json(j["lambda"]);
  s.phi = j.value("phi", s.phi);
  if (j.contains("phi_range")) {
    const auto r = j["phi_range"].get<std::vector<double>>();
    if (r.size() != 2) fail("phi_range must be [lower, upper]");
    s.phi_range = {r[0], r[1]};
  }
  s.sigma_sq = j.value("sigma_sq", s.sigma_sq);
  if (j.contains("sigma_sq_range")) {
    const auto r = j["sigma_sq_range"].get<std::vector<double>>();
    if (r.size() != 2) fail("sigma_sq_range must be [lower, upper]");
    s.sigma_sq_range = {r[0], r[1]};
  }
  if (j.contains("cov_model")) s.cov_family = parse_covariance_family(j["cov_model"].get<std::string>());
  s.nu = j.value("nu", s.nu);
  return s;
}

namespace {

constexpr const char* kStoredBlocks[] = {"beta",  "mu_beta", "tau_sq_beta", "alpha",
                                         "mu_alpha", "tau_sq_alpha", "lambda", "w",
                                         "phi",   "sigma_sq", "z"};

template <class Draws>
auto block_of(Draws& c, std::string_view name) -> decltype(&c.beta) {
  if (name == "beta") return &c.beta;
  if (name == "mu_beta") return &c.mu_beta;
  if (name == "tau_sq_beta") return &c.tau_sq_beta;
  if (name == "alpha") return &c.alpha;
  if (name == "mu_alpha") return &c.mu_alpha;
  if (name == "tau_sq_alpha") return &c.tau_sq_alpha;
  if (name == "lambda") return &c.lambda;
  if (name == "w") return &c.w;
  if (name == "phi") return &c.phi;
  if (name == "sigma_sq") return &c.sigma_sq;
  if (name == "z") return &c.z;
  return nullptr;
}

int retained_iteration(const McmcConfig& m, int draw) { return m.n_burn + (draw + 1) * m.n_thin; }

}  // namespace

void write_fit_store(const fs::path& dir, const PosteriorSamples& s, const SurveyData& data,
                     const DataPaths& paths) {
  Json meta;
  meta["status"] = "complete";
  meta["spec"] = to_json(s.spec);
  meta["mcmc"] = to_json(s.mcmc);
  meta["data_digest"] = s.data_digest;
  meta["data"] = to_json(paths);
  meta["n_species"] = s.n_species;
  meta["n_sites"] = s.n_sites;
  meta["p_occ"] = s.p_occ;
  meta["p_det"] = s.p_det;
  meta["species"] = data.species_names;
  meta["occ_covariates"] = data.occ_covariate_names;
  meta["det_covariates"] = data.det_covariate_names;
  Json acc = Json::array();
  for (const auto& c : s.chains) acc.push_back(c.phi_acceptance);
  meta["phi_acceptance"] = acc;
  Json blocks = Json::object();

  for (const char* name : kStoredBlocks) {
    const auto* first = block_of(s.chains.at(0), name);
    if (first->size() == 0) continue;
    const auto cols = static_cast<int>(first->cols());
    blocks[name] = cols;
    std::vector<std::string> labels;
    for (int col = 0; col < cols; ++col) labels.push_back(csv_field(parameter_label(s, name, col)));
    std::string text = "chain,iteration,parameter,value\n";
    for (std::size_t c = 0; c < s.chains.size(); ++c) {
      const Eigen::MatrixXd& m = *block_of(s.chains[c], name);
      for (Eigen::Index d = 0; d < m.rows(); ++d) {
        const std::string prefix = std::to_string(c + 1) + ',' +
                                   std::to_string(retained_iteration(s.mcmc, static_cast<int>(d))) + ',';
        for (int col = 0; col < cols; ++col) {
          text += prefix;
          text += labels[col];
          text += ',';
          text += format_number(m(d, col));
          text += '\n';
        }
      }
    }
    write_text(dir / "samples" / (std::string(name) + ".csv"), text);
  }
  meta["blocks"] = blocks;
  write_text(dir / "fit.json", meta.dump(2) + "\n");
}

FitStore read_fit_store(const fs::path& dir) {
  const Json meta = Json::parse(read_text(dir / "fit.json"));
  if (meta.value("status", std::string()) != "complete") {
    fail(dir.string() + ": fit store is flagged invalid");
  }
  FitStore f;
  f.dir = dir;
  const Json& dp = meta.at("data");
  f.paths.detections = dp.at("detections").get<std::string>();
  f.paths.coords = dp.at("coords").get<std::string>();
  if (!dp.at("occ_covariates").is_null()) f.paths.occ_covariates = dp["occ_covariates"].get<std::string>();
  if (!dp.at("det_covariates").is_null()) f.paths.det_covariates = dp["det_covariates"].get<std::string>();
  f.data = read_survey(f.paths);

  PosteriorSamples& s = f.samples;
  s.spec = model_spec_from_json(meta.at("spec"));
  s.mcmc = mcmc_from_json(meta.at("mcmc"));
  s.data_digest = meta.at("data_digest").get<std::string>();
  if (data_digest(f.data) != s.data_digest) {
    fail(dir.string() + ": training data no longer matches the digest recorded in the fit");
  }
  s.n_species = meta.at("n_species").get<int>();
  s.n_sites = meta.at("n_sites").get<int>();
  s.p_occ = meta.at("p_occ").get<int>();
  s.p_det = meta.at("p_det").get<int>();
  s.coords = f.data.coords;
  const int n_chains = s.mcmc.n_chains;
  const int draws = s.mcmc.n_retained();
  s.chains.resize(n_chains);
  const auto acc = meta.at("phi_acceptance").get<std::vector<double>>();
  for (int c = 0; c < n_chains && c < static_cast<int>(acc.size()); ++c) s.chains[c].phi_acceptance = acc[c];

  for (const auto& [name, cols_json] : meta.at("blocks").items()) {
    const int cols = cols_json.get<int>();
    std::unordered_map<std::string, int> label_col;
    for (int col = 0; col < cols; ++col) label_col.emplace(parameter_label(s, name, col), col);
    for (auto& c : s.chains) {
      auto* m = block_of(c, name);
      if (m == nullptr) fail(dir.string() + ": unknown block '" + name + "'");
      *m = Eigen::MatrixXd::Constant(draws, cols, std::numeric_limits<double>::quiet_NaN());
    }
    const CsvTable t = read_csv(dir / "samples" / (name + ".csv"));
    const int cc = t.column("chain"), ci = t.column("iteration"), cp = t.column("parameter"),
              cv = t.column("value");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::string ctx = t.source + " row " + std::to_string(r + 2);
      const int chain = parse_int(row[cc], ctx) - 1;
      const int it = parse_int(row[ci], ctx);
      const int draw = (it - s.mcmc.n_burn) / s.mcmc.n_thin - 1;
      const auto lc = label_col.find(row[cp]);
      if (chain < 0 || chain >= n_chains || draw < 0 || draw >= draws || lc == label_col.end() ||
          retained_iteration(s.mcmc, draw) != it) {
        fail(ctx + ": record does not match the fit metadata");
      }
      (*block_of(s.chains[chain], name))(draw, lc->second) = parse_number(row[cv], ctx);
    }
    for (auto& c : s.chains) {
      if (!block_of(c, name)->allFinite()) fail(t.source + ": incomplete or non-finite draws");
    }
  }
  for (auto& c : s.chains) c.psi = derive_psi(s, c, f.data);
  return f;
}

}  // namespace sfocc
