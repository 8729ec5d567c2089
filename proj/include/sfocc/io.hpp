#pragma once

// CSV and JSON formats for survey data, ground truth, model configuration
// and the on-disk posterior store.
//
// Data files (header row, comma-delimited):
//   detections      species,site,replicate,y     y in {0, 1, NA}; replicate from 1
//   coordinates     site,x,y
//   occ covariates  site,<name>...                intercept added on load
//   det covariates  site,replicate,<name>...      intercept added on load
// Site order follows the coordinates file; species order follows first
// appearance in the detections file. Cells absent from the detections file
// are missing.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sfocc/model.hpp"
#include "sfocc/simulate.hpp"

namespace sfocc {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws std::runtime_error naming the file.
  int column(std::string_view name) const;
  std::string source;
};

/// Throws std::runtime_error if the file cannot be read or rows are ragged.
CsvTable read_csv(const fs::path& path);

/// Shortest round-trip decimal representation; "NA" for NaN.
std::string format_number(double v);
double parse_number(const std::string& s, const std::string& context);

struct DataPaths {
  fs::path detections;
  fs::path coords;
  fs::path occ_covariates;
  fs::path det_covariates;  // optional for JSDM variants
};

DataPaths data_paths_from_json(const Json& j, const fs::path& base);
Json to_json(const DataPaths& p);

SurveyData read_survey(const DataPaths& paths);
void write_survey(const SurveyData& data, const DataPaths& paths);

/// Reads a prediction grid: coordinates plus site-level covariates whose
/// names must equal `expected_names` in order.
struct GridFiles {
  Eigen::MatrixX2d coords;
  Eigen::MatrixXd x_occ;
  std::vector<std::string> site_ids;
};
GridFiles read_grid(const fs::path& coords, const fs::path& occ_covariates,
                    const std::vector<std::string>& expected_names);

Json to_json(const ScenarioTruth& t);
ScenarioTruth truth_from_json(const Json& j);

Json to_json(const ModelSpec& s);
/// Missing fields keep their defaults; unknown variant names throw.
ModelSpec model_spec_from_json(const Json& j);
Json to_json(const McmcConfig& c);
McmcConfig mcmc_from_json(const Json& j);
CustomScenario custom_scenario_from_json(const Json& j);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

/// Writes <dir>/samples/<block>.csv (chain, iteration, parameter, value) for
/// every stored block except psi, plus <dir>/fit.json with metadata.
void write_fit_store(const fs::path& dir, const PosteriorSamples& samples,
                     const SurveyData& data, const DataPaths& paths);

struct FitStore {
  PosteriorSamples samples;  // psi recomputed from the stored blocks
  SurveyData data;
  DataPaths paths;
  fs::path dir;
};

/// Reloads a store and its training data; throws if the data digest no
/// longer matches or the store is flagged invalid.
FitStore read_fit_store(const fs::path& dir);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace sfocc
