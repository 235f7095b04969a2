#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipesurv/data.hpp"
#include "pipesurv/survival_forest.hpp"

namespace pipesurv::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUnexpected = 1,
  kConfigFailure = 2,
  kDataFailure = 3,
  kIoFailure = 4,
};

struct DataSection {
  std::filesystem::path network;
  std::filesystem::path workorders;
  std::optional<std::filesystem::path> external;
  std::optional<int> latest_year;
  double max_quarantine_fraction = 0.05;  // of network rows; above it training aborts
};

struct ForestSection {
  std::size_t n_trees = 100;
  std::size_t candidate_features = 0;  // 0 picks ceil(sqrt(feature count))
  int min_unique_deaths = 3;
  int max_depth = 0;
};

struct EvaluateSection {
  std::optional<int> year;  // defaults to panel.predict_end
  std::map<std::string, std::filesystem::path> scores;  // method -> score file; empty uses predictions
  std::vector<double> detection_fractions{0.01, 0.05};
  std::vector<double> critical_fractions{0.05, 0.1, 0.2, 0.3, 0.5};
};

/// Everything a run needs, resolved from the config file, defaults and flag
/// overrides. Relative paths in the file are taken relative to the file.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = available cores
  std::filesystem::path out = "pipesurv_out";
  SynthConfig synth;
  DataSection data;
  PanelConfig panel{1, 8, 9, 15};
  ForestSection forest;
  bool weibull_censored = true;
  std::filesystem::path model_dir;  // defaults to out
  double interval_level = 0.9;
  std::filesystem::path predictions_dir;  // defaults to out
  EvaluateSection evaluate;
  int factor_bins = 10;

  // Fully resolved form, written next to every run's outputs.
  nlohmann::json to_json() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::filesystem::path> out;
};

RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                         const Overrides& overrides);
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

void cmd_synth(const RunConfig& config);
// Returns the out-of-bag concordance error (empty if undefined).
std::optional<double> cmd_train(const RunConfig& config);
void cmd_predict(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_factors(const RunConfig& config);

// Failures per 100 km of main per year.
double failure_rate(std::size_t failures, double length_km, int years);

// Parses arguments, dispatches, maps exceptions to exit codes.
int run(int argc, const char* const* argv);

}  // namespace pipesurv::cli
