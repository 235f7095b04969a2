#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipesurv/baselines.hpp"
#include "pipesurv/survival_core.hpp"

namespace pipesurv {

struct PipeRecord {
  std::string asset_id;
  int laid_year = 0;
  std::string material;
  double diameter_mm = 0.0;
  double length_m = 0.0;
  std::string suburb;
  std::optional<double> ground_level_m;
  std::map<std::string, double> external;  // numeric columns joined from the external file
};

struct WorkOrder {
  std::string work_order_id;
  std::string asset_id;
  int failure_year = 0;
  std::string failure_type;  // burst, fitting or leak
};

struct PanelConfig {
  int train_start = 0;
  int train_end = 0;
  int predict_start = 0;
  int predict_end = 0;

  // ConfigError unless train_start <= train_end < predict_start <= predict_end.
  void validate() const;
};

struct QualityIssue {
  std::string source;  // network, workorders or external
  std::size_t line = 0;
  std::string key;     // asset_id or work_order_id of the row, when readable
  std::string rule;
  std::string detail;
};

struct SourceCounts {
  std::size_t rows_in = 0;
  std::size_t rows_kept = 0;
  std::size_t rows_quarantined = 0;
};

/// Result of the three-way review.
///
/// completeness counts empty mandatory cells per "source.column"; validity
/// counts rule violations per rule name; consistency lists cross-source
/// mismatches. Every quarantined row appears in `quarantined` with its line
/// number and the first rule it broke.
struct QualityReport {
  std::map<std::string, std::size_t> completeness;
  std::map<std::string, std::size_t> validity;
  std::vector<QualityIssue> consistency;
  std::vector<QualityIssue> quarantined;
  std::vector<std::string> dropped_features;  // optional columns left out of the schema
  std::map<std::string, SourceCounts> sources;

  bool clean() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

struct ReviewOptions {
  // Latest year data may refer to; laid or failure years after it are invalid.
  std::optional<int> latest_year;
};

struct LoadedData {
  std::vector<PipeRecord> pipes;
  std::vector<WorkOrder> work_orders;
  std::vector<std::string> external_columns;  // joined for every kept pipe
  bool has_ground_level = false;              // network file carried the column for every kept pipe
  QualityReport report;
};

// Parses and reviews the three sources. Rows failing completeness or validity
// checks are quarantined and listed; work orders are matched to pipes by
// asset_id. A missing mandatory column throws DataError naming it.
LoadedData load_and_review(std::istream& network_csv, std::istream& workorders_csv,
                           std::istream* external_csv = nullptr, const ReviewOptions& options = {});
LoadedData load_and_review(const std::string& network_path, const std::string& workorders_path,
                           const std::optional<std::string>& external_path = std::nullopt,
                           const ReviewOptions& options = {});

// Feature names of the training panel, in covariate order.
namespace feature {
inline constexpr const char* age_at_start = "age_at_start";
inline constexpr const char* laid_band = "laid_year_band";
inline constexpr const char* material = "material";
inline constexpr const char* diameter = "diameter_mm";
inline constexpr const char* diameter_band = "diameter_band";
inline constexpr const char* length = "length_m";
inline constexpr const char* previous_failures = "previous_failures";
inline constexpr const char* ground_level = "ground_level_m";
}  // namespace feature

struct Panel {
  CovariateSchema schema;
  std::vector<SurvivalSample> samples;
  std::vector<std::size_t> pipe_index;  // sample i comes from pipes[pipe_index[i]]
  std::vector<double> current_age;      // train_end - laid_year
};

std::string laid_year_band(int laid_year);
std::string diameter_band(double diameter_mm);

// One right-censored sample per pipe laid before train_end. The event is the
// first failure inside the training window, at age failure_year - laid_year;
// otherwise the pipe is censored at age train_end - laid_year. Pipes laid
// before the window enter at age train_start - 1 - laid_year, since earlier
// ages were not observed. Work orders after train_end are never read.
Panel build_panel(std::span<const PipeRecord> pipes, std::span<const WorkOrder> work_orders,
                  const PanelConfig& config, bool include_ground_level,
                  std::span<const std::string> external_columns = {});

// Re-encodes a panel's categorical values against a model schema: levels are
// looked up by name, unknown ones become kUnseenCategory. Throws DataError when
// the feature lists differ.
void conform_to_schema(Panel& panel, const CovariateSchema& model_schema);

// Quantile-bin codes 0..bins-1; values equal to an edge fall in the lower bin.
std::vector<int> discretize_quantiles(std::span<const double> values, int bins = 10);

// Plug-in mutual information in bits between two discrete columns.
double mutual_information(std::span<const int> a, std::span<const int> b);
double mutual_information(std::span<const double> feature, std::span<const int> failure,
                          int bins = 10);

// Synthetic network -----------------------------------------------------------

struct MaterialMix {
  std::string name;
  double share = 0.0;
  double hazard_multiplier = 1.0;
};

struct DiameterMix {
  double diameter_mm = 0.0;
  double share = 0.0;
};

struct SynthConfig {
  std::size_t n_pipes = 10000;
  int first_laid_year = -69;
  int last_laid_year = 0;
  int history_start = -4;   // first year with work orders
  int observation_end = 15; // last year with work orders
  std::size_t n_suburbs = 40;
  double suburb_laid_spread = 10.0;  // sd of laid years around a suburb's era
  std::vector<MaterialMix> materials{
      {"AC", 0.30, 2.0}, {"CI", 0.25, 1.0}, {"DI", 0.20, 1.0}, {"PVC", 0.25, 0.5}};
  std::vector<DiameterMix> diameters{{80, 0.15}, {100, 0.25}, {150, 0.30},
                                     {225, 0.15}, {300, 0.10}, {375, 0.05}};
  double small_diameter_multiplier = 1.8;  // hazard factor for diameter <= 100 mm
  double length_median_m = 120.0;
  double length_log_sd = 0.8;
  double length_reference_m = 100.0;
  // Hazard scales with (length / reference)^exponent. 0 makes the per-pipe
  // hazard independent of length; 1 makes failures proportional to length.
  double length_exponent = 0.0;
  double weibull_shape = 1.6;
  double weibull_scale = 80.0;  // years, for a reference pipe with unit multiplier
  bool include_ground_level = true;
  double ground_level_effect = 0.0;  // log-hazard per 100 m of ground level

  // ConfigError for zero pipes, empty mixes or nonpositive scale/shape.
  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct GroundTruth {
  std::string asset_id;
  double shape = 0.0;
  double scale = 0.0;  // per-pipe Weibull scale, years since laid

  // Time-since-laid survival of the pipe's failure process.
  double survival(double age) const;
};

struct SynthDataset {
  std::vector<PipeRecord> pipes;
  std::vector<WorkOrder> work_orders;
  std::vector<GroundTruth> truth;  // same order as pipes
};

// Pipes and renewal failure processes: each pipe fails according to a Weibull
// with scale weibull_scale * multiplier^(-1/shape), the multiplier combining
// material, small diameter, length and ground level; after a failure the
// clock restarts. Work orders are emitted for failure years in
// [history_start, observation_end].
SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

void write_network_csv(std::span<const PipeRecord> pipes, bool include_ground_level, std::ostream& out);
void write_workorders_csv(std::span<const WorkOrder> work_orders, std::ostream& out);
void write_ground_truth_csv(std::span<const GroundTruth> truth, std::ostream& out);
std::vector<GroundTruth> read_ground_truth_csv(std::istream& in);

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace pipesurv
