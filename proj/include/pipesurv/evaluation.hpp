#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace pipesurv {

struct ScoredPipe {
  std::string asset_id;
  double score = 0.0;  // higher = more likely to fail
  double length_m = 0.0;
  std::string suburb;
  bool failed = false;  // outcome in the evaluation year
};

enum class Weighting { pipe_count, length };

const char* to_string(Weighting w);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct RocCurve {
  std::vector<CurvePoint> points;  // (0,0) ... (1,1), one vertex per tied score block
  double auc = 0.0;
  Weighting weighting = Weighting::pipe_count;

  bool operator==(const RocCurve&) const = default;
};

// Pipes ranked by score, tied scores pooled into one block. y is the fraction
// of failures captured; x the fraction of non-failed pipes (pipe_count) or of
// non-failed length (length). Needs at least one failed and one non-failed
// pipe, otherwise DataError.
RocCurve roc(std::span<const ScoredPipe> scored, Weighting weighting);

// Gains curve over the same ranking: x is the fraction of all pipes (or all
// length) inspected, y the fraction of failures captured.
std::vector<CurvePoint> gains(std::span<const ScoredPipe> scored, Weighting weighting);

struct DetectionRow {
  double fraction = 0.0;
  std::size_t pipes_inspected = 0;
  double length_inspected_m = 0.0;
  std::size_t failures_detected = 0;
  std::size_t failures_total = 0;
};

// Walks the ranking (score descending, asset_id ascending within ties) until
// the inspected length reaches fraction * total length.
std::vector<DetectionRow> top_fraction_detection(std::span<const ScoredPipe> scored,
                                                 std::span<const double> fractions);

struct SuburbScore {
  std::string suburb;
  double score = 0.0;  // sum of pipe scores
  std::size_t failures = 0;
  std::size_t pipes = 0;
};

struct SuburbRanking {
  std::vector<SuburbScore> suburbs;  // score descending, then name
  std::vector<CurvePoint> curve;     // (suburbs inspected, failures captured) fractions, from (0,0)
};

SuburbRanking suburb_rank(std::span<const ScoredPipe> scored);

struct CriticalSuburbResult {
  double top_fraction = 0.0;
  std::size_t n_suburbs = 0;
  std::size_t predicted = 0;        // ceil(top_fraction * n_suburbs)
  std::size_t actual_critical = 0;  // failure count above the cross-suburb mean
  std::size_t hits = 0;
  double precision = 0.0;
  std::optional<double> recall;  // empty when no suburb is critical
};

CriticalSuburbResult critical_suburb_pr(std::span<const ScoredPipe> scored, double top_fraction);

// Score file: CSV "asset_id,score".
std::map<std::string, double> read_score_file(std::istream& in);
void write_score_file(const std::vector<std::pair<std::string, double>>& scores, std::ostream& out);

nlohmann::json curve_to_json(std::span<const CurvePoint> points);

struct MethodMetrics {
  std::string method;
  RocCurve roc_pipe;
  RocCurve roc_length;
  std::vector<CurvePoint> gains_pipe;
  std::vector<CurvePoint> gains_length;
  std::vector<DetectionRow> detection;
  SuburbRanking suburbs;
  std::vector<CriticalSuburbResult> critical;
};

struct EvaluationOptions {
  std::vector<double> detection_fractions{0.01, 0.05};
  std::vector<double> critical_fractions{0.05, 0.1, 0.2, 0.3, 0.5};
};

MethodMetrics evaluate_method(const std::string& method, std::span<const ScoredPipe> scored,
                              const EvaluationOptions& options = {});
nlohmann::json metrics_to_json(const MethodMetrics& metrics);

}  // namespace pipesurv
