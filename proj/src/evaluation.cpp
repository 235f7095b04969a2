#include "pipesurv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "pipesurv/data.hpp"
#include "pipesurv/errors.hpp"

namespace pipesurv {

const char* to_string(Weighting w) { return w == Weighting::length ? "length" : "pipe"; }

namespace {

// Indices ordered by score descending, asset_id ascending within a score.
std::vector<std::size_t> ranking(std::span<const ScoredPipe> scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a].score != scored[b].score) return scored[a].score > scored[b].score;
    return scored[a].asset_id < scored[b].asset_id;
  });
  return order;
}

void check_scores(std::span<const ScoredPipe> scored) {
  for (const auto& p : scored) {
    if (!std::isfinite(p.score)) throw DataError("score of '" + p.asset_id + "' is not finite");
    if (!(p.length_m > 0.0)) throw DataError("length of '" + p.asset_id + "' must be positive");
  }
}

// Per-pipe weights. Lengths are divided by the longest pipe so that equal
// lengths become exactly 1 and length weighting reproduces pipe weighting.
std::vector<double> weights(std::span<const ScoredPipe> scored, Weighting weighting) {
  std::vector<double> w(scored.size(), 1.0);
  if (weighting == Weighting::length) {
    double longest = 0.0;
    for (const auto& p : scored) longest = std::max(longest, p.length_m);
    for (std::size_t i = 0; i < scored.size(); ++i) w[i] = scored[i].length_m / longest;
  }
  return w;
}

struct Block {
  double failures = 0.0;   // count
  double other = 0.0;      // non-failed weight
  double all = 0.0;        // total weight
};

std::vector<Block> tied_blocks(std::span<const ScoredPipe> scored, const std::vector<std::size_t>& order,
                               const std::vector<double>& w) {
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const ScoredPipe& p = scored[order[k]];
    if (k == 0 || p.score != scored[order[k - 1]].score) blocks.emplace_back();
    Block& b = blocks.back();
    b.all += w[order[k]];
    if (p.failed) {
      b.failures += 1.0;
    } else {
      b.other += w[order[k]];
    }
  }
  return blocks;
}

}  // namespace

RocCurve roc(std::span<const ScoredPipe> scored, Weighting weighting) {
  check_scores(scored);
  const auto failed = std::count_if(scored.begin(), scored.end(), [](const ScoredPipe& p) { return p.failed; });
  if (failed == 0 || failed == static_cast<std::ptrdiff_t>(scored.size())) {
    throw DataError("ROC is undefined unless both failed and non-failed pipes are present");
  }
  const auto order = ranking(scored);
  const auto w = weights(scored, weighting);
  const auto blocks = tied_blocks(scored, order, w);

  double positives = 0.0, negatives = 0.0, area = 0.0;
  std::vector<std::pair<double, double>> cumulative{{0.0, 0.0}};
  for (const Block& b : blocks) {
    // Each non-failed unit in the block is outranked by every earlier failure
    // and tied with the block's failures (half credit).
    area += b.other * (2.0 * positives + b.failures);
    positives += b.failures;
    negatives += b.other;
    cumulative.emplace_back(negatives, positives);
  }
  RocCurve curve;
  curve.weighting = weighting;
  for (const auto& [neg, pos] : cumulative) curve.points.push_back({neg / negatives, pos / positives});
  curve.auc = area / (2.0 * positives * negatives);
  return curve;
}

std::vector<CurvePoint> gains(std::span<const ScoredPipe> scored, Weighting weighting) {
  check_scores(scored);
  const auto order = ranking(scored);
  const auto w = weights(scored, weighting);
  const auto blocks = tied_blocks(scored, order, w);
  double total = 0.0, failures = 0.0;
  for (const Block& b : blocks) {
    total += b.all;
    failures += b.failures;
  }
  std::vector<CurvePoint> points{{0.0, 0.0}};
  double seen = 0.0, caught = 0.0;
  for (const Block& b : blocks) {
    seen += b.all;
    caught += b.failures;
    points.push_back({seen / total, failures > 0.0 ? caught / failures : 0.0});
  }
  return points;
}

std::vector<DetectionRow> top_fraction_detection(std::span<const ScoredPipe> scored,
                                                 std::span<const double> fractions) {
  check_scores(scored);
  const auto order = ranking(scored);
  double total_length = 0.0;
  std::size_t total_failures = 0;
  for (const auto& p : scored) {
    total_length += p.length_m;
    total_failures += p.failed ? 1 : 0;
  }
  std::vector<DetectionRow> rows;
  for (double fraction : fractions) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("detection fractions must lie in (0, 1]");
    DetectionRow row;
    row.fraction = fraction;
    row.failures_total = total_failures;
    const double target = fraction * total_length;
    for (std::size_t k = 0; k < order.size() && row.length_inspected_m < target; ++k) {
      const ScoredPipe& p = scored[order[k]];
      row.length_inspected_m += p.length_m;
      ++row.pipes_inspected;
      row.failures_detected += p.failed ? 1 : 0;
    }
    rows.push_back(row);
  }
  return rows;
}

SuburbRanking suburb_rank(std::span<const ScoredPipe> scored) {
  check_scores(scored);
  std::map<std::string, SuburbScore> by_name;
  std::size_t total_failures = 0;
  for (const auto& p : scored) {
    SuburbScore& s = by_name[p.suburb];
    s.suburb = p.suburb;
    s.score += p.score;
    s.failures += p.failed ? 1 : 0;
    ++s.pipes;
    total_failures += p.failed ? 1 : 0;
  }
  SuburbRanking ranking;
  for (auto& [name, s] : by_name) ranking.suburbs.push_back(std::move(s));
  std::stable_sort(ranking.suburbs.begin(), ranking.suburbs.end(),
                   [](const SuburbScore& a, const SuburbScore& b) { return a.score > b.score; });
  ranking.curve.push_back({0.0, 0.0});
  std::size_t caught = 0;
  const auto n = static_cast<double>(ranking.suburbs.size());
  for (std::size_t k = 0; k < ranking.suburbs.size(); ++k) {
    caught += ranking.suburbs[k].failures;
    ranking.curve.push_back({static_cast<double>(k + 1) / n,
                             total_failures > 0 ? static_cast<double>(caught) / total_failures : 0.0});
  }
  return ranking;
}

CriticalSuburbResult critical_suburb_pr(std::span<const ScoredPipe> scored, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ConfigError("top fraction must lie in (0, 1]");
  const SuburbRanking ranking = suburb_rank(scored);
  if (ranking.suburbs.empty()) throw DataError("critical suburb analysis needs at least one suburb");

  CriticalSuburbResult result;
  result.top_fraction = top_fraction;
  result.n_suburbs = ranking.suburbs.size();
  std::size_t total_failures = 0;
  for (const auto& s : ranking.suburbs) total_failures += s.failures;
  // failures > total / n, compared in integers.
  auto critical = [&](const SuburbScore& s) { return s.failures * result.n_suburbs > total_failures; };

  const double wanted = top_fraction * static_cast<double>(result.n_suburbs);
  result.predicted = std::min(result.n_suburbs,
                              std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(wanted - 1e-9))));
  for (std::size_t k = 0; k < result.n_suburbs; ++k) {
    const bool is_critical = critical(ranking.suburbs[k]);
    result.actual_critical += is_critical ? 1 : 0;
    if (k < result.predicted && is_critical) ++result.hits;
  }
  result.precision = static_cast<double>(result.hits) / static_cast<double>(result.predicted);
  if (result.actual_critical > 0) {
    result.recall = static_cast<double>(result.hits) / static_cast<double>(result.actual_critical);
  }
  return result;
}

std::map<std::string, double> read_score_file(std::istream& in) {
  std::map<std::string, double> scores;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (header) {
      if (fields.size() < 2 || fields[0] != "asset_id" || fields[1] != "score") {
        throw DataError("score file header must be 'asset_id,score'");
      }
      header = false;
      continue;
    }
    if (fields.size() != 2) throw DataError("score file line " + std::to_string(line_no) + " is malformed");
    char* end = nullptr;
    const double value = std::strtod(fields[1].c_str(), &end);
    if (fields[1].empty() || end != fields[1].c_str() + fields[1].size() || !std::isfinite(value)) {
      throw DataError("score file line " + std::to_string(line_no) + " has a non-numeric score");
    }
    if (!scores.emplace(fields[0], value).second) {
      throw DataError("score file lists '" + fields[0] + "' twice");
    }
  }
  if (header) throw DataError("score file is empty");
  return scores;
}

void write_score_file(const std::vector<std::pair<std::string, double>>& scores, std::ostream& out) {
  out << "asset_id,score\n";
  char buffer[64];
  for (const auto& [id, score] : scores) {
    std::snprintf(buffer, sizeof buffer, "%.17g", score);
    out << id << ',' << buffer << "\n";
  }
}

nlohmann::json curve_to_json(std::span<const CurvePoint> points) {
  nlohmann::json x = nlohmann::json::array(), y = nlohmann::json::array();
  for (const auto& p : points) {
    x.push_back(p.x);
    y.push_back(p.y);
  }
  return {{"x", x}, {"y", y}};
}

MethodMetrics evaluate_method(const std::string& method, std::span<const ScoredPipe> scored,
                              const EvaluationOptions& options) {
  MethodMetrics m;
  m.method = method;
  m.roc_pipe = roc(scored, Weighting::pipe_count);
  m.roc_length = roc(scored, Weighting::length);
  m.gains_pipe = gains(scored, Weighting::pipe_count);
  m.gains_length = gains(scored, Weighting::length);
  m.detection = top_fraction_detection(scored, options.detection_fractions);
  m.suburbs = suburb_rank(scored);
  for (double f : options.critical_fractions) m.critical.push_back(critical_suburb_pr(scored, f));
  return m;
}

nlohmann::json metrics_to_json(const MethodMetrics& m) {
  nlohmann::json detection = nlohmann::json::array();
  for (const auto& r : m.detection) {
    detection.push_back({{"fraction", r.fraction},
                         {"pipes_inspected", r.pipes_inspected},
                         {"length_inspected_m", r.length_inspected_m},
                         {"failures_detected", r.failures_detected},
                         {"failures_total", r.failures_total}});
  }
  nlohmann::json suburbs = nlohmann::json::array();
  for (const auto& s : m.suburbs.suburbs) {
    suburbs.push_back({{"suburb", s.suburb}, {"score", s.score}, {"failures", s.failures}, {"pipes", s.pipes}});
  }
  nlohmann::json critical = nlohmann::json::array();
  for (const auto& c : m.critical) {
    critical.push_back({{"top_fraction", c.top_fraction},
                        {"n_suburbs", c.n_suburbs},
                        {"predicted", c.predicted},
                        {"actual_critical", c.actual_critical},
                        {"hits", c.hits},
                        {"precision", c.precision},
                        {"recall", c.recall ? nlohmann::json(*c.recall) : nlohmann::json(nullptr)}});
  }
  return {{"method", m.method},
          {"auc_pipe", m.roc_pipe.auc},
          {"auc_length", m.roc_length.auc},
          {"roc_pipe", curve_to_json(m.roc_pipe.points)},
          {"roc_length", curve_to_json(m.roc_length.points)},
          {"gains_pipe", curve_to_json(m.gains_pipe)},
          {"gains_length", curve_to_json(m.gains_length)},
          {"top_fraction_detection", detection},
          {"suburb_ranking", suburbs},
          {"suburb_curve", curve_to_json(m.suburbs.curve)},
          {"critical_suburbs", critical}};
}

}  // namespace pipesurv
