#include "pipesurv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "pipesurv/errors.hpp"
#include "pipesurv/random.hpp"

namespace pipesurv {

void PanelConfig::validate() const {
  if (!(train_start <= train_end && train_end < predict_start && predict_start <= predict_end)) {
    throw ConfigError("panel years must satisfy train_start <= train_end < predict_start <= predict_end");
  }
}

// CSV ------------------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<int> parse_int(const std::string& s) {
  int value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::map<std::string, std::size_t> column;
  struct Row {
    std::size_t line;
    std::vector<std::string> fields;
  };
  std::vector<Row> rows;
};

CsvTable read_csv(std::istream& in, const std::string& source,
                  std::span<const std::string> mandatory) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.rfind('\r', 0) == 0) continue;
    table.header = split_csv_line(line);
    break;
  }
  if (table.header.empty()) throw DataError(source + " file is empty");
  for (std::size_t i = 0; i < table.header.size(); ++i) table.column[trim(table.header[i])] = i;
  for (const auto& name : mandatory) {
    if (!table.column.count(name)) {
      throw DataError(source + " file is missing mandatory column '" + name + "'");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    table.rows.push_back({line_no, split_csv_line(line)});
  }
  return table;
}

// Collects the rule violations of one row; the row is quarantined if any.
class RowReview {
 public:
  RowReview(QualityReport& report, std::string source, std::size_t line, std::string key)
      : report_(report), source_(std::move(source)), line_(line), key_(std::move(key)) {}

  void missing(const std::string& column) {
    ++report_.completeness[source_ + "." + column];
    flag("missing_" + column, column + " is empty");
  }

  void invalid(const std::string& column, const std::string& rule, const std::string& detail) {
    ++report_.validity[source_ + "." + column + "." + rule];
    flag(column + "." + rule, detail);
  }

  void inconsistent(const std::string& rule, const std::string& detail) {
    report_.consistency.push_back({source_, line_, key_, rule, detail});
    flag(rule, detail);
  }

  void malformed(const std::string& detail) {
    ++report_.validity[source_ + ".row.malformed"];
    flag("malformed_row", detail);
  }

  bool failed() const { return failed_; }

  // Records the quarantine entry and updates the source counters.
  bool finish() {
    SourceCounts& counts = report_.sources[source_];
    ++counts.rows_in;
    if (failed_) {
      ++counts.rows_quarantined;
      report_.quarantined.push_back({source_, line_, key_, first_rule_, first_detail_});
    } else {
      ++counts.rows_kept;
    }
    return !failed_;
  }

 private:
  void flag(const std::string& rule, const std::string& detail) {
    if (!failed_) {
      first_rule_ = rule;
      first_detail_ = detail;
    }
    failed_ = true;
  }

  QualityReport& report_;
  std::string source_;
  std::size_t line_;
  std::string key_;
  bool failed_ = false;
  std::string first_rule_, first_detail_;
};

const std::set<std::string>& failure_types() {
  static const std::set<std::string> types{"burst", "fitting", "leak"};
  return types;
}

}  // namespace

// Quality report ---------------------------------------------------------------

bool QualityReport::clean() const {
  const auto zero = [](const auto& entry) { return entry.second == 0; };
  return std::all_of(completeness.begin(), completeness.end(), zero) &&
         std::all_of(validity.begin(), validity.end(), zero) && consistency.empty() &&
         quarantined.empty() && dropped_features.empty();
}

namespace {

nlohmann::json issues_to_json(const std::vector<QualityIssue>& issues) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& i : issues) {
    out.push_back({{"source", i.source}, {"line", i.line}, {"key", i.key}, {"rule", i.rule},
                   {"detail", i.detail}});
  }
  return out;
}

}  // namespace

nlohmann::json QualityReport::to_json() const {
  nlohmann::json sources_json = nlohmann::json::object();
  for (const auto& [name, c] : sources) {
    sources_json[name] = {{"rows_in", c.rows_in}, {"rows_kept", c.rows_kept},
                          {"rows_quarantined", c.rows_quarantined}};
  }
  return {{"clean", clean()},
          {"sources", sources_json},
          {"completeness", completeness},
          {"validity", validity},
          {"consistency", issues_to_json(consistency)},
          {"quarantined", issues_to_json(quarantined)},
          {"dropped_features", dropped_features}};
}

std::string QualityReport::to_text() const {
  std::ostringstream out;
  out << "Data quality review: " << (clean() ? "clean" : "issues found") << "\n\n";
  for (const auto& [name, c] : sources) {
    out << name << ": " << c.rows_in << " rows, " << c.rows_kept << " kept, "
        << c.rows_quarantined << " quarantined\n";
  }
  out << "\nCompleteness (empty mandatory cells)\n";
  if (completeness.empty()) out << "  none\n";
  for (const auto& [column, n] : completeness) out << "  " << column << ": " << n << "\n";
  out << "\nValidity (rule violations)\n";
  if (validity.empty()) out << "  none\n";
  for (const auto& [rule, n] : validity) out << "  " << rule << ": " << n << "\n";
  out << "\nConsistency (cross-source mismatches)\n";
  if (consistency.empty()) out << "  none\n";
  for (const auto& i : consistency) {
    out << "  " << i.source << " line " << i.line << " [" << i.key << "] " << i.rule << ": "
        << i.detail << "\n";
  }
  out << "\nQuarantined rows\n";
  if (quarantined.empty()) out << "  none\n";
  for (const auto& i : quarantined) {
    out << "  " << i.source << " line " << i.line << " [" << i.key << "] " << i.rule << "\n";
  }
  if (!dropped_features.empty()) {
    out << "\nOptional features left out of the schema\n";
    for (const auto& f : dropped_features) out << "  " << f << "\n";
  }
  return out.str();
}

// Loading ----------------------------------------------------------------------

LoadedData load_and_review(std::istream& network_csv, std::istream& workorders_csv,
                           std::istream* external_csv, const ReviewOptions& options) {
  LoadedData data;
  QualityReport& report = data.report;

  static const std::vector<std::string> network_columns{"asset_id",    "laid_year", "material",
                                                        "diameter_mm", "length_m",  "suburb"};
  const CsvTable network = read_csv(network_csv, "network", network_columns);
  const bool ground_column = network.column.count(feature::ground_level) > 0;
  report.sources["network"];

  std::map<std::string, std::size_t> pipe_by_id;
  for (const auto& row : network.rows) {
    auto cell = [&](const std::string& name) {
      const std::size_t c = network.column.at(name);
      return c < row.fields.size() ? trim(row.fields[c]) : std::string{};
    };
    RowReview review(report, "network", row.line, cell("asset_id"));
    if (row.fields.size() != network.header.size()) {
      review.malformed("expected " + std::to_string(network.header.size()) + " fields, found " +
                       std::to_string(row.fields.size()));
      review.finish();
      continue;
    }
    for (const auto& column : network_columns) {
      if (cell(column).empty()) review.missing(column);
    }
    if (ground_column && cell(feature::ground_level).empty()) review.missing(feature::ground_level);

    PipeRecord pipe;
    pipe.asset_id = cell("asset_id");
    pipe.material = cell("material");
    pipe.suburb = cell("suburb");
    if (!cell("laid_year").empty()) {
      if (const auto y = parse_int(cell("laid_year"))) {
        pipe.laid_year = *y;
        if (options.latest_year && *y > *options.latest_year) {
          review.invalid("laid_year", "after_latest_year", "laid year after the latest observation year");
        }
      } else {
        review.invalid("laid_year", "not_integer", "laid_year is not an integer year");
      }
    }
    auto positive = [&](const std::string& column, double& target) {
      if (cell(column).empty()) return;
      const auto v = parse_double(cell(column));
      if (!v) {
        review.invalid(column, "not_numeric", column + " is not numeric");
      } else if (!(*v > 0.0)) {
        review.invalid(column, "nonpositive", column + " must be positive");
      } else {
        target = *v;
      }
    };
    positive("diameter_mm", pipe.diameter_mm);
    positive("length_m", pipe.length_m);
    if (ground_column && !cell(feature::ground_level).empty()) {
      if (const auto v = parse_double(cell(feature::ground_level))) {
        pipe.ground_level_m = *v;
      } else {
        review.invalid(feature::ground_level, "not_numeric", "ground level is not numeric");
      }
    }
    if (!pipe.asset_id.empty() && pipe_by_id.count(pipe.asset_id)) {
      review.invalid("asset_id", "duplicate", "asset_id already used by an earlier row");
    }
    if (review.finish()) {
      pipe_by_id.emplace(pipe.asset_id, data.pipes.size());
      data.pipes.push_back(std::move(pipe));
    }
  }
  data.has_ground_level = ground_column;

  static const std::vector<std::string> workorder_columns{"work_order_id", "asset_id",
                                                          "failure_year", "failure_type"};
  const CsvTable orders = read_csv(workorders_csv, "workorders", workorder_columns);
  report.sources["workorders"];
  std::set<std::string> order_ids;
  for (const auto& row : orders.rows) {
    auto cell = [&](const std::string& name) {
      const std::size_t c = orders.column.at(name);
      return c < row.fields.size() ? trim(row.fields[c]) : std::string{};
    };
    RowReview review(report, "workorders", row.line, cell("work_order_id"));
    if (row.fields.size() != orders.header.size()) {
      review.malformed("expected " + std::to_string(orders.header.size()) + " fields, found " +
                       std::to_string(row.fields.size()));
      review.finish();
      continue;
    }
    for (const auto& column : workorder_columns) {
      if (cell(column).empty()) review.missing(column);
    }
    WorkOrder wo;
    wo.work_order_id = cell("work_order_id");
    wo.asset_id = cell("asset_id");
    wo.failure_type = cell("failure_type");
    bool year_ok = false;
    if (!cell("failure_year").empty()) {
      if (const auto y = parse_int(cell("failure_year"))) {
        wo.failure_year = *y;
        year_ok = true;
        if (options.latest_year && *y > *options.latest_year) {
          review.invalid("failure_year", "after_latest_year", "failure after the latest observation year");
        }
      } else {
        review.invalid("failure_year", "not_integer", "failure_year is not an integer year");
      }
    }
    if (!wo.failure_type.empty() && !failure_types().count(wo.failure_type)) {
      review.invalid("failure_type", "unknown", "failure type '" + wo.failure_type +
                                                    "' is not burst, fitting or leak");
    }
    if (!wo.work_order_id.empty() && order_ids.count(wo.work_order_id)) {
      review.invalid("work_order_id", "duplicate", "work_order_id already used by an earlier row");
    }
    if (!wo.asset_id.empty()) {
      const auto pipe = pipe_by_id.find(wo.asset_id);
      if (pipe == pipe_by_id.end()) {
        review.inconsistent("unmatched_asset", "asset_id '" + wo.asset_id +
                                                   "' matches no reviewed network record");
      } else if (year_ok && wo.failure_year < data.pipes[pipe->second].laid_year) {
        const std::string detail = "failure year " + std::to_string(wo.failure_year) +
                                   " precedes laid year " +
                                   std::to_string(data.pipes[pipe->second].laid_year);
        review.invalid("failure_year", "before_laid_year", detail);
        report.consistency.push_back({"workorders", row.line, wo.work_order_id,
                                      "failure_before_laid_year", detail});
      }
    }
    if (review.finish()) {
      order_ids.insert(wo.work_order_id);
      data.work_orders.push_back(std::move(wo));
    }
  }

  if (external_csv != nullptr) {
    static const std::vector<std::string> external_columns{"asset_id"};
    const CsvTable external = read_csv(*external_csv, "external", external_columns);
    report.sources["external"];
    std::vector<std::string> value_columns;
    for (const auto& h : external.header) {
      if (trim(h) != "asset_id") value_columns.push_back(trim(h));
    }
    std::set<std::string> joined;
    for (const auto& row : external.rows) {
      auto cell = [&](const std::string& name) {
        const std::size_t c = external.column.at(name);
        return c < row.fields.size() ? trim(row.fields[c]) : std::string{};
      };
      RowReview review(report, "external", row.line, cell("asset_id"));
      if (row.fields.size() != external.header.size()) {
        review.malformed("expected " + std::to_string(external.header.size()) + " fields");
        review.finish();
        continue;
      }
      const std::string id = cell("asset_id");
      if (id.empty()) review.missing("asset_id");
      std::map<std::string, double> values;
      for (const auto& column : value_columns) {
        if (cell(column).empty()) {
          review.missing(column);
        } else if (const auto v = parse_double(cell(column))) {
          values[column] = *v;
        } else {
          review.invalid(column, "not_numeric", column + " is not numeric");
        }
      }
      const auto pipe = pipe_by_id.find(id);
      if (!id.empty() && pipe == pipe_by_id.end()) {
        review.inconsistent("unmatched_asset", "asset_id '" + id + "' matches no reviewed network record");
      } else if (joined.count(id)) {
        review.invalid("asset_id", "duplicate", "asset joined twice");
      }
      if (review.finish()) {
        joined.insert(id);
        data.pipes[pipe->second].external = std::move(values);
      }
    }
    for (const auto& column : value_columns) {
      const bool covered = !data.pipes.empty() &&
                           std::all_of(data.pipes.begin(), data.pipes.end(), [&](const PipeRecord& p) {
                             return p.external.count(column) > 0;
                           });
      if (covered) {
        data.external_columns.push_back(column);
      } else {
        report.dropped_features.push_back("external." + column);
      }
    }
  }
  return data;
}

LoadedData load_and_review(const std::string& network_path, const std::string& workorders_path,
                           const std::optional<std::string>& external_path,
                           const ReviewOptions& options) {
  auto open = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return in;
  };
  std::ifstream network = open(network_path);
  std::ifstream orders = open(workorders_path);
  if (external_path) {
    std::ifstream external = open(*external_path);
    return load_and_review(network, orders, &external, options);
  }
  return load_and_review(network, orders, nullptr, options);
}

// Panel ------------------------------------------------------------------------

std::string laid_year_band(int laid_year) {
  const int decade = static_cast<int>(std::floor(laid_year / 10.0)) * 10;
  return std::to_string(decade) + "s";
}

std::string diameter_band(double diameter_mm) {
  if (diameter_mm <= 100.0) return "<=100";
  if (diameter_mm <= 150.0) return "101-150";
  if (diameter_mm <= 225.0) return "151-225";
  if (diameter_mm <= 300.0) return "226-300";
  return ">300";
}

Panel build_panel(std::span<const PipeRecord> pipes, std::span<const WorkOrder> work_orders,
                  const PanelConfig& config, bool include_ground_level,
                  std::span<const std::string> external_columns) {
  if (config.train_start > config.train_end) {
    throw ConfigError("training window must satisfy train_start <= train_end");
  }
  std::map<std::string, std::vector<int>> failures;
  for (const auto& wo : work_orders) {
    if (wo.failure_year <= config.train_end) failures[wo.asset_id].push_back(wo.failure_year);
  }
  for (auto& [id, years] : failures) std::sort(years.begin(), years.end());

  // Categorical levels, sorted by name.
  std::set<std::string> bands, materials, diameter_bands;
  for (const auto& p : pipes) {
    if (p.laid_year >= config.train_end) continue;
    bands.insert(laid_year_band(p.laid_year));
    materials.insert(p.material);
    diameter_bands.insert(diameter_band(p.diameter_mm));
  }

  Panel panel;
  auto& features = panel.schema.features;
  features.push_back({feature::age_at_start, FeatureKind::numeric, {}});
  features.push_back({feature::laid_band, FeatureKind::categorical, {bands.begin(), bands.end()}});
  features.push_back({feature::material, FeatureKind::categorical, {materials.begin(), materials.end()}});
  features.push_back({feature::diameter, FeatureKind::numeric, {}});
  features.push_back(
      {feature::diameter_band, FeatureKind::categorical, {diameter_bands.begin(), diameter_bands.end()}});
  features.push_back({feature::length, FeatureKind::numeric, {}});
  features.push_back({feature::previous_failures, FeatureKind::numeric, {}});
  if (include_ground_level) features.push_back({feature::ground_level, FeatureKind::numeric, {}});
  for (const auto& column : external_columns) features.push_back({column, FeatureKind::numeric, {}});

  auto code = [](const std::vector<std::string>& levels, const std::string& value) {
    return static_cast<double>(std::lower_bound(levels.begin(), levels.end(), value) - levels.begin());
  };

  for (std::size_t i = 0; i < pipes.size(); ++i) {
    const PipeRecord& p = pipes[i];
    if (p.laid_year >= config.train_end) continue;

    SurvivalSample s;
    s.subject_id = p.asset_id;
    int previous = 0;
    std::optional<int> first_in_window;
    if (const auto it = failures.find(p.asset_id); it != failures.end()) {
      for (int year : it->second) {
        if (year < config.train_start) {
          ++previous;
        } else if (!first_in_window) {
          first_in_window = year;
        }
      }
    }
    if (first_in_window) {
      s.time = *first_in_window - p.laid_year;
      s.event = true;
    } else {
      s.time = config.train_end - p.laid_year;
      s.event = false;
    }
    // Observed from the start of train_start, i.e. after the age reached at
    // the end of the previous year.
    s.entry = static_cast<double>(std::max(0, config.train_start - 1 - p.laid_year));
    s.covariates = {static_cast<double>(config.train_start - p.laid_year),
                    code(features[1].levels, laid_year_band(p.laid_year)),
                    code(features[2].levels, p.material),
                    p.diameter_mm,
                    code(features[4].levels, diameter_band(p.diameter_mm)),
                    p.length_m,
                    static_cast<double>(previous)};
    if (include_ground_level) {
      if (!p.ground_level_m) throw DataError("pipe '" + p.asset_id + "' lacks a ground level");
      s.covariates.push_back(*p.ground_level_m);
    }
    for (const auto& column : external_columns) {
      const auto it = p.external.find(column);
      if (it == p.external.end()) throw DataError("pipe '" + p.asset_id + "' lacks " + column);
      s.covariates.push_back(it->second);
    }
    panel.samples.push_back(std::move(s));
    panel.pipe_index.push_back(i);
    panel.current_age.push_back(static_cast<double>(config.train_end - p.laid_year));
  }
  return panel;
}

void conform_to_schema(Panel& panel, const CovariateSchema& model_schema) {
  const auto& own = panel.schema.features;
  const auto& target = model_schema.features;
  bool same = own.size() == target.size();
  for (std::size_t f = 0; same && f < own.size(); ++f) {
    same = own[f].name == target[f].name && own[f].kind == target[f].kind;
  }
  if (!same) {
    std::string have, want;
    for (const auto& f : own) have += " " + f.name;
    for (const auto& f : target) want += " " + f.name;
    throw DataError("dataset features [" + have + " ] do not match model features [" + want + " ]");
  }
  for (std::size_t f = 0; f < own.size(); ++f) {
    if (own[f].kind != FeatureKind::categorical || own[f].levels == target[f].levels) continue;
    std::vector<double> remap(own[f].levels.size(), kUnseenCategory);
    for (std::size_t l = 0; l < own[f].levels.size(); ++l) {
      const auto it = std::find(target[f].levels.begin(), target[f].levels.end(), own[f].levels[l]);
      if (it != target[f].levels.end()) remap[l] = static_cast<double>(it - target[f].levels.begin());
    }
    for (auto& s : panel.samples) {
      const double v = s.covariates[f];
      s.covariates[f] = v >= 0.0 ? remap[static_cast<std::size_t>(v)] : kUnseenCategory;
    }
  }
  panel.schema = model_schema;
}

// Mutual information -------------------------------------------------------------

std::vector<int> discretize_quantiles(std::span<const double> values, int bins) {
  if (bins < 1) throw ConfigError("bin count must be >= 1");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  if (!sorted.empty()) {
    for (int i = 1; i < bins; ++i) {
      const double h = static_cast<double>(sorted.size() - 1) * i / bins;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const double edge = lo + 1 < sorted.size()
                              ? sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo])
                              : sorted.back();
      edges.push_back(edge);
    }
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<int> codes;
  codes.reserve(values.size());
  for (double v : values) {
    codes.push_back(static_cast<int>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin()));
  }
  return codes;
}

double mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ConfigError("mutual information columns differ in length");
  if (a.empty()) return 0.0;
  std::map<std::pair<int, int>, std::size_t> joint;
  std::map<int, std::size_t> count_a, count_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++count_a[a[i]];
    ++count_b[b[i]];
  }
  const auto n = static_cast<double>(a.size());
  std::vector<double> terms;
  terms.reserve(joint.size());
  for (const auto& [cell, c] : joint) {
    const double joint_count = static_cast<double>(c);
    const double marginal = static_cast<double>(count_a[cell.first]) * static_cast<double>(count_b[cell.second]);
    terms.push_back(joint_count / n * std::log2(joint_count * n / marginal));
  }
  // Summing in sorted order makes the result independent of argument order.
  std::sort(terms.begin(), terms.end());
  const double mi = std::accumulate(terms.begin(), terms.end(), 0.0);
  return std::max(mi, 0.0);
}

double mutual_information(std::span<const double> feature, std::span<const int> failure, int bins) {
  const auto codes = discretize_quantiles(feature, bins);
  return mutual_information(codes, failure);
}

// Synthetic network ---------------------------------------------------------------

void SynthConfig::validate() const {
  if (n_pipes == 0) throw ConfigError("synthetic config needs n_pipes > 0");
  if (materials.empty() || diameters.empty()) throw ConfigError("material and diameter mixes must be nonempty");
  if (n_suburbs == 0) throw ConfigError("synthetic config needs n_suburbs > 0");
  if (first_laid_year > last_laid_year) throw ConfigError("first_laid_year after last_laid_year");
  if (history_start > observation_end) throw ConfigError("history_start after observation_end");
  if (!(weibull_shape > 0.0) || !(weibull_scale > 0.0)) {
    throw ConfigError("Weibull shape and scale must be positive");
  }
  if (!(length_median_m > 0.0) || !(length_reference_m > 0.0) || length_log_sd < 0.0) {
    throw ConfigError("length distribution parameters must be positive");
  }
  if (!std::isfinite(length_exponent)) throw ConfigError("length_exponent must be finite");
  auto check_shares = [](double total, const char* what) {
    if (!(total > 0.0)) throw ConfigError(std::string(what) + " shares must sum to a positive value");
  };
  double m = 0.0, d = 0.0;
  for (const auto& x : materials) {
    if (x.share < 0.0 || !(x.hazard_multiplier > 0.0)) throw ConfigError("invalid material mix entry");
    m += x.share;
  }
  for (const auto& x : diameters) {
    if (x.share < 0.0 || !(x.diameter_mm > 0.0)) throw ConfigError("invalid diameter mix entry");
    d += x.share;
  }
  check_shares(m, "material");
  check_shares(d, "diameter");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json mats = nlohmann::json::array();
  for (const auto& m : materials) {
    mats.push_back({{"name", m.name}, {"share", m.share}, {"hazard_multiplier", m.hazard_multiplier}});
  }
  nlohmann::json dias = nlohmann::json::array();
  for (const auto& d : diameters) dias.push_back({{"diameter_mm", d.diameter_mm}, {"share", d.share}});
  return {{"n_pipes", n_pipes},
          {"first_laid_year", first_laid_year},
          {"last_laid_year", last_laid_year},
          {"history_start", history_start},
          {"observation_end", observation_end},
          {"n_suburbs", n_suburbs},
          {"suburb_laid_spread", suburb_laid_spread},
          {"materials", mats},
          {"diameters", dias},
          {"small_diameter_multiplier", small_diameter_multiplier},
          {"length_median_m", length_median_m},
          {"length_log_sd", length_log_sd},
          {"length_reference_m", length_reference_m},
          {"length_exponent", length_exponent},
          {"weibull_shape", weibull_shape},
          {"weibull_scale", weibull_scale},
          {"include_ground_level", include_ground_level},
          {"ground_level_effect", ground_level_effect}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto get = [&](const char* key, auto& target) {
    if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
  };
  get("n_pipes", c.n_pipes);
  get("first_laid_year", c.first_laid_year);
  get("last_laid_year", c.last_laid_year);
  get("history_start", c.history_start);
  get("observation_end", c.observation_end);
  get("n_suburbs", c.n_suburbs);
  get("suburb_laid_spread", c.suburb_laid_spread);
  get("small_diameter_multiplier", c.small_diameter_multiplier);
  get("length_median_m", c.length_median_m);
  get("length_log_sd", c.length_log_sd);
  get("length_reference_m", c.length_reference_m);
  get("length_exponent", c.length_exponent);
  get("weibull_shape", c.weibull_shape);
  get("weibull_scale", c.weibull_scale);
  get("include_ground_level", c.include_ground_level);
  get("ground_level_effect", c.ground_level_effect);
  if (j.contains("materials")) {
    c.materials.clear();
    for (const auto& m : j.at("materials")) {
      c.materials.push_back({m.at("name").get<std::string>(), m.at("share").get<double>(),
                             m.value("hazard_multiplier", 1.0)});
    }
  }
  if (j.contains("diameters")) {
    c.diameters.clear();
    for (const auto& d : j.at("diameters")) {
      c.diameters.push_back({d.at("diameter_mm").get<double>(), d.at("share").get<double>()});
    }
  }
  return c;
}

double GroundTruth::survival(double age) const {
  if (age <= 0.0) return 1.0;
  return std::exp(-std::pow(age / scale, shape));
}

namespace {

double standard_normal(RandomStream& rng) {
  const double u1 = rng.uniform_open();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename Mix>
std::size_t draw_from_mix(const std::vector<Mix>& mix, RandomStream& rng) {
  double total = 0.0;
  for (const auto& m : mix) total += m.share;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    if (u < mix[i].share) return i;
    u -= mix[i].share;
  }
  return mix.size() - 1;
}

std::string padded(const char* prefix, std::size_t value, int width) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%s%0*zu", prefix, width, value);
  return buffer;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  RandomStream rng(seed);
  SynthDataset out;

  std::vector<double> suburb_era(config.n_suburbs);
  for (auto& era : suburb_era) {
    era = config.first_laid_year + rng.uniform() * (config.last_laid_year - config.first_laid_year);
  }
  const int suburb_width = config.n_suburbs >= 100 ? 3 : 2;

  std::size_t order_counter = 0;
  for (std::size_t i = 0; i < config.n_pipes; ++i) {
    PipeRecord pipe;
    pipe.asset_id = padded("P", i + 1, 6);
    const auto suburb = static_cast<std::size_t>(rng.bounded(config.n_suburbs));
    pipe.suburb = padded("Suburb_", suburb + 1, suburb_width);
    // Truncated normal around the suburb's era; redraw rather than clamp so
    // no laid year collects the tail mass.
    long laid = 0;
    do {
      laid = std::lround(suburb_era[suburb] + config.suburb_laid_spread * standard_normal(rng));
    } while (laid < config.first_laid_year || laid > config.last_laid_year);
    pipe.laid_year = static_cast<int>(laid);
    const MaterialMix& material = config.materials[draw_from_mix(config.materials, rng)];
    pipe.material = material.name;
    pipe.diameter_mm = config.diameters[draw_from_mix(config.diameters, rng)].diameter_mm;
    const double length =
        std::exp(std::log(config.length_median_m) + config.length_log_sd * standard_normal(rng));
    pipe.length_m = std::round(std::clamp(length, 5.0, 2000.0) * 100.0) / 100.0;
    const double ground = std::round(rng.uniform() * 1200.0) / 10.0;
    if (config.include_ground_level) pipe.ground_level_m = ground;

    double multiplier = material.hazard_multiplier *
                        std::pow(pipe.length_m / config.length_reference_m, config.length_exponent);
    if (pipe.diameter_mm <= 100.0) multiplier *= config.small_diameter_multiplier;
    multiplier *= std::exp(config.ground_level_effect * ground / 100.0);

    GroundTruth truth;
    truth.asset_id = pipe.asset_id;
    truth.shape = config.weibull_shape;
    truth.scale = config.weibull_scale * std::pow(multiplier, -1.0 / config.weibull_shape);

    double age = 0.0;
    while (true) {
      age += truth.scale * std::pow(-std::log(rng.uniform_open()), 1.0 / truth.shape);
      const int year = pipe.laid_year + static_cast<int>(std::floor(age));
      if (year > config.observation_end) break;
      const double u = rng.uniform();
      if (year < config.history_start) continue;
      WorkOrder wo;
      wo.work_order_id = padded("WO", ++order_counter, 7);
      wo.asset_id = pipe.asset_id;
      wo.failure_year = year;
      wo.failure_type = u < 0.6 ? "burst" : (u < 0.85 ? "fitting" : "leak");
      out.work_orders.push_back(std::move(wo));
    }
    out.pipes.push_back(std::move(pipe));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

// Writers ---------------------------------------------------------------------------

namespace {

std::string format_real(double v, const char* fmt = "%.10g") {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, fmt, v);
  return buffer;
}

}  // namespace

void write_network_csv(std::span<const PipeRecord> pipes, bool include_ground_level, std::ostream& out) {
  out << "asset_id,laid_year,material,diameter_mm,length_m,suburb";
  if (include_ground_level) out << ",ground_level_m";
  out << "\n";
  for (const auto& p : pipes) {
    out << p.asset_id << ',' << p.laid_year << ',' << p.material << ',' << format_real(p.diameter_mm)
        << ',' << format_real(p.length_m, "%.2f") << ',' << p.suburb;
    if (include_ground_level) out << ',' << format_real(p.ground_level_m.value_or(0.0), "%.1f");
    out << "\n";
  }
}

void write_workorders_csv(std::span<const WorkOrder> work_orders, std::ostream& out) {
  out << "work_order_id,asset_id,failure_year,failure_type\n";
  for (const auto& wo : work_orders) {
    out << wo.work_order_id << ',' << wo.asset_id << ',' << wo.failure_year << ',' << wo.failure_type
        << "\n";
  }
}

void write_ground_truth_csv(std::span<const GroundTruth> truth, std::ostream& out) {
  out << "asset_id,shape,scale\n";
  for (const auto& t : truth) {
    out << t.asset_id << ',' << format_real(t.shape, "%.17g") << ',' << format_real(t.scale, "%.17g")
        << "\n";
  }
}

std::vector<GroundTruth> read_ground_truth_csv(std::istream& in) {
  static const std::vector<std::string> columns{"asset_id", "shape", "scale"};
  const CsvTable table = read_csv(in, "ground truth", columns);
  std::vector<GroundTruth> truth;
  for (const auto& row : table.rows) {
    if (row.fields.size() != table.header.size()) {
      throw DataError("ground truth line " + std::to_string(row.line) + " is malformed");
    }
    GroundTruth t;
    t.asset_id = row.fields[table.column.at("asset_id")];
    const auto shape = parse_double(row.fields[table.column.at("shape")]);
    const auto scale = parse_double(row.fields[table.column.at("scale")]);
    if (!shape || !scale) throw DataError("ground truth line " + std::to_string(row.line) + " is malformed");
    t.shape = *shape;
    t.scale = *scale;
    truth.push_back(std::move(t));
  }
  return truth;
}

}  // namespace pipesurv
