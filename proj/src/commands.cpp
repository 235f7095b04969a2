#include "pipesurv/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "pipesurv/baselines.hpp"
#include "pipesurv/errors.hpp"
#include "pipesurv/evaluation.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pipesurv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Config -----------------------------------------------------------------------

namespace {

fs::path resolve_path(const json& j, const fs::path& base) {
  const fs::path p = j.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

std::string path_string(const fs::path& p) { return p.lexically_normal().generic_string(); }

int effective_threads(int requested) {
#ifdef _OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

}  // namespace

RunConfig config_from_json(const json& doc, const fs::path& base) {
  RunConfig c;
  try {
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("threads")) c.threads = doc.at("threads").get<int>();
    if (doc.contains("out")) c.out = resolve_path(doc.at("out"), base);
    if (doc.contains("synth")) c.synth = SynthConfig::from_json(doc.at("synth"));
    if (doc.contains("data")) {
      const json& d = doc.at("data");
      if (d.contains("network")) c.data.network = resolve_path(d.at("network"), base);
      if (d.contains("workorders")) c.data.workorders = resolve_path(d.at("workorders"), base);
      if (d.contains("external") && !d.at("external").is_null()) {
        c.data.external = resolve_path(d.at("external"), base);
      }
      if (d.contains("latest_year") && !d.at("latest_year").is_null()) {
        c.data.latest_year = d.at("latest_year").get<int>();
      }
      c.data.max_quarantine_fraction = d.value("max_quarantine_fraction", c.data.max_quarantine_fraction);
    }
    if (doc.contains("panel")) {
      const json& p = doc.at("panel");
      c.panel.train_start = p.value("train_start", c.panel.train_start);
      c.panel.train_end = p.value("train_end", c.panel.train_end);
      c.panel.predict_start = p.value("predict_start", c.panel.predict_start);
      c.panel.predict_end = p.value("predict_end", c.panel.predict_end);
    }
    if (doc.contains("forest")) {
      const json& f = doc.at("forest");
      c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
      c.forest.candidate_features = f.value("candidate_features", c.forest.candidate_features);
      c.forest.min_unique_deaths = f.value("min_unique_deaths", c.forest.min_unique_deaths);
      c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
    }
    if (doc.contains("weibull")) c.weibull_censored = doc.at("weibull").value("censored", true);
    if (doc.contains("predict")) {
      const json& p = doc.at("predict");
      if (p.contains("model_dir")) c.model_dir = resolve_path(p.at("model_dir"), base);
      c.interval_level = p.value("level", c.interval_level);
    }
    if (doc.contains("evaluate")) {
      const json& e = doc.at("evaluate");
      if (e.contains("year") && !e.at("year").is_null()) c.evaluate.year = e.at("year").get<int>();
      if (e.contains("predictions_dir")) c.predictions_dir = resolve_path(e.at("predictions_dir"), base);
      if (e.contains("scores")) {
        for (const auto& [name, path] : e.at("scores").items()) c.evaluate.scores[name] = resolve_path(path, base);
      }
      if (e.contains("detection_fractions")) {
        c.evaluate.detection_fractions = e.at("detection_fractions").get<std::vector<double>>();
      }
      if (e.contains("critical_fractions")) {
        c.evaluate.critical_fractions = e.at("critical_fractions").get<std::vector<double>>();
      }
    }
    if (doc.contains("factors")) c.factor_bins = doc.at("factors").value("bins", c.factor_bins);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

RunConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& overrides) {
  RunConfig c;
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw IoError("cannot open config '" + config_file->string() + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config '" + config_file->string() + "' is not valid JSON: " + e.what());
    }
    c = config_from_json(doc, fs::absolute(*config_file).parent_path());
  }
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.threads) c.threads = *overrides.threads;
  if (overrides.out) c.out = *overrides.out;
  if (c.threads < 0) throw ConfigError("--threads must be >= 0");
  if (c.model_dir.empty()) c.model_dir = c.out;
  if (c.predictions_dir.empty()) c.predictions_dir = c.out;
  if (c.data.network.empty()) c.data.network = c.out / "network.csv";
  if (c.data.workorders.empty()) c.data.workorders = c.out / "workorders.csv";
  return c;
}

json RunConfig::to_json() const {
  json scores = json::object();
  for (const auto& [name, path] : evaluate.scores) scores[name] = path_string(path);
  return {{"seed", seed},
          {"threads", threads},
          {"out", path_string(out)},
          {"synth", synth.to_json()},
          {"data",
           {{"network", path_string(data.network)},
            {"workorders", path_string(data.workorders)},
            {"external", data.external ? json(path_string(*data.external)) : json(nullptr)},
            {"latest_year", data.latest_year ? json(*data.latest_year) : json(nullptr)},
            {"max_quarantine_fraction", data.max_quarantine_fraction}}},
          {"panel",
           {{"train_start", panel.train_start},
            {"train_end", panel.train_end},
            {"predict_start", panel.predict_start},
            {"predict_end", panel.predict_end}}},
          {"forest",
           {{"n_trees", forest.n_trees},
            {"candidate_features", forest.candidate_features},
            {"min_unique_deaths", forest.min_unique_deaths},
            {"max_depth", forest.max_depth}}},
          {"weibull", {{"censored", weibull_censored}}},
          {"predict", {{"model_dir", path_string(model_dir)}, {"level", interval_level}}},
          {"evaluate",
           {{"year", evaluate.year ? json(*evaluate.year) : json(nullptr)},
            {"predictions_dir", path_string(predictions_dir)},
            {"scores", scores},
            {"detection_fractions", evaluate.detection_fractions},
            {"critical_fractions", evaluate.critical_fractions}}},
          {"factors", {{"bins", factor_bins}}}};
}

double failure_rate(std::size_t failures, double length_km, int years) {
  if (!(length_km > 0.0) || years < 1) throw ConfigError("failure rate needs positive length and years");
  return static_cast<double>(failures) / (length_km / 100.0) / static_cast<double>(years);
}

// Shared helpers -------------------------------------------------------------------

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_provenance(const RunConfig& config, const std::string& command) {
  json doc = config.to_json();
  doc["command"] = command;
  write_json(config.out / ("resolved_config_" + command + ".json"), doc);
}

std::string fmt(double v, const char* format = "%.17g") {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, v);
  return buffer;
}

LoadedData load_reviewed(const RunConfig& config) {
  ReviewOptions options;
  options.latest_year = config.data.latest_year;
  std::optional<std::string> external;
  if (config.data.external) external = config.data.external->string();
  return load_and_review(config.data.network.string(), config.data.workorders.string(), external, options);
}

Panel panel_for(const LoadedData& data, const PanelConfig& panel) {
  return build_panel(data.pipes, data.work_orders, panel, data.has_ground_level, data.external_columns);
}

std::vector<TimeEvent> positive_responses(const Panel& panel) {
  std::vector<TimeEvent> responses;
  for (const auto& s : panel.samples) {
    if (s.time > 0.0) responses.push_back({s.time, s.event});
  }
  return responses;
}

void write_scores(const fs::path& path, std::vector<std::pair<std::string, double>> scores) {
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::ofstream out = open_out(path);
  write_score_file(scores, out);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

// synth -------------------------------------------------------------------------------

void cmd_synth(const RunConfig& config) {
  const SynthDataset dataset = synth_generate(config.synth, config.seed);
  ensure_dir(config.out);
  {
    std::ofstream out = open_out(config.out / "network.csv");
    write_network_csv(dataset.pipes, config.synth.include_ground_level, out);
  }
  {
    std::ofstream out = open_out(config.out / "workorders.csv");
    write_workorders_csv(dataset.work_orders, out);
  }
  {
    std::ofstream out = open_out(config.out / "ground_truth.csv");
    write_ground_truth_csv(dataset.truth, out);
  }
  write_provenance(config, "synth");
  std::cout << "wrote " << dataset.pipes.size() << " pipes and " << dataset.work_orders.size()
            << " work orders to " << config.out.string() << "\n";
}

// train -------------------------------------------------------------------------------

std::optional<double> cmd_train(const RunConfig& config) {
  config.panel.validate();
  ensure_dir(config.out);
  write_provenance(config, "train");

  const LoadedData data = load_reviewed(config);
  write_text(config.out / "quality_report.txt", data.report.to_text());
  write_json(config.out / "quality_report.json", data.report.to_json());
  const SourceCounts network = data.report.sources.at("network");
  const double quarantined = network.rows_in == 0 ? 1.0
                                                  : static_cast<double>(network.rows_quarantined) /
                                                        static_cast<double>(network.rows_in);
  if (data.pipes.empty() || quarantined > config.data.max_quarantine_fraction) {
    throw DataError("data quality review failed (" + std::to_string(network.rows_quarantined) + " of " +
                    std::to_string(network.rows_in) + " network rows quarantined); see " +
                    (config.out / "quality_report.txt").string());
  }

  const Panel panel = panel_for(data, config.panel);
  if (panel.samples.empty()) throw DataError("no pipe was laid before the end of the training window");

  ForestParams params;
  params.n_trees = config.forest.n_trees;
  params.master_seed = config.seed;
  params.tree.min_unique_deaths = config.forest.min_unique_deaths;
  params.tree.max_depth = config.forest.max_depth;
  params.tree.candidate_features =
      config.forest.candidate_features > 0
          ? config.forest.candidate_features
          : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(panel.schema.arity()))));

  const SurvivalForest forest = train(panel.samples, panel.schema, params, effective_threads(config.threads));
  {
    std::ofstream out = open_out(config.out / "model.json");
    save_forest(forest, out);
  }
  std::size_t events = 0;
  for (const auto& s : panel.samples) events += s.event ? 1 : 0;
  json features = json::array();
  for (const auto& f : panel.schema.features) features.push_back(f.name);
  write_json(config.out / "model_meta.json",
             {{"panel",
               {{"train_start", config.panel.train_start}, {"train_end", config.panel.train_end}}},
              {"features", features},
              {"candidate_features", params.tree.candidate_features},
              {"n_samples", panel.samples.size()},
              {"n_events", events}});

  json weibull;
  try {
    WeibullFitOptions options;
    options.censored = config.weibull_censored;
    const WeibullParams w = weibull_fit(positive_responses(panel), options);
    weibull = {{"status", "ok"}, {"shape", w.shape}, {"scale", w.scale}, {"censored", config.weibull_censored}};
  } catch (const WeibullFitError& e) {
    weibull = {{"status", "failed"}, {"message", e.what()}};
  } catch (const DataError& e) {
    weibull = {{"status", "failed"}, {"message", e.what()}};
  }
  write_json(config.out / "weibull.json", weibull);

  const OobError oob = oob_concordance_error(forest, panel.samples);
  const auto fractions = oob_fractions(forest);
  double mean_fraction = 0.0;
  for (double f : fractions) mean_fraction += f / static_cast<double>(fractions.size());
  write_json(config.out / "oob_report.json",
             {{"oob_concordance_error", oob.error ? json(*oob.error) : json(nullptr)},
              {"scored_samples", oob.scored},
              {"excluded_samples", oob.excluded},
              {"permissible_pairs", oob.permissible_pairs},
              {"mean_oob_fraction", mean_fraction}});

  std::cout << "trained " << forest.trees.size() << " trees on " << panel.samples.size() << " pipes ("
            << events << " failures)\n";
  if (oob.error) {
    std::cout << "OOB concordance error: " << fmt(*oob.error, "%.4f") << "\n";
  } else {
    std::cout << "OOB concordance error: undefined (no permissible pairs)\n";
  }
  if (weibull.at("status") == "ok") {
    std::cout << "Weibull baseline: shape " << fmt(weibull.at("shape").get<double>(), "%.4f") << ", scale "
              << fmt(weibull.at("scale").get<double>(), "%.2f") << "\n";
  } else {
    std::cout << "Weibull baseline failed: " << weibull.at("message").get<std::string>() << "\n";
  }
  return oob.error;
}

// predict -----------------------------------------------------------------------------

void cmd_predict(const RunConfig& config) {
  config.panel.validate();
  if (!(config.interval_level > 0.0 && config.interval_level < 1.0)) {
    throw ConfigError("predict.level must lie in (0, 1)");
  }
  SurvivalForest forest;
  {
    std::ifstream in(config.model_dir / "model.json");
    if (!in) throw IoError("cannot open model '" + (config.model_dir / "model.json").string() + "'");
    forest = load_forest(in);
  }
  const json meta = read_json(config.model_dir / "model_meta.json");
  if (meta.at("panel").at("train_start").get<int>() != config.panel.train_start ||
      meta.at("panel").at("train_end").get<int>() != config.panel.train_end) {
    throw ConfigError("panel training window differs from the one the model was trained on");
  }
  ensure_dir(config.out);
  ensure_dir(config.out / "scores");
  write_provenance(config, "predict");

  const LoadedData data = load_reviewed(config);
  Panel panel = panel_for(data, config.panel);
  conform_to_schema(panel, forest.schema);

  std::vector<int> years;
  std::vector<double> offsets;
  for (int y = config.panel.predict_start; y <= config.panel.predict_end; ++y) years.push_back(y);

  const std::size_t n = panel.samples.size();
  std::vector<std::vector<ProbabilityBand>> bands(n);
  const int threads = effective_threads(config.threads);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto& s = panel.samples[static_cast<std::size_t>(i)];
    const double age = panel.current_age[static_cast<std::size_t>(i)];
    std::vector<double> horizons;
    for (int y : years) horizons.push_back(age + (y - config.panel.train_end));
    bands[static_cast<std::size_t>(i)] =
        failure_probability_bands(forest, s.covariates, age, horizons, config.interval_level);
  }

  std::optional<WeibullParams> weibull;
  const json wj = read_json(config.model_dir / "weibull.json");
  if (wj.at("status") == "ok") weibull = WeibullParams{wj.at("shape").get<double>(), wj.at("scale").get<double>()};
  const auto prior = prior_failure_scores(data.work_orders, config.panel.train_end + 1);

  struct Row {
    std::string id;
    int year;
    double age, horizon;
    ProbabilityBand band;
  };
  std::vector<Row> rows;
  for (std::size_t y = 0; y < years.size(); ++y) {
    std::vector<std::pair<std::string, double>> rsf, wb, pr;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& id = panel.samples[i].subject_id;
      const double age = panel.current_age[i];
      const double horizon = age + (years[y] - config.panel.train_end);
      rows.push_back({id, years[y], age, horizon, bands[i][y]});
      rsf.emplace_back(id, bands[i][y].point);
      if (weibull) wb.emplace_back(id, weibull_failure_probability(*weibull, age, horizon));
      const auto it = prior.find(id);
      pr.emplace_back(id, it == prior.end() ? 0.0 : it->second);
    }
    const std::string suffix = "_" + std::to_string(years[y]) + ".csv";
    write_scores(config.out / "scores" / ("rsf" + suffix), std::move(rsf));
    if (weibull) write_scores(config.out / "scores" / ("weibull" + suffix), std::move(wb));
    write_scores(config.out / "scores" / ("prior" + suffix), std::move(pr));
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.year != b.year) return a.year < b.year;
    if (a.band.point != b.band.point) return a.band.point > b.band.point;
    return a.id < b.id;
  });
  std::ofstream out = open_out(config.out / "predictions.csv");
  out << "asset_id,year,current_age,horizon_age,probability,lower,upper\n";
  for (const auto& r : rows) {
    out << r.id << ',' << r.year << ',' << fmt(r.age, "%g") << ',' << fmt(r.horizon, "%g") << ','
        << fmt(r.band.point) << ',' << fmt(r.band.lower) << ',' << fmt(r.band.upper) << "\n";
  }
  if (!out) throw IoError("failed writing predictions");
  std::cout << "scored " << n << " pipes for years " << years.front() << "-" << years.back() << "\n";
}

// evaluate ----------------------------------------------------------------------------

void cmd_evaluate(const RunConfig& config) {
  config.panel.validate();
  const int year = config.evaluate.year.value_or(config.panel.predict_end);
  ensure_dir(config.out);
  write_provenance(config, "evaluate");

  const LoadedData data = load_reviewed(config);
  const Panel panel = panel_for(data, config.panel);
  std::set<std::string> failed;
  for (const auto& wo : data.work_orders) {
    if (wo.failure_year == year) failed.insert(wo.asset_id);
  }

  std::map<std::string, fs::path> sources = config.evaluate.scores;
  if (sources.empty()) {
    for (const char* method : {"rsf", "weibull", "prior"}) {
      const fs::path p = config.predictions_dir / "scores" / (std::string(method) + "_" + std::to_string(year) + ".csv");
      if (fs::exists(p)) sources[method] = p;
    }
    if (sources.empty()) throw DataError("no score files found for year " + std::to_string(year));
  }

  std::set<std::string> population;
  for (const auto& s : panel.samples) population.insert(s.subject_id);

  json methods = json::array();
  std::ostringstream summary;
  summary << "year " << year << ": " << panel.samples.size() << " pipes, " << failed.size() << " failed\n";
  summary << "method        auc_length  auc_pipe    top1%  top5%\n";
  for (const auto& [name, path] : sources) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open score file '" + path.string() + "'");
    const auto scores = read_score_file(in);
    std::vector<std::string> unknown;
    for (const auto& [id, score] : scores) {
      if (!population.count(id)) unknown.push_back(id);
    }
    if (!unknown.empty()) {
      std::string list;
      for (std::size_t i = 0; i < unknown.size() && i < 20; ++i) list += (i ? ", " : "") + unknown[i];
      if (unknown.size() > 20) list += ", ...";
      throw DataError("score file '" + path.string() + "' references " + std::to_string(unknown.size()) +
                      " unknown asset_id(s): " + list);
    }
    std::vector<ScoredPipe> scored;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < panel.samples.size(); ++i) {
      const auto& id = panel.samples[i].subject_id;
      const auto it = scores.find(id);
      if (it == scores.end()) {
        ++missing;
        continue;
      }
      const PipeRecord& pipe = data.pipes[panel.pipe_index[i]];
      scored.push_back({id, it->second, pipe.length_m, pipe.suburb, failed.count(id) > 0});
    }
    if (missing > 0) {
      throw DataError("score file '" + path.string() + "' lacks " + std::to_string(missing) + " pipe(s)");
    }
    EvaluationOptions options;
    options.detection_fractions = config.evaluate.detection_fractions;
    options.critical_fractions = config.evaluate.critical_fractions;
    const MethodMetrics m = evaluate_method(name, scored, options);
    methods.push_back(metrics_to_json(m));
    char line[160];
    std::snprintf(line, sizeof line, "%-12s  %.4f      %.4f      %-5zu  %-5zu\n", name.c_str(), m.roc_length.auc,
                  m.roc_pipe.auc, m.detection.size() > 0 ? m.detection[0].failures_detected : 0,
                  m.detection.size() > 1 ? m.detection[1].failures_detected : 0);
    summary << line;
  }
  write_json(config.out / ("metrics_" + std::to_string(year) + ".json"),
             {{"year", year},
              {"n_pipes", panel.samples.size()},
              {"n_failures", failed.size()},
              {"methods", methods}});
  write_text(config.out / ("metrics_" + std::to_string(year) + ".txt"), summary.str());
  std::cout << summary.str();
}

// factors -----------------------------------------------------------------------------

void cmd_factors(const RunConfig& config) {
  if (config.panel.train_start > config.panel.train_end) {
    throw ConfigError("training window must satisfy train_start <= train_end");
  }
  ensure_dir(config.out);
  write_provenance(config, "factors");
  const LoadedData data = load_reviewed(config);
  const Panel panel = panel_for(data, config.panel);
  const int years = config.panel.train_end - config.panel.train_start + 1;

  std::map<std::string, std::size_t> window_failures;
  for (const auto& wo : data.work_orders) {
    if (wo.failure_year >= config.panel.train_start && wo.failure_year <= config.panel.train_end) {
      ++window_failures[wo.asset_id];
    }
  }

  struct Band {
    std::size_t pipes = 0;
    double length_km = 0.0;
    std::size_t failures = 0;
  };
  std::map<std::string, std::map<std::string, Band>> bands;
  auto add = [&](const std::string& feature, const std::string& band, const PipeRecord& p) {
    Band& b = bands[feature][band];
    ++b.pipes;
    b.length_km += p.length_m / 1000.0;
    const auto it = window_failures.find(p.asset_id);
    b.failures += it == window_failures.end() ? 0 : it->second;
  };
  std::vector<double> lengths;
  for (std::size_t i : panel.pipe_index) lengths.push_back(data.pipes[i].length_m);
  const auto length_bins = discretize_quantiles(lengths, 5);
  std::vector<double> grounds;
  if (data.has_ground_level) {
    for (std::size_t i : panel.pipe_index) grounds.push_back(*data.pipes[i].ground_level_m);
  }
  const auto ground_bins = discretize_quantiles(grounds, 5);
  for (std::size_t k = 0; k < panel.pipe_index.size(); ++k) {
    const PipeRecord& p = data.pipes[panel.pipe_index[k]];
    add(feature::material, p.material, p);
    add(feature::diameter_band, diameter_band(p.diameter_mm), p);
    add(feature::laid_band, laid_year_band(p.laid_year), p);
    add("suburb", p.suburb, p);
    add("length_quintile", "Q" + std::to_string(length_bins[k] + 1), p);
    if (data.has_ground_level) add("ground_level_quintile", "Q" + std::to_string(ground_bins[k] + 1), p);
  }

  json rates = json::object();
  std::ostringstream text;
  text << "Failure rates (failures per 100 km per year), years " << config.panel.train_start << "-"
       << config.panel.train_end << "\n";
  for (const auto& [feature_name, by_band] : bands) {
    std::vector<std::pair<std::string, Band>> sorted(by_band.begin(), by_band.end());
    std::vector<double> rate_of;
    std::stable_sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
      return failure_rate(a.second.failures, a.second.length_km, years) >
             failure_rate(b.second.failures, b.second.length_km, years);
    });
    json rows = json::array();
    text << "\n" << feature_name << "\n";
    for (const auto& [band, b] : sorted) {
      const double rate = failure_rate(b.failures, b.length_km, years);
      rows.push_back({{"band", band}, {"pipes", b.pipes}, {"length_km", b.length_km}, {"failures", b.failures},
                      {"rate", rate}});
      text << "  " << band << ": " << fmt(rate, "%.3f") << " (" << b.failures << " failures, "
           << fmt(b.length_km, "%.1f") << " km)\n";
    }
    rates[feature_name] = rows;
  }

  std::vector<int> failure;
  for (const auto& s : panel.samples) failure.push_back(s.event ? 1 : 0);
  std::vector<std::pair<std::string, double>> mi;
  for (std::size_t f = 0; f < panel.schema.arity(); ++f) {
    const FeatureSpec& spec = panel.schema.features[f];
    double bits = 0.0;
    if (spec.kind == FeatureKind::categorical) {
      std::vector<int> codes;
      for (const auto& s : panel.samples) codes.push_back(static_cast<int>(s.covariates[f]));
      bits = mutual_information(codes, failure);
    } else {
      std::vector<double> column;
      for (const auto& s : panel.samples) column.push_back(s.covariates[f]);
      bits = mutual_information(column, failure, config.factor_bins);
    }
    mi.emplace_back(spec.name, bits);
  }
  std::stable_sort(mi.begin(), mi.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  json mi_json = json::array();
  text << "\nMutual information with in-window failure (bits)\n";
  for (const auto& [name, bits] : mi) {
    mi_json.push_back({{"feature", name}, {"bits", bits}});
    text << "  " << name << ": " << fmt(bits, "%.5f") << "\n";
  }
  write_json(config.out / "factors.json",
             {{"train_start", config.panel.train_start},
              {"train_end", config.panel.train_end},
              {"failure_rates", rates},
              {"mutual_information", mi_json}});
  write_text(config.out / "factors.txt", text.str());
  std::cout << text.str();
}

// Entry point --------------------------------------------------------------------------

int run(int argc, const char* const* argv) {
  CLI::App app{"Random survival forest failure prediction for pipe networks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  auto* config_opt = app.add_option("--config", config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "master random seed (overrides config)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads, 0 = all cores (overrides config)");
  auto* out_opt = app.add_option("--out", out, "output directory (overrides config)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic network with ground truth");
  auto* train_cmd = app.add_subcommand("train", "review data, train the forest and Weibull baseline");
  auto* predict = app.add_subcommand("predict", "score pipes for the prediction years");
  auto* evaluate = app.add_subcommand("evaluate", "ROC/AUC, detection and suburb metrics of score files");
  auto* factors = app.add_subcommand("factors", "failure rates by band and mutual information");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigFailure;
  }

  try {
    Overrides overrides;
    if (*seed_opt) overrides.seed = seed;
    if (*threads_opt) overrides.threads = threads;
    if (*out_opt) overrides.out = fs::path(out);
    std::optional<fs::path> config_file;
    if (*config_opt) config_file = fs::path(config_path);
    const RunConfig config = resolve_config(config_file, overrides);

    if (*synth) cmd_synth(config);
    if (*train_cmd) cmd_train(config);
    if (*predict) cmd_predict(config);
    if (*evaluate) cmd_evaluate(config);
    if (*factors) cmd_factors(config);
    return kSuccess;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const WeibullFitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
}

}  // namespace pipesurv::cli
