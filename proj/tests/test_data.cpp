#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "pipesurv/data.hpp"
#include "pipesurv/errors.hpp"
#include "pipesurv/random.hpp"

using namespace pipesurv;

namespace {

PipeRecord pipe(const std::string& id, int laid, const std::string& material = "CI") {
  return {id, laid, material, 150.0, 100.0, "north", std::nullopt, {}};
}

const PanelConfig kWindow{2005, 2010, 2011, 2012};

const SurvivalSample& sample_of(const Panel& panel, std::span<const PipeRecord> pipes,
                                const std::string& id) {
  for (std::size_t i = 0; i < panel.samples.size(); ++i) {
    if (pipes[panel.pipe_index[i]].asset_id == id) return panel.samples[i];
  }
  throw std::runtime_error("no sample for " + id);
}

std::size_t feature_index(const Panel& panel, const std::string& name) {
  for (std::size_t f = 0; f < panel.schema.arity(); ++f) {
    if (panel.schema.features[f].name == name) return f;
  }
  throw std::runtime_error("no feature " + name);
}

LoadedData review(const std::string& network, const std::string& orders,
                  const ReviewOptions& options = {}) {
  std::istringstream n(network), w(orders);
  return load_and_review(n, w, nullptr, options);
}

const std::string kNetworkHeader = "asset_id,laid_year,material,diameter_mm,length_m,suburb\n";
const std::string kOrdersHeader = "work_order_id,asset_id,failure_year,failure_type\n";

}  // namespace

TEST_CASE("panel rows follow the window rules") {
  const std::vector<PipeRecord> pipes{pipe("a", 1990), pipe("b", 1990), pipe("c", 2012),
                                      pipe("d", 2010), pipe("e", 2008)};
  const std::vector<WorkOrder> orders{{"w1", "a", 2007, "burst"},
                                      {"w2", "a", 2009, "leak"},
                                      {"w3", "a", 2003, "burst"},
                                      {"w4", "e", 2009, "burst"}};
  const Panel panel = build_panel(pipes, orders, kWindow, false);

  const auto& a = sample_of(panel, pipes, "a");
  CHECK(a.time == 17.0);
  CHECK(a.event);
  CHECK(a.entry == 14.0);
  CHECK(a.covariates[feature_index(panel, feature::previous_failures)] == 1.0);
  CHECK(a.covariates[feature_index(panel, feature::age_at_start)] == 15.0);

  const auto& b = sample_of(panel, pipes, "b");
  CHECK(b.time == 20.0);
  CHECK_FALSE(b.event);

  // Laid inside the window: observed from installation.
  const auto& e = sample_of(panel, pipes, "e");
  CHECK(e.time == 1.0);
  CHECK(e.event);
  CHECK(e.entry == 0.0);

  CHECK(panel.samples.size() == 3);
  CHECK_THROWS(sample_of(panel, pipes, "c"));
  CHECK_THROWS(sample_of(panel, pipes, "d"));
  for (const auto& s : panel.samples) {
    CHECK(s.time > 0.0);
    CHECK(s.time == std::floor(s.time));
    CHECK(s.time <= 2010 - 1990);
  }
}

TEST_CASE("work orders after the training window cannot change the panel") {
  RandomStream rng(41);
  std::vector<PipeRecord> pipes;
  std::vector<WorkOrder> orders;
  for (int i = 0; i < 300; ++i) {
    pipes.push_back(pipe("p" + std::to_string(i), 1940 + static_cast<int>(rng.bounded(65)),
                         rng.uniform() < 0.5 ? "AC" : "PVC"));
    for (int k = 0; k < 3; ++k) {
      const int year = 1995 + static_cast<int>(rng.bounded(16));
      if (year >= pipes.back().laid_year) {
        orders.push_back({"w" + std::to_string(orders.size()), pipes.back().asset_id, year, "burst"});
      }
    }
  }
  const Panel before = build_panel(pipes, orders, kWindow, false);
  auto leaked = orders;
  for (int i = 0; i < 300; i += 2) leaked.push_back({"x" + std::to_string(i), "p" + std::to_string(i), 2011, "leak"});
  const Panel after = build_panel(pipes, leaked, kWindow, false);
  REQUIRE(before.samples.size() == after.samples.size());
  for (std::size_t i = 0; i < before.samples.size(); ++i) {
    CHECK(before.samples[i].time == after.samples[i].time);
    CHECK(before.samples[i].event == after.samples[i].event);
    CHECK(before.samples[i].covariates == after.samples[i].covariates);
  }
}

TEST_CASE("panel window validation") {
  CHECK_THROWS_AS((PanelConfig{2005, 2010, 2010, 2012}.validate()), ConfigError);
  CHECK_THROWS_AS((PanelConfig{2011, 2010, 2012, 2013}.validate()), ConfigError);
  CHECK_NOTHROW(kWindow.validate());
}

TEST_CASE("bands") {
  CHECK(laid_year_band(1967) == laid_year_band(1960));
  CHECK(laid_year_band(1967) != laid_year_band(1970));
  CHECK(diameter_band(100.0) == diameter_band(80.0));
  CHECK(diameter_band(101.0) != diameter_band(100.0));
}

TEST_CASE("mutual information hand values") {
  // Counts 3,1 / 1,3 out of 8.
  const std::vector<int> a{0, 0, 0, 0, 1, 1, 1, 1};
  const std::vector<int> b{0, 0, 0, 1, 0, 1, 1, 1};
  const double expected = 0.75 * std::log2(1.5) + 0.25 * std::log2(0.5);
  CHECK(mutual_information(a, b) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(mutual_information(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mutual_information(a, std::vector<int>(8, 0)) == 0.0);

  RandomStream rng(42);
  std::vector<int> x(10000), y(10000);
  for (auto& v : x) v = static_cast<int>(rng.bounded(2));
  for (auto& v : y) v = static_cast<int>(rng.bounded(2));
  CHECK(mutual_information(x, y) < 0.01);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> u(200), w(200);
    for (auto& v : u) v = static_cast<int>(rng.bounded(4));
    for (auto& v : w) v = static_cast<int>(rng.bounded(3));
    const double mi = mutual_information(u, w);
    CHECK(mi >= 0.0);
    CHECK(mi == doctest::Approx(mutual_information(w, u)).epsilon(1e-14));
  }
}

TEST_CASE("quantile binning") {
  std::vector<double> values;
  for (int i = 1; i <= 100; ++i) values.push_back(i);
  const auto codes = discretize_quantiles(values, 10);
  std::map<int, int> counts;
  for (int c : codes) ++counts[c];
  CHECK(counts.size() == 10);
  for (const auto& [code, count] : counts) CHECK(count == 10);
  CHECK(std::is_sorted(codes.begin(), codes.end()));
  const auto constant = discretize_quantiles(std::vector<double>(20, 3.0), 10);
  CHECK(std::all_of(constant.begin(), constant.end(), [&](int c) { return c == constant[0]; }));
}

TEST_CASE("quality review") {
  SUBCASE("clean input") {
    const auto data = review(kNetworkHeader + "a,1990,CI,150,100,north\n",
                             kOrdersHeader + "w1,a,2001,burst\n");
    CHECK(data.report.clean());
    CHECK(data.pipes.size() == 1);
    CHECK(data.work_orders.size() == 1);
  }
  SUBCASE("empty material is incomplete and quarantined") {
    const auto data = review(kNetworkHeader + "a,1990,,150,100,north\nb,1991,CI,150,100,north\n",
                             kOrdersHeader);
    CHECK(data.report.completeness.at("network.material") == 1);
    CHECK(data.pipes.size() == 1);
    REQUIRE(data.report.quarantined.size() == 1);
    CHECK(data.report.quarantined[0].line == 2);
    const auto& counts = data.report.sources.at("network");
    CHECK(counts.rows_in == 2);
    CHECK(counts.rows_in == counts.rows_kept + counts.rows_quarantined);
  }
  SUBCASE("work order for an unknown asset is a consistency issue") {
    const auto data = review(kNetworkHeader + "a,1990,CI,150,100,north\n",
                             kOrdersHeader + "w1,zz,2001,burst\n");
    REQUIRE(data.report.consistency.size() == 1);
    CHECK(data.report.consistency[0].rule == "unmatched_asset");
    CHECK_FALSE(data.report.clean());
  }
  SUBCASE("failure before installation is invalid") {
    const auto data = review(kNetworkHeader + "a,1990,CI,150,100,north\n",
                             kOrdersHeader + "w1,a,1980,burst\n");
    CHECK(data.report.validity.at("workorders.failure_year.before_laid_year") == 1);
    CHECK(data.work_orders.empty());
  }
  SUBCASE("bad values") {
    const auto data = review(kNetworkHeader + "a,19x0,CI,150,100,north\nb,1990,CI,-5,100,north\n",
                             kOrdersHeader + "w1,b,2001,crack\n",
                             ReviewOptions{2020});
    CHECK(data.report.validity.at("network.laid_year.not_integer") == 1);
    CHECK(data.report.validity.at("network.diameter_mm.nonpositive") == 1);
    CHECK(data.pipes.empty());
  }
  SUBCASE("missing mandatory column names it") {
    try {
      review("asset_id,laid_year,material,length_m,suburb\n", kOrdersHeader);
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("diameter_mm") != std::string::npos);
    }
  }
}

TEST_CASE("CSV field splitting") {
  CHECK(split_csv_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
  CHECK(split_csv_line("\"x\"\"y\",z\r") == std::vector<std::string>{"x\"y", "z"});
  CHECK(split_csv_line("a,,") == std::vector<std::string>{"a", "", ""});
}

TEST_CASE("synthetic data is deterministic and reviews clean") {
  SynthConfig config;
  config.n_pipes = 2000;
  auto render = [&](std::uint64_t seed) {
    const auto data = synth_generate(config, seed);
    std::ostringstream out;
    write_network_csv(data.pipes, config.include_ground_level, out);
    write_workorders_csv(data.work_orders, out);
    write_ground_truth_csv(data.truth, out);
    return out.str();
  };
  CHECK(render(5) == render(5));
  CHECK(render(5) != render(6));

  const auto data = synth_generate(config, 5);
  std::ostringstream network, orders;
  write_network_csv(data.pipes, true, network);
  write_workorders_csv(data.work_orders, orders);
  const auto loaded = review(network.str(), orders.str());
  CHECK(loaded.report.clean());
  CHECK(loaded.pipes.size() == config.n_pipes);
  CHECK(loaded.work_orders.size() == data.work_orders.size());

  std::ostringstream truth;
  write_ground_truth_csv(data.truth, truth);
  std::istringstream back(truth.str());
  const auto read = read_ground_truth_csv(back);
  REQUIRE(read.size() == data.truth.size());
  CHECK(read[0].shape == data.truth[0].shape);
  CHECK(read[0].scale == data.truth[0].scale);
}

TEST_CASE("synthetic configuration errors") {
  SynthConfig config;
  config.n_pipes = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  CHECK_THROWS_AS(synth_generate(config, 1), ConfigError);
  config = SynthConfig{};
  config.materials.clear();
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = SynthConfig{};
  CHECK(SynthConfig::from_json(config.to_json()).to_json() == config.to_json());
}

TEST_CASE("doubling a material hazard puts it on top of the failure rates") {
  SynthConfig config;
  config.materials = {{"AC", 0.25, 2.0}, {"CI", 0.25, 1.0}, {"DI", 0.25, 1.0}, {"PVC", 0.25, 1.0}};
  config.small_diameter_multiplier = 1.0;
  const auto data = synth_generate(config, 7);
  std::map<std::string, double> failures, pipes;
  std::map<std::string, std::string> material;
  for (const auto& p : data.pipes) {
    material[p.asset_id] = p.material;
    pipes[p.material] += 1.0;
  }
  for (const auto& w : data.work_orders) failures[material[w.asset_id]] += 1.0;
  const double ac = failures["AC"] / pipes["AC"];
  for (const char* other : {"CI", "DI", "PVC"}) {
    const double rate = failures[other] / pipes[other];
    CHECK(ac > 1.5 * rate);
    CHECK(ac < 2.5 * rate);
  }
}

TEST_CASE("first-failure ages follow the generating Weibull") {
  SynthConfig config;
  config.n_pipes = 10000;
  config.materials = {{"CI", 1.0, 1.0}};
  config.small_diameter_multiplier = 1.0;
  config.ground_level_effect = 0.0;
  config.history_start = config.first_laid_year;
  const auto data = synth_generate(config, 8);

  std::map<std::string, int> first;
  for (const auto& w : data.work_orders) {
    auto [it, fresh] = first.emplace(w.asset_id, w.failure_year);
    if (!fresh) it->second = std::min(it->second, w.failure_year);
  }
  // Integer age at failure; a pipe without one is known to survive its last
  // observed year, so it stays at risk through that age only.
  std::vector<TimeEvent> r;
  for (const auto& p : data.pipes) {
    const auto it = first.find(p.asset_id);
    if (it != first.end()) {
      r.push_back({static_cast<double>(it->second - p.laid_year), true});
    } else {
      r.push_back({config.observation_end - p.laid_year + 0.5, false});
    }
  }
  const RiskTable table = build_risk_table(r);
  const StepFunction km = kaplan_meier(table);
  const GroundTruth& truth = data.truth[0];
  for (double age : {5.0, 10.0, 20.0, 40.0, 60.0}) {
    double greenwood = 0.0;
    for (std::size_t j = 0; j < table.size() && table.event_times[j] <= age; ++j) {
      const double y = table.at_risk[j], d = table.deaths[j];
      greenwood += d / (y * (y - d));
    }
    const double s = km(age);
    const double se = s * std::sqrt(greenwood);
    // The integer age exceeds `age` exactly when the continuous age reaches age + 1.
    CHECK(std::fabs(s - truth.survival(age + 1.0)) < 3.0 * se + 1e-3);
  }
}
