#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pipesurv/errors.hpp"
#include "pipesurv/survival_forest.hpp"

using namespace pipesurv;

namespace {

struct Dataset {
  CovariateSchema schema;
  std::vector<SurvivalSample> samples;
};

// Exponential failure times whose rate rises with x0 and depends on a
// three-level category; x1 is noise.
Dataset make_data(std::size_t n, std::uint64_t seed) {
  Dataset d;
  d.schema.features = {{"x0", FeatureKind::numeric, {}},
                       {"x1", FeatureKind::numeric, {}},
                       {"c", FeatureKind::categorical, {"a", "b", "c"}}};
  RandomStream rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.uniform(), x1 = rng.uniform();
    const auto c = static_cast<double>(rng.bounded(3));
    const double rate = 0.05 * std::exp(2.0 * x0 + (c == 2.0 ? 1.0 : 0.0));
    const double t = std::ceil(-std::log(rng.uniform_open()) / rate);
    const double censor = 1.0 + static_cast<double>(rng.bounded(40));
    d.samples.push_back({std::to_string(i), std::min(t, censor), t <= censor, {x0, x1, c}});
  }
  return d;
}

ForestParams params(std::size_t trees, std::uint64_t seed) {
  ForestParams p;
  p.n_trees = trees;
  p.master_seed = seed;
  p.tree.candidate_features = 2;
  p.tree.min_unique_deaths = 3;
  return p;
}

}  // namespace

TEST_CASE("parallel training is identical to the serial reference") {
  const Dataset d = make_data(400, 1);
  const auto p = params(24, 7);
  const SurvivalForest reference = train_serial(d.samples, d.schema, p);
  for (int threads : {1, 2, 3, 8}) CHECK(train(d.samples, d.schema, p, threads) == reference);
  CHECK_FALSE(train(d.samples, d.schema, params(24, 8), 2) == reference);
}

TEST_CASE("ensemble survival is the mean of the tree curves on the grid") {
  const Dataset d = make_data(300, 2);
  const auto forest = train(d.samples, d.schema, params(15, 3), 2);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& x = d.samples[i].covariates;
    const auto s = predict_survival(forest, x);
    const auto h = predict_chf(forest, x);
    CHECK(s.is_survival_curve());
    CHECK(h.is_cumulative_hazard());
    for (double t : forest.time_grid) {
      double sum_s = 0.0, sum_h = 0.0;
      for (const auto& tree : forest.trees) {
        sum_s += tree.predict_leaf(x).km_curve(t);
        sum_h += tree.predict_leaf(x).chf_curve(t);
      }
      CHECK(s(t) == sum_s / static_cast<double>(forest.trees.size()));
      CHECK(h(t) == sum_h / static_cast<double>(forest.trees.size()));
    }
  }
}

TEST_CASE("a one-tree forest reproduces its leaf") {
  const Dataset d = make_data(200, 3);
  const auto forest = train(d.samples, d.schema, params(1, 4), 1);
  const auto& x = d.samples[0].covariates;
  const auto& leaf = forest.trees[0].predict_leaf(x);
  const auto s = predict_survival(forest, x);
  for (double t : forest.time_grid) CHECK(s(t) == leaf.km_curve(t));
  const auto interval = predict_interval(forest, x, 0.9);
  CHECK(interval.lower == interval.median);
  CHECK(interval.upper == interval.median);
  CHECK(interval.median == s);
}

TEST_CASE("conditional failure probability") {
  const StepFunction s({2.0, 5.0}, {0.8, 0.4}, 1.0);
  CHECK(conditional_failure_probability(s, 3.0, 3.0) == 0.0);
  CHECK(conditional_failure_probability(s, 3.0, 6.0) == doctest::Approx(0.5));
  CHECK(conditional_failure_probability(s, 0.0, 6.0) == doctest::Approx(0.6));
  const StepFunction dead({1.0}, {0.0}, 1.0);
  CHECK(conditional_failure_probability(dead, 2.0, 4.0) == 1.0);
  CHECK_THROWS_AS(conditional_failure_probability(s, 4.0, 3.0), ConfigError);
  CHECK_THROWS_AS(conditional_failure_probability(s, -1.0, 3.0), ConfigError);
}

TEST_CASE("intervals are ordered and collapse when trees agree") {
  const Dataset d = make_data(300, 4);
  const auto forest = train(d.samples, d.schema, params(30, 5), 2);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& x = d.samples[i].covariates;
    const auto interval = predict_interval(forest, x, 0.8);
    for (double t : forest.time_grid) {
      CHECK(interval.lower(t) <= interval.median(t));
      CHECK(interval.median(t) <= interval.upper(t));
    }
    for (double age : {0.0, 3.0, 10.0}) {
      const auto band = failure_probability_band(forest, x, age, age + 5.0, 0.9);
      CHECK(band.lower <= band.point);
      CHECK(band.point <= band.upper);
      CHECK(band.lower >= 0.0);
      CHECK(band.upper <= 1.0);
      CHECK(band.point == failure_probability(forest, x, age, age + 5.0));
    }
  }

  // Identical rows make every bootstrap sample, and so every tree, the same.
  CovariateSchema schema{{{"x", FeatureKind::numeric, {}}}};
  std::vector<SurvivalSample> same(50, SurvivalSample{"", 4.0, true, {1.0}});
  auto one_feature = params(10, 6);
  one_feature.tree.candidate_features = 1;
  const auto flat = train(same, schema, one_feature, 1);
  const auto interval = predict_interval(flat, std::vector<double>{1.0}, 0.9);
  CHECK(interval.lower == interval.upper);
  CHECK_THROWS_AS(predict_interval(flat, std::vector<double>{1.0}, 1.0), ConfigError);
}

TEST_CASE("sorted_quantile interpolates between order statistics") {
  const std::vector<double> v{1.0, 2.0, 4.0, 8.0};
  CHECK(sorted_quantile(v, 0.0) == 1.0);
  CHECK(sorted_quantile(v, 1.0) == 8.0);
  CHECK(sorted_quantile(v, 0.5) == 3.0);
  CHECK(sorted_quantile(std::vector<double>{5.0}, 0.3) == 5.0);
}

TEST_CASE("pooled responses carry unit total weight") {
  const Dataset d = make_data(200, 5);
  const auto forest = train(d.samples, d.schema, params(12, 6), 2);
  const auto pooled = pooled_responses(forest, d.samples[3].covariates);
  double total = 0.0;
  for (const auto& r : pooled) total += r.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("out-of-bag fraction is near exp(-1)") {
  const Dataset d = make_data(1000, 6);
  const auto forest = train(d.samples, d.schema, params(100, 9), 0);
  const auto fractions = oob_fractions(forest);
  REQUIRE(fractions.size() == 100);
  double mean = 0.0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    std::vector<bool> drawn(d.samples.size(), false);
    for (std::size_t r : forest.inbag[k]) drawn[r] = true;
    const auto oob = std::count(drawn.begin(), drawn.end(), false);
    CHECK(fractions[k] == static_cast<double>(oob) / 1000.0);
    mean += fractions[k] / 100.0;
  }
  CHECK(mean >= 0.35);
  CHECK(mean <= 0.38);
}

TEST_CASE("out-of-bag concordance error matches pair enumeration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset d = make_data(10 + seed * 2, 100 + seed);
    auto p = params(8, seed);
    p.tree.min_unique_deaths = 1;
    const auto forest = train(d.samples, d.schema, p, 2);
    const auto expected = oracle::oob_concordance(forest, d.samples);
    const auto oob = oob_concordance_error(forest, d.samples);
    CHECK(oob.scored == expected.scored);
    CHECK(oob.scored + oob.excluded == d.samples.size());
    CHECK(oob.permissible_pairs == expected.pairs);
    CHECK(oob.error == expected.error);
  }
}

TEST_CASE("the forest beats chance out of bag on a signal") {
  const Dataset d = make_data(800, 7);
  const auto forest = train(d.samples, d.schema, params(60, 10), 0);
  const auto oob = oob_concordance_error(forest, d.samples);
  REQUIRE(oob.error.has_value());
  CHECK(*oob.error < 0.4);
}

TEST_CASE("serialization round trip") {
  const Dataset d = make_data(250, 8);
  auto forest = train(d.samples, d.schema, params(10, 11), 2);
  std::stringstream buffer;
  save_forest(forest, buffer);
  const auto loaded = load_forest(buffer);
  CHECK(loaded == forest);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& x = d.samples[i].covariates;
    CHECK(predict_survival(loaded, x) == predict_survival(forest, x));
  }
  std::stringstream broken("{\"format\": 1}");
  CHECK_THROWS(load_forest(broken));
}

TEST_CASE("input validation") {
  const Dataset d = make_data(20, 9);
  auto p = params(0, 1);
  CHECK_THROWS_AS(train(d.samples, d.schema, p), ConfigError);
  CHECK_THROWS_AS(train(std::vector<SurvivalSample>{}, d.schema, params(2, 1)), DataError);
  const auto forest = train(d.samples, d.schema, params(2, 1), 1);
  CHECK_THROWS_AS(predict_survival(forest, std::vector<double>{1.0}), DataError);
}
