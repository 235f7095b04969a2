#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pipesurv/errors.hpp"
#include "pipesurv/survival_tree.hpp"

using namespace pipesurv;

namespace {

struct Dataset {
  CovariateSchema schema;
  std::vector<SurvivalSample> samples;
};

Dataset random_dataset(RandomStream& rng, std::size_t n, std::size_t p) {
  Dataset d;
  for (std::size_t f = 0; f < p; ++f) {
    FeatureSpec spec{"f" + std::to_string(f), FeatureKind::numeric, {}};
    if (rng.uniform() < 0.4) {
      spec.kind = FeatureKind::categorical;
      const std::size_t levels = 2 + rng.bounded(3);
      for (std::size_t l = 0; l < levels; ++l) spec.levels.push_back("L" + std::to_string(l));
    }
    d.schema.features.push_back(spec);
  }
  for (std::size_t i = 0; i < n; ++i) {
    SurvivalSample s;
    s.subject_id = std::to_string(i);
    s.time = 1.0 + static_cast<double>(rng.bounded(8));
    s.event = rng.uniform() < 0.75;
    for (const auto& spec : d.schema.features) {
      const auto range = spec.kind == FeatureKind::categorical ? spec.levels.size() : 6;
      s.covariates.push_back(static_cast<double>(rng.bounded(range)));
    }
    d.samples.push_back(s);
  }
  return d;
}

int unique_event_times(const std::vector<TimeEvent>& r) {
  return static_cast<int>(oracle::event_times(r).size());
}

// Training rows reaching each node.
std::vector<std::vector<std::size_t>> rows_per_node(const SurvivalTree& tree,
                                                    const std::vector<SurvivalSample>& samples) {
  std::vector<std::vector<std::size_t>> rows(tree.nodes().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::size_t node = 0;
    rows[node].push_back(i);
    while (!tree.nodes()[node].is_leaf()) {
      const auto& n = tree.nodes()[node];
      node = static_cast<std::size_t>(n.rule.route(samples[i].covariates[n.rule.feature]) == Branch::left
                                          ? n.left
                                          : n.right);
      rows[node].push_back(i);
    }
  }
  return rows;
}

}  // namespace

TEST_CASE("root split attains the brute-force maximum under the tie-break") {
  RandomStream rng(21);
  int split_cases = 0, leaf_cases = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.bounded(11);
    const std::size_t p = 1 + rng.bounded(3);
    const Dataset d = random_dataset(rng, n, p);
    const int d0 = 1 + static_cast<int>(rng.bounded(2));
    TreeParams params;
    params.candidate_features = p;
    params.min_unique_deaths = d0;
    params.seed = static_cast<std::uint64_t>(rep);
    const SurvivalTree tree = grow_tree(d.samples, d.schema, params);
    const auto expected = oracle::best_split(d.schema, d.samples, d0);
    const auto& root = tree.nodes()[0];
    if (!expected) {
      CHECK(root.is_leaf());
      ++leaf_cases;
      continue;
    }
    ++split_cases;
    REQUIRE_FALSE(root.is_leaf());
    CHECK(oracle::same_rule(root.rule, *expected));
  }
  CHECK(split_cases > 100);
  CHECK(leaf_cases > 0);
}

TEST_CASE("leaves partition the training rows and every split is admissible") {
  RandomStream rng(22);
  for (int rep = 0; rep < 100; ++rep) {
    const Dataset d = random_dataset(rng, 20 + rng.bounded(200), 1 + rng.bounded(4));
    TreeParams params;
    params.candidate_features = 1 + rng.bounded(d.schema.arity());
    params.min_unique_deaths = 1 + static_cast<int>(rng.bounded(3));
    params.seed = static_cast<std::uint64_t>(rep);
    const SurvivalTree tree = grow_tree(d.samples, d.schema, params);
    const auto rows = rows_per_node(tree, d.samples);

    std::size_t in_leaves = 0;
    for (std::size_t k = 0; k < tree.nodes().size(); ++k) {
      const auto& node = tree.nodes()[k];
      if (node.is_leaf()) {
        const LeafNode& leaf = tree.leaves()[static_cast<std::size_t>(node.leaf)];
        CHECK(leaf.responses.size() == rows[k].size());
        in_leaves += rows[k].size();
        std::vector<TimeEvent> r;
        for (std::size_t i : rows[k]) r.push_back({d.samples[i].time, d.samples[i].event});
        CHECK(leaf.km_curve == kaplan_meier(build_risk_table(std::span<const TimeEvent>(r))));
        continue;
      }
      for (auto child : {node.left, node.right}) {
        std::vector<TimeEvent> r;
        for (std::size_t i : rows[static_cast<std::size_t>(child)]) {
          r.push_back({d.samples[i].time, d.samples[i].event});
        }
        CHECK(unique_event_times(r) >= params.min_unique_deaths);
      }
    }
    CHECK(in_leaves == d.samples.size());
    CHECK(tree.leaves().size() * 2 == tree.nodes().size() + 1);
  }
}

TEST_CASE("growth is deterministic for a fixed seed") {
  RandomStream rng(23);
  const Dataset d = random_dataset(rng, 300, 4);
  TreeParams params;
  params.candidate_features = 2;
  params.seed = 99;
  CHECK(grow_tree(d.samples, d.schema, params) == grow_tree(d.samples, d.schema, params));
}

TEST_CASE("a separating feature is found at the root") {
  CovariateSchema schema{{{"noise", FeatureKind::numeric, {}}, {"group", FeatureKind::numeric, {}}}};
  std::vector<SurvivalSample> samples;
  for (int i = 0; i < 40; ++i) {
    const bool early = i % 2 == 0;
    samples.push_back({std::to_string(i), early ? 1.0 + i % 7 : 20.0 + i % 9, true,
                       {static_cast<double>(i % 5), early ? 0.0 : 1.0}});
  }
  TreeParams params;
  params.candidate_features = 2;
  const auto tree = grow_tree(samples, schema, params);
  REQUIRE_FALSE(tree.nodes()[0].is_leaf());
  CHECK(tree.nodes()[0].rule.feature == 1);
  CHECK(tree.nodes()[0].rule.threshold == 0.5);
}

TEST_CASE("single-leaf trees") {
  CovariateSchema schema{{{"x", FeatureKind::numeric, {}}}};
  SUBCASE("no events") {
    std::vector<SurvivalSample> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({"", 1.0 + i, false, {double(i)}});
    const auto tree = grow_tree(samples, schema, TreeParams{});
    CHECK(tree.nodes().size() == 1);
    CHECK(tree.leaves()[0].km_curve(100.0) == 1.0);
  }
  SUBCASE("constant covariate") {
    std::vector<SurvivalSample> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({"", 1.0 + i, true, {3.0}});
    CHECK(grow_tree(samples, schema, TreeParams{}).nodes().size() == 1);
  }
  SUBCASE("fewer distinct event times than d0") {
    std::vector<SurvivalSample> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({"", 1.0 + i % 2, true, {double(i)}});
    TreeParams params;
    params.min_unique_deaths = 3;
    CHECK(grow_tree(samples, schema, params).nodes().size() == 1);
  }
}

TEST_CASE("max depth bounds the tree") {
  RandomStream rng(24);
  const Dataset d = random_dataset(rng, 400, 3);
  TreeParams params;
  params.candidate_features = 3;
  params.min_unique_deaths = 1;
  params.max_depth = 2;
  CHECK(grow_tree(d.samples, d.schema, params).depth() <= 2);
}

TEST_CASE("unseen categorical levels follow the larger training daughter") {
  CovariateSchema schema{{{"m", FeatureKind::categorical, {"a", "b", "c", "d"}}}};
  std::vector<SurvivalSample> samples;
  // Level 0 fails early; levels 1 and 2 fail late and outnumber it. Level 3 is
  // never seen.
  for (int i = 0; i < 30; ++i) {
    const int level = i % 3;
    samples.push_back({"", level == 0 ? 1.0 + i % 4 : 10.0 + i % 6, true, {double(level)}});
  }
  TreeParams params;
  params.min_unique_deaths = 2;
  const auto tree = grow_tree(samples, schema, params);
  const auto& rule = tree.nodes()[0].rule;
  REQUIRE(rule.kind == SplitRule::Kind::categorical_subset);
  CHECK(rule.left_levels == std::vector<int>{0});
  CHECK(rule.right_levels == std::vector<int>{1, 2});
  CHECK(rule.unseen == Branch::right);
  CHECK(rule.route(3.0) == Branch::right);
  CHECK(rule.route(kUnseenCategory) == Branch::right);
  const std::vector<double> x{3.0};
  CHECK(&tree.predict_leaf(x) == &tree.predict_leaf(std::vector<double>{1.0}));
}

TEST_CASE("parameter validation") {
  CovariateSchema schema{{{"x", FeatureKind::numeric, {}}}};
  std::vector<SurvivalSample> samples{{"", 1.0, true, {0.0}}};
  TreeParams params;
  params.candidate_features = 2;
  CHECK_THROWS_AS(grow_tree(samples, schema, params), ConfigError);
  params.candidate_features = 1;
  params.min_unique_deaths = 0;
  CHECK_THROWS_AS(grow_tree(samples, schema, params), ConfigError);
  CHECK_THROWS_AS(grow_tree(std::vector<SurvivalSample>{}, schema, TreeParams{}), DataError);
}
