#include <istream>
#include <ostream>

#include "json.hpp"
#include "pipesurv/errors.hpp"
#include "pipesurv/survival_forest.hpp"

namespace pipesurv {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "pipesurv-forest";
constexpr int kVersion = 1;

json schema_to_json(const CovariateSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features) {
    features.push_back({{"name", f.name},
                        {"kind", f.kind == FeatureKind::numeric ? "numeric" : "categorical"},
                        {"levels", f.levels}});
  }
  return features;
}

CovariateSchema schema_from_json(const json& j) {
  CovariateSchema schema;
  for (const auto& f : j) {
    FeatureSpec spec;
    spec.name = f.at("name").get<std::string>();
    const auto kind = f.at("kind").get<std::string>();
    if (kind != "numeric" && kind != "categorical") throw DataError("unknown feature kind " + kind);
    spec.kind = kind == "numeric" ? FeatureKind::numeric : FeatureKind::categorical;
    spec.levels = f.at("levels").get<std::vector<std::string>>();
    schema.features.push_back(std::move(spec));
  }
  return schema;
}

json tree_to_json(const SurvivalTree& tree) {
  json nodes = json::array();
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) {
      nodes.push_back({{"leaf", node.leaf}});
      continue;
    }
    const SplitRule& rule = node.rule;
    json entry = {{"feature", rule.feature}, {"left", node.left}, {"right", node.right}};
    if (rule.kind == SplitRule::Kind::numeric_threshold) {
      entry["threshold"] = rule.threshold;
    } else {
      entry["left_levels"] = rule.left_levels;
      entry["right_levels"] = rule.right_levels;
      entry["unseen"] = rule.unseen == Branch::left ? "left" : "right";
    }
    nodes.push_back(std::move(entry));
  }
  json leaves = json::array();
  for (const auto& leaf : tree.leaves()) {
    std::vector<double> times;
    std::vector<int> events;
    std::vector<double> entries;
    for (const auto& r : leaf.responses) {
      times.push_back(r.time);
      events.push_back(r.event ? 1 : 0);
      entries.push_back(r.entry);
    }
    leaves.push_back({{"times", times}, {"events", events}, {"entries", entries}});
  }
  return {{"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}};
}

SurvivalTree tree_from_json(const json& j) {
  std::vector<SurvivalTree::Node> nodes;
  for (const auto& entry : j.at("nodes")) {
    SurvivalTree::Node node;
    if (entry.contains("leaf")) {
      node.leaf = entry.at("leaf").get<std::int32_t>();
    } else {
      node.left = entry.at("left").get<std::int32_t>();
      node.right = entry.at("right").get<std::int32_t>();
      node.rule.feature = entry.at("feature").get<std::size_t>();
      if (entry.contains("threshold")) {
        node.rule.kind = SplitRule::Kind::numeric_threshold;
        node.rule.threshold = entry.at("threshold").get<double>();
      } else {
        node.rule.kind = SplitRule::Kind::categorical_subset;
        node.rule.left_levels = entry.at("left_levels").get<std::vector<int>>();
        node.rule.right_levels = entry.at("right_levels").get<std::vector<int>>();
        node.rule.unseen = entry.at("unseen").get<std::string>() == "left" ? Branch::left : Branch::right;
      }
    }
    nodes.push_back(std::move(node));
  }
  std::vector<LeafNode> leaves;
  for (const auto& entry : j.at("leaves")) {
    const auto times = entry.at("times").get<std::vector<double>>();
    const auto events = entry.at("events").get<std::vector<int>>();
    const auto entries = entry.at("entries").get<std::vector<double>>();
    if (times.size() != events.size() || times.size() != entries.size()) {
      throw DataError("leaf archive length mismatch");
    }
    std::vector<TimeEvent> responses;
    responses.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      responses.push_back({times[i], events[i] != 0, entries[i]});
    }
    leaves.push_back(LeafNode::from_responses(std::move(responses)));
  }
  return SurvivalTree(std::move(nodes), std::move(leaves));
}

}  // namespace

void save_forest(const SurvivalForest& forest, std::ostream& out) {
  json trees = json::array();
  for (const auto& tree : forest.trees) trees.push_back(tree_to_json(tree));
  const ForestParams& p = forest.params;
  json doc = {
      {"format", kFormat},
      {"version", kVersion},
      {"schema", schema_to_json(forest.schema)},
      {"params",
       {{"n_trees", p.n_trees},
        {"master_seed", p.master_seed},
        {"candidate_features", p.tree.candidate_features},
        {"min_unique_deaths", p.tree.min_unique_deaths},
        {"max_depth", p.tree.max_depth}}},
      {"n_samples", forest.n_samples},
      {"time_grid", forest.time_grid},
      {"inbag", forest.inbag},
      {"trees", std::move(trees)},
  };
  out << doc.dump() << '\n';
  if (!out) throw IoError("failed to write forest");
}

SurvivalForest load_forest(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat || doc.at("version").get<int>() != kVersion) {
      throw DataError("unsupported model format");
    }
    SurvivalForest forest;
    forest.schema = schema_from_json(doc.at("schema"));
    const json& p = doc.at("params");
    forest.params.n_trees = p.at("n_trees").get<std::size_t>();
    forest.params.master_seed = p.at("master_seed").get<std::uint64_t>();
    forest.params.tree.candidate_features = p.at("candidate_features").get<std::size_t>();
    forest.params.tree.min_unique_deaths = p.at("min_unique_deaths").get<int>();
    forest.params.tree.max_depth = p.at("max_depth").get<int>();
    forest.n_samples = doc.at("n_samples").get<std::size_t>();
    forest.time_grid = doc.at("time_grid").get<std::vector<double>>();
    forest.inbag = doc.at("inbag").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& t : doc.at("trees")) forest.trees.push_back(tree_from_json(t));
    if (forest.trees.size() != forest.params.n_trees || forest.inbag.size() != forest.trees.size()) {
      throw DataError("model tree count does not match its parameters");
    }
    return forest;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace pipesurv
