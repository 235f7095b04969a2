#include "pipesurv/survival_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>

#include "pipesurv/errors.hpp"

namespace pipesurv {

void validate_tree_params(const TreeParams& params, std::size_t arity) {
  if (params.candidate_features < 1 || params.candidate_features > arity) {
    throw ConfigError("candidate_features must lie in [1, " + std::to_string(arity) + "]");
  }
  if (params.min_unique_deaths < 1) throw ConfigError("min_unique_deaths must be >= 1");
  if (params.max_depth < 0) throw ConfigError("max_depth must be >= 0 (0 = unlimited)");
}

Branch SplitRule::route(double value) const {
  if (kind == Kind::numeric_threshold) return value <= threshold ? Branch::left : Branch::right;
  const int level = static_cast<int>(value);
  if (std::binary_search(left_levels.begin(), left_levels.end(), level)) return Branch::left;
  if (std::binary_search(right_levels.begin(), right_levels.end(), level)) return Branch::right;
  return unseen;
}

LeafNode LeafNode::from_responses(std::vector<TimeEvent> responses) {
  if (responses.empty()) throw DataError("leaf without responses");
  const RiskTable table = build_risk_table(std::span<const TimeEvent>(responses));
  LeafNode leaf;
  leaf.km_curve = kaplan_meier(table);
  leaf.chf_curve = nelson_aalen(table);
  leaf.responses = std::move(responses);
  return leaf;
}

SurvivalTree::SurvivalTree(std::vector<Node> nodes, std::vector<LeafNode> leaves)
    : nodes_(std::move(nodes)), leaves_(std::move(leaves)) {
  if (nodes_.empty()) throw DataError("tree without nodes");
  for (const auto& node : nodes_) {
    const bool split = node.left >= 0 && node.right >= 0;
    const auto n = static_cast<std::int32_t>(nodes_.size());
    if (node.is_leaf() == split || node.left >= n || node.right >= n ||
        node.leaf >= static_cast<std::int32_t>(leaves_.size())) {
      throw DataError("malformed tree node");
    }
  }
}

std::size_t SurvivalTree::leaf_index(std::span<const double> x) const {
  std::size_t current = 0;
  while (!nodes_[current].is_leaf()) {
    const Node& node = nodes_[current];
    current = static_cast<std::size_t>(
        node.rule.route(x[node.rule.feature]) == Branch::left ? node.left : node.right);
  }
  return static_cast<std::size_t>(nodes_[current].leaf);
}

std::size_t SurvivalTree::depth() const {
  std::size_t deepest = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [index, level] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, level);
    const Node& node = nodes_[index];
    if (!node.is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(node.left), level + 1);
      stack.emplace_back(static_cast<std::size_t>(node.right), level + 1);
    }
  }
  return deepest;
}

const LeafNode& predict_leaf(const SurvivalTree& tree, std::span<const double> x) {
  return tree.predict_leaf(x);
}

namespace detail {

bool split_statistic_ties(double a, double b) {
  return std::abs(a - b) <= kSplitTieTolerance * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

namespace {

struct Candidate {
  double statistic = 0.0;
  std::size_t feature = 0;
  SplitRule::Kind kind = SplitRule::Kind::numeric_threshold;
  double threshold = 0.0;
  std::vector<int> left_levels;
  std::vector<int> right_levels;
};

bool improves(const Candidate& c, const std::optional<Candidate>& best) {
  if (!best) return true;
  if (!detail::split_statistic_ties(c.statistic, best->statistic)) {
    return c.statistic > best->statistic;
  }
  if (c.feature != best->feature) return c.feature < best->feature;
  if (c.kind == SplitRule::Kind::numeric_threshold) return c.threshold < best->threshold;
  return c.left_levels < best->left_levels;
}

// Largest level count for which all subsets are enumerated.
constexpr std::size_t kMaxExhaustiveLevels = 8;

class TreeGrower {
 public:
  TreeGrower(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
             const TreeParams& params, RandomStream& rng)
      : samples_(samples), schema_(schema), params_(params), rng_(rng) {}

  SurvivalTree grow(std::span<const std::size_t> rows) {
    struct Pending {
      std::size_t node;
      std::vector<std::size_t> rows;
      int depth;
    };
    nodes_.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({0, std::vector<std::size_t>(rows.begin(), rows.end()), 0});
    while (!stack.empty()) {
      Pending item = std::move(stack.back());
      stack.pop_back();

      std::optional<Candidate> split;
      if (params_.max_depth == 0 || item.depth < params_.max_depth) split = find_split(item.rows);
      if (!split) {
        make_leaf(item.node, item.rows);
        continue;
      }

      SplitRule rule;
      rule.feature = split->feature;
      rule.kind = split->kind;
      rule.threshold = split->threshold;
      rule.left_levels = std::move(split->left_levels);
      rule.right_levels = std::move(split->right_levels);

      std::vector<std::size_t> left_rows, right_rows;
      for (std::size_t r : item.rows) {
        (rule.route(samples_[r].covariates[rule.feature]) == Branch::left ? left_rows : right_rows)
            .push_back(r);
      }
      if (rule.kind == SplitRule::Kind::categorical_subset) {
        rule.unseen = left_rows.size() >= right_rows.size() ? Branch::left : Branch::right;
      }

      const auto left = static_cast<std::int32_t>(nodes_.size());
      nodes_.emplace_back();
      nodes_.emplace_back();
      nodes_[item.node].rule = std::move(rule);
      nodes_[item.node].left = left;
      nodes_[item.node].right = left + 1;
      // Right is pushed first so the left subtree is finished first.
      stack.push_back({static_cast<std::size_t>(left + 1), std::move(right_rows), item.depth + 1});
      stack.push_back({static_cast<std::size_t>(left), std::move(left_rows), item.depth + 1});
    }
    return SurvivalTree(std::move(nodes_), std::move(leaves_));
  }

 private:
  void make_leaf(std::size_t node, const std::vector<std::size_t>& rows) {
    std::vector<TimeEvent> responses;
    responses.reserve(rows.size());
    for (std::size_t r : rows) responses.push_back({samples_[r].time, samples_[r].event, samples_[r].entry});
    nodes_[node].leaf = static_cast<std::int32_t>(leaves_.size());
    leaves_.push_back(LeafNode::from_responses(std::move(responses)));
  }

  std::size_t grid_index(double t) const {
    return static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
  }

  // Index the node's distinct times (and nonzero entries) and tally counts,
  // deaths and entries per grid value.
  void tabulate(const std::vector<std::size_t>& rows) {
    times_.clear();
    truncated_ = false;
    for (std::size_t r : rows) {
      times_.push_back(samples_[r].time);
      if (samples_[r].entry > 0.0) {
        times_.push_back(samples_[r].entry);
        truncated_ = true;
      }
    }
    std::sort(times_.begin(), times_.end());
    times_.erase(std::unique(times_.begin(), times_.end()), times_.end());
    const std::size_t j = times_.size();
    count_total_.assign(j, 0);
    deaths_total_.assign(j, 0);
    entering_total_.assign(truncated_ ? j : 0, 0);
    time_index_.resize(rows.size());
    entry_index_.assign(rows.size(), kNoEntry);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const SurvivalSample& s = samples_[rows[i]];
      const std::size_t k = grid_index(s.time);
      time_index_[i] = k;
      ++count_total_[k];
      if (s.event) ++deaths_total_[k];
      if (s.entry > 0.0) {
        entry_index_[i] = grid_index(s.entry);
        ++entering_total_[entry_index_[i]];
      }
    }
    unique_deaths_ = static_cast<int>(
        std::count_if(deaths_total_.begin(), deaths_total_.end(), [](int d) { return d > 0; }));
  }

  std::optional<Candidate> find_split(const std::vector<std::size_t>& rows) {
    tabulate(rows);
    const int d0 = params_.min_unique_deaths;
    // Daughters may share event times, so d0 distinct times is the only bound.
    if (unique_deaths_ < d0) return std::nullopt;

    // Partial Fisher-Yates draw of the candidate features, scanned in index
    // order so ties resolve toward the lowest feature.
    std::vector<std::size_t> features(schema_.arity());
    std::iota(features.begin(), features.end(), std::size_t{0});
    const std::size_t p = params_.candidate_features;
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t k = i + static_cast<std::size_t>(rng_.bounded(features.size() - i));
      std::swap(features[i], features[k]);
    }
    features.resize(p);
    std::sort(features.begin(), features.end());

    std::optional<Candidate> best;
    for (std::size_t f : features) {
      if (schema_.features[f].kind == FeatureKind::numeric) {
        scan_numeric(rows, f, best);
      } else {
        scan_categorical(rows, f, best);
      }
    }
    if (best && !(best->statistic > 0.0)) return std::nullopt;
    return best;
  }

  void scan_numeric(const std::vector<std::size_t>& rows, std::size_t feature,
                    std::optional<Candidate>& best) {
    const int d0 = params_.min_unique_deaths;
    order_.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      order_.emplace_back(samples_[rows[i]].covariates[feature], i);
    }
    std::sort(order_.begin(), order_.end());

    const std::size_t j = times_.size();
    count_left_.assign(j, 0);
    deaths_left_.assign(j, 0);
    entering_left_.assign(truncated_ ? j : 0, 0);
    int unique_left = 0;
    int unique_right = unique_deaths_;
    for (std::size_t k = 0; k + 1 < order_.size(); ++k) {
      const std::size_t i = order_[k].second;
      const std::size_t t = time_index_[i];
      ++count_left_[t];
      if (entry_index_[i] != kNoEntry) ++entering_left_[entry_index_[i]];
      if (samples_[rows[i]].event) {
        if (deaths_left_[t]++ == 0) ++unique_left;
        if (deaths_left_[t] == deaths_total_[t]) --unique_right;
      }
      if (unique_right < d0) break;
      const double value = order_[k].first;
      const double next = order_[k + 1].first;
      if (!(next > value) || unique_left < d0) continue;

      Candidate c;
      c.statistic = statistic();
      c.feature = feature;
      c.kind = SplitRule::Kind::numeric_threshold;
      c.threshold = value + (next - value) / 2.0;
      if (improves(c, best)) best = std::move(c);
    }
  }

  void scan_categorical(const std::vector<std::size_t>& rows, std::size_t feature,
                        std::optional<Candidate>& best) {
    const int d0 = params_.min_unique_deaths;
    std::vector<int> levels;
    for (std::size_t r : rows) levels.push_back(static_cast<int>(samples_[r].covariates[feature]));
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const std::size_t n_levels = levels.size();
    if (n_levels < 2) return;

    const std::size_t j = times_.size();
    std::vector<std::vector<int>> level_count(n_levels, std::vector<int>(j, 0));
    std::vector<std::vector<int>> level_deaths(n_levels, std::vector<int>(j, 0));
    std::vector<std::vector<int>> level_entering(n_levels, std::vector<int>(truncated_ ? j : 0, 0));
    std::vector<double> time_sum(n_levels, 0.0);
    std::vector<std::size_t> level_size(n_levels, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const SurvivalSample& s = samples_[rows[i]];
      const auto l = static_cast<std::size_t>(
          std::lower_bound(levels.begin(), levels.end(), static_cast<int>(s.covariates[feature])) -
          levels.begin());
      ++level_count[l][time_index_[i]];
      if (s.event) ++level_deaths[l][time_index_[i]];
      if (entry_index_[i] != kNoEntry) ++level_entering[l][entry_index_[i]];
      time_sum[l] += s.time;
      ++level_size[l];
    }

    auto evaluate = [&](const std::vector<bool>& on_left) {
      count_left_.assign(j, 0);
      deaths_left_.assign(j, 0);
      entering_left_.assign(truncated_ ? j : 0, 0);
      Candidate c;
      c.feature = feature;
      c.kind = SplitRule::Kind::categorical_subset;
      for (std::size_t l = 0; l < n_levels; ++l) {
        if (!on_left[l]) {
          c.right_levels.push_back(levels[l]);
          continue;
        }
        c.left_levels.push_back(levels[l]);
        for (std::size_t t = 0; t < j; ++t) {
          count_left_[t] += level_count[l][t];
          deaths_left_[t] += level_deaths[l][t];
        }
        if (truncated_) {
          for (std::size_t t = 0; t < j; ++t) entering_left_[t] += level_entering[l][t];
        }
      }
      int unique_left = 0, unique_right = 0;
      for (std::size_t t = 0; t < j; ++t) {
        if (deaths_left_[t] > 0) ++unique_left;
        if (deaths_total_[t] - deaths_left_[t] > 0) ++unique_right;
      }
      if (unique_left < d0 || unique_right < d0) return;
      c.statistic = statistic();
      if (improves(c, best)) best = std::move(c);
    };

    std::vector<bool> on_left(n_levels, false);
    if (n_levels <= kMaxExhaustiveLevels) {
      // A subset and its complement give the same partition; enumerate the
      // representative holding the smallest level.
      const std::uint32_t full = (std::uint32_t{1} << n_levels) - 1;
      for (std::uint32_t mask = 1; mask < full; mask += 2) {
        for (std::size_t l = 0; l < n_levels; ++l) on_left[l] = (mask >> l) & 1U;
        evaluate(on_left);
      }
      return;
    }

    std::vector<std::size_t> by_mean(n_levels);
    std::iota(by_mean.begin(), by_mean.end(), std::size_t{0});
    std::stable_sort(by_mean.begin(), by_mean.end(), [&](std::size_t a, std::size_t b) {
      return time_sum[a] / static_cast<double>(level_size[a]) <
             time_sum[b] / static_cast<double>(level_size[b]);
    });
    for (std::size_t cut = 1; cut < n_levels; ++cut) {
      on_left[by_mean[cut - 1]] = true;
      evaluate(on_left);
    }
  }

  double statistic() const {
    return detail::log_rank_from_tallies(count_total_, deaths_total_, entering_total_, count_left_,
                                         deaths_left_, entering_left_);
  }

  static constexpr std::size_t kNoEntry = static_cast<std::size_t>(-1);

  std::span<const SurvivalSample> samples_;
  const CovariateSchema& schema_;
  const TreeParams& params_;
  RandomStream& rng_;

  std::vector<SurvivalTree::Node> nodes_;
  std::vector<LeafNode> leaves_;

  std::vector<double> times_;
  std::vector<std::size_t> time_index_, entry_index_;
  std::vector<int> count_total_, deaths_total_, count_left_, deaths_left_;
  std::vector<int> entering_total_, entering_left_;
  bool truncated_ = false;
  std::vector<std::pair<double, std::size_t>> order_;
  int unique_deaths_ = 0;
};

}  // namespace

SurvivalTree grow_tree(std::span<const SurvivalSample> samples, std::span<const std::size_t> rows,
                       const CovariateSchema& schema, const TreeParams& params, RandomStream& rng) {
  if (samples.empty() || rows.empty()) throw DataError("cannot grow a tree on an empty dataset");
  validate_tree_params(params, schema.arity());
  for (std::size_t r : rows) {
    if (r >= samples.size()) throw DataError("tree row index out of range");
  }
  for (const auto& s : samples) validate_sample(s, schema);
  TreeGrower grower(samples, schema, params, rng);
  return grower.grow(rows);
}

SurvivalTree grow_tree(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                       const TreeParams& params) {
  std::vector<std::size_t> rows(samples.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  RandomStream rng(params.seed);
  return grow_tree(samples, rows, schema, params, rng);
}

}  // namespace pipesurv
