#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pipesurv/random.hpp"
#include "pipesurv/survival_core.hpp"

namespace pipesurv {

struct TreeParams {
  std::size_t candidate_features = 1;  // features sampled per node
  int min_unique_deaths = 3;           // d0: distinct event times a daughter must keep
  int max_depth = 0;                   // 0 grows to full size
  std::uint64_t seed = 0;              // used by the grow_tree overload without a stream

  bool operator==(const TreeParams&) const = default;
};

// Throws ConfigError for candidate_features outside [1, arity] or d0 < 1.
void validate_tree_params(const TreeParams& params, std::size_t arity);

enum class Branch : std::uint8_t { left, right };

struct SplitRule {
  enum class Kind : std::uint8_t { numeric_threshold, categorical_subset };

  std::size_t feature = 0;
  Kind kind = Kind::numeric_threshold;
  double threshold = 0.0;         // numeric: left when value <= threshold
  std::vector<int> left_levels;   // categorical: left when value is one of these
  std::vector<int> right_levels;  // levels seen on the right during training
  Branch unseen = Branch::left;   // where categorical levels absent at training go

  Branch route(double value) const;
  bool operator==(const SplitRule&) const = default;
};

struct LeafNode {
  StepFunction km_curve;
  StepFunction chf_curve;
  std::vector<TimeEvent> responses;  // in-bag responses that reached the leaf, bootstrap copies included

  static LeafNode from_responses(std::vector<TimeEvent> responses);
  bool operator==(const LeafNode&) const = default;
};

class SurvivalTree {
 public:
  struct Node {
    SplitRule rule;
    std::int32_t left = -1;   // child node indices; -1 on leaves
    std::int32_t right = -1;
    std::int32_t leaf = -1;   // index into leaves() on leaves

    bool is_leaf() const { return leaf >= 0; }
    bool operator==(const Node&) const = default;
  };

  SurvivalTree() = default;
  SurvivalTree(std::vector<Node> nodes, std::vector<LeafNode> leaves);

  // Index into leaves() of the leaf reached by x.
  std::size_t leaf_index(std::span<const double> x) const;
  const LeafNode& predict_leaf(std::span<const double> x) const { return leaves_[leaf_index(x)]; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<LeafNode>& leaves() const { return leaves_; }
  std::size_t depth() const;

  bool operator==(const SurvivalTree&) const = default;

 private:
  std::vector<Node> nodes_;  // nodes_[0] is the root
  std::vector<LeafNode> leaves_;
};

// Grows one tree on `samples[rows]`; `rows` may repeat indices (bootstrap).
SurvivalTree grow_tree(std::span<const SurvivalSample> samples, std::span<const std::size_t> rows,
                       const CovariateSchema& schema, const TreeParams& params, RandomStream& rng);

// Grows on every sample once with a stream seeded from params.seed.
SurvivalTree grow_tree(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                       const TreeParams& params);

const LeafNode& predict_leaf(const SurvivalTree& tree, std::span<const double> x);

namespace detail {

// Split-statistic tie window: two statistics within this relative distance
// are treated as equal and resolved by feature index, then threshold or
// subset order.
inline constexpr double kSplitTieTolerance = 1e-10;

bool split_statistic_ties(double a, double b);

}  // namespace detail

}  // namespace pipesurv
