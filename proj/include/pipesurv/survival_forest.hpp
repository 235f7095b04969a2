#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pipesurv/survival_core.hpp"
#include "pipesurv/survival_tree.hpp"

namespace pipesurv {

struct ForestParams {
  std::size_t n_trees = 100;
  TreeParams tree;  // tree.seed is ignored; each tree's stream comes from master_seed
  std::uint64_t master_seed = 0;

  bool operator==(const ForestParams&) const = default;
};

struct SurvivalForest {
  CovariateSchema schema;
  ForestParams params;
  std::size_t n_samples = 0;
  std::vector<SurvivalTree> trees;
  std::vector<std::vector<std::size_t>> inbag;  // per tree, row indices in draw order
  std::vector<double> time_grid;                // sorted distinct training event times

  bool operator==(const SurvivalForest&) const = default;
};

// Trains with OpenMP across trees. threads <= 0 uses the runtime default.
// Tree k draws its bootstrap and its feature samples from a stream seeded by
// (master_seed, k), so the result does not depend on the thread count.
SurvivalForest train(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                     const ForestParams& params, int threads = 0);

// Single-threaded reference for train(); must produce an identical forest.
SurvivalForest train_serial(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                            const ForestParams& params);

// Mean of the per-tree leaf Kaplan-Meier curves on forest.time_grid.
StepFunction predict_survival(const SurvivalForest& forest, std::span<const double> x);
// Mean of the per-tree leaf Nelson-Aalen curves on forest.time_grid.
StepFunction predict_chf(const SurvivalForest& forest, std::span<const double> x);

// 1 - S(h)/S(a) for a curve S; 1 when S(a) is zero. Throws ConfigError when
// horizon < current_age or current_age < 0.
double conditional_failure_probability(const StepFunction& survival, double current_age,
                                       double horizon);
double failure_probability(const SurvivalForest& forest, std::span<const double> x,
                           double current_age, double horizon);

struct PredictionInterval {
  StepFunction lower;
  StepFunction median;
  StepFunction upper;
  double level = 0.9;
};

// Between-tree quantiles of the leaf Kaplan-Meier values at every grid time:
// (1 - level)/2, 1/2 and (1 + level)/2, linear interpolation between order
// statistics.
PredictionInterval predict_interval(const SurvivalForest& forest, std::span<const double> x,
                                    double level);

struct ProbabilityBand {
  double lower = 0.0;
  double point = 0.0;
  double upper = 0.0;
};

// Failure probability over (current_age, horizon] with the between-tree
// quantile band of the per-tree conditional probabilities. The point is the
// ensemble value from failure_probability(); the band is widened to contain
// it when the ensemble ratio falls outside the per-tree quantiles.
ProbabilityBand failure_probability_band(const SurvivalForest& forest, std::span<const double> x,
                                         double current_age, double horizon, double level);
// Same for several horizons, routing x through the trees once.
std::vector<ProbabilityBand> failure_probability_bands(const SurvivalForest& forest,
                                                       std::span<const double> x, double current_age,
                                                       std::span<const double> horizons, double level);

struct WeightedResponse {
  double time = 0.0;
  bool event = false;
  double weight = 0.0;  // 1 / (n_trees * leaf size)
  double entry = 0.0;
};

// Archived responses of every leaf reached by x, pooled across trees.
std::vector<WeightedResponse> pooled_responses(const SurvivalForest& forest,
                                               std::span<const double> x);

// Per-tree leaf Kaplan-Meier values of x on the time grid: result[k][g] is
// tree k at grid time g.
std::vector<std::vector<double>> per_tree_survival(const SurvivalForest& forest,
                                                   std::span<const double> x);

// Fraction of rows each tree left out of its bootstrap.
std::vector<double> oob_fractions(const SurvivalForest& forest);

struct OobError {
  std::optional<double> error;  // 1 - Harrell C; empty when no permissible pair
  std::size_t scored = 0;       // samples with at least one out-of-bag tree
  std::size_t excluded = 0;     // samples in-bag for every tree
  std::size_t permissible_pairs = 0;
};

// Mortality score of each sample from its out-of-bag trees: the ensemble
// Nelson-Aalen curve over trees where the sample was out-of-bag, summed over
// the time grid. Empty for samples in-bag for every tree.
std::vector<std::optional<double>> oob_mortality(const SurvivalForest& forest,
                                                 std::span<const SurvivalSample> samples);

OobError oob_concordance_error(const SurvivalForest& forest, std::span<const SurvivalSample> samples);

// Linear-interpolation quantile of already sorted values.
double sorted_quantile(std::span<const double> sorted, double probability);

// Bit-exact container for a fitted forest (JSON text). Leaf curves are
// rebuilt from the archived responses on load.
void save_forest(const SurvivalForest& forest, std::ostream& out);
SurvivalForest load_forest(std::istream& in);

}  // namespace pipesurv
