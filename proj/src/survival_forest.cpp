#include "pipesurv/survival_forest.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "pipesurv/errors.hpp"
#include "pipesurv/random.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pipesurv {

namespace {

void check_training_input(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                          const ForestParams& params) {
  if (samples.empty()) throw DataError("cannot train a forest on an empty dataset");
  if (params.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  validate_tree_params(params.tree, schema.arity());
  for (const auto& s : samples) validate_sample(s, schema);
}

std::vector<double> event_time_grid(std::span<const SurvivalSample> samples) {
  std::vector<double> grid;
  for (const auto& s : samples) {
    if (s.event) grid.push_back(s.time);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

// Grows tree `k`: bootstrap of n rows with replacement, then the tree, both
// from the tree's private stream.
void grow_member(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                 const ForestParams& params, std::size_t k, SurvivalTree& tree,
                 std::vector<std::size_t>& inbag) {
  RandomStream rng(derive_seed(params.master_seed, k));
  const std::size_t n = samples.size();
  inbag.resize(n);
  for (std::size_t i = 0; i < n; ++i) inbag[i] = static_cast<std::size_t>(rng.bounded(n));
  tree = grow_tree(samples, inbag, schema, params.tree, rng);
}

SurvivalForest empty_forest(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                            const ForestParams& params) {
  SurvivalForest forest;
  forest.schema = schema;
  forest.params = params;
  forest.params.tree.seed = 0;
  forest.n_samples = samples.size();
  forest.trees.resize(params.n_trees);
  forest.inbag.resize(params.n_trees);
  forest.time_grid = event_time_grid(samples);
  return forest;
}

void check_covariates(const SurvivalForest& forest, std::span<const double> x) {
  if (x.size() != forest.schema.arity()) {
    throw DataError("covariate vector has " + std::to_string(x.size()) +
                    " entries, model schema declares " + std::to_string(forest.schema.arity()));
  }
}

// acc[g] += curve(grid[g]) for an increasing grid, by a merge walk.
void accumulate_on_grid(const StepFunction& curve, std::span<const double> grid,
                        std::vector<double>& acc) {
  const auto& knots = curve.knots();
  const auto& values = curve.values();
  std::size_t k = 0;
  double current = curve.initial_value();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (k < knots.size() && knots[k] <= grid[g]) current = values[k++];
    acc[g] += current;
  }
}

StepFunction ensemble_mean(const SurvivalForest& forest, std::span<const double> x, bool survival) {
  check_covariates(forest, x);
  std::vector<double> acc(forest.time_grid.size(), 0.0);
  for (const auto& tree : forest.trees) {
    const LeafNode& leaf = tree.predict_leaf(x);
    accumulate_on_grid(survival ? leaf.km_curve : leaf.chf_curve, forest.time_grid, acc);
  }
  const auto n = static_cast<double>(forest.trees.size());
  for (double& v : acc) v /= n;
  return StepFunction(forest.time_grid, std::move(acc), survival ? 1.0 : 0.0);
}

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("interval level must lie in (0, 1)");
}

}  // namespace

SurvivalForest train(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                     const ForestParams& params, int threads) {
  check_training_input(samples, schema, params);
  SurvivalForest forest = empty_forest(samples, schema, params);
  const auto n_trees = static_cast<std::ptrdiff_t>(params.n_trees);
#ifdef _OPENMP
  const int n_threads = threads > 0 ? threads : omp_get_max_threads();
#else
  (void)threads;
#endif
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(n_threads)
  for (std::ptrdiff_t k = 0; k < n_trees; ++k) {
    try {
      const auto index = static_cast<std::size_t>(k);
      grow_member(samples, schema, params, index, forest.trees[index], forest.inbag[index]);
    } catch (...) {
#pragma omp critical(pipesurv_train_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

SurvivalForest train_serial(std::span<const SurvivalSample> samples, const CovariateSchema& schema,
                            const ForestParams& params) {
  check_training_input(samples, schema, params);
  SurvivalForest forest = empty_forest(samples, schema, params);
  for (std::size_t k = 0; k < params.n_trees; ++k) {
    grow_member(samples, schema, params, k, forest.trees[k], forest.inbag[k]);
  }
  return forest;
}

StepFunction predict_survival(const SurvivalForest& forest, std::span<const double> x) {
  return ensemble_mean(forest, x, true);
}

StepFunction predict_chf(const SurvivalForest& forest, std::span<const double> x) {
  return ensemble_mean(forest, x, false);
}

double conditional_failure_probability(const StepFunction& survival, double current_age,
                                       double horizon) {
  if (!(current_age >= 0.0)) throw ConfigError("current age must be >= 0");
  if (horizon < current_age) throw ConfigError("horizon precedes current age");
  const double at_age = survival(current_age);
  if (at_age <= 0.0) return 1.0;
  const double ratio = survival(horizon) / at_age;
  return std::clamp(1.0 - ratio, 0.0, 1.0);
}

double failure_probability(const SurvivalForest& forest, std::span<const double> x,
                           double current_age, double horizon) {
  return conditional_failure_probability(predict_survival(forest, x), current_age, horizon);
}

double sorted_quantile(std::span<const double> sorted, double probability) {
  if (sorted.empty()) throw ConfigError("quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * probability;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::vector<std::vector<double>> per_tree_survival(const SurvivalForest& forest,
                                                   std::span<const double> x) {
  check_covariates(forest, x);
  std::vector<std::vector<double>> out;
  out.reserve(forest.trees.size());
  for (const auto& tree : forest.trees) {
    std::vector<double> row(forest.time_grid.size(), 0.0);
    accumulate_on_grid(tree.predict_leaf(x).km_curve, forest.time_grid, row);
    out.push_back(std::move(row));
  }
  return out;
}

PredictionInterval predict_interval(const SurvivalForest& forest, std::span<const double> x,
                                    double level) {
  check_level(level);
  const auto per_tree = per_tree_survival(forest, x);
  const std::size_t g_count = forest.time_grid.size();
  std::vector<double> lower(g_count), median(g_count), upper(g_count), column(per_tree.size());
  for (std::size_t g = 0; g < g_count; ++g) {
    for (std::size_t k = 0; k < per_tree.size(); ++k) column[k] = per_tree[k][g];
    std::sort(column.begin(), column.end());
    lower[g] = sorted_quantile(column, (1.0 - level) / 2.0);
    median[g] = sorted_quantile(column, 0.5);
    upper[g] = sorted_quantile(column, (1.0 + level) / 2.0);
  }
  PredictionInterval interval;
  interval.lower = StepFunction(forest.time_grid, std::move(lower), 1.0);
  interval.median = StepFunction(forest.time_grid, std::move(median), 1.0);
  interval.upper = StepFunction(forest.time_grid, std::move(upper), 1.0);
  interval.level = level;
  return interval;
}

std::vector<ProbabilityBand> failure_probability_bands(const SurvivalForest& forest,
                                                       std::span<const double> x, double current_age,
                                                       std::span<const double> horizons, double level) {
  check_level(level);
  const StepFunction ensemble = predict_survival(forest, x);
  std::vector<const LeafNode*> leaves;
  leaves.reserve(forest.trees.size());
  for (const auto& tree : forest.trees) leaves.push_back(&tree.predict_leaf(x));

  std::vector<ProbabilityBand> bands;
  std::vector<double> per_tree(leaves.size());
  for (double horizon : horizons) {
    ProbabilityBand band;
    band.point = conditional_failure_probability(ensemble, current_age, horizon);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      per_tree[k] = conditional_failure_probability(leaves[k]->km_curve, current_age, horizon);
    }
    std::sort(per_tree.begin(), per_tree.end());
    band.lower = std::min(sorted_quantile(per_tree, (1.0 - level) / 2.0), band.point);
    band.upper = std::max(sorted_quantile(per_tree, (1.0 + level) / 2.0), band.point);
    bands.push_back(band);
  }
  return bands;
}

ProbabilityBand failure_probability_band(const SurvivalForest& forest, std::span<const double> x,
                                         double current_age, double horizon, double level) {
  const double horizons[] = {horizon};
  return failure_probability_bands(forest, x, current_age, horizons, level).front();
}

std::vector<WeightedResponse> pooled_responses(const SurvivalForest& forest,
                                               std::span<const double> x) {
  check_covariates(forest, x);
  std::vector<WeightedResponse> pooled;
  const auto n_trees = static_cast<double>(forest.trees.size());
  for (const auto& tree : forest.trees) {
    const LeafNode& leaf = tree.predict_leaf(x);
    const double weight = 1.0 / (n_trees * static_cast<double>(leaf.responses.size()));
    for (const auto& r : leaf.responses) pooled.push_back({r.time, r.event, weight, r.entry});
  }
  return pooled;
}

std::vector<double> oob_fractions(const SurvivalForest& forest) {
  std::vector<double> fractions;
  fractions.reserve(forest.inbag.size());
  for (const auto& rows : forest.inbag) {
    std::vector<bool> drawn(forest.n_samples, false);
    for (std::size_t r : rows) drawn[r] = true;
    const auto out = std::count(drawn.begin(), drawn.end(), false);
    fractions.push_back(static_cast<double>(out) / static_cast<double>(forest.n_samples));
  }
  return fractions;
}

std::vector<std::optional<double>> oob_mortality(const SurvivalForest& forest,
                                                 std::span<const SurvivalSample> samples) {
  if (samples.size() != forest.n_samples) {
    throw DataError("out-of-bag scoring needs the training samples of the forest");
  }
  const std::size_t n = samples.size();
  const std::size_t g_count = forest.time_grid.size();
  std::vector<std::vector<double>> chf_sum(n, std::vector<double>(g_count, 0.0));
  std::vector<std::size_t> oob_trees(n, 0);
  for (std::size_t k = 0; k < forest.trees.size(); ++k) {
    std::vector<bool> drawn(n, false);
    for (std::size_t r : forest.inbag[k]) drawn[r] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (drawn[i]) continue;
      ++oob_trees[i];
      accumulate_on_grid(forest.trees[k].predict_leaf(samples[i].covariates).chf_curve,
                         forest.time_grid, chf_sum[i]);
    }
  }
  std::vector<std::optional<double>> mortality(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (oob_trees[i] == 0) continue;
    double total = 0.0;
    for (double v : chf_sum[i]) total += v / static_cast<double>(oob_trees[i]);
    mortality[i] = total;
  }
  return mortality;
}

OobError oob_concordance_error(const SurvivalForest& forest,
                               std::span<const SurvivalSample> samples) {
  const auto mortality = oob_mortality(forest, samples);
  std::vector<double> risk;
  std::vector<TimeEvent> responses;
  OobError result;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!mortality[i]) {
      ++result.excluded;
      continue;
    }
    risk.push_back(*mortality[i]);
    responses.push_back({samples[i].time, samples[i].event});
  }
  result.scored = risk.size();
  const ConcordanceCounts counts = harrell_concordance(risk, responses);
  result.permissible_pairs = counts.permissible;
  if (counts.defined()) result.error = 1.0 - counts.index();
  return result;
}

}  // namespace pipesurv
