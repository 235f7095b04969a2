#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pipesurv {

enum class FeatureKind { numeric, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  // Level names of a categorical feature; a covariate value is the index into
  // this list.
  std::vector<std::string> levels;

  bool operator==(const FeatureSpec&) const = default;
};

struct CovariateSchema {
  std::vector<FeatureSpec> features;

  std::size_t arity() const { return features.size(); }
  bool operator==(const CovariateSchema&) const = default;
};

// Covariate values in schema order. Categorical entries hold the level index
// as an integral double; kUnseenCategory marks a level the schema lacks.
using CovariateVector = std::vector<double>;
inline constexpr double kUnseenCategory = -1.0;

struct SurvivalSample {
  std::string subject_id;
  double time = 0.0;   // min(failure time, censoring time), years
  bool event = false;  // true when the failure was observed
  CovariateVector covariates;
  // Age at which observation began (left truncation). The subject is at risk
  // on (entry, time]; 0 means observed from the origin.
  double entry = 0.0;
};

// Throws DataError unless time is finite and nonnegative, entry lies in
// [0, time) (or is 0), and the covariates match the schema arity.
void validate_sample(const SurvivalSample& sample, const CovariateSchema& schema);

struct TimeEvent {
  double time = 0.0;
  bool event = false;
  double entry = 0.0;  // delayed entry; see SurvivalSample

  bool operator==(const TimeEvent&) const = default;
};

/// Right-continuous piecewise-constant curve. Before the first knot it takes
/// `initial_value`; at and after knot i it takes values[i]. No extrapolation
/// past the last knot.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> knots, std::vector<double> values, double initial_value);

  static StepFunction constant(double value) { return StepFunction({}, {}, value); }

  double operator()(double t) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }
  double initial_value() const { return initial_value_; }
  std::size_t size() const { return knots_.size(); }

  // Values of the curve at each of `times`.
  std::vector<double> evaluate(std::span<const double> times) const;

  bool is_survival_curve() const;
  bool is_cumulative_hazard() const;

  bool operator==(const StepFunction&) const = default;

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
  double initial_value_ = 0.0;
};

struct RiskTable {
  std::vector<double> event_times;  // t_j, increasing
  std::vector<int> deaths;          // d_j
  std::vector<int> at_risk;         // Y_j: time >= t_j and entry < t_j

  std::size_t size() const { return event_times.size(); }
  bool empty() const { return event_times.empty(); }
};

RiskTable build_risk_table(std::span<const TimeEvent> responses);
RiskTable build_risk_table(std::span<const SurvivalSample> samples);

// Product-limit survival curve. Each factor is formed as (Y_j - d_j) / Y_j and
// the running product is tracked as an exact reduced fraction while its
// denominator fits in 64 bits. Each value is that fraction correctly rounded,
// so small instances reproduce hand-computed rationals exactly.
StepFunction kaplan_meier(const RiskTable& table);

// Cumulative hazard sum_{t_j <= t} d_j / Y_j.
StepFunction nelson_aalen(const RiskTable& table);

// S(t) = exp(-mu(t)) at every knot.
StepFunction chf_to_survival(const StepFunction& chf);

// Two-sample log-rank chi-square statistic. Returns 0 when either group is
// empty or the pooled hypergeometric variance is zero.
double log_rank_statistic(std::span<const SurvivalSample> group_a,
                          std::span<const SurvivalSample> group_b);
double log_rank_statistic(std::span<const TimeEvent> group_a, std::span<const TimeEvent> group_b);

// Harrell's concordance of risk scores against responses. A pair is usable
// when the shorter time is an event, and is concordant when that subject
// carries the higher risk. Equal risks earn half credit.
struct ConcordanceCounts {
  double concordant = 0.0;  // includes half credit for ties
  std::size_t permissible = 0;

  bool defined() const { return permissible > 0; }
  double index() const { return concordant / static_cast<double>(permissible); }
};
ConcordanceCounts harrell_concordance(std::span<const double> risk,
                                      std::span<const TimeEvent> responses);

namespace detail {

// Log-rank statistic from per-distinct-time tallies. All spans share the
// indexing of an ascending list of distinct times: `count_*` is the number of
// subjects whose time equals that entry, `deaths_*` how many of those had an
// event. The left group is a subset of the total.
double log_rank_from_tallies(std::span<const int> count_total, std::span<const int> deaths_total,
                             std::span<const int> count_left, std::span<const int> deaths_left);

// Same with delayed entry: `entering_*` counts subjects whose (nonzero) entry
// equals that grid value. They are not at risk at or before it.
double log_rank_from_tallies(std::span<const int> count_total, std::span<const int> deaths_total,
                             std::span<const int> entering_total, std::span<const int> count_left,
                             std::span<const int> deaths_left, std::span<const int> entering_left);

}  // namespace detail

}  // namespace pipesurv
