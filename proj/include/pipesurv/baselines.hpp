#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipesurv/errors.hpp"
#include "pipesurv/survival_core.hpp"

namespace pipesurv {

struct WeibullParams {
  double shape = 1.0;  // k
  double scale = 1.0;  // lambda, years

  bool valid() const;
};

struct WeibullFitOptions {
  // false drops censored rows before fitting (event-only mode).
  bool censored = true;
  int max_iterations = 200;
  double tolerance = 1e-12;  // on the shape, relative
};

// Raised when the profile equation has no root in the searched shape range
// or the iteration cap is hit; carries the last iterate.
class WeibullFitError : public std::runtime_error {
 public:
  WeibullFitError(const std::string& what, WeibullParams last)
      : std::runtime_error(what), last_iterate(last) {}
  WeibullParams last_iterate;
};

// Right-censored maximum likelihood for the two-parameter Weibull. The shape
// solves the profile score equation by safeguarded Newton steps inside a
// sign-change bracket; the scale follows in closed form. Needs >= 2 events
// and strictly positive times (DataError otherwise).
WeibullParams weibull_fit(std::span<const TimeEvent> samples, const WeibullFitOptions& options = {});

// MLE of the scale for a fixed shape: (sum t^k / events)^(1/k).
double weibull_profile_scale(std::span<const TimeEvent> samples, double shape);

double weibull_log_likelihood(std::span<const TimeEvent> samples, const WeibullParams& params);

double weibull_survival(const WeibullParams& params, double t);

// 1 - exp(-(h/lambda)^k + (a/lambda)^k).
double weibull_failure_probability(const WeibullParams& params, double current_age, double horizon);

struct WorkOrder;

// Failures per asset dated strictly before as_of_year; assets without work
// orders are absent from the map and score 0.
std::map<std::string, double> prior_failure_scores(std::span<const WorkOrder> work_orders,
                                                   int as_of_year);

}  // namespace pipesurv
