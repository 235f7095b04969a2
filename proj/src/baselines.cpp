#include "pipesurv/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pipesurv/data.hpp"

namespace pipesurv {

bool WeibullParams::valid() const {
  return std::isfinite(shape) && std::isfinite(scale) && shape > 0.0 && scale > 0.0;
}

namespace {

struct ProfileData {
  std::vector<double> log_scaled;  // ln(t / t_max) for every row
  std::vector<bool> event;
  double log_t_max = 0.0;
  double events = 0.0;
  double mean_event_log_scaled = 0.0;
};

ProfileData prepare(std::span<const TimeEvent> samples) {
  ProfileData data;
  double t_max = 0.0;
  for (const auto& s : samples) {
    if (!(s.time > 0.0) || !std::isfinite(s.time)) {
      throw DataError("Weibull fit needs strictly positive finite times");
    }
    t_max = std::max(t_max, s.time);
  }
  data.log_t_max = std::log(t_max);
  double event_log_sum = 0.0;
  for (const auto& s : samples) {
    const double l = std::log(s.time) - data.log_t_max;
    data.log_scaled.push_back(l);
    data.event.push_back(s.event);
    if (s.event) {
      data.events += 1.0;
      event_log_sum += l;
    }
  }
  if (data.events > 0.0) data.mean_event_log_scaled = event_log_sum / data.events;
  return data;
}

// Profile score g(k) = sum s^k ln s / sum s^k - 1/k - mean_events ln s on
// times scaled by their maximum (g is scale invariant), with derivative.
// g is increasing in k.
struct Score {
  double value;
  double slope;
};

Score profile_score(const ProfileData& d, double k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (double l : d.log_scaled) {
    const double w = std::exp(k * l);
    s0 += w;
    s1 += w * l;
    s2 += w * l * l;
  }
  const double mean = s1 / s0;
  return {mean - 1.0 / k - d.mean_event_log_scaled, s2 / s0 - mean * mean + 1.0 / (k * k)};
}

double scale_for_shape(const ProfileData& d, double k) {
  double s0 = 0.0;
  for (double l : d.log_scaled) s0 += std::exp(k * l);
  return std::exp(d.log_t_max + std::log(s0 / d.events) / k);
}

}  // namespace

double weibull_profile_scale(std::span<const TimeEvent> samples, double shape) {
  if (!(shape > 0.0)) throw ConfigError("Weibull shape must be positive");
  const ProfileData d = prepare(samples);
  if (d.events < 1.0) throw DataError("Weibull scale needs at least one event");
  return scale_for_shape(d, shape);
}

WeibullParams weibull_fit(std::span<const TimeEvent> samples, const WeibullFitOptions& options) {
  std::vector<TimeEvent> used;
  for (const auto& s : samples) {
    if (options.censored || s.event) used.push_back(s);
  }
  const ProfileData d = prepare(used);
  if (d.events < 2.0) throw DataError("Weibull fit needs at least 2 events");

  constexpr double kMinShape = 1e-3;
  constexpr double kMaxShape = 1e3;
  double lo = 1.0, hi = 1.0;
  while (profile_score(d, lo).value > 0.0) {
    lo /= 2.0;
    if (lo < kMinShape) {
      throw WeibullFitError("Weibull shape below search range", {lo, scale_for_shape(d, lo)});
    }
  }
  while (profile_score(d, hi).value < 0.0) {
    hi *= 2.0;
    if (hi > kMaxShape) {
      // Degenerate samples (e.g. all event times equal) drive k to infinity.
      throw WeibullFitError("Weibull shape diverges; no finite maximum likelihood estimate",
                            {hi, scale_for_shape(d, hi)});
    }
  }

  double k = (lo + hi) / 2.0;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Score g = profile_score(d, k);
    if (g.value == 0.0) return {k, scale_for_shape(d, k)};
    if (g.value < 0.0) {
      lo = k;
    } else {
      hi = k;
    }
    double next = k - g.value / g.slope;
    if (!(next > lo && next < hi)) next = (lo + hi) / 2.0;
    if (std::abs(next - k) <= options.tolerance * k || hi - lo <= options.tolerance * k) {
      return {next, scale_for_shape(d, next)};
    }
    k = next;
  }
  throw WeibullFitError("Weibull fit did not converge", {k, scale_for_shape(d, k)});
}

double weibull_log_likelihood(std::span<const TimeEvent> samples, const WeibullParams& params) {
  const double k = params.shape, lambda = params.scale;
  double ll = 0.0;
  for (const auto& s : samples) {
    const double z = s.time / lambda;
    if (s.event) ll += std::log(k / lambda) + (k - 1.0) * std::log(z);
    ll -= std::pow(z, k);
  }
  return ll;
}

double weibull_survival(const WeibullParams& params, double t) {
  if (t <= 0.0) return 1.0;
  return std::exp(-std::pow(t / params.scale, params.shape));
}

double weibull_failure_probability(const WeibullParams& params, double current_age, double horizon) {
  if (!params.valid()) throw ConfigError("invalid Weibull parameters");
  if (!(current_age >= 0.0)) throw ConfigError("current age must be >= 0");
  if (horizon < current_age) throw ConfigError("horizon precedes current age");
  const double gap = std::pow(horizon / params.scale, params.shape) -
                     std::pow(current_age / params.scale, params.shape);
  return std::clamp(-std::expm1(-gap), 0.0, 1.0);
}

std::map<std::string, double> prior_failure_scores(std::span<const WorkOrder> work_orders,
                                                   int as_of_year) {
  std::map<std::string, double> scores;
  for (const auto& wo : work_orders) {
    if (wo.failure_year < as_of_year) scores[wo.asset_id] += 1.0;
  }
  return scores;
}

}  // namespace pipesurv
