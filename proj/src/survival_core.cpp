#include "pipesurv/survival_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "pipesurv/errors.hpp"

namespace pipesurv {

void validate_sample(const SurvivalSample& sample, const CovariateSchema& schema) {
  if (!std::isfinite(sample.time) || sample.time < 0.0) {
    throw DataError("sample '" + sample.subject_id + "' has invalid time");
  }
  if (!std::isfinite(sample.entry) || sample.entry < 0.0 ||
      (sample.entry > 0.0 && !(sample.entry < sample.time))) {
    throw DataError("sample '" + sample.subject_id + "' has entry outside [0, time)");
  }
  if (sample.covariates.size() != schema.arity()) {
    throw DataError("sample '" + sample.subject_id + "' has " +
                    std::to_string(sample.covariates.size()) + " covariates, schema declares " +
                    std::to_string(schema.arity()));
  }
}

// StepFunction ---------------------------------------------------------------

StepFunction::StepFunction(std::vector<double> knots, std::vector<double> values,
                           double initial_value)
    : knots_(std::move(knots)), values_(std::move(values)), initial_value_(initial_value) {
  if (knots_.size() != values_.size()) {
    throw ConfigError("step function needs one value per knot");
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i - 1] < knots_[i])) {
      throw ConfigError("step function knots must be strictly increasing");
    }
  }
}

double StepFunction::operator()(double t) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  if (it == knots_.begin()) return initial_value_;
  return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

std::vector<double> StepFunction::evaluate(std::span<const double> times) const {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back((*this)(t));
  return out;
}

bool StepFunction::is_survival_curve() const {
  if (initial_value_ != 1.0) return false;
  double previous = 1.0;
  for (double v : values_) {
    if (v < 0.0 || v > previous) return false;
    previous = v;
  }
  return true;
}

bool StepFunction::is_cumulative_hazard() const {
  if (initial_value_ != 0.0) return false;
  double previous = 0.0;
  for (double v : values_) {
    if (v < previous) return false;
    previous = v;
  }
  return true;
}

// Risk table -----------------------------------------------------------------

RiskTable build_risk_table(std::span<const TimeEvent> responses) {
  if (responses.empty()) throw DataError("cannot build a risk table from an empty dataset");

  std::vector<TimeEvent> sorted(responses.begin(), responses.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const TimeEvent& a, const TimeEvent& b) { return a.time < b.time; });
  // Nonzero entries, ascending; those >= t are not yet at risk at t.
  std::vector<double> entries;
  for (const auto& r : sorted) {
    if (r.entry > 0.0) entries.push_back(r.entry);
  }
  std::sort(entries.begin(), entries.end());

  RiskTable table;
  const std::size_t n = sorted.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    int deaths = 0;
    while (j < n && sorted[j].time == sorted[i].time) {
      deaths += sorted[j].event ? 1 : 0;
      ++j;
    }
    if (deaths > 0) {
      const auto not_entered =
          entries.end() - std::lower_bound(entries.begin(), entries.end(), sorted[i].time);
      table.event_times.push_back(sorted[i].time);
      table.deaths.push_back(deaths);
      table.at_risk.push_back(static_cast<int>(n - i) - static_cast<int>(not_entered));
    }
    i = j;
  }
  return table;
}

RiskTable build_risk_table(std::span<const SurvivalSample> samples) {
  std::vector<TimeEvent> responses;
  responses.reserve(samples.size());
  for (const auto& s : samples) responses.push_back({s.time, s.event, s.entry});
  return build_risk_table(responses);
}

// Estimators -----------------------------------------------------------------

namespace {

// num / den for 0 < num <= den, correctly rounded to nearest even. Bits come
// from schoolbook long division; the remainder decides the sticky bit.
double ratio_to_double(std::uint64_t num, std::uint64_t den) {
  if (num == den) return 1.0;
  unsigned __int128 rem = num;
  std::uint64_t mantissa = 0;
  int bits = 0;
  int exponent = 0;
  while (bits < 54) {
    rem <<= 1;
    --exponent;
    const bool bit = rem >= den;
    if (bit) rem -= den;
    if (bits == 0 && !bit) continue;
    mantissa = (mantissa << 1) | (bit ? 1U : 0U);
    ++bits;
  }
  const bool round = mantissa & 1U;
  mantissa >>= 1;
  ++exponent;
  if (round && (rem != 0 || (mantissa & 1U))) ++mantissa;
  return std::ldexp(static_cast<double>(mantissa), exponent);
}

// Running product of (Y - d) / Y factors, kept as an exact reduced fraction
// while the denominator fits in 64 bits.
class ProductLimit {
 public:
  void multiply(int survivors, int at_risk) {
    if (exact_) {
      unsigned __int128 num = static_cast<unsigned __int128>(num_) * static_cast<unsigned>(survivors);
      unsigned __int128 den = static_cast<unsigned __int128>(den_) * static_cast<unsigned>(at_risk);
      if (num == 0) {
        num_ = 0;
        den_ = 1;
        return;
      }
      unsigned __int128 a = num, b = den;
      while (b != 0) {
        unsigned __int128 r = a % b;
        a = b;
        b = r;
      }
      num /= a;
      den /= a;
      if (den <= UINT64_MAX) {
        num_ = static_cast<std::uint64_t>(num);
        den_ = static_cast<std::uint64_t>(den);
        return;
      }
      value_ = value();  // still the exact fraction before this factor
      exact_ = false;
    }
    value_ = value_ * static_cast<double>(survivors) / static_cast<double>(at_risk);
  }

  double value() const {
    if (!exact_) return value_;
    return num_ == 0 ? 0.0 : ratio_to_double(num_, den_);
  }

 private:
  bool exact_ = true;
  std::uint64_t num_ = 1;
  std::uint64_t den_ = 1;
  double value_ = 1.0;
};

}  // namespace

StepFunction kaplan_meier(const RiskTable& table) {
  std::vector<double> values;
  values.reserve(table.size());
  ProductLimit product;
  for (std::size_t j = 0; j < table.size(); ++j) {
    product.multiply(table.at_risk[j] - table.deaths[j], table.at_risk[j]);
    values.push_back(product.value());
  }
  return StepFunction(table.event_times, std::move(values), 1.0);
}

StepFunction nelson_aalen(const RiskTable& table) {
  std::vector<double> values;
  values.reserve(table.size());
  double cumulative = 0.0;
  for (std::size_t j = 0; j < table.size(); ++j) {
    cumulative += static_cast<double>(table.deaths[j]) / static_cast<double>(table.at_risk[j]);
    values.push_back(cumulative);
  }
  return StepFunction(table.event_times, std::move(values), 0.0);
}

StepFunction chf_to_survival(const StepFunction& chf) {
  std::vector<double> values;
  values.reserve(chf.size());
  for (double mu : chf.values()) values.push_back(std::exp(-mu));
  return StepFunction(chf.knots(), std::move(values), std::exp(-chf.initial_value()));
}

// Log-rank -------------------------------------------------------------------

namespace detail {

double log_rank_from_tallies(std::span<const int> count_total, std::span<const int> deaths_total,
                             std::span<const int> entering_total, std::span<const int> count_left,
                             std::span<const int> deaths_left, std::span<const int> entering_left) {
  const bool truncated = !entering_total.empty();
  // Walk times from the largest down so the at-risk sets accumulate.
  double numerator = 0.0;
  double variance = 0.0;
  double at_risk = 0.0;
  double at_risk_left = 0.0;
  for (std::size_t j = count_total.size(); j-- > 0;) {
    // Subjects entering at this grid value are at risk only after it.
    at_risk += count_total[j] - (truncated ? entering_total[j] : 0);
    at_risk_left += count_left[j] - (truncated ? entering_left[j] : 0);
    const int d = deaths_total[j];
    if (d != 0) {
      const double deaths = d;
      const double at_risk_right = at_risk - at_risk_left;
      // (O - E) for the left group over a common denominator; the integer
      // numerator negates exactly when the groups are swapped.
      numerator += (deaths_left[j] * at_risk - at_risk_left * deaths) / at_risk;
      if (at_risk > 1.0) {
        variance += (deaths * (at_risk - deaths)) * (at_risk_left * at_risk_right) /
                    (at_risk * at_risk * (at_risk - 1.0));
      }
    }
  }
  if (!(variance > 0.0)) return 0.0;
  return numerator * numerator / variance;
}

double log_rank_from_tallies(std::span<const int> count_total, std::span<const int> deaths_total,
                             std::span<const int> count_left, std::span<const int> deaths_left) {
  return log_rank_from_tallies(count_total, deaths_total, {}, count_left, deaths_left, {});
}

}  // namespace detail

double log_rank_statistic(std::span<const TimeEvent> group_a, std::span<const TimeEvent> group_b) {
  if (group_a.empty() || group_b.empty()) return 0.0;

  std::vector<double> times;
  times.reserve(group_a.size() + group_b.size());
  bool truncated = false;
  for (auto group : {group_a, group_b}) {
    for (const auto& r : group) {
      times.push_back(r.time);
      if (r.entry > 0.0) {
        times.push_back(r.entry);
        truncated = true;
      }
    }
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  const std::size_t m = times.size();
  std::vector<int> count_total(m, 0), deaths_total(m, 0), count_a(m, 0), deaths_a(m, 0);
  std::vector<int> entering_total(truncated ? m : 0, 0), entering_a(truncated ? m : 0, 0);
  auto index_of = [&](double t) {
    return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
  };
  auto tally = [&](const TimeEvent& r, bool in_a) {
    const std::size_t k = index_of(r.time);
    ++count_total[k];
    if (in_a) ++count_a[k];
    if (r.event) {
      ++deaths_total[k];
      if (in_a) ++deaths_a[k];
    }
    if (r.entry > 0.0) {
      const std::size_t e = index_of(r.entry);
      ++entering_total[e];
      if (in_a) ++entering_a[e];
    }
  };
  for (const auto& r : group_a) tally(r, true);
  for (const auto& r : group_b) tally(r, false);
  return detail::log_rank_from_tallies(count_total, deaths_total, entering_total, count_a, deaths_a,
                                       entering_a);
}

double log_rank_statistic(std::span<const SurvivalSample> group_a,
                          std::span<const SurvivalSample> group_b) {
  auto responses = [](std::span<const SurvivalSample> group) {
    std::vector<TimeEvent> out;
    out.reserve(group.size());
    for (const auto& s : group) out.push_back({s.time, s.event, s.entry});
    return out;
  };
  const auto a = responses(group_a);
  const auto b = responses(group_b);
  return log_rank_statistic(std::span<const TimeEvent>(a), std::span<const TimeEvent>(b));
}

// Concordance ----------------------------------------------------------------

ConcordanceCounts harrell_concordance(std::span<const double> risk,
                                      std::span<const TimeEvent> responses) {
  if (risk.size() != responses.size()) {
    throw ConfigError("concordance inputs differ in length");
  }
  ConcordanceCounts counts;
  const std::size_t n = risk.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!responses[i].event) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(responses[i].time < responses[j].time)) continue;
      ++counts.permissible;
      if (risk[i] > risk[j]) {
        counts.concordant += 1.0;
      } else if (risk[i] == risk[j]) {
        counts.concordant += 0.5;
      }
    }
  }
  return counts;
}

}  // namespace pipesurv
