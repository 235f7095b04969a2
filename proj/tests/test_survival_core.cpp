#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pipesurv/errors.hpp"
#include "pipesurv/random.hpp"
#include "pipesurv/survival_core.hpp"

using namespace pipesurv;

namespace {

std::vector<TimeEvent> three_subjects() { return {{1, true}, {2, false}, {3, true}}; }

}  // namespace

TEST_CASE("risk table of a three-subject example") {
  const auto table = build_risk_table(three_subjects());
  CHECK(table.event_times == std::vector<double>{1, 3});
  CHECK(table.deaths == std::vector<int>{1, 1});
  CHECK(table.at_risk == std::vector<int>{3, 1});
}

TEST_CASE("Kaplan-Meier and Nelson-Aalen hand values") {
  const auto table = build_risk_table(three_subjects());
  const auto km = kaplan_meier(table);
  CHECK(km(0.5) == 1.0);
  CHECK(km(1.0) == 2.0 / 3.0);
  CHECK(km(2.0) == 2.0 / 3.0);
  CHECK(km(3.0) == 0.0);
  CHECK(km(99.0) == 0.0);

  const auto na = nelson_aalen(table);
  CHECK(na(0.5) == 0.0);
  CHECK(na(1.0) == 1.0 / 3.0);
  CHECK(na(3.0) == 1.0 / 3.0 + 1.0);
  CHECK(na(3.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("chf_to_survival uses exp of minus the cumulative hazard") {
  const auto s = chf_to_survival(nelson_aalen(build_risk_table(three_subjects())));
  CHECK(s(1.0) == std::exp(-1.0 / 3.0));
  const StepFunction half({2.0}, {std::log(2.0)}, 0.0);
  CHECK(chf_to_survival(half)(2.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(chf_to_survival(half)(1.0) == 1.0);
}

TEST_CASE("no events gives a flat curve and an empty table") {
  const std::vector<TimeEvent> r{{1, false}, {4, false}};
  const auto table = build_risk_table(r);
  CHECK(table.empty());
  CHECK(kaplan_meier(table)(10.0) == 1.0);
  CHECK(nelson_aalen(table)(10.0) == 0.0);
}

TEST_CASE("empty input is rejected") {
  CHECK_THROWS_AS(build_risk_table(std::span<const TimeEvent>{}), DataError);
}

TEST_CASE("sample validation") {
  CovariateSchema schema{{{"x", FeatureKind::numeric, {}}}};
  SurvivalSample ok{"a", 3.0, true, {1.0}};
  CHECK_NOTHROW(validate_sample(ok, schema));
  auto bad_time = ok;
  bad_time.time = -1.0;
  CHECK_THROWS_AS(validate_sample(bad_time, schema), DataError);
  auto bad_arity = ok;
  bad_arity.covariates = {1.0, 2.0};
  CHECK_THROWS_AS(validate_sample(bad_arity, schema), DataError);
  auto bad_entry = ok;
  bad_entry.entry = 3.0;
  CHECK_THROWS_AS(validate_sample(bad_entry, schema), DataError);
  bad_entry.entry = 2.5;
  CHECK_NOTHROW(validate_sample(bad_entry, schema));
}

TEST_CASE("KM is bitwise the exact rational on random instances with n <= 20") {
  RandomStream rng(11);
  for (int rep = 0; rep < 5000; ++rep) {
    const std::size_t n = 1 + rng.bounded(20);
    const auto r = oracle::random_responses(rng, n, 1 + static_cast<int>(rng.bounded(20)));
    const auto table = build_risk_table(r);
    const auto km = kaplan_meier(table);
    const auto na = nelson_aalen(table);
    const auto expected = oracle::km_exact(r);
    const auto expected_na = oracle::na_sum(r);
    const auto times = oracle::event_times(r);
    REQUIRE(table.event_times == times);
    for (std::size_t j = 0; j < times.size(); ++j) {
      CHECK(table.at_risk[j] == oracle::at_risk(r, times[j]));
      CHECK(table.deaths[j] == oracle::deaths(r, times[j]));
      CHECK(na(times[j]) == expected_na[j]);
      CHECK(km(times[j]) == oracle::to_double(expected[j]));
    }
  }
}

TEST_CASE("KM stays exact past 53-bit denominators") {
  // One death at each prime risk-set size, with censoring in between: the
  // product's denominator is the product of the primes, about 2^62.
  const std::vector<int> primes{97, 89, 83, 79, 73, 71, 67, 61, 59, 53};
  std::vector<TimeEvent> r;
  for (std::size_t k = 0; k < primes.size(); ++k) {
    const double t = 2.0 * static_cast<double>(k) + 1.0;
    r.push_back({t, true});
    const int next = k + 1 < primes.size() ? primes[k + 1] : 0;
    for (int c = 0; c < primes[k] - 1 - next; ++c) r.push_back({t + 0.5, false});
  }
  const auto table = build_risk_table(r);
  REQUIRE(table.at_risk == primes);
  const auto km = kaplan_meier(table);
  const auto expected = oracle::km_exact(r);
  CHECK(expected.back().den > (static_cast<unsigned __int128>(1) << 53));
  for (std::size_t k = 0; k < primes.size(); ++k) {
    CHECK(km(2.0 * static_cast<double>(k) + 1.0) == oracle::to_double(expected[k]));
  }
}

TEST_CASE("KM carries on in floating point once the exact denominator overflows") {
  // Twenty prime risk-set sizes push the denominator far past 2^64.
  const std::vector<int> primes{997, 991, 983, 977, 971, 967, 953, 947, 941, 937,
                                929, 919, 911, 907, 887, 883, 881, 877, 863, 859};
  std::vector<TimeEvent> r;
  for (std::size_t k = 0; k < primes.size(); ++k) {
    const double t = static_cast<double>(k) + 1.0;
    r.push_back({t, true});
    const int next = k + 1 < primes.size() ? primes[k + 1] : 0;
    for (int c = 0; c < primes[k] - 1 - next; ++c) r.push_back({t + 0.5, false});
  }
  const auto table = build_risk_table(r);
  REQUIRE(table.at_risk == primes);
  const auto km = kaplan_meier(table);
  CHECK(km.is_survival_curve());
  double product = 1.0;
  for (std::size_t k = 0; k < primes.size(); ++k) {
    product *= static_cast<double>(primes[k] - 1) / static_cast<double>(primes[k]);
    CHECK(km(static_cast<double>(k) + 1.0) == doctest::Approx(product).epsilon(1e-14));
  }
}

TEST_CASE("estimator properties on random instances") {
  RandomStream rng(12);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.bounded(60);
    auto r = oracle::random_responses(rng, n, 1 + static_cast<int>(rng.bounded(30)), rng.uniform());
    const auto table = build_risk_table(r);
    const auto km = kaplan_meier(table);
    const auto na = nelson_aalen(table);
    CHECK(km.is_survival_curve());
    CHECK(na.is_cumulative_hazard());
    // exp(-mu) dominates the product limit because 1 - x <= exp(-x).
    for (double t : table.event_times) CHECK(std::exp(-na(t)) >= km(t));

    // A censored subject after the last event changes no d_j and adds one to
    // every Y_j, so the KM can only rise.
    double last = 0.0;
    for (const auto& x : r) last = std::max(last, x.time);
    auto extended = r;
    extended.push_back({last + 1.0, false});
    const auto table2 = build_risk_table(extended);
    REQUIRE(table2.event_times == table.event_times);
    CHECK(table2.deaths == table.deaths);
    const auto km2 = kaplan_meier(table2);
    for (std::size_t j = 0; j < table.size(); ++j) {
      CHECK(table2.at_risk[j] == table.at_risk[j] + 1);
      CHECK(km2(table.event_times[j]) >= km(table.event_times[j]));
    }
  }
}

TEST_CASE("without censoring the KM is the empirical survival fraction") {
  RandomStream rng(13);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.bounded(40);
    auto r = oracle::random_responses(rng, n, 15, 1.0);
    const auto km = kaplan_meier(build_risk_table(r));
    for (double t : oracle::event_times(r)) {
      int beyond = 0;
      for (const auto& x : r) beyond += x.time > t ? 1 : 0;
      CHECK(km(t) == static_cast<double>(beyond) / static_cast<double>(n));
    }
  }
}

TEST_CASE("delayed entry removes subjects from early risk sets") {
  // b enters at 2, so it is not at risk at 1 or 2.
  const std::vector<TimeEvent> r{{1, true, 0}, {3, true, 2}, {2, true, 0}, {4, false, 0}};
  const auto table = build_risk_table(r);
  CHECK(table.event_times == std::vector<double>{1, 2, 3});
  CHECK(table.at_risk == std::vector<int>{3, 2, 2});
  CHECK(kaplan_meier(table)(3.0) == (2.0 / 3.0) * (1.0 / 2.0) * (1.0 / 2.0));

  RandomStream rng(14);
  for (int rep = 0; rep < 500; ++rep) {
    auto resp = oracle::random_responses(rng, 1 + rng.bounded(30), 20);
    for (auto& x : resp) {
      if (rng.uniform() < 0.5) x.entry = std::floor(rng.uniform() * x.time);
    }
    const auto t = build_risk_table(resp);
    for (std::size_t j = 0; j < t.size(); ++j) {
      CHECK(t.at_risk[j] == oracle::at_risk(resp, t.event_times[j]));
    }
  }
}

TEST_CASE("log-rank hand value and degenerate cases") {
  const std::vector<TimeEvent> a{{1, true}, {2, true}};
  const std::vector<TimeEvent> b{{10, true}, {11, true}};
  // O - E = 1/2 + 2/3, V = 1/4 + 2/9.
  CHECK(log_rank_statistic(a, b) == doctest::Approx(49.0 / 17.0).epsilon(1e-14));
  CHECK(log_rank_statistic(a, std::vector<TimeEvent>{}) == 0.0);
  const std::vector<TimeEvent> censored{{5, false}, {6, false}};
  CHECK(log_rank_statistic(censored, censored) == 0.0);
}

TEST_CASE("log-rank matches the textbook sum and is exactly symmetric") {
  RandomStream rng(15);
  for (int rep = 0; rep < 2000; ++rep) {
    auto a = oracle::random_responses(rng, 1 + rng.bounded(15), 10);
    auto b = oracle::random_responses(rng, 1 + rng.bounded(15), 10);
    if (rep % 2 == 0) {
      for (auto* g : {&a, &b}) {
        for (auto& x : *g) {
          if (rng.uniform() < 0.4) x.entry = std::floor(rng.uniform() * x.time);
        }
      }
    }
    const double s = log_rank_statistic(a, b);
    CHECK(s >= 0.0);
    CHECK(s == log_rank_statistic(b, a));
    CHECK(oracle::close(s, oracle::log_rank(a, b), 1e-11));
  }
}

TEST_CASE("zero entries leave every result unchanged") {
  RandomStream rng(16);
  const auto a = oracle::random_responses(rng, 12, 8);
  const auto b = oracle::random_responses(rng, 9, 8);
  std::vector<SurvivalSample> sa, sb;
  for (const auto& x : a) sa.push_back({"", x.time, x.event, {}});
  for (const auto& x : b) sb.push_back({"", x.time, x.event, {}});
  CHECK(log_rank_statistic(sa, sb) == log_rank_statistic(a, b));
}

TEST_CASE("Harrell concordance against pair enumeration") {
  RandomStream rng(17);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + rng.bounded(30);
    const auto r = oracle::random_responses(rng, n, 8);
    std::vector<double> risk(n);
    for (auto& v : risk) v = static_cast<double>(rng.bounded(5));
    double concordant = 0.0;
    std::size_t usable = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        // the earlier time must be an observed failure
        if (r[i].time < r[j].time && r[i].event) {
          ++usable;
          concordant += risk[i] > risk[j] ? 1.0 : (risk[i] == risk[j] ? 0.5 : 0.0);
        }
      }
    }
    const auto c = harrell_concordance(risk, r);
    CHECK(c.permissible == usable);
    CHECK(c.concordant == concordant);
  }
}
