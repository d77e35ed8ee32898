// Copyright 2026 adherelm contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "adherelm/errors.hpp"
#include "adherelm/rng.hpp"
#include "adherelm/special_functions.hpp"
#include "adherelm/survival.hpp"

using namespace adherelm;

namespace {

SurvivalSample sample(const std::string& id, double time, bool event, int group = 0) {
  SurvivalSample s;
  s.id = id;
  s.time = time;
  s.event = event;
  s.group = group;
  return s;
}

std::vector<SurvivalSample> exponential_group(double rate, int n, double censor_at,
                                              std::uint64_t seed, int group) {
  RngStream rng(seed);
  std::vector<SurvivalSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = rng.exponential(rate);
    SurvivalSample s;
    s.id = "g" + std::to_string(group) + "_" + std::to_string(i);
    s.time = std::min(t, censor_at);
    s.event = t < censor_at;
    s.group = group;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("chi-square upper tail against reference values") {
  CHECK(chi_square_upper_tail(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(chi_square_upper_tail(1.0, 1) ==
        doctest::Approx(0.31731050786291115).epsilon(1e-10));
  CHECK(chi_square_upper_tail(5.991464547107979, 2) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(chi_square_upper_tail(10.0, 4) ==
        doctest::Approx(0.04042768199451279).epsilon(1e-10));
  CHECK(chi_square_upper_tail(100.0, 8) ==
        doctest::Approx(4.269159205144943e-18).epsilon(1e-9));
  CHECK(chi_square_upper_tail(0.0, 3) == doctest::Approx(1.0));
}

TEST_CASE("kaplan-meier matches the hand product-limit example") {
  const std::vector<SurvivalSample> samples = {
      sample("a", 1.0, true), sample("b", 2.0, false), sample("c", 3.0, true)};
  const KmCurve curve = km_estimate(samples);
  REQUIRE(curve.points.size() == 2);
  CHECK(curve.points[0].time == 1.0);
  CHECK(curve.points[0].survival == doctest::Approx(2.0 / 3.0));
  CHECK(curve.points[0].at_risk == 3);
  CHECK(curve.points[1].time == 3.0);
  CHECK(curve.points[1].survival == doctest::Approx(0.0));
  CHECK(curve.survival_at(0.5) == doctest::Approx(1.0));
  CHECK(curve.survival_at(2.5) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("kaplan-meier edge cases") {
  SUBCASE("all censored keeps the curve at one") {
    const std::vector<SurvivalSample> samples = {sample("a", 1.0, false),
                                                 sample("b", 2.0, false)};
    const KmCurve curve = km_estimate(samples);
    CHECK(curve.points.empty());
    CHECK(curve.survival_at(5.0) == doctest::Approx(1.0));
  }
  SUBCASE("single event drops to zero") {
    const KmCurve curve = km_estimate(std::vector<SurvivalSample>{sample("a", 5.0, true)});
    REQUIRE(curve.points.size() == 1);
    CHECK(curve.points[0].survival == doctest::Approx(0.0));
  }
  SUBCASE("events precede censorings at tied times") {
    const std::vector<SurvivalSample> samples = {sample("a", 2.0, true),
                                                 sample("b", 2.0, false),
                                                 sample("c", 3.0, true)};
    const KmCurve curve = km_estimate(samples);
    // The censored subject is still at risk at time 2.
    CHECK(curve.points[0].at_risk == 3);
    CHECK(curve.points[0].survival == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("curve is non-increasing and order-invariant") {
    RngStream rng(14);
    std::vector<SurvivalSample> samples;
    for (int i = 0; i < 60; ++i)
      samples.push_back(sample("s" + std::to_string(i), 0.25 + rng.uniform() * 5.0,
                               rng.bernoulli(0.7)));
    const KmCurve curve = km_estimate(samples);
    for (std::size_t i = 1; i < curve.points.size(); ++i)
      CHECK(curve.points[i].survival <= curve.points[i - 1].survival);

    std::vector<SurvivalSample> shuffled = samples;
    std::reverse(shuffled.begin(), shuffled.end());
    const KmCurve curve2 = km_estimate(shuffled);
    REQUIRE(curve2.points.size() == curve.points.size());
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      CHECK(curve2.points[i].time == curve.points[i].time);
      CHECK(curve2.points[i].survival == doctest::Approx(curve.points[i].survival));
    }
  }
  CHECK_THROWS_AS(km_estimate({}), ValidationError);
}

TEST_CASE("log-rank test") {
  SUBCASE("identical groups give statistic zero") {
    std::vector<SurvivalSample> g;
    for (int i = 0; i < 10; ++i) g.push_back(sample("x" + std::to_string(i), i + 1.0, true));
    const LogrankResult r = logrank_test({g, g});
    CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.df == 1);
    CHECK(r.p_value == doctest::Approx(1.0));
  }

  SUBCASE("six-subject case matches the hand O-E table") {
    const std::vector<SurvivalSample> g1 = {sample("a", 1.0, true), sample("b", 3.0, true),
                                            sample("c", 5.0, false)};
    const std::vector<SurvivalSample> g2 = {sample("d", 2.0, true), sample("e", 4.0, false),
                                            sample("f", 6.0, true)};
    // Hand table: O1 = 2, E1 = 0.5 + 0.4 + 0.5 = 1.4, V = 0.25 + 0.24 + 0.25.
    const double expected = (2.0 - 1.4) * (2.0 - 1.4) / 0.74;
    const LogrankResult r = logrank_test({g1, g2});
    CHECK(r.statistic == doctest::Approx(expected).epsilon(1e-10));
    CHECK(r.p_value == doctest::Approx(0.48549880264428225).epsilon(1e-8));
  }

  SUBCASE("two-group statistic equals the squared Z statistic") {
    RngStream rng(9);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<std::vector<SurvivalSample>> groups(2);
      for (int g = 0; g < 2; ++g)
        for (int i = 0; i < 25; ++i)
          groups[g].push_back(sample("g" + std::to_string(g) + "_" + std::to_string(i),
                                     0.5 + rng.uniform() * 4.0, rng.bernoulli(0.75), g));

      // Independent two-group O-E accumulation.
      std::vector<double> event_times;
      for (const auto& g : groups)
        for (const auto& s : g)
          if (s.event) event_times.push_back(s.time);
      std::sort(event_times.begin(), event_times.end());
      event_times.erase(std::unique(event_times.begin(), event_times.end()),
                        event_times.end());
      double o1 = 0.0, e1 = 0.0, v = 0.0;
      for (const double t : event_times) {
        double n1 = 0, n2 = 0, d1 = 0, d2 = 0;
        for (const auto& s : groups[0]) {
          n1 += s.time >= t ? 1 : 0;
          d1 += (s.event && s.time == t) ? 1 : 0;
        }
        for (const auto& s : groups[1]) {
          n2 += s.time >= t ? 1 : 0;
          d2 += (s.event && s.time == t) ? 1 : 0;
        }
        const double n = n1 + n2, d = d1 + d2;
        o1 += d1;
        e1 += d * n1 / n;
        if (n > 1) v += d * (n - d) / (n - 1) * n1 * n2 / (n * n);
      }
      const double z_squared = (o1 - e1) * (o1 - e1) / v;
      const LogrankResult r = logrank_test(groups);
      CHECK(r.statistic == doctest::Approx(z_squared).epsilon(1e-9));
    }
  }

  SUBCASE("statistic is invariant under group relabeling") {
    const auto g1 = exponential_group(0.3, 40, 8.0, 4, 0);
    const auto g2 = exponential_group(0.5, 40, 8.0, 5, 1);
    const auto g3 = exponential_group(0.8, 40, 8.0, 6, 2);
    const LogrankResult a = logrank_test({g1, g2, g3});
    const LogrankResult b = logrank_test({g3, g1, g2});
    CHECK(a.statistic == doctest::Approx(b.statistic).epsilon(1e-9));
    CHECK(a.df == 2);
  }

  SUBCASE("strong separation is detected") {
    const auto g1 = exponential_group(0.1, 500, 20.0, 7, 0);
    const auto g2 = exponential_group(0.3, 500, 20.0, 8, 1);
    const LogrankResult r = logrank_test({g1, g2});
    CHECK(r.p_value < 1e-6);
  }

  SUBCASE("empty group is rejected") {
    std::vector<SurvivalSample> g = {sample("a", 1.0, true)};
    CHECK_THROWS_AS(logrank_test({g, {}}), ValidationError);
  }
}

TEST_CASE("cox regression") {
  SUBCASE("exchangeable groups give a zero coefficient") {
    std::vector<SurvivalSample> samples;
    for (int i = 0; i < 3; ++i) {
      samples.push_back(sample("a" + std::to_string(i), i + 1.0, true, 0));
      samples.push_back(sample("b" + std::to_string(i), i + 1.0, true, 1));
    }
    const CoxResult fit = cox_fit_profiles(samples, {"A", "B"}, 0, false);
    REQUIRE(fit.terms.size() == 1);
    CHECK(std::abs(fit.coefficients[0]) < 1e-6);
    CHECK(fit.hazard_ratios[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(fit.loglik >= fit.null_loglik - 1e-12);
  }

  SUBCASE("zero-variance covariate raises a rank error naming the column") {
    Eigen::MatrixXd design(4, 2);
    design << 1.0, 5.0, 0.0, 5.0, 1.0, 5.0, 0.0, 5.0;
    const std::vector<double> time = {1.0, 2.0, 3.0, 4.0};
    const std::vector<char> event = {1, 1, 1, 0};
    CHECK_THROWS_WITH_AS(cox_fit(design, {"group", "constant"}, time, event),
                         doctest::Contains("constant"), ComputationError);
  }

  SUBCASE("duplicated column raises a collinearity error") {
    RngStream rng(2);
    Eigen::MatrixXd design(30, 2);
    std::vector<double> time(30);
    std::vector<char> event(30, 1);
    for (int i = 0; i < 30; ++i) {
      design(i, 0) = rng.normal(0.0, 1.0);
      design(i, 1) = design(i, 0);
      time[i] = 0.5 + rng.uniform() * 3.0;
    }
    CHECK_THROWS_WITH_AS(cox_fit(design, {"x1", "x1_copy"}, time, event),
                         doctest::Contains("collinear"), ComputationError);
  }

  SUBCASE("recovers a known log hazard ratio") {
    RngStream rng(33);
    const double true_coef = std::log(2.0);
    const int n = 600;
    Eigen::MatrixXd design(n, 1);
    std::vector<double> time(n);
    std::vector<char> event(n);
    for (int i = 0; i < n; ++i) {
      const double z = i % 2 == 0 ? 1.0 : 0.0;
      design(i, 0) = z;
      const double rate = 0.2 * std::exp(true_coef * z);
      const double t = rng.exponential(rate);
      time[i] = std::min(t, 12.0);
      event[i] = t < 12.0 ? 1 : 0;
    }
    const CoxResult fit = cox_fit(design, {"z"}, time, event);
    CHECK(std::abs(fit.coefficients[0] - true_coef) < 0.2);
    CHECK(fit.ci_low[0] < fit.hazard_ratios[0]);
    CHECK(fit.hazard_ratios[0] < fit.ci_high[0]);
    CHECK(fit.loglik >= fit.null_loglik);
  }
}

TEST_CASE("restricted mean survival time") {
  SUBCASE("identical groups have zero difference") {
    std::vector<SurvivalSample> g;
    RngStream rng(21);
    for (int i = 0; i < 50; ++i)
      g.push_back(sample("s" + std::to_string(i), 0.5 + rng.uniform() * 9.0,
                         rng.bernoulli(0.6)));
    const RmstResult r = rmst_difference(g, g, 5.0);
    CHECK(r.difference == doctest::Approx(0.0));
    CHECK(r.ci_low <= 0.0);
    CHECK(r.ci_high >= 0.0);
  }

  SUBCASE("no events gives the full rectangle") {
    std::vector<SurvivalSample> none_a, none_b;
    for (int i = 0; i < 20; ++i) {
      none_a.push_back(sample("a" + std::to_string(i), 8.0, false));
      none_b.push_back(sample("b" + std::to_string(i), 8.0, false));
    }
    const RmstResult r = rmst_difference(none_a, none_b, 7.0);
    CHECK(r.rmst_a == doctest::Approx(7.0));
    CHECK(r.se_a == doctest::Approx(0.0));
  }

  SUBCASE("with no censoring the RMST is the mean truncated time") {
    RngStream rng(77);
    std::vector<SurvivalSample> g;
    double mean_truncated = 0.0;
    const double tau = 4.0;
    for (int i = 0; i < 200; ++i) {
      const double t = 0.1 + rng.uniform() * 9.0;
      g.push_back(sample("s" + std::to_string(i), t, true));
      mean_truncated += std::min(t, tau);
    }
    mean_truncated /= 200.0;
    CHECK(rmst(km_estimate(g), tau) == doctest::Approx(mean_truncated).epsilon(1e-10));
  }

  SUBCASE("monotone in tau and bounded by tau") {
    const auto g = exponential_group(0.4, 100, 9.0, 3, 0);
    const KmCurve curve = km_estimate(g);
    double prev = 0.0;
    for (double tau = 1.0; tau <= 8.0; tau += 1.0) {
      const double value = rmst(curve, tau);
      CHECK(value >= prev);
      CHECK(value <= tau + 1e-12);
      prev = value;
    }
  }

  SUBCASE("tau beyond follow-up demands an explicit truncation choice") {
    const std::vector<SurvivalSample> a = {sample("a", 2.0, true), sample("b", 3.0, false)};
    const std::vector<SurvivalSample> b = {sample("c", 9.0, true), sample("d", 8.0, false)};
    CHECK_THROWS_WITH_AS(rmst_difference(a, b, 7.0), doctest::Contains("truncat"),
                         ComputationError);
    const RmstResult r = rmst_difference(a, b, 7.0, true);
    CHECK(std::isfinite(r.difference));
  }

  SUBCASE("exponential groups match the closed-form difference") {
    const auto a = exponential_group(0.1, 5000, 40.0, 1000, 0);
    const auto b = exponential_group(0.2, 5000, 40.0, 1001, 1);
    const RmstResult r = rmst_difference(a, b, 7.0);
    const double analytic = 5.034146962085904 - 3.7670151802919674;
    CHECK(std::abs(r.difference - analytic) < 0.1);
    CHECK(r.ci_low < r.difference);
    CHECK(r.difference < r.ci_high);
  }
}
