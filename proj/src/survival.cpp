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

#include "adherelm/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "adherelm/errors.hpp"
#include "adherelm/special_functions.hpp"

namespace adherelm {

namespace {

// Sort order for risk-set construction: time ascending, events before
// censorings on ties, id as the final deterministic key.
std::vector<std::size_t> risk_set_order(std::span<const SurvivalSample> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].time != samples[b].time) return samples[a].time < samples[b].time;
    if (samples[a].event != samples[b].event) return samples[a].event;
    return samples[a].id < samples[b].id;
  });
  return order;
}

}  // namespace

double KmCurve::survival_at(double t) const {
  double s = 1.0;
  for (const KmPoint& p : points) {
    if (p.time > t) break;
    s = p.survival;
  }
  return s;
}

KmCurve km_estimate(std::span<const SurvivalSample> samples) {
  if (samples.empty()) throw ValidationError("km_estimate: empty sample list");
  for (const SurvivalSample& s : samples)
    if (!(s.time > 0.0)) throw ValidationError("km_estimate: times must be positive");

  const std::vector<std::size_t> order = risk_set_order(samples);
  KmCurve curve;
  curve.n = static_cast<long>(samples.size());
  curve.max_time = 0.0;
  for (const SurvivalSample& s : samples) curve.max_time = std::max(curve.max_time, s.time);

  long at_risk = curve.n;
  double survival = 1.0;
  double greenwood_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = samples[order[i]].time;
    long deaths = 0;
    long leaving = 0;
    while (i < order.size() && samples[order[i]].time == t) {
      deaths += samples[order[i]].event ? 1 : 0;
      ++leaving;
      ++i;
    }
    if (deaths > 0) {
      KmPoint point;
      point.time = t;
      point.at_risk = at_risk;
      point.events = deaths;
      if (deaths == at_risk) {
        survival = 0.0;
        greenwood_sum = 0.0;  // variance degenerates with the curve
      } else {
        survival *= 1.0 - static_cast<double>(deaths) / at_risk;
        greenwood_sum += static_cast<double>(deaths) /
                         (static_cast<double>(at_risk) * (at_risk - deaths));
      }
      point.survival = survival;
      point.greenwood_var = survival * survival * greenwood_sum;
      curve.points.push_back(point);
    }
    at_risk -= leaving;
  }
  return curve;
}

LogrankResult logrank_test(const std::vector<std::vector<SurvivalSample>>& groups) {
  const int G = static_cast<int>(groups.size());
  if (G < 2) throw ValidationError("logrank_test: at least two groups required");
  for (int g = 0; g < G; ++g)
    if (groups[g].empty())
      throw ValidationError("logrank_test: group " + std::to_string(g) + " is empty");

  // Pooled distinct event times.
  std::vector<double> event_times;
  for (const auto& group : groups)
    for (const SurvivalSample& s : group)
      if (s.event) event_times.push_back(s.time);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());

  Eigen::VectorXd observed = Eigen::VectorXd::Zero(G);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(G);
  Eigen::MatrixXd covariance = Eigen::MatrixXd::Zero(G, G);

  for (const double t : event_times) {
    Eigen::VectorXd at_risk(G), deaths(G);
    for (int g = 0; g < G; ++g) {
      long n_g = 0, d_g = 0;
      for (const SurvivalSample& s : groups[g]) {
        if (s.time >= t) ++n_g;
        if (s.event && s.time == t) ++d_g;
      }
      at_risk[g] = static_cast<double>(n_g);
      deaths[g] = static_cast<double>(d_g);
    }
    const double n = at_risk.sum();
    const double d = deaths.sum();
    if (n <= 0.0 || d <= 0.0) continue;
    observed += deaths;
    expected += d / n * at_risk;
    if (n > 1.0) {
      const double f = d * (n - d) / (n - 1.0);
      for (int g = 0; g < G; ++g)
        for (int h = 0; h < G; ++h) {
          const double same = g == h ? at_risk[g] / n : 0.0;
          covariance(g, h) += f * (same - at_risk[g] * at_risk[h] / (n * n));
        }
    }
  }

  const Eigen::VectorXd diff = observed - expected;
  // The covariance is singular by construction (rows sum to zero); combine
  // through the Moore-Penrose inverse.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(covariance);
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  LogrankResult out;
  out.statistic = std::max(0.0, diff.dot(pinv * diff));
  out.df = G - 1;
  out.p_value = chi_square_upper_tail(out.statistic, static_cast<double>(out.df));
  return out;
}

namespace {

struct EfronTerms {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;  // negative Hessian
};

EfronTerms efron_partial_loglik(const Eigen::MatrixXd& x, std::span<const double> time,
                                std::span<const char> event, const Eigen::VectorXd& beta,
                                bool with_derivatives) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  EfronTerms terms;
  terms.gradient = Eigen::VectorXd::Zero(p);
  terms.information = Eigen::MatrixXd::Zero(p, p);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });

  const Eigen::VectorXd eta = x * beta;
  const Eigen::VectorXd weight = eta.array().exp();

  // Accumulate risk-set sums walking from the largest time down.
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  std::size_t idx = 0;
  // Distinct times descending; process the death set at each.
  while (idx < order.size()) {
    const double t = time[order[idx]];
    std::vector<std::size_t> deaths;
    while (idx < order.size() && time[order[idx]] == t) {
      const std::size_t i = order[idx];
      s0 += weight[i];
      if (with_derivatives) {
        s1 += weight[i] * x.row(i).transpose();
        s2 += weight[i] * (x.row(i).transpose() * x.row(i));
      }
      if (event[i]) deaths.push_back(i);
      ++idx;
    }
    if (deaths.empty()) continue;
    const double d = static_cast<double>(deaths.size());
    double d0 = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
    for (const std::size_t i : deaths) {
      terms.loglik += eta[i];
      d0 += weight[i];
      if (with_derivatives) {
        terms.gradient += x.row(i).transpose();
        d1 += weight[i] * x.row(i).transpose();
        d2 += weight[i] * (x.row(i).transpose() * x.row(i));
      }
    }
    for (std::size_t l = 0; l < deaths.size(); ++l) {
      const double frac = static_cast<double>(l) / d;
      const double denom = s0 - frac * d0;
      terms.loglik -= std::log(denom);
      if (with_derivatives) {
        const Eigen::VectorXd z = (s1 - frac * d1) / denom;
        terms.gradient -= z;
        terms.information += (s2 - frac * d2) / denom - z * z.transpose();
      }
    }
  }
  return terms;
}

}  // namespace

CoxResult cox_fit(const Eigen::MatrixXd& design, const std::vector<std::string>& terms,
                  std::span<const double> time, std::span<const char> event) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (static_cast<Eigen::Index>(terms.size()) != p)
    throw ValidationError("cox_fit: one term name per design column required");
  if (static_cast<Eigen::Index>(time.size()) != n ||
      static_cast<Eigen::Index>(event.size()) != n)
    throw ValidationError("cox_fit: design/time/event size mismatch");
  if (n == 0) throw ValidationError("cox_fit: empty sample");
  for (const double t : time)
    if (!(t > 0.0)) throw ValidationError("cox_fit: times must be positive");

  long n_events = 0;
  for (const char e : event) n_events += e ? 1 : 0;
  if (n_events == 0) throw ComputationError("cox_fit: no events in the sample");

  // Rank screen on the centered Gram matrix; names the offending column.
  Eigen::MatrixXd centered = design;
  for (Eigen::Index c = 0; c < p; ++c) centered.col(c).array() -= design.col(c).mean();
  for (Eigen::Index c = 0; c < p; ++c)
    if (centered.col(c).norm() < 1e-12 * std::sqrt(static_cast<double>(n)) + 1e-300)
      throw ComputationError("cox_fit: column '" + terms[c] + "' has zero variance");
  {
    const Eigen::MatrixXd gram = centered.transpose() * centered;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-10);
    if (lu.rank() < p) {
      const auto perm = lu.permutationQ().indices();
      const Eigen::Index bad = perm[lu.rank()];
      throw ComputationError("cox_fit: column '" + terms[bad] +
                             "' is collinear with the other columns");
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  EfronTerms current = efron_partial_loglik(design, time, event, beta, true);
  const double null_loglik = current.loglik;
  std::vector<double> trace{current.loglik};

  constexpr int kMaxIter = 50;
  constexpr double kTol = 1e-9;
  bool converged = false;
  int iterations = 0;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    Eigen::MatrixXd info = current.information;
    Eigen::VectorXd direction;
    double ridge = 0.0;
    for (;;) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
      if (ldlt.info() == Eigen::Success) {
        direction = ldlt.solve(current.gradient);
        if (direction.allFinite()) break;
      }
      ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
      if (ridge > 1e8)
        throw ComputationError("cox_fit: information matrix is numerically singular");
      info = current.information;
      info.diagonal().array() += ridge;
    }

    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h, step *= 0.5) {
      const Eigen::VectorXd candidate = beta + step * direction;
      const EfronTerms cand = efron_partial_loglik(design, time, event, candidate, true);
      if (std::isfinite(cand.loglik) && cand.loglik >= current.loglik) {
        const double gain = cand.loglik - current.loglik;
        beta = candidate;
        current = cand;
        trace.push_back(current.loglik);
        iterations = iter + 1;
        accepted = true;
        if (gain < kTol * (1.0 + std::abs(current.loglik))) converged = true;
        break;
      }
    }
    if (!accepted) {
      converged = current.gradient.lpNorm<Eigen::Infinity>() < 1e-6;
      break;
    }
    if (converged) break;
  }

  if (!converged) {
    std::ostringstream msg;
    msg << "cox_fit: Newton-Raphson did not converge in " << kMaxIter
        << " iterations; loglik trace:";
    for (const double l : trace) msg << " " << l;
    throw ComputationError(msg.str());
  }

  const Eigen::MatrixXd vcov = current.information.ldlt().solve(
      Eigen::MatrixXd::Identity(p, p));

  CoxResult out;
  out.terms = terms;
  out.coefficients = beta;
  out.standard_errors = vcov.diagonal().array().max(0.0).sqrt();
  out.hazard_ratios = beta.array().exp();
  out.ci_low = (beta.array() - 1.96 * out.standard_errors.array()).exp();
  out.ci_high = (beta.array() + 1.96 * out.standard_errors.array()).exp();
  out.loglik = current.loglik;
  out.null_loglik = null_loglik;
  out.n_iterations = iterations;
  return out;
}

CoxResult cox_fit_profiles(std::span<const SurvivalSample> samples,
                           const std::vector<std::string>& group_names,
                           int reference_group, bool adjust_covariates) {
  if (samples.empty()) throw ValidationError("cox_fit_profiles: empty sample");
  const int G = static_cast<int>(group_names.size());
  if (reference_group < 0 || reference_group >= G)
    throw ValidationError("cox_fit_profiles: reference group out of range");

  std::vector<std::string> terms;
  for (int g = 0; g < G; ++g)
    if (g != reference_group) terms.push_back("profile_" + group_names[g]);
  if (adjust_covariates) {
    terms.push_back("age");
    terms.push_back("gender_f");
    terms.push_back("mcs");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, terms.size());
  std::vector<double> time(samples.size());
  std::vector<char> event(samples.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const SurvivalSample& s = samples[i];
    if (s.group < 0 || s.group >= G)
      throw ValidationError("cox_fit_profiles: sample group out of range");
    int col = 0;
    for (int g = 0; g < G; ++g) {
      if (g == reference_group) continue;
      design(i, col++) = s.group == g ? 1.0 : 0.0;
    }
    if (adjust_covariates) {
      design(i, col++) = s.age;
      design(i, col++) = s.gender_f;
      design(i, col++) = s.mcs;
    }
    time[i] = s.time;
    event[i] = s.event ? 1 : 0;
  }
  return cox_fit(design, terms, time, event);
}

double rmst(const KmCurve& curve, double tau) {
  if (!(tau > 0.0)) throw ValidationError("rmst: tau must be positive");
  double area = 0.0;
  double prev_time = 0.0;
  double prev_survival = 1.0;
  for (const KmPoint& p : curve.points) {
    if (p.time > tau) break;
    area += prev_survival * (p.time - prev_time);
    prev_time = p.time;
    prev_survival = p.survival;
  }
  area += prev_survival * (tau - prev_time);
  return area;
}

namespace {

// Variance of the KM area on [0, tau] from Greenwood increments:
// sum over event times t_i <= tau of A_i^2 d_i / (n_i (n_i - d_i)), where
// A_i is the curve area from t_i to tau.
double rmst_variance(const KmCurve& curve, double tau) {
  std::vector<const KmPoint*> in_range;
  for (const KmPoint& p : curve.points)
    if (p.time <= tau) in_range.push_back(&p);

  double variance = 0.0;
  double tail_area = 0.0;  // area from the current point's time to tau
  double next_time = tau;
  for (auto it = in_range.rbegin(); it != in_range.rend(); ++it) {
    const KmPoint& p = **it;
    tail_area += p.survival * (next_time - p.time);
    next_time = p.time;
    if (p.at_risk > p.events)
      variance += tail_area * tail_area * static_cast<double>(p.events) /
                  (static_cast<double>(p.at_risk) * (p.at_risk - p.events));
  }
  return variance;
}

}  // namespace

RmstResult rmst_difference(std::span<const SurvivalSample> samples_a,
                           std::span<const SurvivalSample> samples_b, double tau,
                           bool truncate_at_last_event) {
  if (!(tau > 0.0)) throw ValidationError("rmst_difference: tau must be positive");
  const KmCurve curve_a = km_estimate(samples_a);
  const KmCurve curve_b = km_estimate(samples_b);
  if (!truncate_at_last_event) {
    for (const auto* curve : {&curve_a, &curve_b}) {
      if (tau > curve->max_time) {
        std::ostringstream msg;
        msg << "rmst_difference: tau=" << tau
            << " lies beyond a group's last observed time (" << curve->max_time
            << "); lower tau or opt into truncation at the last event time "
               "(truncate_at_last_event)";
        throw ComputationError(msg.str());
      }
    }
  }

  RmstResult out;
  out.tau = tau;
  out.rmst_a = rmst(curve_a, tau);
  out.rmst_b = rmst(curve_b, tau);
  out.se_a = std::sqrt(rmst_variance(curve_a, tau));
  out.se_b = std::sqrt(rmst_variance(curve_b, tau));
  out.difference = out.rmst_a - out.rmst_b;
  out.se_difference = std::sqrt(out.se_a * out.se_a + out.se_b * out.se_b);
  out.ci_low = out.difference - 1.96 * out.se_difference;
  out.ci_high = out.difference + 1.96 * out.se_difference;
  return out;
}

}  // namespace adherelm
