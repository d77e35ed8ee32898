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

#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace adherelm {

/// One subject in the survival analysis. Time is measured in years from the
/// end of the observation period (landmark clock) and must be positive.
struct SurvivalSample {
  std::string id;
  double time = 0.0;
  bool event = false;
  int group = 0;       // index into the caller's group labels
  double age = 0.0;
  double gender_f = 0.0;
  double mcs = 0.0;    // comorbidity summary over the observation year
};

struct KmPoint {
  double time = 0.0;
  double survival = 0.0;
  long at_risk = 0;
  long events = 0;
  double greenwood_var = 0.0;
};

/// Product-limit curve: right-continuous step function with one point per
/// distinct event time. max_time is the largest observed time (event or
/// censoring).
struct KmCurve {
  std::vector<KmPoint> points;
  long n = 0;
  double max_time = 0.0;

  double survival_at(double t) const;
};

/// Kaplan-Meier estimator. Subjects censored at an event time are removed
/// after the event (events first on ties).
KmCurve km_estimate(std::span<const SurvivalSample> samples);

struct LogrankResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 0.0;
};

/// G-group log-rank test: observed-minus-expected against the pooled
/// hypergeometric covariance, combined through a generalized inverse.
/// Every group must be nonempty.
LogrankResult logrank_test(const std::vector<std::vector<SurvivalSample>>& groups);

struct CoxResult {
  std::vector<std::string> terms;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd hazard_ratios;
  Eigen::VectorXd ci_low;   // 95% on the hazard-ratio scale
  Eigen::VectorXd ci_high;
  double loglik = 0.0;
  double null_loglik = 0.0;
  int n_iterations = 0;
};

/// Cox proportional hazards with the Efron correction for tied event times,
/// maximized by Newton-Raphson with step halving. Throws ComputationError on
/// non-convergence (with the iteration trace in the message) and names the
/// offending column on rank deficiency.
CoxResult cox_fit(const Eigen::MatrixXd& design, const std::vector<std::string>& terms,
                  std::span<const double> time, std::span<const char> event);

/// Convenience wrapper building the profile-dummy design (reference group
/// absorbed into the baseline) plus age/gender/MCS adjustment covariates.
CoxResult cox_fit_profiles(std::span<const SurvivalSample> samples,
                           const std::vector<std::string>& group_names,
                           int reference_group, bool adjust_covariates = true);

struct RmstResult {
  double tau = 0.0;
  double rmst_a = 0.0;
  double rmst_b = 0.0;
  double se_a = 0.0;
  double se_b = 0.0;
  double difference = 0.0;  // a minus b
  double se_difference = 0.0;
  double ci_low = 0.0;      // 95%
  double ci_high = 0.0;
};

/// Restricted mean survival time up to tau (exact step-function area).
double rmst(const KmCurve& curve, double tau);

/// Difference in restricted mean survival time between two groups with a
/// Greenwood-based variance. Requires both groups to be observed up to tau
/// unless truncate_at_last_event extends each curve as constant past its
/// last observed time.
RmstResult rmst_difference(std::span<const SurvivalSample> samples_a,
                           std::span<const SurvivalSample> samples_b, double tau,
                           bool truncate_at_last_event = false);

}  // namespace adherelm
