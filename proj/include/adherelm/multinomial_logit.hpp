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

namespace adherelm {

/// Weighted multinomial logit with a fixed reference category: row i of x is
/// a design row (leading intercept included by the caller), weights(i, c) is
/// the non-negative mass put on category c, and probabilities come from a
/// softmax over linear predictors with the reference pinned at zero.
/// This is the M-step workhorse for both the initial-state block (reference
/// = state 1) and each persistence-referenced transition block.
struct MultinomialLogitProblem {
  Eigen::MatrixXd x;        // n x p
  Eigen::MatrixXd weights;  // n x k
  int ref = 0;              // reference category in 0..k-1
};

/// theta is (k-1) x p; row r parameterizes category (r < ref ? r : r + 1).
/// Row probabilities for design row x: softmax over eta with eta[ref] = 0.
Eigen::VectorXd multinomial_logit_probs(const Eigen::MatrixXd& theta, int ref,
                                        const Eigen::VectorXd& x_row);

/// Weighted log-likelihood sum_i sum_c weights(i,c) * log pi_c(x_i; theta).
double multinomial_logit_loglik(const MultinomialLogitProblem& problem,
                                const Eigen::MatrixXd& theta);

struct MultinomialLogitFit {
  Eigen::MatrixXd theta;
  double loglik = 0.0;
  int n_iterations = 0;
  bool converged = false;
};

/// Newton-Raphson with step halving from theta0; the objective never
/// decreases across accepted steps (a failed halving search keeps the
/// incumbent), which is what keeps EM monotone when used as an M-step.
MultinomialLogitFit fit_multinomial_logit(const MultinomialLogitProblem& problem,
                                          Eigen::MatrixXd theta0, int max_iter = 50,
                                          double tol = 1e-10);

}  // namespace adherelm
