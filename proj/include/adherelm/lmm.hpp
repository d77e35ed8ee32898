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
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adherelm/adherence.hpp"
#include "adherelm/records.hpp"

namespace adherelm {

/// How the latent chain is parameterized.
///  - UnrestrictedTimeVarying: free initial vector plus one free transition
///    matrix per occasion, no covariates.
///  - LogitHomogeneous: multinomial-logit initial probabilities (reference =
///    state 1) and persistence-referenced logit transition rows, both linear
///    in per-subject covariates and shared across occasions.
enum class TransitionForm { UnrestrictedTimeVarying, LogitHomogeneous };

struct ModelSpec {
  int k = 1;
  std::vector<std::string> drugs = {"RAS", "BB", "MRA"};
  std::vector<int> categories = {3, 3, 3};  // response levels per channel
  int T = kMonths;
  std::vector<std::string> init_covariates;   // names into DataPanel pool
  std::vector<std::string> trans_covariates;  // names into DataPanel pool
  TransitionForm transition_form = TransitionForm::LogitHomogeneous;

  int n_channels() const { return static_cast<int>(categories.size()); }
  void validate() const;
};

/// Model parameters. Emission probabilities phi are always present; exactly
/// one of {beta, gamma} / {delta, trans} is meaningful depending on `form`.
///
/// Conventions (0-based states internally, state 0 is "state 1"):
///  - phi[j](y, u) = P(response y on channel j | latent state u).
///  - beta is (k-1) x (1 + p_init); row r carries the logit of state r+1
///    against reference state 0, coefficient 0 is the intercept.
///  - gamma[from] is (k-1) x (1 + p_trans); row r carries the logit of
///    destination (r < from ? r : r + 1) against staying in `from`.
///  - delta (k) and trans[s] (k x k, occasion s+2) are the raw probabilities
///    of the unrestricted form.
struct LmmParameters {
  TransitionForm form = TransitionForm::LogitHomogeneous;
  std::vector<Eigen::MatrixXd> phi;
  Eigen::MatrixXd beta;
  std::vector<Eigen::MatrixXd> gamma;
  Eigen::VectorXd delta;
  std::vector<Eigen::MatrixXd> trans;

  void validate(const ModelSpec& spec) const;
};

/// Longitudinal categorical responses plus the covariate pool.
/// responses[i](j, t) in 0..categories[j]-1 where observed, -1 elsewhere;
/// observed[i][j] marks whole-channel availability (a non-user of drug j has
/// the entire channel missing, constant over t).
struct DataPanel {
  int T = kMonths;
  std::vector<int> categories = {3, 3, 3};
  std::vector<std::string> subject_ids;
  std::vector<Eigen::MatrixXi> responses;
  std::vector<std::vector<char>> observed;

  // Covariate pool, raw scale. init row i has one value per name; the
  // transition matrix for subject i has T-1 rows (row s belongs to the
  // transition into occasion s+2, so time-varying values use month s+2).
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd init_covariate_values;                 // n x C
  std::vector<Eigen::MatrixXd> trans_covariate_values;   // n of (T-1) x C

  long n() const { return static_cast<long>(responses.size()); }
  int n_channels() const { return static_cast<int>(categories.size()); }
  void validate() const;
};

/// Assembles a DataPanel from patient records and adherence panels: levels
/// become responses, non-user channels become missing channels, and the pool
/// gets columns age, gender (F=1) and mcs (month-1 value for the initial
/// design, month-t value for the transition into month t).
DataPanel build_data_panel(std::span<const PatientRecord> patients,
                           std::span<const AdherencePanel> panels);

/// Initial-state probabilities from logit coefficients for one subject.
/// x_init_row must carry a leading 1; overflow-safe via max subtraction.
Eigen::VectorXd initial_probs(const Eigen::MatrixXd& beta,
                              const Eigen::VectorXd& x_init_row);

/// One transition row (out of `from_state`) from the persistence-referenced
/// logit coefficients; sums to 1.
Eigen::VectorXd transition_row(const std::vector<Eigen::MatrixXd>& gamma,
                               int from_state, const Eigen::VectorXd& x_trans_row);

/// Probability of the observed response column at one occasion given state
/// u: product over observed channels, missing channels contribute 1.
double emission_weight(const std::vector<Eigen::MatrixXd>& phi,
                       const Eigen::VectorXi& y_at_t,
                       const std::vector<char>& observed, int u);

/// Per-subject chain inputs with covariates and missingness resolved:
/// delta (k), trans[s] (k x k, s = 0..T-2) and emission (T x k).
struct SubjectModel {
  Eigen::VectorXd delta;
  std::vector<Eigen::MatrixXd> trans;
  Eigen::MatrixXd emission;
};

SubjectModel build_subject_model(const ModelSpec& spec, const LmmParameters& params,
                                 const DataPanel& data, long subject);

struct ForwardBackwardResult {
  double loglik = 0.0;
  Eigen::MatrixXd posteriors;              // T x k, rows sum to 1
  std::vector<Eigen::MatrixXd> pairwise;   // T-1 of k x k; [s](a,b) joins occasions s+1,s+2
};

/// Scaled forward-backward recursions. Throws ZeroLikelihoodError when the
/// observed data is impossible under the model.
ForwardBackwardResult forward_backward(const SubjectModel& m);
ForwardBackwardResult forward_backward(const ModelSpec& spec, const LmmParameters& params,
                                       const DataPanel& data, long subject);

struct EmOptions {
  int max_iter = 500;
  double tol = 1e-8;        // relative log-likelihood change
  int n_random_starts = 9;  // plus one deterministic start
  std::uint64_t seed = 1;
  int threads = 1;
};

struct FitResult {
  ModelSpec spec;
  LmmParameters params;
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  int n_iterations = 0;
  bool converged = false;
  int g = 0;
  double aic = 0.0;
  double bic = 0.0;
  int start_id = 0;  // 0 = deterministic start, 1.. = random starts
  long n = 0;
};

/// EM estimation. E-step runs forward-backward per subject (parallel map,
/// order-independent accumulation); M-step updates phi in closed form and
/// the logit blocks by Newton with step halving, so the log-likelihood never
/// decreases beyond 1e-8 slack. States of the returned fit are sorted by
/// expected adherence score so labels are reproducible across runs.
FitResult em_fit(const ModelSpec& spec, const DataPanel& data, const EmOptions& options = {});

int count_free_params(const ModelSpec& spec);

/// (aic, bic) with aic = -2 loglik + 2 g and bic = -2 loglik + g ln n.
std::pair<double, double> information_criteria(double loglik, int g, long n);

/// Average of the per-subject, per-occasion transition matrices.
Eigen::MatrixXd mean_transition_matrix(const ModelSpec& spec, const LmmParameters& params,
                                       const DataPanel& data);

/// Expected adherence score per state (sum over channels and categories of
/// y * phi), the canonical state ordering key.
Eigen::VectorXd state_adherence_scores(const LmmParameters& params);

/// Relabels states in ascending adherence-score order, rewriting phi and the
/// latent parameters consistently. Leaves the likelihood invariant.
void canonicalize_state_order(const ModelSpec& spec, LmmParameters& params);

struct SelectionRow {
  std::string label;
  int k = 0;
  TransitionForm form = TransitionForm::UnrestrictedTimeVarying;
  std::vector<std::string> covariates;
  int g = 0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  bool selected = false;
  bool failed = false;
  std::string error;
};

struct SelectionResult {
  std::vector<SelectionRow> rows;
  int best_k = 0;
  std::vector<std::string> selected_covariates;
  FitResult best;
};

/// Two-stage selection: unrestricted fits across k_range choose the state
/// count by minimum BIC, then forward covariate selection on the logit form
/// at that k (each step adds the covariate with the largest BIC improvement
/// on both probabilities, stopping when none improves). Failed fits mark
/// their row and the grid continues.
SelectionResult model_selection(const DataPanel& data, const std::vector<int>& k_range,
                                const std::vector<std::string>& covariate_grid,
                                const EmOptions& options = {});

}  // namespace adherelm
