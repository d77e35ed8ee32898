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

#include <cmath>

#include "adherelm/cohort.hpp"
#include "adherelm/errors.hpp"
#include "adherelm/lmm.hpp"
#include "adherelm/multinomial_logit.hpp"
#include "adherelm/rng.hpp"
#include "unit/oracles.hpp"

using namespace adherelm;
using adherelm::testing::brute_force_paths;
using adherelm::testing::random_subject_model;

namespace {

Eigen::VectorXd intercept_only() {
  Eigen::VectorXd x(1);
  x[0] = 1.0;
  return x;
}

// Logit-form parameters over three banded channels; zero covariate slopes.
LmmParameters logit_params(int k, double persistence_logit) {
  LmmParameters params;
  params.form = TransitionForm::LogitHomogeneous;
  params.phi.resize(kNumDrugs);
  for (int j = 0; j < kNumDrugs; ++j) {
    params.phi[j].resize(3, k);
    for (int u = 0; u < k; ++u) {
      const int peak = k == 1 ? 0 : (u * 2) / (k - 1);
      for (int y = 0; y < 3; ++y) params.phi[j](y, u) = y == peak ? 0.8 : 0.1;
    }
  }
  params.beta = Eigen::MatrixXd::Zero(std::max(0, k - 1), 1);
  params.gamma.assign(k, Eigen::MatrixXd::Constant(std::max(0, k - 1), 1, persistence_logit));
  return params;
}

}  // namespace

TEST_CASE("initial probabilities from the reference-state logit") {
  SUBCASE("all-zero coefficients split mass evenly") {
    const Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(3, 1);
    const Eigen::VectorXd delta = initial_probs(beta, intercept_only());
    REQUIRE(delta.size() == 4);
    for (int u = 0; u < 4; ++u) CHECK(delta[u] == doctest::Approx(0.25));
  }
  SUBCASE("single state is degenerate") {
    const Eigen::VectorXd delta = initial_probs(Eigen::MatrixXd(0, 1), intercept_only());
    REQUIRE(delta.size() == 1);
    CHECK(delta[0] == doctest::Approx(1.0));
  }
  SUBCASE("closed-form softmax with intercepts 0, ln2, ln3") {
    Eigen::MatrixXd beta(3, 1);
    beta << 0.0, std::log(2.0), std::log(3.0);
    const Eigen::VectorXd delta = initial_probs(beta, intercept_only());
    CHECK(delta[0] == doctest::Approx(1.0 / 7.0));
    CHECK(delta[1] == doctest::Approx(1.0 / 7.0));
    CHECK(delta[2] == doctest::Approx(2.0 / 7.0));
    CHECK(delta[3] == doctest::Approx(3.0 / 7.0));
    CHECK(delta.sum() == doctest::Approx(1.0));
  }
  SUBCASE("non-finite covariates are rejected") {
    Eigen::VectorXd x(1);
    x[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(initial_probs(Eigen::MatrixXd::Zero(1, 1), x), ValidationError);
  }
  SUBCASE("huge logits do not overflow") {
    Eigen::MatrixXd beta(1, 1);
    beta << 800.0;
    const Eigen::VectorXd delta = initial_probs(beta, intercept_only());
    CHECK(delta[1] == doctest::Approx(1.0));
    CHECK(std::isfinite(delta[0]));
  }
}

TEST_CASE("transition rows from the persistence-referenced logit") {
  SUBCASE("all-zero coefficients give a uniform row") {
    const std::vector<Eigen::MatrixXd> gamma(4, Eigen::MatrixXd::Zero(3, 1));
    const Eigen::VectorXd row = transition_row(gamma, 1, intercept_only());
    for (int u = 0; u < 4; ++u) CHECK(row[u] == doctest::Approx(0.25));
  }
  SUBCASE("very negative intercepts pin the chain to its state") {
    const std::vector<Eigen::MatrixXd> gamma(4, Eigen::MatrixXd::Constant(3, 1, -50.0));
    for (int from = 0; from < 4; ++from) {
      const Eigen::VectorXd row = transition_row(gamma, from, intercept_only());
      CHECK(row[from] == doctest::Approx(1.0));
    }
  }
  SUBCASE("two-state row with intercept ln(1/9) gives (0.9, 0.1)") {
    const std::vector<Eigen::MatrixXd> gamma(
        2, Eigen::MatrixXd::Constant(1, 1, std::log(1.0 / 9.0)));
    const Eigen::VectorXd row = transition_row(gamma, 0, intercept_only());
    CHECK(row[0] == doctest::Approx(0.9));
    CHECK(row[1] == doctest::Approx(0.1));
  }
  SUBCASE("rows always sum to one") {
    RngStream rng(3);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<Eigen::MatrixXd> gamma(3, Eigen::MatrixXd(2, 2));
      for (auto& block : gamma)
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 2; ++c) block(r, c) = rng.normal(0.0, 2.0);
      Eigen::VectorXd x(2);
      x << 1.0, rng.normal(0.0, 1.0);
      for (int from = 0; from < 3; ++from)
        CHECK(transition_row(gamma, from, x).sum() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("emission weight marginalizes missing channels") {
  std::vector<Eigen::MatrixXd> phi(3, Eigen::MatrixXd(3, 1));
  phi[0] << 0.5, 0.3, 0.2;
  phi[1] << 0.4, 0.4, 0.2;
  phi[2] << 0.2, 0.1, 0.7;
  Eigen::VectorXi y(3);
  y << 0, 0, 2;

  CHECK(emission_weight(phi, y, {0, 0, 0}, 0) == doctest::Approx(1.0));
  CHECK(emission_weight(phi, y, {1, 0, 0}, 0) == doctest::Approx(0.5));
  CHECK(emission_weight(phi, y, {1, 1, 1}, 0) == doctest::Approx(0.5 * 0.4 * 0.7));
}

TEST_CASE("forward-backward equals the brute-force path sum") {
  RngStream rng(1234);
  for (int rep = 0; rep < 300; ++rep) {
    const int T = 2 + static_cast<int>(rng.below(3));  // 2..4
    const int k = 1 + static_cast<int>(rng.below(3));  // 1..3
    const int J = 1 + static_cast<int>(rng.below(3));  // 1..3
    const SubjectModel m = random_subject_model(T, k, J, rng);
    const auto oracle = brute_force_paths(m);
    const ForwardBackwardResult fb = forward_backward(m);

    CHECK(std::abs(fb.loglik - std::log(oracle.likelihood)) < 1e-10);
    for (int t = 0; t < T; ++t) {
      CHECK(std::abs(fb.posteriors.row(t).sum() - 1.0) < 1e-10);
      for (int u = 0; u < k; ++u)
        CHECK(std::abs(fb.posteriors(t, u) - oracle.posteriors(t, u)) < 1e-10);
    }
    for (int t = 0; t + 1 < T; ++t) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          CHECK(std::abs(fb.pairwise[t](a, b) - oracle.pairwise[t](a, b)) < 1e-10);
      // Pairwise posteriors marginalize to the adjacent occupancy rows.
      for (int a = 0; a < k; ++a)
        CHECK(std::abs(fb.pairwise[t].row(a).sum() - fb.posteriors(t, a)) < 1e-10);
      for (int b = 0; b < k; ++b)
        CHECK(std::abs(fb.pairwise[t].col(b).sum() - fb.posteriors(t + 1, b)) < 1e-10);
    }
  }
}

TEST_CASE("forward-backward degenerate cases") {
  SUBCASE("k=1 posteriors are all one and loglik sums emissions") {
    SubjectModel m;
    m.delta = Eigen::VectorXd::Ones(1);
    m.trans.assign(2, Eigen::MatrixXd::Ones(1, 1));
    m.emission.resize(3, 1);
    m.emission << 0.5, 0.25, 0.8;
    const ForwardBackwardResult fb = forward_backward(m);
    CHECK(fb.loglik ==
          doctest::Approx(std::log(0.5) + std::log(0.25) + std::log(0.8)));
    for (int t = 0; t < 3; ++t) CHECK(fb.posteriors(t, 0) == doctest::Approx(1.0));
  }
  SUBCASE("a fully missing subject has log-likelihood exactly zero") {
    SubjectModel m;
    m.delta = Eigen::VectorXd::Ones(1);
    m.trans.assign(11, Eigen::MatrixXd::Ones(1, 1));
    m.emission = Eigen::MatrixXd::Ones(12, 1);
    CHECK(forward_backward(m).loglik == 0.0);
  }
  SUBCASE("impossible data raises a zero-likelihood error") {
    SubjectModel m;
    m.delta = Eigen::VectorXd::Ones(1);
    m.trans.assign(1, Eigen::MatrixXd::Ones(1, 1));
    m.emission = Eigen::MatrixXd::Zero(2, 1);
    CHECK_THROWS_AS(forward_backward(m), ZeroLikelihoodError);
  }
}

TEST_CASE("free parameter counts match the selection-grid arithmetic") {
  ModelSpec spec;
  spec.T = 12;
  spec.transition_form = TransitionForm::UnrestrictedTimeVarying;
  const int expected[] = {6, 35, 86, 159, 254};
  for (int k = 1; k <= 5; ++k) {
    spec.k = k;
    CHECK(count_free_params(spec) == expected[k - 1]);
  }
  spec.k = 4;
  spec.transition_form = TransitionForm::LogitHomogeneous;
  CHECK(count_free_params(spec) == 39);
  spec.init_covariates = {"age"};
  spec.trans_covariates = {"age"};
  CHECK(count_free_params(spec) == 54);
}

TEST_CASE("information criteria") {
  const auto [aic0, bic0] = information_criteria(0.0, 0, 100);
  CHECK(aic0 == 0.0);
  CHECK(bic0 == 0.0);

  const auto [aic1, bic1] = information_criteria(-1309948.0, 6, 35842);
  CHECK(std::abs(aic1 - 2619908.0) < 1.0);
  CHECK(std::abs(bic1 - 2619959.0) < 1.0);

  const auto [aic2, bic2] = information_criteria(-548487.7, 39, 35842);
  CHECK(std::abs(aic2 - 1097053.0) < 1.0);
  CHECK(std::abs(bic2 - 1097384.0) < 1.0);

  CHECK_THROWS_AS(information_criteria(0.0, 0, 0), ValidationError);
}

TEST_CASE("weighted multinomial logit never decreases its objective") {
  RngStream rng(88);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 40;
    const int k = 2 + static_cast<int>(rng.below(3));
    const int p = 1 + static_cast<int>(rng.below(3));
    MultinomialLogitProblem problem;
    problem.ref = static_cast<int>(rng.below(k));
    problem.x.resize(n, p);
    problem.weights.resize(n, k);
    for (int i = 0; i < n; ++i) {
      problem.x(i, 0) = 1.0;
      for (int c = 1; c < p; ++c) problem.x(i, c) = rng.normal(0.0, 1.0);
      for (int c = 0; c < k; ++c) problem.weights(i, c) = rng.uniform();
    }
    Eigen::MatrixXd theta0(k - 1, p);
    for (int r = 0; r < k - 1; ++r)
      for (int c = 0; c < p; ++c) theta0(r, c) = rng.normal(0.0, 0.5);

    const double before = multinomial_logit_loglik(problem, theta0);
    const MultinomialLogitFit fit = fit_multinomial_logit(problem, theta0);
    CHECK(fit.loglik >= before - 1e-12);
    CHECK(multinomial_logit_loglik(problem, fit.theta) == doctest::Approx(fit.loglik));
  }
}

TEST_CASE("k=1 EM reduces to raw frequencies") {
  ModelSpec spec;
  spec.k = 1;
  const CovariateModel cov;
  const SampledPanel sampled = sample_panel(spec, logit_params(1, 0.0), 200, cov, 4);

  EmOptions options;
  options.n_random_starts = 0;
  const FitResult fit = em_fit(spec, sampled.data, options);

  // Oracle: observed category frequencies per channel.
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(3);
    double total = 0.0;
    double loglik = 0.0;
    for (long i = 0; i < sampled.data.n(); ++i) {
      if (!sampled.data.observed[i][j]) continue;
      for (int t = 0; t < 12; ++t) {
        counts[sampled.data.responses[i](j, t)] += 1.0;
        total += 1.0;
      }
    }
    counts /= total;
    for (int y = 0; y < 3; ++y)
      CHECK(fit.params.phi[j](y, 0) == doctest::Approx(counts[y]).epsilon(1e-6));
    (void)loglik;
  }

  // Closed-form log-likelihood of the independence model.
  double expected_loglik = 0.0;
  for (long i = 0; i < sampled.data.n(); ++i)
    for (int j = 0; j < 3; ++j) {
      if (!sampled.data.observed[i][j]) continue;
      for (int t = 0; t < 12; ++t)
        expected_loglik += std::log(fit.params.phi[j](sampled.data.responses[i](j, t), 0));
    }
  CHECK(fit.loglik == doctest::Approx(expected_loglik).epsilon(1e-9));
}

TEST_CASE("EM log-likelihood trace is monotone and recovery works at small scale") {
  ModelSpec spec;
  spec.k = 2;
  const LmmParameters truth = logit_params(2, std::log(0.08 / 0.92));
  const CovariateModel cov;
  const SampledPanel sampled = sample_panel(spec, truth, 500, cov, 21);

  EmOptions options;
  options.n_random_starts = 2;
  options.seed = 9;
  const FitResult fit = em_fit(spec, sampled.data, options);

  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
    CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-8);
  CHECK(fit.converged);
  CHECK(fit.n == 500);

  // States are reported low-to-high adherence; compare against the truth.
  for (int j = 0; j < 3; ++j)
    for (int y = 0; y < 3; ++y)
      for (int u = 0; u < 2; ++u)
        CHECK(std::abs(fit.params.phi[j](y, u) - truth.phi[j](y, u)) < 0.08);
}

TEST_CASE("relabeling states leaves the likelihood invariant") {
  ModelSpec spec;
  spec.k = 3;
  // Deliberately mis-ordered states: scores descending.
  LmmParameters params;
  params.form = TransitionForm::LogitHomogeneous;
  params.phi.resize(3);
  for (int j = 0; j < 3; ++j) {
    params.phi[j].resize(3, 3);
    params.phi[j].col(0) << 0.05, 0.15, 0.80;  // high adherence first
    params.phi[j].col(1) << 0.20, 0.60, 0.20;
    params.phi[j].col(2) << 0.70, 0.20, 0.10;
  }
  RngStream rng(5);
  params.beta.resize(2, 1);
  params.beta << 0.3, -0.4;
  params.gamma.assign(3, Eigen::MatrixXd::Zero(2, 1));
  for (auto& block : params.gamma)
    for (int r = 0; r < 2; ++r) block(r, 0) = rng.normal(-1.5, 0.3);

  const CovariateModel cov;
  const SampledPanel sampled = sample_panel(spec, params, 50, cov, 31);

  double before = 0.0;
  for (long i = 0; i < sampled.data.n(); ++i)
    before += forward_backward(spec, params, sampled.data, i).loglik;

  LmmParameters sorted = params;
  canonicalize_state_order(spec, sorted);
  const Eigen::VectorXd scores = state_adherence_scores(sorted);
  for (int u = 1; u < 3; ++u) CHECK(scores[u] >= scores[u - 1]);
  CHECK(sorted.phi[0](0, 0) == doctest::Approx(0.70));  // lowest-adherence state first

  double after = 0.0;
  for (long i = 0; i < sampled.data.n(); ++i)
    after += forward_backward(spec, sorted, sampled.data, i).loglik;
  CHECK(after == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("mean transition matrix") {
  SUBCASE("covariate-free logit model equals the single tau matrix") {
    ModelSpec spec;
    spec.k = 2;
    const LmmParameters params = logit_params(2, std::log(0.1 / 0.9));
    const CovariateModel cov;
    const SampledPanel sampled = sample_panel(spec, params, 20, cov, 8);
    const Eigen::MatrixXd mean = mean_transition_matrix(spec, params, sampled.data);
    CHECK(mean(0, 0) == doctest::Approx(0.9));
    CHECK(mean(0, 1) == doctest::Approx(0.1));
    CHECK(mean(1, 1) == doctest::Approx(0.9));
  }
  SUBCASE("rows sum to one with covariates present") {
    ModelSpec spec;
    spec.k = 2;
    spec.init_covariates = {"age", "mcs"};
    spec.trans_covariates = {"age", "mcs"};
    LmmParameters params = logit_params(2, -1.0);
    params.beta = Eigen::MatrixXd::Zero(1, 3);
    params.gamma.assign(2, Eigen::MatrixXd::Zero(1, 3));
    params.gamma[0] << -2.0, 0.01, 0.02;
    params.gamma[1] << -1.5, -0.01, 0.03;
    const CovariateModel cov;
    const SampledPanel sampled = sample_panel(spec, params, 30, cov, 14);
    const Eigen::MatrixXd mean = mean_transition_matrix(spec, params, sampled.data);
    for (int a = 0; a < 2; ++a) CHECK(mean.row(a).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand-averaged two-subject case") {
    ModelSpec spec;
    spec.k = 2;
    spec.trans_covariates = {"mcs"};
    spec.init_covariates = {};
    LmmParameters params = logit_params(2, -1.0);
    params.beta = Eigen::MatrixXd::Zero(1, 1);
    params.gamma.assign(2, Eigen::MatrixXd::Zero(1, 2));
    params.gamma[0] << -1.0, 0.1;
    params.gamma[1] << -2.0, 0.05;

    DataPanel data;
    data.T = 12;
    data.covariate_names = {"age", "gender", "mcs"};
    data.subject_ids = {"a", "b"};
    data.responses.assign(2, Eigen::MatrixXi::Zero(3, 12));
    data.observed.assign(2, std::vector<char>(3, 1));
    data.init_covariate_values = Eigen::MatrixXd::Zero(2, 3);
    Eigen::MatrixXd tv_a(11, 3), tv_b(11, 3);
    for (int s = 0; s < 11; ++s) {
      tv_a.row(s) << 70.0, 0.0, 2.0 + s % 3;
      tv_b.row(s) << 80.0, 1.0, 5.0;
    }
    data.trans_covariate_values = {tv_a, tv_b};

    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(2, 2);
    long count = 0;
    for (long i = 0; i < 2; ++i)
      for (int s = 0; s < 11; ++s) {
        Eigen::VectorXd x(2);
        x << 1.0, data.trans_covariate_values[i](s, 2);
        for (int a = 0; a < 2; ++a)
          expected.row(a) += transition_row(params.gamma, a, x).transpose();
        ++count;
      }
    expected /= static_cast<double>(count);

    const Eigen::MatrixXd mean = mean_transition_matrix(spec, params, data);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(mean(a, b) == doctest::Approx(expected(a, b)));
  }
}

TEST_CASE("model selection emits rows and picks the generating k at small scale") {
  ModelSpec truth_spec;
  truth_spec.k = 2;
  const LmmParameters truth = logit_params(2, std::log(0.06 / 0.94));
  const CovariateModel cov;
  const SampledPanel sampled = sample_panel(truth_spec, truth, 400, cov, 55);

  EmOptions options;
  options.n_random_starts = 1;
  options.seed = 17;
  const SelectionResult selection = model_selection(sampled.data, {1, 2, 3}, {}, options);

  CHECK(selection.best_k == 2);
  long selected_rows = 0;
  for (const SelectionRow& row : selection.rows) selected_rows += row.selected ? 1 : 0;
  CHECK(selected_rows == 1);
  CHECK(selection.rows.size() == 4);  // three unrestricted + the logit refit
  CHECK_THROWS_AS(model_selection(sampled.data, {}, {}, options), ValidationError);
}

TEST_CASE("em_fit input validation") {
  ModelSpec spec;
  spec.k = 2;
  DataPanel empty;
  empty.responses.clear();
  empty.subject_ids.clear();
  empty.observed.clear();
  empty.init_covariate_values.resize(0, 0);
  CHECK_THROWS_AS(em_fit(spec, empty, {}), ValidationError);
}
