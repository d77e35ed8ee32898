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

#include "adherelm/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adherelm/errors.hpp"
#include "adherelm/multinomial_logit.hpp"
#include "adherelm/parallel.hpp"
#include "adherelm/rng.hpp"

namespace adherelm {

namespace {

constexpr double kProbFloor = 1e-10;  // smoothing floor for fitted probabilities

void check(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

int covariate_index(const DataPanel& data, const std::string& name) {
  const auto it =
      std::find(data.covariate_names.begin(), data.covariate_names.end(), name);
  if (it == data.covariate_names.end())
    throw ValidationError("covariate '" + name + "' not present in the data panel");
  return static_cast<int>(it - data.covariate_names.begin());
}

// Floor then renormalize a probability vector in place.
void floor_and_normalize(Eigen::Ref<Eigen::VectorXd> probs) {
  probs = probs.cwiseMax(kProbFloor);
  probs /= probs.sum();
}

}  // namespace

void ModelSpec::validate() const {
  check(k >= 1, "ModelSpec: k must be >= 1");
  check(T >= 1, "ModelSpec: T must be >= 1");
  check(!categories.empty(), "ModelSpec: at least one response channel required");
  check(drugs.size() == categories.size(), "ModelSpec: drugs/categories size mismatch");
  for (const int c : categories) check(c >= 2, "ModelSpec: each channel needs >= 2 categories");
  if (transition_form == TransitionForm::UnrestrictedTimeVarying)
    check(init_covariates.empty() && trans_covariates.empty(),
          "ModelSpec: the unrestricted form does not admit covariates");
}

void LmmParameters::validate(const ModelSpec& spec) const {
  spec.validate();
  check(form == spec.transition_form, "LmmParameters: form does not match spec");
  check(static_cast<int>(phi.size()) == spec.n_channels(),
        "LmmParameters: one emission matrix per channel required");
  for (int j = 0; j < spec.n_channels(); ++j) {
    check(phi[j].rows() == spec.categories[j] && phi[j].cols() == spec.k,
          "LmmParameters: phi[" + std::to_string(j) + "] must be c_j x k");
    for (int u = 0; u < spec.k; ++u) {
      double total = 0.0;
      for (int y = 0; y < spec.categories[j]; ++y) {
        const double p = phi[j](y, u);
        check(p >= 0.0 && p <= 1.0, "LmmParameters: phi entries must be in [0,1]");
        total += p;
      }
      check(std::abs(total - 1.0) < 1e-8, "LmmParameters: phi columns must sum to 1");
    }
  }
  if (form == TransitionForm::LogitHomogeneous) {
    const int pi = 1 + static_cast<int>(spec.init_covariates.size());
    const int pt = 1 + static_cast<int>(spec.trans_covariates.size());
    check(beta.rows() == spec.k - 1 && (spec.k == 1 || beta.cols() == pi),
          "LmmParameters: beta must be (k-1) x (1+p_init)");
    check(static_cast<int>(gamma.size()) == spec.k,
          "LmmParameters: one gamma block per origin state required");
    for (const auto& block : gamma)
      check(block.rows() == spec.k - 1 && (spec.k == 1 || block.cols() == pt),
            "LmmParameters: gamma blocks must be (k-1) x (1+p_trans)");
    check(beta.allFinite(), "LmmParameters: beta must be finite");
    for (const auto& block : gamma)
      check(block.allFinite(), "LmmParameters: gamma must be finite");
  } else {
    check(delta.size() == spec.k, "LmmParameters: delta must have k entries");
    check(std::abs(delta.sum() - 1.0) < 1e-8, "LmmParameters: delta must sum to 1");
    check(delta.minCoeff() >= 0.0, "LmmParameters: delta must be non-negative");
    check(static_cast<int>(trans.size()) == spec.T - 1,
          "LmmParameters: one transition matrix per occasion 2..T required");
    for (const auto& m : trans) {
      check(m.rows() == spec.k && m.cols() == spec.k,
            "LmmParameters: transition matrices must be k x k");
      check(m.minCoeff() >= 0.0, "LmmParameters: transition entries must be >= 0");
      for (int a = 0; a < spec.k; ++a)
        check(std::abs(m.row(a).sum() - 1.0) < 1e-8,
              "LmmParameters: transition rows must sum to 1");
    }
  }
}

void DataPanel::validate() const {
  const long n_subjects = n();
  check(T >= 1, "DataPanel: T must be >= 1");
  check(static_cast<long>(observed.size()) == n_subjects,
        "DataPanel: observed mask size mismatch");
  check(static_cast<long>(subject_ids.size()) == n_subjects,
        "DataPanel: subject id count mismatch");
  check(init_covariate_values.rows() == n_subjects ||
            (covariate_names.empty() && init_covariate_values.rows() == 0),
        "DataPanel: init covariate rows mismatch");
  check(covariate_names.empty() ||
            static_cast<long>(trans_covariate_values.size()) == n_subjects,
        "DataPanel: trans covariate rows mismatch");
  for (long i = 0; i < n_subjects; ++i) {
    check(responses[i].rows() == n_channels() && responses[i].cols() == T,
          "DataPanel: responses must be J x T");
    check(static_cast<int>(observed[i].size()) == n_channels(),
          "DataPanel: observed mask must have one flag per channel");
    for (int j = 0; j < n_channels(); ++j) {
      for (int t = 0; t < T; ++t) {
        const int y = responses[i](j, t);
        if (observed[i][j])
          check(y >= 0 && y < categories[j],
                "DataPanel: response out of range for subject " + subject_ids[i]);
      }
    }
  }
}

DataPanel build_data_panel(std::span<const PatientRecord> patients,
                           std::span<const AdherencePanel> panels) {
  check(patients.size() == panels.size(), "build_data_panel: patients/panels size mismatch");
  DataPanel data;
  const long n = static_cast<long>(patients.size());
  data.covariate_names = {"age", "gender", "mcs"};
  data.init_covariate_values.resize(n, 3);
  data.trans_covariate_values.resize(n);
  data.responses.resize(n);
  data.observed.resize(n);
  data.subject_ids.resize(n);

  for (long i = 0; i < n; ++i) {
    const PatientRecord& p = patients[i];
    const AdherencePanel& panel = panels[i];
    check(p.patient_id == panel.patient_id,
          "build_data_panel: panel order does not match patients (" + p.patient_id + ")");
    data.subject_ids[i] = p.patient_id;
    data.responses[i] = Eigen::MatrixXi::Constant(kNumDrugs, kMonths, -1);
    data.observed[i].assign(kNumDrugs, 0);
    for (int j = 0; j < kNumDrugs; ++j) {
      const DrugChannel& ch = panel.channels[j];
      if (!ch.user) continue;
      data.observed[i][j] = 1;
      for (int t = 0; t < kMonths; ++t) data.responses[i](j, t) = ch.levels[t];
    }
    const double gender_f = p.gender == Gender::F ? 1.0 : 0.0;
    data.init_covariate_values(i, 0) = static_cast<double>(p.age);
    data.init_covariate_values(i, 1) = gender_f;
    data.init_covariate_values(i, 2) = static_cast<double>(p.mcs[0]);
    Eigen::MatrixXd tv(kMonths - 1, 3);
    for (int s = 0; s < kMonths - 1; ++s) {
      tv(s, 0) = static_cast<double>(p.age);
      tv(s, 1) = gender_f;
      tv(s, 2) = static_cast<double>(p.mcs[s + 1]);  // MCS of month t = s + 2
    }
    data.trans_covariate_values[i] = std::move(tv);
  }
  data.validate();
  return data;
}

Eigen::VectorXd initial_probs(const Eigen::MatrixXd& beta, const Eigen::VectorXd& x_init_row) {
  const int k = static_cast<int>(beta.rows()) + 1;
  if (k == 1) return Eigen::VectorXd::Ones(1);
  if (beta.cols() != x_init_row.size())
    throw ValidationError("initial_probs: design row length does not match beta");
  if (!x_init_row.allFinite()) throw ValidationError("initial_probs: non-finite covariates");
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(k);
  eta.tail(k - 1) = beta * x_init_row;
  const double m = eta.maxCoeff();
  Eigen::VectorXd probs = (eta.array() - m).exp();
  probs /= probs.sum();
  return probs;
}

Eigen::VectorXd transition_row(const std::vector<Eigen::MatrixXd>& gamma, int from_state,
                               const Eigen::VectorXd& x_trans_row) {
  const int k = static_cast<int>(gamma.size());
  if (from_state < 0 || from_state >= k)
    throw ValidationError("transition_row: from_state out of range");
  if (k == 1) return Eigen::VectorXd::Ones(1);
  const Eigen::MatrixXd& block = gamma[from_state];
  if (block.cols() != x_trans_row.size())
    throw ValidationError("transition_row: design row length does not match gamma");
  if (!x_trans_row.allFinite()) throw ValidationError("transition_row: non-finite covariates");
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(k);
  for (int r = 0; r < k - 1; ++r) {
    const int dest = r < from_state ? r : r + 1;
    eta[dest] = block.row(r).dot(x_trans_row);
  }
  const double m = eta.maxCoeff();
  Eigen::VectorXd probs = (eta.array() - m).exp();
  probs /= probs.sum();
  return probs;
}

double emission_weight(const std::vector<Eigen::MatrixXd>& phi, const Eigen::VectorXi& y_at_t,
                       const std::vector<char>& observed, int u) {
  double weight = 1.0;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    if (!observed[j]) continue;
    const int y = y_at_t[static_cast<Eigen::Index>(j)];
    if (y < 0 || y >= phi[j].rows())
      throw ValidationError("emission_weight: response category out of range");
    weight *= phi[j](y, u);
  }
  return weight;
}

namespace {

Eigen::VectorXd design_row(const DataPanel& data, const std::vector<std::string>& names,
                           long subject, int trans_occasion /* -1 = initial */) {
  Eigen::VectorXd x(1 + names.size());
  x[0] = 1.0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const int idx = covariate_index(data, names[c]);
    x[1 + c] = trans_occasion < 0 ? data.init_covariate_values(subject, idx)
                                  : data.trans_covariate_values[subject](trans_occasion, idx);
  }
  return x;
}

SubjectModel assemble_subject_model(const ModelSpec& spec, const LmmParameters& params,
                                    const Eigen::MatrixXi& responses,
                                    const std::vector<char>& observed,
                                    const Eigen::VectorXd& x_init,
                                    const std::vector<Eigen::VectorXd>& x_trans) {
  SubjectModel m;
  if (params.form == TransitionForm::LogitHomogeneous) {
    m.delta = initial_probs(params.beta, x_init);
    m.trans.resize(spec.T - 1);
    for (int s = 0; s < spec.T - 1; ++s) {
      Eigen::MatrixXd tau(spec.k, spec.k);
      for (int a = 0; a < spec.k; ++a)
        tau.row(a) = transition_row(params.gamma, a, x_trans[s]).transpose();
      m.trans[s] = std::move(tau);
    }
  } else {
    m.delta = params.delta;
    m.trans = params.trans;
  }
  m.emission.resize(spec.T, spec.k);
  for (int t = 0; t < spec.T; ++t)
    for (int u = 0; u < spec.k; ++u)
      m.emission(t, u) = emission_weight(params.phi, responses.col(t), observed, u);
  return m;
}

}  // namespace

SubjectModel build_subject_model(const ModelSpec& spec, const LmmParameters& params,
                                 const DataPanel& data, long subject) {
  if (subject < 0 || subject >= data.n())
    throw ValidationError("build_subject_model: subject index out of range");
  std::vector<Eigen::VectorXd> x_trans;
  Eigen::VectorXd x_init;
  if (params.form == TransitionForm::LogitHomogeneous) {
    x_init = design_row(data, spec.init_covariates, subject, -1);
    x_trans.reserve(spec.T - 1);
    for (int s = 0; s < spec.T - 1; ++s)
      x_trans.push_back(design_row(data, spec.trans_covariates, subject, s));
  }
  return assemble_subject_model(spec, params, data.responses[subject], data.observed[subject],
                                x_init, x_trans);
}

ForwardBackwardResult forward_backward(const SubjectModel& m) {
  const int T = static_cast<int>(m.emission.rows());
  const int k = static_cast<int>(m.emission.cols());
  ForwardBackwardResult out;
  out.posteriors.resize(T, k);

  Eigen::MatrixXd alpha(T, k);  // scaled forward variables
  Eigen::VectorXd scale(T);

  alpha.row(0) = m.delta.transpose().cwiseProduct(m.emission.row(0));
  scale[0] = alpha.row(0).sum();
  if (scale[0] <= 0.0)
    throw ZeroLikelihoodError("observed data has probability zero at occasion 1");
  alpha.row(0) /= scale[0];
  for (int t = 1; t < T; ++t) {
    alpha.row(t) =
        (alpha.row(t - 1) * m.trans[t - 1]).cwiseProduct(m.emission.row(t));
    scale[t] = alpha.row(t).sum();
    if (scale[t] <= 0.0)
      throw ZeroLikelihoodError("observed data has probability zero at occasion " +
                                std::to_string(t + 1));
    alpha.row(t) /= scale[t];
  }
  out.loglik = scale.array().log().sum();

  Eigen::MatrixXd beta_hat(T, k);  // scaled backward variables
  beta_hat.row(T - 1).setOnes();
  for (int t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd weighted =
        m.emission.row(t + 1).cwiseProduct(beta_hat.row(t + 1)).transpose();
    beta_hat.row(t) = (m.trans[t] * weighted).transpose() / scale[t + 1];
  }

  out.posteriors = alpha.cwiseProduct(beta_hat);
  out.pairwise.resize(T - 1);
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd xi(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        xi(a, b) = alpha(t, a) * m.trans[t](a, b) * m.emission(t + 1, b) *
                   beta_hat(t + 1, b) / scale[t + 1];
    out.pairwise[t] = std::move(xi);
  }
  return out;
}

ForwardBackwardResult forward_backward(const ModelSpec& spec, const LmmParameters& params,
                                       const DataPanel& data, long subject) {
  return forward_backward(build_subject_model(spec, params, data, subject));
}

int count_free_params(const ModelSpec& spec) {
  spec.validate();
  const int k = spec.k;
  int emission = 0;
  for (const int c : spec.categories) emission += c - 1;
  emission *= k;
  if (spec.transition_form == TransitionForm::UnrestrictedTimeVarying)
    return emission + (k - 1) + (spec.T - 1) * k * (k - 1);
  const int pi = 1 + static_cast<int>(spec.init_covariates.size());
  const int pt = 1 + static_cast<int>(spec.trans_covariates.size());
  return emission + (k - 1) * pi + k * (k - 1) * pt;
}

std::pair<double, double> information_criteria(double loglik, int g, long n) {
  if (n < 1) throw ValidationError("information_criteria: n must be >= 1");
  const double aic = -2.0 * loglik + 2.0 * g;
  const double bic = -2.0 * loglik + g * std::log(static_cast<double>(n));
  return {aic, bic};
}

Eigen::VectorXd state_adherence_scores(const LmmParameters& params) {
  const int k = static_cast<int>(params.phi.front().cols());
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(k);
  for (const auto& phi_j : params.phi)
    for (int y = 0; y < phi_j.rows(); ++y)
      scores += static_cast<double>(y) * phi_j.row(y).transpose();
  return scores;
}

void canonicalize_state_order(const ModelSpec& spec, LmmParameters& params) {
  const int k = spec.k;
  if (k <= 1) return;
  const Eigen::VectorXd scores = state_adherence_scores(params);
  std::vector<int> order(k);  // order[new] = old
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });
  if (std::is_sorted(order.begin(), order.end())) return;

  for (auto& phi_j : params.phi) {
    Eigen::MatrixXd permuted(phi_j.rows(), k);
    for (int u = 0; u < k; ++u) permuted.col(u) = phi_j.col(order[u]);
    phi_j = std::move(permuted);
  }

  if (params.form == TransitionForm::UnrestrictedTimeVarying) {
    Eigen::VectorXd delta(k);
    for (int u = 0; u < k; ++u) delta[u] = params.delta[order[u]];
    params.delta = std::move(delta);
    for (auto& m : params.trans) {
      Eigen::MatrixXd permuted(k, k);
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) permuted(a, b) = m(order[a], order[b]);
      m = std::move(permuted);
    }
    return;
  }

  // Logit form: relabeling shifts the reference category, so coefficient
  // rows are differences of extended rows (the reference row is zero).
  const int pi = static_cast<int>(params.beta.cols());
  Eigen::MatrixXd beta_ext = Eigen::MatrixXd::Zero(k, pi);
  beta_ext.bottomRows(k - 1) = params.beta;
  Eigen::MatrixXd beta_new(k - 1, pi);
  for (int u = 1; u < k; ++u)
    beta_new.row(u - 1) = beta_ext.row(order[u]) - beta_ext.row(order[0]);
  params.beta = std::move(beta_new);

  const int pt = static_cast<int>(params.gamma.front().cols());
  std::vector<Eigen::MatrixXd> gamma_new(k);
  for (int a = 0; a < k; ++a) {
    // Extended old block for origin order[a]: row per destination, ref row 0.
    const int old_from = order[a];
    Eigen::MatrixXd ext = Eigen::MatrixXd::Zero(k, pt);
    for (int r = 0; r < k - 1; ++r) {
      const int dest = r < old_from ? r : r + 1;
      ext.row(dest) = params.gamma[old_from].row(r);
    }
    Eigen::MatrixXd block(k - 1, pt);
    for (int r = 0; r < k - 1; ++r) {
      const int dest = r < a ? r : r + 1;
      block.row(r) = ext.row(order[dest]) - ext.row(order[a]);
    }
    gamma_new[a] = std::move(block);
  }
  params.gamma = std::move(gamma_new);
}

namespace {

struct Standardization {
  Eigen::VectorXd mean;   // per design column (intercept untouched)
  Eigen::VectorXd scale;  // per design column, >= tiny
};

Standardization standardize_columns(Eigen::MatrixXd& x) {
  Standardization s;
  const int p = static_cast<int>(x.cols());
  s.mean = Eigen::VectorXd::Zero(p);
  s.scale = Eigen::VectorXd::Ones(p);
  for (int c = 1; c < p; ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 1e-12) {
      s.mean[c] = mean;
      s.scale[c] = sd;
      x.col(c) = (x.col(c).array() - mean) / sd;
    }
  }
  return s;
}

// Coefficients fitted on standardized columns mapped back to the raw scale.
Eigen::MatrixXd destandardize_coefficients(const Eigen::MatrixXd& theta,
                                           const Standardization& s) {
  Eigen::MatrixXd raw = theta;
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (Eigen::Index c = 1; c < raw.cols(); ++c) {
      raw(r, c) = theta(r, c) / s.scale[c];
      raw(r, 0) -= theta(r, c) * s.mean[c] / s.scale[c];
    }
  }
  return raw;
}

struct EmWorkspace {
  // Standardized designs (leading intercept column).
  Eigen::MatrixXd x_init;   // n x (1+p_init)
  Eigen::MatrixXd x_trans;  // n*(T-1) x (1+p_trans), row i*(T-1)+s
  Standardization init_std, trans_std;

  // Per-subject E-step slots, reused across iterations.
  std::vector<ForwardBackwardResult> estep;
  std::vector<double> logliks;
};

LmmParameters deterministic_start(const ModelSpec& spec, const DataPanel& data) {
  LmmParameters params;
  params.form = spec.transition_form;
  const int k = spec.k;
  const int J = spec.n_channels();

  // Observed marginal category frequencies per channel, tilted per state so
  // states start spread along the adherence axis.
  params.phi.resize(J);
  for (int j = 0; j < J; ++j) {
    const int c = spec.categories[j];
    Eigen::VectorXd freq = Eigen::VectorXd::Constant(c, 1.0);  // add-one smoothing
    for (long i = 0; i < data.n(); ++i) {
      if (!data.observed[i][j]) continue;
      for (int t = 0; t < data.T; ++t) freq[data.responses[i](j, t)] += 1.0;
    }
    freq /= freq.sum();
    params.phi[j].resize(c, k);
    for (int u = 0; u < k; ++u) {
      const double tilt = k == 1 ? 0.0 : 2.0 * u / (k - 1.0) - 1.0;
      Eigen::VectorXd col(c);
      for (int y = 0; y < c; ++y)
        col[y] = freq[y] * std::exp(tilt * (y - 0.5 * (c - 1)));
      floor_and_normalize(col);
      params.phi[j].col(u) = col;
    }
  }

  if (spec.transition_form == TransitionForm::LogitHomogeneous) {
    params.beta = Eigen::MatrixXd::Zero(k - 1, 1 + spec.init_covariates.size());
    params.gamma.assign(k, Eigen::MatrixXd::Zero(k - 1, 1 + spec.trans_covariates.size()));
  } else {
    params.delta = Eigen::VectorXd::Constant(k, 1.0 / k);
    params.trans.assign(spec.T - 1, Eigen::MatrixXd::Constant(k, k, 1.0 / k));
  }
  return params;
}

LmmParameters random_start(const ModelSpec& spec, RngStream& rng) {
  LmmParameters params;
  params.form = spec.transition_form;
  const int k = spec.k;
  params.phi.resize(spec.n_channels());
  std::vector<double> cell;
  for (int j = 0; j < spec.n_channels(); ++j) {
    const int c = spec.categories[j];
    params.phi[j].resize(c, k);
    cell.resize(c);
    for (int u = 0; u < k; ++u) {
      rng.dirichlet_flat(cell);
      for (int y = 0; y < c; ++y) params.phi[j](y, u) = cell[y];
      floor_and_normalize(params.phi[j].col(u));
    }
  }
  const double sd = std::sqrt(0.1);
  if (spec.transition_form == TransitionForm::LogitHomogeneous) {
    params.beta.resize(k - 1, 1 + spec.init_covariates.size());
    for (Eigen::Index r = 0; r < params.beta.rows(); ++r)
      for (Eigen::Index c2 = 0; c2 < params.beta.cols(); ++c2)
        params.beta(r, c2) = rng.normal(0.0, sd);
    params.gamma.resize(k);
    for (int a = 0; a < k; ++a) {
      params.gamma[a].resize(k - 1, 1 + spec.trans_covariates.size());
      for (Eigen::Index r = 0; r < params.gamma[a].rows(); ++r)
        for (Eigen::Index c2 = 0; c2 < params.gamma[a].cols(); ++c2)
          params.gamma[a](r, c2) = rng.normal(0.0, sd);
    }
  } else {
    params.delta.resize(k);
    cell.resize(k);
    rng.dirichlet_flat(cell);
    for (int u = 0; u < k; ++u) params.delta[u] = cell[u];
    floor_and_normalize(params.delta);
    params.trans.assign(spec.T - 1, Eigen::MatrixXd::Zero(k, k));
    Eigen::VectorXd row(k);
    for (int s = 0; s < spec.T - 1; ++s)
      for (int a = 0; a < k; ++a) {
        rng.dirichlet_flat(cell);
        for (int b = 0; b < k; ++b) row[b] = cell[b];
        floor_and_normalize(row);
        params.trans[s].row(a) = row.transpose();
      }
  }
  return params;
}

// E-step over all subjects; params must be expressed against the
// (standardized) designs held in the workspace. Returns the log-likelihood.
double run_estep(const ModelSpec& spec, const LmmParameters& params, const DataPanel& data,
                 EmWorkspace& ws, int threads) {
  const int T = spec.T;
  parallel_for(static_cast<std::size_t>(data.n()), threads, [&](std::size_t i) {
    std::vector<Eigen::VectorXd> x_trans;
    Eigen::VectorXd x_init;
    if (params.form == TransitionForm::LogitHomogeneous) {
      x_init = ws.x_init.row(static_cast<long>(i)).transpose();
      x_trans.reserve(T - 1);
      for (int s = 0; s < T - 1; ++s)
        x_trans.emplace_back(
            ws.x_trans.row(static_cast<long>(i) * (T - 1) + s).transpose());
    }
    const SubjectModel m = assemble_subject_model(
        spec, params, data.responses[i], data.observed[i], x_init, x_trans);
    ws.estep[i] = forward_backward(m);
    ws.logliks[i] = ws.estep[i].loglik;
  });
  // Fixed-order reduction keeps the sum identical for any thread count.
  double loglik = 0.0;
  for (long i = 0; i < data.n(); ++i) loglik += ws.logliks[i];
  return loglik;
}

void mstep_phi(const ModelSpec& spec, const DataPanel& data, const EmWorkspace& ws,
               LmmParameters& params) {
  const int k = spec.k;
  for (int j = 0; j < spec.n_channels(); ++j) {
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(spec.categories[j], k);
    for (long i = 0; i < data.n(); ++i) {
      if (!data.observed[i][j]) continue;
      for (int t = 0; t < spec.T; ++t) {
        const int y = data.responses[i](j, t);
        counts.row(y) += ws.estep[i].posteriors.row(t);
      }
    }
    for (int u = 0; u < k; ++u) {
      const double total = counts.col(u).sum();
      if (total <= 0.0) continue;  // state received no mass; keep previous column
      Eigen::VectorXd col = counts.col(u) / total;
      floor_and_normalize(col);
      params.phi[j].col(u) = col;
    }
  }
}

void mstep_latent(const ModelSpec& spec, const DataPanel& data, const EmWorkspace& ws,
                  LmmParameters& params) {
  const int k = spec.k;
  const int T = spec.T;
  if (k == 1) return;

  if (spec.transition_form == TransitionForm::UnrestrictedTimeVarying) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(k);
    for (long i = 0; i < data.n(); ++i) delta += ws.estep[i].posteriors.row(0).transpose();
    floor_and_normalize(delta);
    params.delta = delta;
    for (int s = 0; s < T - 1; ++s) {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(k, k);
      for (long i = 0; i < data.n(); ++i) acc += ws.estep[i].pairwise[s];
      for (int a = 0; a < k; ++a) {
        Eigen::VectorXd row = acc.row(a).transpose();
        if (row.sum() <= 0.0) {
          params.trans[s].row(a).setConstant(1.0 / k);
          continue;
        }
        row /= row.sum();
        floor_and_normalize(row);
        params.trans[s].row(a) = row.transpose();
      }
    }
    return;
  }

  // Initial-state logit block: weights are first-occasion posteriors.
  {
    MultinomialLogitProblem problem;
    problem.x = ws.x_init;
    problem.ref = 0;
    problem.weights.resize(data.n(), k);
    for (long i = 0; i < data.n(); ++i)
      problem.weights.row(i) = ws.estep[i].posteriors.row(0);
    params.beta = fit_multinomial_logit(problem, params.beta, 25).theta;
  }

  // One persistence-referenced block per origin state: weights are the
  // pairwise posteriors of every (subject, occasion) pair.
  const long rows = data.n() * (T - 1);
  for (int a = 0; a < k; ++a) {
    MultinomialLogitProblem problem;
    problem.x = ws.x_trans;
    problem.ref = a;
    problem.weights.resize(rows, k);
    for (long i = 0; i < data.n(); ++i)
      for (int s = 0; s < T - 1; ++s)
        problem.weights.row(i * (T - 1) + s) = ws.estep[i].pairwise[s].row(a);
    params.gamma[a] = fit_multinomial_logit(problem, params.gamma[a], 25).theta;
  }
}

struct SingleStartResult {
  LmmParameters params;
  double loglik = 0.0;
  std::vector<double> trace;
  int n_iterations = 0;
  bool converged = false;
};

SingleStartResult run_em_from(const ModelSpec& spec, const DataPanel& data,
                              LmmParameters params, const EmOptions& options,
                              EmWorkspace& ws) {
  SingleStartResult out;
  double loglik = run_estep(spec, params, data, ws, options.threads);
  out.trace.push_back(loglik);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    mstep_phi(spec, data, ws, params);
    mstep_latent(spec, data, ws, params);
    const double next = run_estep(spec, params, data, ws, options.threads);
    out.trace.push_back(next);
    out.n_iterations = iter + 1;
    const bool done = std::abs(next - loglik) < options.tol * (1.0 + std::abs(next));
    loglik = next;
    if (done) {
      out.converged = true;
      break;
    }
  }
  out.loglik = loglik;
  out.params = std::move(params);
  return out;
}

}  // namespace

FitResult em_fit(const ModelSpec& spec, const DataPanel& data, const EmOptions& options) {
  spec.validate();
  data.validate();
  if (data.n() == 0) throw ValidationError("em_fit: empty data panel");
  if (spec.T != data.T) throw ValidationError("em_fit: spec.T does not match data.T");
  if (spec.categories != data.categories)
    throw ValidationError("em_fit: spec categories do not match data");

  EmWorkspace ws;
  ws.estep.resize(data.n());
  ws.logliks.resize(data.n());
  if (spec.transition_form == TransitionForm::LogitHomogeneous) {
    ws.x_init.resize(data.n(), 1 + spec.init_covariates.size());
    ws.x_trans.resize(data.n() * (spec.T - 1), 1 + spec.trans_covariates.size());
    for (long i = 0; i < data.n(); ++i) {
      ws.x_init.row(i) = design_row(data, spec.init_covariates, i, -1).transpose();
      for (int s = 0; s < spec.T - 1; ++s)
        ws.x_trans.row(i * (spec.T - 1) + s) =
            design_row(data, spec.trans_covariates, i, s).transpose();
    }
    ws.init_std = standardize_columns(ws.x_init);
    ws.trans_std = standardize_columns(ws.x_trans);
  }

  SingleStartResult best;
  int best_start = -1;
  for (int start = 0; start <= options.n_random_starts; ++start) {
    LmmParameters init;
    if (start == 0) {
      init = deterministic_start(spec, data);
    } else {
      RngStream rng = RngStream::substream(options.seed, static_cast<std::uint64_t>(start));
      init = random_start(spec, rng);
    }
    SingleStartResult candidate = run_em_from(spec, data, std::move(init), options, ws);
    if (best_start < 0 || candidate.loglik > best.loglik) {
      best = std::move(candidate);
      best_start = start;
    }
  }

  // Report on the raw covariate scale with canonically ordered states.
  if (spec.transition_form == TransitionForm::LogitHomogeneous && spec.k > 1) {
    best.params.beta = destandardize_coefficients(best.params.beta, ws.init_std);
    for (auto& block : best.params.gamma)
      block = destandardize_coefficients(block, ws.trans_std);
  }
  canonicalize_state_order(spec, best.params);

  FitResult result;
  result.spec = spec;
  result.params = std::move(best.params);
  result.loglik = best.loglik;
  result.loglik_trace = std::move(best.trace);
  result.n_iterations = best.n_iterations;
  result.converged = best.converged;
  result.g = count_free_params(spec);
  result.n = data.n();
  std::tie(result.aic, result.bic) = information_criteria(result.loglik, result.g, result.n);
  result.start_id = best_start;
  return result;
}

Eigen::MatrixXd mean_transition_matrix(const ModelSpec& spec, const LmmParameters& params,
                                       const DataPanel& data) {
  params.validate(spec);
  const int k = spec.k;
  if (k == 1) return Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(k, k);
  if (params.form == TransitionForm::UnrestrictedTimeVarying) {
    for (const auto& m : params.trans) mean += m;
    mean /= static_cast<double>(params.trans.size());
    return mean;
  }
  long count = 0;
  for (long i = 0; i < data.n(); ++i) {
    for (int s = 0; s < spec.T - 1; ++s) {
      const Eigen::VectorXd x = design_row(data, spec.trans_covariates, i, s);
      for (int a = 0; a < k; ++a) mean.row(a) += transition_row(params.gamma, a, x).transpose();
      ++count;
    }
  }
  mean /= static_cast<double>(count);
  return mean;
}

SelectionResult model_selection(const DataPanel& data, const std::vector<int>& k_range,
                                const std::vector<std::string>& covariate_grid,
                                const EmOptions& options) {
  if (k_range.empty()) throw ValidationError("model_selection: k_range must be nonempty");
  data.validate();

  SelectionResult out;
  std::uint64_t fit_counter = 0;
  const auto fit_seed = [&]() { return splitmix64(options.seed ^ ++fit_counter); };

  const auto run_fit = [&](const ModelSpec& spec, const std::string& label)
      -> std::pair<SelectionRow, FitResult> {
    SelectionRow row;
    row.label = label;
    row.k = spec.k;
    row.form = spec.transition_form;
    row.covariates = spec.init_covariates;
    FitResult fit;
    try {
      EmOptions opts = options;
      opts.seed = fit_seed();
      fit = em_fit(spec, data, opts);
      row.g = fit.g;
      row.loglik = fit.loglik;
      row.aic = fit.aic;
      row.bic = fit.bic;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    return {row, fit};
  };

  ModelSpec base;
  base.T = data.T;
  base.categories = data.categories;
  if (base.drugs.size() != base.categories.size()) {
    base.drugs.resize(base.categories.size());
    for (std::size_t j = 0; j < base.drugs.size(); ++j)
      base.drugs[j] = "channel_" + std::to_string(j + 1);
  }

  // Stage 1: unrestricted fits across the state grid.
  double best_basic_bic = std::numeric_limits<double>::infinity();
  int best_k = -1;
  FitResult best_basic;
  for (const int k : k_range) {
    ModelSpec spec = base;
    spec.k = k;
    spec.transition_form = TransitionForm::UnrestrictedTimeVarying;
    auto [row, fit] = run_fit(spec, "unrestricted");
    if (!row.failed && row.bic < best_basic_bic) {
      best_basic_bic = row.bic;
      best_k = k;
      best_basic = std::move(fit);
    }
    out.rows.push_back(std::move(row));
  }
  if (best_k < 0)
    throw ComputationError("model_selection: every unrestricted fit failed");
  out.best_k = best_k;

  // Stage 2: logit form at the chosen k, forward covariate selection on both
  // probabilities.
  ModelSpec current_spec = base;
  current_spec.k = best_k;
  current_spec.transition_form = TransitionForm::LogitHomogeneous;
  auto [logit_row, logit_fit] = run_fit(current_spec, "logit");
  const bool logit_ok = !logit_row.failed;
  out.rows.push_back(logit_row);
  std::size_t selected_row = out.rows.size() - 1;

  if (!logit_ok) {
    // Fall back to the chosen unrestricted fit.
    for (std::size_t r = 0; r < out.rows.size(); ++r)
      if (!out.rows[r].failed && out.rows[r].k == best_k &&
          out.rows[r].form == TransitionForm::UnrestrictedTimeVarying)
        selected_row = r;
    out.rows[selected_row].selected = true;
    out.best = std::move(best_basic);
    return out;
  }

  FitResult current_fit = std::move(logit_fit);
  std::vector<std::string> chosen;
  std::vector<std::string> remaining = covariate_grid;
  while (!remaining.empty()) {
    double best_step_bic = current_fit.bic;
    int best_candidate = -1;
    std::size_t best_candidate_row = 0;
    FitResult best_candidate_fit;
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      ModelSpec spec = current_spec;
      spec.init_covariates = chosen;
      spec.init_covariates.push_back(remaining[c]);
      spec.trans_covariates = spec.init_covariates;
      std::string label = "logit";
      for (const auto& name : spec.init_covariates) label += "+" + name;
      auto [row, fit] = run_fit(spec, label);
      out.rows.push_back(std::move(row));
      if (!out.rows.back().failed && out.rows.back().bic < best_step_bic) {
        best_step_bic = out.rows.back().bic;
        best_candidate = static_cast<int>(c);
        best_candidate_row = out.rows.size() - 1;
        best_candidate_fit = std::move(fit);
      }
    }
    if (best_candidate < 0) break;
    chosen.push_back(remaining[best_candidate]);
    remaining.erase(remaining.begin() + best_candidate);
    current_spec.init_covariates = chosen;
    current_spec.trans_covariates = chosen;
    current_fit = std::move(best_candidate_fit);
    selected_row = best_candidate_row;
  }

  out.rows[selected_row].selected = true;
  out.selected_covariates = chosen;
  out.best = std::move(current_fit);
  return out;
}

}  // namespace adherelm
