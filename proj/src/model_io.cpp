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

#include "adherelm/model_io.hpp"

#include "adherelm/errors.hpp"

namespace adherelm {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ValidationError("model document: " + what + " must have " + std::to_string(rows) +
                          " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError("model document: " + what + " row " + std::to_string(r) +
                            " must have " + std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

std::string form_name(TransitionForm f) {
  return f == TransitionForm::UnrestrictedTimeVarying ? "unrestricted_time_varying"
                                                      : "logit_homogeneous";
}

TransitionForm form_from_name(const std::string& name) {
  if (name == "unrestricted_time_varying") return TransitionForm::UnrestrictedTimeVarying;
  if (name == "logit_homogeneous") return TransitionForm::LogitHomogeneous;
  throw ValidationError("model document: unknown transition_form '" + name + "'");
}

}  // namespace

json spec_to_json(const ModelSpec& spec) {
  return json{{"k", spec.k},
              {"drugs", spec.drugs},
              {"categories", spec.categories},
              {"T", spec.T},
              {"init_covariates", spec.init_covariates},
              {"trans_covariates", spec.trans_covariates},
              {"transition_form", form_name(spec.transition_form)}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  try {
    spec.k = j.at("k").get<int>();
    spec.drugs = j.at("drugs").get<std::vector<std::string>>();
    spec.categories = j.at("categories").get<std::vector<int>>();
    spec.T = j.at("T").get<int>();
    spec.init_covariates = j.at("init_covariates").get<std::vector<std::string>>();
    spec.trans_covariates = j.at("trans_covariates").get<std::vector<std::string>>();
    spec.transition_form = form_from_name(j.at("transition_form").get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model document: malformed spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

json params_to_json(const LmmParameters& params) {
  json out;
  json phi = json::array();
  for (const auto& m : params.phi) phi.push_back(matrix_to_json(m));
  out["phi"] = std::move(phi);
  if (params.form == TransitionForm::LogitHomogeneous) {
    out["beta"] = matrix_to_json(params.beta);
    json gamma = json::array();
    for (const auto& block : params.gamma) gamma.push_back(matrix_to_json(block));
    out["gamma"] = std::move(gamma);
  } else {
    json delta = json::array();
    for (Eigen::Index u = 0; u < params.delta.size(); ++u) delta.push_back(params.delta[u]);
    out["delta"] = std::move(delta);
    json trans = json::array();
    for (const auto& m : params.trans) trans.push_back(matrix_to_json(m));
    out["trans"] = std::move(trans);
  }
  return out;
}

LmmParameters params_from_json(const json& j, const ModelSpec& spec) {
  LmmParameters params;
  params.form = spec.transition_form;
  try {
    const json& phi = j.at("phi");
    if (!phi.is_array() || static_cast<int>(phi.size()) != spec.n_channels())
      throw ValidationError("model document: phi must have one matrix per channel");
    params.phi.resize(spec.n_channels());
    for (int c = 0; c < spec.n_channels(); ++c)
      params.phi[c] = matrix_from_json(phi[c], spec.categories[c], spec.k,
                                       "phi[" + std::to_string(c) + "]");
    if (spec.transition_form == TransitionForm::LogitHomogeneous) {
      const Eigen::Index pi = 1 + static_cast<Eigen::Index>(spec.init_covariates.size());
      const Eigen::Index pt = 1 + static_cast<Eigen::Index>(spec.trans_covariates.size());
      params.beta = spec.k == 1 ? Eigen::MatrixXd(0, pi)
                                : matrix_from_json(j.at("beta"), spec.k - 1, pi, "beta");
      const json& gamma = j.at("gamma");
      if (!gamma.is_array() || static_cast<int>(gamma.size()) != spec.k)
        throw ValidationError("model document: gamma must have one block per state");
      params.gamma.resize(spec.k);
      for (int a = 0; a < spec.k; ++a)
        params.gamma[a] = spec.k == 1
                              ? Eigen::MatrixXd(0, pt)
                              : matrix_from_json(gamma[a], spec.k - 1, pt,
                                                 "gamma[" + std::to_string(a) + "]");
    } else {
      const json& delta = j.at("delta");
      if (!delta.is_array() || static_cast<int>(delta.size()) != spec.k)
        throw ValidationError("model document: delta must have k entries");
      params.delta.resize(spec.k);
      for (int u = 0; u < spec.k; ++u) params.delta[u] = delta[u].get<double>();
      const json& trans = j.at("trans");
      if (!trans.is_array() || static_cast<int>(trans.size()) != spec.T - 1)
        throw ValidationError("model document: trans must have T-1 matrices");
      params.trans.resize(spec.T - 1);
      for (int s = 0; s < spec.T - 1; ++s)
        params.trans[s] =
            matrix_from_json(trans[s], spec.k, spec.k, "trans[" + std::to_string(s) + "]");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model document: malformed parameters: ") + e.what());
  }
  params.validate(spec);
  return params;
}

json fit_to_json(const FitResult& fit) {
  return json{{"loglik", fit.loglik},
              {"n_iterations", fit.n_iterations},
              {"converged", fit.converged},
              {"g", fit.g},
              {"aic", fit.aic},
              {"bic", fit.bic},
              {"start_id", fit.start_id},
              {"n", fit.n}};
}

std::string model_document(const FitResult& fit) {
  json doc;
  doc["format_version"] = 1;
  doc["spec"] = spec_to_json(fit.spec);
  doc["parameters"] = params_to_json(fit.params);
  doc["fit"] = fit_to_json(fit);
  return doc.dump(2);
}

ModelDocument parse_model_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model document: invalid JSON: ") + e.what());
  }
  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer())
    throw ValidationError("model document: missing format_version");
  const int version = doc["format_version"].get<int>();
  if (version != 1)
    throw ValidationError("model document: unsupported format_version " +
                          std::to_string(version));
  ModelDocument out;
  out.spec = spec_from_json(doc.at("spec"));
  out.params = params_from_json(doc.at("parameters"), out.spec);
  return out;
}

}  // namespace adherelm
