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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adherelm/adherence.hpp"
#include "adherelm/cohort.hpp"
#include "adherelm/decoding.hpp"
#include "adherelm/errors.hpp"
#include "adherelm/lmm.hpp"
#include "adherelm/model_io.hpp"
#include "adherelm/survival.hpp"

namespace py = pybind11;
using namespace adherelm;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adherence panels, latent Markov models, behavioural profiles and "
            "survival analysis for longitudinal drug-purchase data";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  static py::exception<ComputationError> computation_error(m, "ComputationError");
  py::register_exception<ZeroLikelihoodError>(m, "ZeroLikelihoodError",
                                              computation_error.ptr());

  // --- records -------------------------------------------------------------
  py::enum_<Drug>(m, "Drug")
      .value("RAS", Drug::RAS)
      .value("BB", Drug::BB)
      .value("MRA", Drug::MRA);
  py::enum_<Gender>(m, "Gender").value("M", Gender::M).value("F", Gender::F);

  py::class_<PatientRecord>(m, "PatientRecord")
      .def(py::init<>())
      .def_readwrite("patient_id", &PatientRecord::patient_id)
      .def_readwrite("index_date", &PatientRecord::index_date)
      .def_readwrite("age", &PatientRecord::age)
      .def_readwrite("gender", &PatientRecord::gender)
      .def_readwrite("mcs", &PatientRecord::mcs)
      .def_readwrite("followup_days", &PatientRecord::followup_days)
      .def_readwrite("event", &PatientRecord::event);

  py::class_<PurchaseEvent>(m, "PurchaseEvent")
      .def(py::init<>())
      .def_readwrite("patient_id", &PurchaseEvent::patient_id)
      .def_readwrite("drug", &PurchaseEvent::drug)
      .def_readwrite("dispense_day", &PurchaseEvent::dispense_day)
      .def_readwrite("coverage_days", &PurchaseEvent::coverage_days);

  // --- adherence -----------------------------------------------------------
  py::class_<CoverageTimeline>(m, "CoverageTimeline")
      .def("covered_days_before", &CoverageTimeline::covered_days_before);

  py::class_<DrugChannel>(m, "DrugChannel")
      .def_readonly("user", &DrugChannel::user)
      .def_readonly("ratios", &DrugChannel::ratios)
      .def_readonly("levels", &DrugChannel::levels);

  py::class_<AdherencePanel>(m, "AdherencePanel")
      .def_readonly("patient_id", &AdherencePanel::patient_id)
      .def("channel", &AdherencePanel::channel, py::return_value_policy::reference_internal);

  m.def("build_timeline",
        [](const std::vector<PurchaseEvent>& purchases) { return build_timeline(purchases); });
  m.def("cumulative_ratio", &cumulative_ratio, py::arg("timeline"), py::arg("month"));
  m.def("adherence_level", &adherence_level, py::arg("ratio"));
  m.def("build_panel", [](const PatientRecord& patient,
                          const std::vector<PurchaseEvent>& purchases) {
    return build_panel(patient, purchases);
  });
  m.def("build_panels",
        [](const std::vector<PatientRecord>& patients,
           const std::vector<PurchaseEvent>& purchases,
           int threads) { return build_panels(patients, purchases, threads); },
        py::arg("patients"), py::arg("purchases"), py::arg("threads") = 1);

  // --- latent Markov model --------------------------------------------------
  py::enum_<TransitionForm>(m, "TransitionForm")
      .value("UnrestrictedTimeVarying", TransitionForm::UnrestrictedTimeVarying)
      .value("LogitHomogeneous", TransitionForm::LogitHomogeneous);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("k", &ModelSpec::k)
      .def_readwrite("drugs", &ModelSpec::drugs)
      .def_readwrite("categories", &ModelSpec::categories)
      .def_readwrite("T", &ModelSpec::T)
      .def_readwrite("init_covariates", &ModelSpec::init_covariates)
      .def_readwrite("trans_covariates", &ModelSpec::trans_covariates)
      .def_readwrite("transition_form", &ModelSpec::transition_form)
      .def("validate", &ModelSpec::validate);

  py::class_<LmmParameters>(m, "LmmParameters")
      .def(py::init<>())
      .def_readwrite("form", &LmmParameters::form)
      .def_readwrite("phi", &LmmParameters::phi)
      .def_readwrite("beta", &LmmParameters::beta)
      .def_readwrite("gamma", &LmmParameters::gamma)
      .def_readwrite("delta", &LmmParameters::delta)
      .def_readwrite("trans", &LmmParameters::trans)
      .def("validate", &LmmParameters::validate);

  py::class_<DataPanel>(m, "DataPanel")
      .def(py::init<>())
      .def_readwrite("T", &DataPanel::T)
      .def_readwrite("categories", &DataPanel::categories)
      .def_readwrite("subject_ids", &DataPanel::subject_ids)
      .def_readwrite("responses", &DataPanel::responses)
      .def_readwrite("covariate_names", &DataPanel::covariate_names)
      .def_readwrite("init_covariate_values", &DataPanel::init_covariate_values)
      .def_readwrite("trans_covariate_values", &DataPanel::trans_covariate_values)
      .def_property("observed",
                    [](const DataPanel& d) {
                      std::vector<std::vector<bool>> out;
                      out.reserve(d.observed.size());
                      for (const auto& row : d.observed)
                        out.emplace_back(row.begin(), row.end());
                      return out;
                    },
                    [](DataPanel& d, const std::vector<std::vector<bool>>& value) {
                      d.observed.clear();
                      for (const auto& row : value)
                        d.observed.emplace_back(row.begin(), row.end());
                    })
      .def_property_readonly("n", &DataPanel::n)
      .def("validate", &DataPanel::validate);

  m.def("build_data_panel",
        [](const std::vector<PatientRecord>& patients,
           const std::vector<AdherencePanel>& panels) {
          return build_data_panel(patients, panels);
        });

  m.def("initial_probs", &initial_probs, py::arg("beta"), py::arg("x_init_row"));
  m.def("transition_row", &transition_row, py::arg("gamma"), py::arg("from_state"),
        py::arg("x_trans_row"));

  py::class_<ForwardBackwardResult>(m, "ForwardBackwardResult")
      .def_readonly("loglik", &ForwardBackwardResult::loglik)
      .def_readonly("posteriors", &ForwardBackwardResult::posteriors)
      .def_readonly("pairwise", &ForwardBackwardResult::pairwise);

  m.def("forward_backward",
        [](const ModelSpec& spec, const LmmParameters& params, const DataPanel& data,
           long subject) { return forward_backward(spec, params, data, subject); },
        py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("subject"));

  py::class_<EmOptions>(m, "EmOptions")
      .def(py::init<>())
      .def_readwrite("max_iter", &EmOptions::max_iter)
      .def_readwrite("tol", &EmOptions::tol)
      .def_readwrite("n_random_starts", &EmOptions::n_random_starts)
      .def_readwrite("seed", &EmOptions::seed)
      .def_readwrite("threads", &EmOptions::threads);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("spec", &FitResult::spec)
      .def_readonly("params", &FitResult::params)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("loglik_trace", &FitResult::loglik_trace)
      .def_readonly("n_iterations", &FitResult::n_iterations)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("g", &FitResult::g)
      .def_readonly("aic", &FitResult::aic)
      .def_readonly("bic", &FitResult::bic)
      .def_readonly("start_id", &FitResult::start_id)
      .def_readonly("n", &FitResult::n);

  m.def("em_fit", &em_fit, py::arg("spec"), py::arg("data"),
        py::arg("options") = EmOptions{},
        py::call_guard<py::gil_scoped_release>());
  m.def("count_free_params", &count_free_params, py::arg("spec"));
  m.def("information_criteria", &information_criteria, py::arg("loglik"), py::arg("g"),
        py::arg("n"));
  m.def("mean_transition_matrix", &mean_transition_matrix, py::arg("spec"),
        py::arg("params"), py::arg("data"));

  py::class_<SelectionRow>(m, "SelectionRow")
      .def_readonly("label", &SelectionRow::label)
      .def_readonly("k", &SelectionRow::k)
      .def_readonly("g", &SelectionRow::g)
      .def_readonly("loglik", &SelectionRow::loglik)
      .def_readonly("aic", &SelectionRow::aic)
      .def_readonly("bic", &SelectionRow::bic)
      .def_readonly("selected", &SelectionRow::selected)
      .def_readonly("failed", &SelectionRow::failed)
      .def_readonly("error", &SelectionRow::error);

  py::class_<SelectionResult>(m, "SelectionResult")
      .def_readonly("rows", &SelectionResult::rows)
      .def_readonly("best_k", &SelectionResult::best_k)
      .def_readonly("selected_covariates", &SelectionResult::selected_covariates)
      .def_readonly("best", &SelectionResult::best);

  m.def("model_selection", &model_selection, py::arg("data"), py::arg("k_range"),
        py::arg("covariate_grid"), py::arg("options") = EmOptions{},
        py::call_guard<py::gil_scoped_release>());

  m.def("model_document", &model_document, py::arg("fit"));

  // --- decoding --------------------------------------------------------------
  py::class_<LatentPath>(m, "LatentPath")
      .def(py::init<>())
      .def_readwrite("states", &LatentPath::states);

  py::enum_<ProfileLabel>(m, "ProfileLabel")
      .value("A", ProfileLabel::A)
      .value("B", ProfileLabel::B)
      .value("C", ProfileLabel::C)
      .value("D", ProfileLabel::D)
      .value("E", ProfileLabel::E)
      .value("F", ProfileLabel::F)
      .value("G", ProfileLabel::G)
      .value("H", ProfileLabel::H)
      .value("I", ProfileLabel::I);

  py::class_<ViterbiResult>(m, "ViterbiResult")
      .def_readonly("path", &ViterbiResult::path)
      .def_readonly("log_joint", &ViterbiResult::log_joint);

  m.def("local_decode", &local_decode, py::arg("posteriors"));
  m.def("viterbi_decode",
        [](const ModelSpec& spec, const LmmParameters& params, const DataPanel& data,
           long subject) { return viterbi_decode(spec, params, data, subject); },
        py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("subject"));
  m.def("classify_profile", &classify_profile, py::arg("path"));
  m.def("profile_name", &profile_name, py::arg("label"));

  py::class_<ProfileTable>(m, "ProfileTable")
      .def_readonly("counts", &ProfileTable::counts)
      .def_readonly("retained", &ProfileTable::retained)
      .def_readonly("total", &ProfileTable::total)
      .def_readonly("min_count", &ProfileTable::min_count);

  m.def("profile_table",
        [](const std::vector<ProfileLabel>& labels, long min_count) {
          return profile_table(labels, min_count);
        },
        py::arg("labels"), py::arg("min_count") = 1500);

  // --- survival ---------------------------------------------------------------
  py::class_<SurvivalSample>(m, "SurvivalSample")
      .def(py::init<>())
      .def_readwrite("id", &SurvivalSample::id)
      .def_readwrite("time", &SurvivalSample::time)
      .def_readwrite("event", &SurvivalSample::event)
      .def_readwrite("group", &SurvivalSample::group)
      .def_readwrite("age", &SurvivalSample::age)
      .def_readwrite("gender_f", &SurvivalSample::gender_f)
      .def_readwrite("mcs", &SurvivalSample::mcs);

  py::class_<KmPoint>(m, "KmPoint")
      .def_readonly("time", &KmPoint::time)
      .def_readonly("survival", &KmPoint::survival)
      .def_readonly("at_risk", &KmPoint::at_risk)
      .def_readonly("events", &KmPoint::events)
      .def_readonly("greenwood_var", &KmPoint::greenwood_var);

  py::class_<KmCurve>(m, "KmCurve")
      .def_readonly("points", &KmCurve::points)
      .def_readonly("n", &KmCurve::n)
      .def_readonly("max_time", &KmCurve::max_time)
      .def("survival_at", &KmCurve::survival_at);

  m.def("km_estimate", [](const std::vector<SurvivalSample>& samples) {
    return km_estimate(samples);
  });

  py::class_<LogrankResult>(m, "LogrankResult")
      .def_readonly("statistic", &LogrankResult::statistic)
      .def_readonly("df", &LogrankResult::df)
      .def_readonly("p_value", &LogrankResult::p_value);

  m.def("logrank_test", &logrank_test, py::arg("groups"));

  py::class_<CoxResult>(m, "CoxResult")
      .def_readonly("terms", &CoxResult::terms)
      .def_readonly("coefficients", &CoxResult::coefficients)
      .def_readonly("standard_errors", &CoxResult::standard_errors)
      .def_readonly("hazard_ratios", &CoxResult::hazard_ratios)
      .def_readonly("ci_low", &CoxResult::ci_low)
      .def_readonly("ci_high", &CoxResult::ci_high)
      .def_readonly("loglik", &CoxResult::loglik)
      .def_readonly("null_loglik", &CoxResult::null_loglik)
      .def_readonly("n_iterations", &CoxResult::n_iterations);

  m.def("cox_fit",
        [](const Eigen::MatrixXd& design, const std::vector<std::string>& terms,
           const std::vector<double>& time, const std::vector<bool>& event) {
          std::vector<char> flags(event.begin(), event.end());
          return cox_fit(design, terms, time, flags);
        },
        py::arg("design"), py::arg("terms"), py::arg("time"), py::arg("event"));
  m.def("cox_fit_profiles",
        [](const std::vector<SurvivalSample>& samples,
           const std::vector<std::string>& group_names, int reference_group,
           bool adjust_covariates) {
          return cox_fit_profiles(samples, group_names, reference_group, adjust_covariates);
        },
        py::arg("samples"), py::arg("group_names"), py::arg("reference_group"),
        py::arg("adjust_covariates") = true);

  py::class_<RmstResult>(m, "RmstResult")
      .def_readonly("tau", &RmstResult::tau)
      .def_readonly("rmst_a", &RmstResult::rmst_a)
      .def_readonly("rmst_b", &RmstResult::rmst_b)
      .def_readonly("se_a", &RmstResult::se_a)
      .def_readonly("se_b", &RmstResult::se_b)
      .def_readonly("difference", &RmstResult::difference)
      .def_readonly("se_difference", &RmstResult::se_difference)
      .def_readonly("ci_low", &RmstResult::ci_low)
      .def_readonly("ci_high", &RmstResult::ci_high);

  m.def("rmst", &rmst, py::arg("curve"), py::arg("tau"));
  m.def("rmst_difference",
        [](const std::vector<SurvivalSample>& a, const std::vector<SurvivalSample>& b,
           double tau, bool truncate) { return rmst_difference(a, b, tau, truncate); },
        py::arg("samples_a"), py::arg("samples_b"), py::arg("tau"),
        py::arg("truncate_at_last_event") = false);

  // --- cohort & simulation -----------------------------------------------------
  py::class_<CohortData>(m, "CohortData")
      .def(py::init<>())
      .def_readwrite("patients", &CohortData::patients)
      .def_readwrite("purchases", &CohortData::purchases);

  m.def("load_cohort", &load_cohort, py::arg("patients_path"), py::arg("purchases_path"));

  py::class_<CohortFilterOptions>(m, "CohortFilterOptions")
      .def(py::init<>())
      .def_readwrite("exclude_observation_deaths",
                     &CohortFilterOptions::exclude_observation_deaths);
  py::class_<CohortFilterStats>(m, "CohortFilterStats")
      .def_readonly("n_input", &CohortFilterStats::n_input)
      .def_readonly("n_kept", &CohortFilterStats::n_kept)
      .def_readonly("n_excluded_unexposed_censored",
                    &CohortFilterStats::n_excluded_unexposed_censored)
      .def_readonly("n_excluded_observation_deaths",
                    &CohortFilterStats::n_excluded_observation_deaths);
  m.def("filter_cohort",
        [](const CohortData& cohort, const CohortFilterOptions& options) {
          CohortFilterStats stats;
          CohortData kept = filter_cohort(cohort, options, &stats);
          return py::make_tuple(std::move(kept), stats);
        },
        py::arg("cohort"), py::arg("options") = CohortFilterOptions{});

  py::class_<CovariateModel>(m, "CovariateModel")
      .def(py::init<>())
      .def_readwrite("age_mean", &CovariateModel::age_mean)
      .def_readwrite("age_sd", &CovariateModel::age_sd)
      .def_readwrite("age_min", &CovariateModel::age_min)
      .def_readwrite("age_max", &CovariateModel::age_max)
      .def_readwrite("prob_female", &CovariateModel::prob_female)
      .def_readwrite("mcs_init_mean", &CovariateModel::mcs_init_mean)
      .def_readwrite("mcs_init_sd", &CovariateModel::mcs_init_sd)
      .def_readwrite("mcs_step_prob", &CovariateModel::mcs_step_prob);

  py::class_<SurvivalSimModel>(m, "SurvivalSimModel")
      .def(py::init<>())
      .def_readwrite("baseline_hazard_per_year", &SurvivalSimModel::baseline_hazard_per_year)
      .def_readwrite("state_multipliers", &SurvivalSimModel::state_multipliers);

  py::class_<SyntheticCohortConfig>(m, "SyntheticCohortConfig")
      .def(py::init<>())
      .def_readwrite("n_patients", &SyntheticCohortConfig::n_patients)
      .def_readwrite("seed", &SyntheticCohortConfig::seed)
      .def_readwrite("spec", &SyntheticCohortConfig::spec)
      .def_readwrite("true_params", &SyntheticCohortConfig::true_params)
      .def_readwrite("covariates", &SyntheticCohortConfig::covariates)
      .def_readwrite("survival", &SyntheticCohortConfig::survival)
      .def_readwrite("censor_horizon_days", &SyntheticCohortConfig::censor_horizon_days)
      .def_readwrite("user_prob", &SyntheticCohortConfig::user_prob)
      .def("validate", &SyntheticCohortConfig::validate);

  py::class_<SimulatedCohort>(m, "SimulatedCohort")
      .def_readonly("data", &SimulatedCohort::data)
      .def_readonly("true_paths", &SimulatedCohort::true_paths)
      .def_readonly("true_panels", &SimulatedCohort::true_panels);

  m.def("simulate_cohort", &simulate_cohort, py::arg("config"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<SampledPanel>(m, "SampledPanel")
      .def_readonly("data", &SampledPanel::data)
      .def_readonly("paths", &SampledPanel::paths);

  m.def("sample_panel", &sample_panel, py::arg("spec"), py::arg("params"), py::arg("n"),
        py::arg("covariates") = CovariateModel{}, py::arg("seed") = 1,
        py::arg("user_prob") = std::vector<double>{}, py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "0.1.0";
#endif
}
