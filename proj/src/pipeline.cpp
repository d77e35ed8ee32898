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

#include "adherelm/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "adherelm/csv.hpp"
#include "adherelm/decoding.hpp"
#include "adherelm/errors.hpp"
#include "adherelm/model_io.hpp"
#include "adherelm/parallel.hpp"
#include "adherelm/survival.hpp"

namespace adherelm {

namespace {

using nlohmann::json;

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double require_number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    throw ValidationError("config: " + where + " requires numeric '" + key + "'");
  return j[key].get<double>();
}

}  // namespace

std::string PipelineConfig::resolved_patients_path() const {
  return patients_path.empty() ? artifact_path("patients.csv") : patients_path;
}

std::string PipelineConfig::resolved_purchases_path() const {
  return purchases_path.empty() ? artifact_path("purchases.csv") : purchases_path;
}

std::string PipelineConfig::artifact_path(const std::string& name) const {
  return join_path(output_dir, name);
}

PipelineConfig load_pipeline_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }

  PipelineConfig config;
  if (!doc.contains("seed") || !doc["seed"].is_number_unsigned())
    throw ValidationError(path + ": a non-negative integer 'seed' is mandatory");
  config.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("threads")) {
    config.threads = doc["threads"].get<int>();
    if (config.threads < 1) throw ValidationError(path + ": threads must be >= 1");
  }
  if (doc.contains("output_dir")) config.output_dir = doc["output_dir"].get<std::string>();
  if (doc.contains("paths")) {
    const json& paths = doc["paths"];
    if (paths.contains("patients")) config.patients_path = paths["patients"].get<std::string>();
    if (paths.contains("purchases"))
      config.purchases_path = paths["purchases"].get<std::string>();
  }

  if (doc.contains("model")) {
    const json& model = doc["model"];
    if (model.contains("k_range")) {
      config.k_range = model["k_range"].get<std::vector<int>>();
      if (config.k_range.empty()) throw ValidationError(path + ": model.k_range is empty");
      for (const int k : config.k_range)
        if (k < 1) throw ValidationError(path + ": model.k_range entries must be >= 1");
    }
    if (model.contains("covariates"))
      config.covariates = model["covariates"].get<std::vector<std::string>>();
  }

  if (doc.contains("em")) {
    const json& em = doc["em"];
    if (em.contains("tol")) config.em.tol = require_number(em, "tol", "em");
    if (em.contains("max_iter")) config.em.max_iter = em["max_iter"].get<int>();
    if (em.contains("n_random_starts"))
      config.em.n_random_starts = em["n_random_starts"].get<int>();
    if (config.em.tol <= 0.0 || config.em.max_iter < 1 || config.em.n_random_starts < 0)
      throw ValidationError(path + ": invalid em section");
  }
  config.em.seed = config.seed;

  if (doc.contains("profile")) {
    const json& profile = doc["profile"];
    if (profile.contains("min_count"))
      config.profile_min_count = profile["min_count"].get<long>();
    if (config.profile_min_count < 1)
      throw ValidationError(path + ": profile.min_count must be >= 1");
    if (profile.contains("decode_mode")) {
      const std::string mode = profile["decode_mode"].get<std::string>();
      if (mode == "global")
        config.decode_mode = DecodeMode::Global;
      else if (mode == "local")
        config.decode_mode = DecodeMode::Local;
      else
        throw ValidationError(path + ": profile.decode_mode must be global|local");
    }
  }

  if (doc.contains("survival")) {
    const json& surv = doc["survival"];
    if (surv.contains("tau_years")) config.tau_years = require_number(surv, "tau_years", "survival");
    if (config.tau_years <= 0.0) throw ValidationError(path + ": survival.tau_years must be > 0");
    if (surv.contains("landmark")) config.landmark = surv["landmark"].get<bool>();
    if (surv.contains("truncate_at_last_event"))
      config.rmst_truncate_at_last_event = surv["truncate_at_last_event"].get<bool>();
  }

  if (doc.contains("simulate")) {
    const json& sim = doc["simulate"];
    SyntheticCohortConfig sc;
    sc.n_patients = sim.contains("n_patients") ? sim["n_patients"].get<long>() : 0;
    sc.seed = config.seed;
    if (!sim.contains("true_model"))
      throw ValidationError(path + ": simulate.true_model is required");
    sc.spec = spec_from_json(sim["true_model"].at("spec"));
    sc.true_params = params_from_json(sim["true_model"].at("parameters"), sc.spec);
    if (sim.contains("user_prob")) {
      const json& up = sim["user_prob"];
      for (int j = 0; j < kNumDrugs; ++j) {
        const std::string name = drug_name(static_cast<Drug>(j));
        if (up.contains(name)) sc.user_prob[j] = up[name].get<double>();
      }
    }
    if (sim.contains("covariates")) {
      const json& cov = sim["covariates"];
      CovariateModel& m = sc.covariates;
      if (cov.contains("age_mean")) m.age_mean = cov["age_mean"].get<double>();
      if (cov.contains("age_sd")) m.age_sd = cov["age_sd"].get<double>();
      if (cov.contains("age_min")) m.age_min = cov["age_min"].get<int>();
      if (cov.contains("age_max")) m.age_max = cov["age_max"].get<int>();
      if (cov.contains("prob_female")) m.prob_female = cov["prob_female"].get<double>();
      if (cov.contains("mcs_init_mean")) m.mcs_init_mean = cov["mcs_init_mean"].get<double>();
      if (cov.contains("mcs_init_sd")) m.mcs_init_sd = cov["mcs_init_sd"].get<double>();
      if (cov.contains("mcs_step_prob")) m.mcs_step_prob = cov["mcs_step_prob"].get<double>();
    }
    if (sim.contains("survival")) {
      const json& surv = sim["survival"];
      sc.survival.baseline_hazard_per_year =
          require_number(surv, "baseline_hazard_per_year", "simulate.survival");
      sc.survival.state_multipliers = surv.at("state_multipliers").get<std::vector<double>>();
    }
    if (sim.contains("censor_horizon_days"))
      sc.censor_horizon_days = sim["censor_horizon_days"].get<long>();
    sc.validate();
    config.simulate = std::move(sc);
  }

  return config;
}

namespace {

// ---------------------------------------------------------------------------
// Artifact writers. All output is assembled deterministically and written in
// one shot, so identical runs produce identical bytes.

std::string patients_csv(std::span<const PatientRecord> patients) {
  std::string out = "patient_id,index_date,age,gender,followup_days,event";
  for (int t = 1; t <= kMonths; ++t) out += ",mcs_" + std::to_string(t);
  out += "\n";
  for (const PatientRecord& p : patients) {
    out += p.patient_id + "," + p.index_date + "," + std::to_string(p.age) + "," +
           gender_name(p.gender) + "," + std::to_string(p.followup_days) + "," +
           (p.event ? "1" : "0");
    for (const int m : p.mcs) out += "," + std::to_string(m);
    out += "\n";
  }
  return out;
}

std::string purchases_csv(std::span<const PurchaseEvent> purchases) {
  std::string out = "patient_id,drug,dispense_day,coverage_days\n";
  for (const PurchaseEvent& e : purchases)
    out += e.patient_id + "," + drug_name(e.drug) + "," + std::to_string(e.dispense_day) +
           "," + std::to_string(e.coverage_days) + "\n";
  return out;
}

std::string paths_csv(std::span<const PatientRecord> patients,
                      std::span<const LatentPath> paths) {
  std::string out = "patient_id,t,state\n";
  for (std::size_t i = 0; i < patients.size(); ++i)
    for (std::size_t t = 0; t < paths[i].states.size(); ++t)
      out += patients[i].patient_id + "," + std::to_string(t + 1) + "," +
             std::to_string(paths[i].states[t]) + "\n";
  return out;
}

std::string panel_csv(std::span<const AdherencePanel> panels) {
  std::string out = "patient_id,drug,user,month,ratio,level\n";
  for (const AdherencePanel& panel : panels) {
    for (int j = 0; j < kNumDrugs; ++j) {
      const DrugChannel& ch = panel.channels[j];
      for (int t = 0; t < kMonths; ++t) {
        out += panel.patient_id + "," + drug_name(static_cast<Drug>(j)) + "," +
               (ch.user ? "1" : "0") + "," + std::to_string(t + 1) + ",";
        if (ch.user)
          out += format_double(ch.ratios[t]) + "," + std::to_string(ch.levels[t]);
        else
          out += ",";  // missing channel: no ratio, no level
        out += "\n";
      }
    }
  }
  return out;
}

std::string selection_csv(const SelectionResult& selection) {
  std::string out = "label,k,g,loglik,aic,bic,selected,status\n";
  for (const SelectionRow& row : selection.rows) {
    out += row.label + "," + std::to_string(row.k) + ",";
    if (row.failed) {
      out += ",,,," + std::string(row.selected ? "1" : "0") + ",failed\n";
    } else {
      out += std::to_string(row.g) + "," + format_double(row.loglik) + "," +
             format_double(row.aic) + "," + format_double(row.bic) + "," +
             (row.selected ? "1" : "0") + ",ok\n";
    }
  }
  return out;
}

struct PreparedData {
  CohortData cohort;  // after standard exclusions
  CohortFilterStats stats;
  std::vector<AdherencePanel> panels;
  DataPanel data;
};

PreparedData prepare_data(const PipelineConfig& config) {
  PreparedData prep;
  const CohortData raw =
      load_cohort(config.resolved_patients_path(), config.resolved_purchases_path());
  prep.cohort = filter_cohort(raw, {}, &prep.stats);
  if (prep.cohort.patients.empty())
    throw ValidationError("no patients remain after cohort exclusions");
  prep.panels = build_panels(prep.cohort.patients, prep.cohort.purchases, config.threads);
  prep.data = build_data_panel(prep.cohort.patients, prep.panels);
  return prep;
}

std::string format_p_value(double p) {
  if (p < 1e-300) return "< 1e-300";
  return format_double(p);
}

}  // namespace

void cmd_simulate(const PipelineConfig& config, std::ostream& out) {
  if (!config.simulate)
    throw ValidationError("simulate: config has no 'simulate' section");
  SyntheticCohortConfig sim = *config.simulate;
  sim.seed = config.seed;
  sim.validate();

  const SimulatedCohort cohort = simulate_cohort(sim, config.threads);
  write_text_file(config.resolved_patients_path(), patients_csv(cohort.data.patients));
  write_text_file(config.resolved_purchases_path(), purchases_csv(cohort.data.purchases));
  write_text_file(config.artifact_path("true_paths.csv"),
                  paths_csv(cohort.data.patients, cohort.true_paths));

  long deaths = 0;
  for (const PatientRecord& p : cohort.data.patients) deaths += p.event ? 1 : 0;
  out << "simulated " << cohort.data.patients.size() << " patients, "
      << cohort.data.purchases.size() << " purchases, " << deaths
      << " deaths (seed " << sim.seed << ")\n";
}

void cmd_adherence(const PipelineConfig& config, std::ostream& out) {
  const PreparedData prep = prepare_data(config);
  write_text_file(config.artifact_path("adherence_panel.csv"), panel_csv(prep.panels));
  long users = 0;
  for (const AdherencePanel& p : prep.panels)
    for (const DrugChannel& ch : p.channels) users += ch.user ? 1 : 0;
  out << "adherence panel for " << prep.panels.size() << " patients ("
      << prep.stats.n_excluded_unexposed_censored << "+"
      << prep.stats.n_excluded_observation_deaths << " excluded), " << users
      << " user channels\n";
}

void cmd_fit(const PipelineConfig& config, std::ostream& out) {
  const PreparedData prep = prepare_data(config);
  EmOptions em = config.em;
  em.threads = config.threads;
  const SelectionResult selection =
      model_selection(prep.data, config.k_range, config.covariates, em);
  write_text_file(config.artifact_path("selection_table.csv"), selection_csv(selection));
  write_text_file(config.artifact_path("model.json"), model_document(selection.best));

  std::string covs;
  for (const auto& c : selection.selected_covariates) covs += (covs.empty() ? "" : "+") + c;
  out << "selected k=" << selection.best_k << " (covariates: " << (covs.empty() ? "none" : covs)
      << "), loglik=" << selection.best.loglik << ", bic=" << selection.best.bic << "\n";
}

void cmd_profile(const PipelineConfig& config, const std::string& model_path,
                 std::ostream& out) {
  const ModelDocument model = parse_model_document(read_file(
      model_path.empty() ? config.artifact_path("model.json") : model_path));
  const PreparedData prep = prepare_data(config);

  if (model.spec.T != prep.data.T)
    throw ValidationError("profile: model T does not match the data panel");
  if (model.spec.categories != prep.data.categories)
    throw ValidationError("profile: model categories do not match the data panel");
  if (model.spec.k > 4)
    throw ComputationError(
        "profile: the behavioural taxonomy covers at most 4 latent states; model has k=" +
        std::to_string(model.spec.k));

  const long n = prep.data.n();
  std::vector<LatentPath> paths(n);
  std::vector<Eigen::VectorXd> chosen_posterior(n);
  parallel_for(static_cast<std::size_t>(n), config.threads, [&](std::size_t i) {
    const ForwardBackwardResult fb =
        forward_backward(model.spec, model.params, prep.data, static_cast<long>(i));
    if (config.decode_mode == DecodeMode::Local) {
      paths[i] = local_decode(fb.posteriors);
    } else {
      paths[i] =
          viterbi_decode(model.spec, model.params, prep.data, static_cast<long>(i)).path;
    }
    Eigen::VectorXd post(prep.data.T);
    for (int t = 0; t < prep.data.T; ++t) post[t] = fb.posteriors(t, paths[i].states[t] - 1);
    chosen_posterior[i] = std::move(post);
  });

  std::vector<ProfileLabel> labels(n);
  for (long i = 0; i < n; ++i) labels[i] = classify_profile(paths[i]);
  const ProfileTable table = profile_table(labels, config.profile_min_count);

  std::string decoded = "patient_id,t,state,posterior_max\n";
  for (long i = 0; i < n; ++i)
    for (int t = 0; t < prep.data.T; ++t)
      decoded += prep.data.subject_ids[i] + "," + std::to_string(t + 1) + "," +
                 std::to_string(paths[i].states[t]) + "," +
                 format_double(chosen_posterior[i][t]) + "\n";
  write_text_file(config.artifact_path("decoded_paths.csv"), decoded);

  std::string profiles = "patient_id,profile_label\n";
  for (long i = 0; i < n; ++i)
    profiles += prep.data.subject_ids[i] + "," + profile_name(labels[i]) + "\n";
  write_text_file(config.artifact_path("profiles.csv"), profiles);

  std::string counts = "profile,count,retained\n";
  for (int p = 0; p < kNumProfiles; ++p)
    counts += profile_name(static_cast<ProfileLabel>(p)) + "," +
              std::to_string(table.counts[p]) + "," + (table.retained[p] ? "1" : "0") + "\n";
  write_text_file(config.artifact_path("profile_counts.csv"), counts);

  int retained = 0;
  for (const bool r : table.retained) retained += r ? 1 : 0;
  out << "decoded " << n << " patients ("
      << (config.decode_mode == DecodeMode::Global ? "global" : "local") << " decoding), "
      << retained << " profiles retained at min_count=" << config.profile_min_count << "\n";
}

void cmd_survival(const PipelineConfig& config, const std::string& profiles_path,
                  std::ostream& out) {
  const CsvTable profiles = read_csv(
      profiles_path.empty() ? config.artifact_path("profiles.csv") : profiles_path);
  std::unordered_map<std::string, ProfileLabel> label_by_id;
  for (std::size_t r = 0; r < profiles.n_rows(); ++r) {
    const std::string id = profiles.get_string(r, "patient_id");
    ProfileLabel label = ProfileLabel::A;
    try {
      label = parse_profile(profiles.get_string(r, "profile_label"));
    } catch (const ValidationError& e) {
      profiles.fail(r, "profile_label", e.what());
    }
    if (!label_by_id.emplace(id, label).second)
      profiles.fail(r, "patient_id", "duplicate patient id '" + id + "'");
  }

  const PreparedData prep = prepare_data(config);

  // Landmark samples: the survival clock starts at the end of the panel
  // window; patients whose follow-up ends at or before the landmark cannot
  // contribute.
  const long landmark_days = config.landmark ? kPanelDays : 0;
  std::vector<SurvivalSample> joined;
  std::array<long, kNumProfiles> label_counts{};
  long dropped_pre_landmark = 0;
  long missing_profile = 0;
  for (std::size_t i = 0; i < prep.cohort.patients.size(); ++i) {
    const PatientRecord& p = prep.cohort.patients[i];
    const auto it = label_by_id.find(p.patient_id);
    if (it == label_by_id.end()) {
      ++missing_profile;
      continue;
    }
    if (p.followup_days <= landmark_days) {
      ++dropped_pre_landmark;
      continue;
    }
    SurvivalSample s;
    s.id = p.patient_id;
    s.time = static_cast<double>(p.followup_days - landmark_days) / 365.25;
    s.event = p.event;
    s.group = static_cast<int>(it->second);
    s.age = static_cast<double>(p.age);
    s.gender_f = p.gender == Gender::F ? 1.0 : 0.0;
    double mcs = 0.0;
    for (const int m : p.mcs) mcs += m;
    s.mcs = mcs / kMonths;
    ++label_counts[static_cast<int>(it->second)];
    joined.push_back(std::move(s));
  }
  if (joined.empty()) throw ValidationError("survival: no profiled patients with follow-up");

  // Retained profiles among the joined samples.
  std::vector<int> retained_labels;
  for (int p = 0; p < kNumProfiles; ++p)
    if (label_counts[p] >= config.profile_min_count) retained_labels.push_back(p);
  if (retained_labels.size() < 2)
    throw ComputationError(
        "survival: fewer than 2 profiles reach min_count=" +
        std::to_string(config.profile_min_count) + "; lower profile.min_count");

  std::vector<std::string> group_names;
  std::unordered_map<int, int> group_of_label;
  for (const int p : retained_labels) {
    group_of_label[p] = static_cast<int>(group_names.size());
    group_names.push_back(profile_name(static_cast<ProfileLabel>(p)));
  }

  std::vector<SurvivalSample> samples;
  std::vector<std::vector<SurvivalSample>> by_group(group_names.size());
  for (const SurvivalSample& s : joined) {
    const auto it = group_of_label.find(s.group);
    if (it == group_of_label.end()) continue;  // non-retained profile
    SurvivalSample g = s;
    g.group = it->second;
    by_group[g.group].push_back(g);
    samples.push_back(std::move(g));
  }

  // Kaplan-Meier per retained profile.
  std::string km_csv = "group,time,survival,at_risk,events,greenwood_var\n";
  std::vector<KmCurve> curves(group_names.size());
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    curves[g] = km_estimate(by_group[g]);
    for (const KmPoint& pt : curves[g].points)
      km_csv += group_names[g] + "," + format_double(pt.time) + "," +
                format_double(pt.survival) + "," + std::to_string(pt.at_risk) + "," +
                std::to_string(pt.events) + "," + format_double(pt.greenwood_var) + "\n";
  }

  const LogrankResult logrank = logrank_test(by_group);

  // Cox with reference profile A when retained, else the first retained.
  int reference_group = 0;
  for (std::size_t g = 0; g < group_names.size(); ++g)
    if (group_names[g] == "A") reference_group = static_cast<int>(g);
  const CoxResult cox = cox_fit_profiles(samples, group_names, reference_group, true);

  // Restricted-mean comparison: the most adherent constant profile present
  // against the least adherent one (D vs A when both are retained).
  const auto group_index = [&](const std::string& name) -> int {
    for (std::size_t g = 0; g < group_names.size(); ++g)
      if (group_names[g] == name) return static_cast<int>(g);
    return -1;
  };
  int rmst_a = group_index("D");
  int rmst_b = group_index("A");
  if (rmst_a < 0) rmst_a = static_cast<int>(group_names.size()) - 1;
  if (rmst_b < 0) rmst_b = 0;
  const RmstResult rmst_cmp =
      rmst_difference(by_group[rmst_a], by_group[rmst_b], config.tau_years,
                      config.rmst_truncate_at_last_event);

  std::string cox_csv = "term,coef,se,hr,ci_low,ci_high\n";
  for (std::size_t c = 0; c < cox.terms.size(); ++c)
    cox_csv += cox.terms[c] + "," + format_double(cox.coefficients[c]) + "," +
               format_double(cox.standard_errors[c]) + "," +
               format_double(cox.hazard_ratios[c]) + "," + format_double(cox.ci_low[c]) +
               "," + format_double(cox.ci_high[c]) + "\n";

  json report;
  report["n_samples"] = samples.size();
  report["n_dropped_pre_landmark"] = dropped_pre_landmark;
  report["n_missing_profile"] = missing_profile;
  report["groups"] = group_names;
  json counts = json::object();
  for (std::size_t g = 0; g < group_names.size(); ++g)
    counts[group_names[g]] = by_group[g].size();
  report["group_sizes"] = std::move(counts);
  report["logrank"] = {{"statistic", logrank.statistic},
                       {"df", logrank.df},
                       {"p_value", logrank.p_value},
                       {"p_display", format_p_value(logrank.p_value)}};
  json cox_json = json::object();
  cox_json["reference"] = group_names[reference_group];
  cox_json["loglik"] = cox.loglik;
  cox_json["null_loglik"] = cox.null_loglik;
  json cox_terms = json::array();
  for (std::size_t c = 0; c < cox.terms.size(); ++c)
    cox_terms.push_back({{"term", cox.terms[c]},
                         {"coef", cox.coefficients[c]},
                         {"se", cox.standard_errors[c]},
                         {"hr", cox.hazard_ratios[c]},
                         {"ci_low", cox.ci_low[c]},
                         {"ci_high", cox.ci_high[c]}});
  cox_json["terms"] = std::move(cox_terms);
  report["cox"] = std::move(cox_json);
  json rmst_json = json::object();
  rmst_json["tau_years"] = rmst_cmp.tau;
  rmst_json["group_a"] = group_names[rmst_a];
  rmst_json["group_b"] = group_names[rmst_b];
  rmst_json["rmst_a"] = rmst_cmp.rmst_a;
  rmst_json["rmst_b"] = rmst_cmp.rmst_b;
  rmst_json["difference"] = rmst_cmp.difference;
  rmst_json["se"] = rmst_cmp.se_difference;
  rmst_json["ci_low"] = rmst_cmp.ci_low;
  rmst_json["ci_high"] = rmst_cmp.ci_high;
  json per_group = json::object();
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    const double tau = std::min(config.tau_years, curves[g].max_time);
    per_group[group_names[g]] = rmst(curves[g], tau);
  }
  rmst_json["per_group_rmst"] = std::move(per_group);
  report["rmst"] = std::move(rmst_json);

  write_text_file(config.artifact_path("km_curves.csv"), km_csv);
  write_text_file(config.artifact_path("cox_hr.csv"), cox_csv);
  write_text_file(config.artifact_path("survival_report.json"), report.dump(2));

  out << "survival over " << samples.size() << " patients in " << group_names.size()
      << " profiles: logrank p " << format_p_value(logrank.p_value) << ", dRMST("
      << group_names[rmst_a] << " vs " << group_names[rmst_b]
      << ") = " << rmst_cmp.difference << "\n";
}

void cmd_report(const PipelineConfig& config, std::ostream& out) {
  std::ostringstream report;
  bool any = false;

  const std::string selection_path = config.artifact_path("selection_table.csv");
  if (std::filesystem::exists(selection_path)) {
    any = true;
    const CsvTable table = read_csv(selection_path);
    report << "Model selection (" << table.n_rows() << " candidates)\n";
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
      report << "  " << table.get_string(r, "label") << " k=" << table.get_string(r, "k");
      if (table.get_string(r, "status") == "ok")
        report << " g=" << table.get_string(r, "g") << " loglik=" << table.get_string(r, "loglik")
               << " bic=" << table.get_string(r, "bic");
      else
        report << " failed";
      if (table.raw(r, table.column("selected")) == "1") report << "  <- selected";
      report << "\n";
    }
    report << "\n";
  }

  const std::string counts_path = config.artifact_path("profile_counts.csv");
  if (std::filesystem::exists(counts_path)) {
    any = true;
    const CsvTable table = read_csv(counts_path);
    report << "Behavioural profiles\n";
    for (std::size_t r = 0; r < table.n_rows(); ++r)
      report << "  " << table.get_string(r, "profile") << ": "
             << table.get_string(r, "count")
             << (table.raw(r, table.column("retained")) == "1" ? " (retained)" : "") << "\n";
    report << "\n";
  }

  const std::string survival_path = config.artifact_path("survival_report.json");
  if (std::filesystem::exists(survival_path)) {
    any = true;
    const json surv = json::parse(read_file(survival_path));
    report << "Survival\n";
    report << "  log-rank: statistic=" << surv["logrank"]["statistic"].get<double>()
           << " df=" << surv["logrank"]["df"].get<int>() << " p="
           << surv["logrank"]["p_display"].get<std::string>() << "\n";
    report << "  Cox reference profile: " << surv["cox"]["reference"].get<std::string>()
           << "\n";
    for (const auto& term : surv["cox"]["terms"])
      report << "    " << term["term"].get<std::string>() << ": HR="
             << term["hr"].get<double>() << " [" << term["ci_low"].get<double>() << ", "
             << term["ci_high"].get<double>() << "]\n";
    report << "  dRMST(" << surv["rmst"]["group_a"].get<std::string>() << " vs "
           << surv["rmst"]["group_b"].get<std::string>() << ") over "
           << surv["rmst"]["tau_years"].get<double>() << "y: "
           << surv["rmst"]["difference"].get<double>() << " ["
           << surv["rmst"]["ci_low"].get<double>() << ", "
           << surv["rmst"]["ci_high"].get<double>() << "]\n";
  }

  if (!any)
    throw ValidationError("report: no artifacts found in " + config.output_dir +
                          "; run fit/profile/survival first");
  write_text_file(config.artifact_path("report.txt"), report.str());
  out << report.str();
}

}  // namespace adherelm
