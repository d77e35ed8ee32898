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

#include "adherelm/cohort.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "adherelm/csv.hpp"
#include "adherelm/errors.hpp"
#include "adherelm/parallel.hpp"
#include "adherelm/rng.hpp"

namespace adherelm {

namespace {
const std::array<std::string, kNumDrugs> kDrugNames = {"RAS", "BB", "MRA"};
const std::array<std::string, 2> kGenderNames = {"M", "F"};
}  // namespace

const std::string& drug_name(Drug d) { return kDrugNames[static_cast<int>(d)]; }

Drug parse_drug(const std::string& name) {
  for (int i = 0; i < kNumDrugs; ++i)
    if (kDrugNames[i] == name) return static_cast<Drug>(i);
  throw ValidationError("unknown drug class '" + name + "' (expected RAS|BB|MRA)");
}

const std::string& gender_name(Gender g) { return kGenderNames[static_cast<int>(g)]; }

Gender parse_gender(const std::string& name) {
  if (name == "M") return Gender::M;
  if (name == "F") return Gender::F;
  throw ValidationError("unknown gender '" + name + "' (expected M|F)");
}

void PatientRecord::validate() const {
  if (patient_id.empty()) throw ValidationError("patient record with empty patient_id");
  if (age < 18) throw ValidationError("patient " + patient_id + ": age must be >= 18");
  if (followup_days < 0)
    throw ValidationError("patient " + patient_id + ": followup_days must be >= 0");
  for (const int m : mcs)
    if (m < 0) throw ValidationError("patient " + patient_id + ": MCS values must be >= 0");
}

void PurchaseEvent::validate() const {
  if (patient_id.empty()) throw ValidationError("purchase with empty patient_id");
  if (coverage_days < 1)
    throw ValidationError("purchase for " + patient_id + ": coverage_days must be >= 1");
  if (dispense_day < 0 || dispense_day >= kUserWindowDays)
    throw ValidationError("purchase for " + patient_id + ": dispense_day must be in [0, " +
                          std::to_string(kUserWindowDays) + ")");
}

namespace {

bool looks_like_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (const std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

}  // namespace

CohortData load_cohort(const std::string& patients_path, const std::string& purchases_path) {
  CohortData cohort;

  const CsvTable patients = read_csv(patients_path);
  std::unordered_map<std::string, std::size_t> id_index;
  cohort.patients.reserve(patients.n_rows());
  for (std::size_t r = 0; r < patients.n_rows(); ++r) {
    PatientRecord rec;
    rec.patient_id = patients.get_string(r, "patient_id");
    if (!id_index.emplace(rec.patient_id, r).second)
      patients.fail(r, "patient_id", "duplicate patient id '" + rec.patient_id + "'");
    rec.index_date = patients.get_string(r, "index_date");
    if (!looks_like_iso_date(rec.index_date))
      patients.fail(r, "index_date", "expected ISO-8601 date (YYYY-MM-DD)");
    const long age = patients.get_long(r, "age");
    if (age < 18 || age > 130) patients.fail(r, "age", "age must be in 18..130");
    rec.age = static_cast<int>(age);
    rec.gender = parse_gender(patients.get_string(r, "gender"));
    rec.followup_days = patients.get_long(r, "followup_days");
    if (rec.followup_days < 0) patients.fail(r, "followup_days", "must be >= 0");
    const long event = patients.get_long(r, "event");
    if (event != 0 && event != 1) patients.fail(r, "event", "must be 0 or 1");
    rec.event = event == 1;
    for (int t = 0; t < kMonths; ++t) {
      const std::string col = "mcs_" + std::to_string(t + 1);
      const long v = patients.get_long(r, col);
      if (v < 0) patients.fail(r, col, "MCS must be >= 0");
      rec.mcs[t] = static_cast<int>(v);
    }
    cohort.patients.push_back(std::move(rec));
  }

  const CsvTable purchases = read_csv(purchases_path);
  std::set<std::string> orphans;
  // Dedup key (patient, drug, dispense day) keeping the maximum coverage.
  std::map<std::tuple<std::string, int, int>, int> dedup;
  for (std::size_t r = 0; r < purchases.n_rows(); ++r) {
    PurchaseEvent e;
    e.patient_id = purchases.get_string(r, "patient_id");
    try {
      e.drug = parse_drug(purchases.get_string(r, "drug"));
    } catch (const ValidationError& err) {
      purchases.fail(r, "drug", err.what());
    }
    const long day = purchases.get_long(r, "dispense_day");
    if (day < 0 || day >= kUserWindowDays)
      purchases.fail(r, "dispense_day",
                     "must be in [0, " + std::to_string(kUserWindowDays) + ")");
    e.dispense_day = static_cast<int>(day);
    const long coverage = purchases.get_long(r, "coverage_days");
    if (coverage < 1) purchases.fail(r, "coverage_days", "must be >= 1");
    e.coverage_days = static_cast<int>(coverage);

    if (!id_index.contains(e.patient_id)) {
      orphans.insert(e.patient_id);
      continue;
    }
    const auto key = std::make_tuple(e.patient_id, static_cast<int>(e.drug), e.dispense_day);
    auto [it, inserted] = dedup.emplace(key, e.coverage_days);
    if (!inserted) it->second = std::max(it->second, e.coverage_days);
  }
  if (!orphans.empty()) {
    std::string ids;
    std::size_t listed = 0;
    for (const std::string& id : orphans) {
      if (listed == 10) {
        ids += ", +" + std::to_string(orphans.size() - listed) + " more";
        break;
      }
      if (listed > 0) ids += ", ";
      ids += id;
      ++listed;
    }
    throw ValidationError(purchases_path + ": purchases reference unknown patient ids: " + ids);
  }

  cohort.purchases.reserve(dedup.size());
  for (const auto& [key, coverage] : dedup) {
    PurchaseEvent e;
    e.patient_id = std::get<0>(key);
    e.drug = static_cast<Drug>(std::get<1>(key));
    e.dispense_day = std::get<2>(key);
    e.coverage_days = coverage;
    cohort.purchases.push_back(std::move(e));
  }
  return cohort;
}

CohortData filter_cohort(const CohortData& cohort, const CohortFilterOptions& options,
                         CohortFilterStats* stats) {
  std::unordered_set<std::string> has_purchase;
  for (const PurchaseEvent& e : cohort.purchases) has_purchase.insert(e.patient_id);

  CohortFilterStats local;
  local.n_input = static_cast<long>(cohort.patients.size());
  std::unordered_set<std::string> kept_ids;
  CohortData out;
  for (const PatientRecord& p : cohort.patients) {
    if (p.followup_days < kUserWindowDays && !has_purchase.contains(p.patient_id)) {
      ++local.n_excluded_unexposed_censored;
      continue;
    }
    if (options.exclude_observation_deaths && p.event && p.followup_days < kPanelDays) {
      ++local.n_excluded_observation_deaths;
      continue;
    }
    kept_ids.insert(p.patient_id);
    out.patients.push_back(p);
  }
  for (const PurchaseEvent& e : cohort.purchases)
    if (kept_ids.contains(e.patient_id)) out.purchases.push_back(e);
  local.n_kept = static_cast<long>(out.patients.size());
  if (stats) *stats = local;
  return out;
}

void SyntheticCohortConfig::validate() const {
  if (n_patients < 1) throw ValidationError("simulation config: n_patients must be >= 1");
  spec.validate();
  true_params.validate(spec);
  if (spec.T != kMonths)
    throw ValidationError("simulation config: the generative model must span 12 months");
  if (spec.n_channels() != kNumDrugs)
    throw ValidationError("simulation config: the generative model needs one channel per drug");
  for (const int c : spec.categories)
    if (c != 3)
      throw ValidationError("simulation config: adherence channels have 3 categories");
  for (const std::string& name : spec.init_covariates)
    if (name != "age" && name != "gender" && name != "mcs")
      throw ValidationError("simulation config: unknown covariate '" + name + "'");
  for (const std::string& name : spec.trans_covariates)
    if (name != "age" && name != "gender" && name != "mcs")
      throw ValidationError("simulation config: unknown covariate '" + name + "'");
  if (static_cast<int>(survival.state_multipliers.size()) != spec.k)
    throw ValidationError("simulation config: one hazard multiplier per latent state required");
  for (const double m : survival.state_multipliers)
    if (!(m > 0.0)) throw ValidationError("simulation config: hazard multipliers must be > 0");
  if (!(survival.baseline_hazard_per_year > 0.0))
    throw ValidationError("simulation config: baseline hazard must be > 0");
  if (censor_horizon_days < 1)
    throw ValidationError("simulation config: censoring horizon must be >= 1 day");
  for (const double p : user_prob)
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("simulation config: user probabilities must be in [0, 1]");
  if (!(covariates.age_sd >= 0.0) || covariates.age_min < 18 ||
      covariates.age_max < covariates.age_min)
    throw ValidationError("simulation config: invalid age model");
  if (!(covariates.mcs_init_sd >= 0.0) || covariates.mcs_step_prob < 0.0 ||
      covariates.mcs_step_prob > 1.0)
    throw ValidationError("simulation config: invalid MCS model");
}

namespace {

struct SimCovariates {
  int age = 0;
  Gender gender = Gender::M;
  std::array<int, kMonths> mcs{};
};

SimCovariates sample_covariates(const CovariateModel& model, RngStream& rng) {
  SimCovariates c;
  const double raw_age = rng.normal(model.age_mean, model.age_sd);
  c.age = std::clamp(static_cast<int>(std::lround(raw_age)), model.age_min, model.age_max);
  c.gender = rng.bernoulli(model.prob_female) ? Gender::F : Gender::M;
  const double raw_mcs = rng.normal(model.mcs_init_mean, model.mcs_init_sd);
  int mcs = std::max(0, static_cast<int>(std::lround(raw_mcs)));
  for (int t = 0; t < kMonths; ++t) {
    if (t > 0 && rng.bernoulli(model.mcs_step_prob))
      mcs = std::max(0, mcs + (rng.bernoulli(0.5) ? 1 : -1));
    c.mcs[t] = mcs;
  }
  return c;
}

double covariate_value(const std::string& name, const SimCovariates& c, int month_index) {
  if (name == "age") return static_cast<double>(c.age);
  if (name == "gender") return c.gender == Gender::F ? 1.0 : 0.0;
  if (name == "mcs") return static_cast<double>(c.mcs[month_index]);
  throw ValidationError("unknown covariate '" + name + "'");
}

Eigen::VectorXd sim_design_row(const std::vector<std::string>& names, const SimCovariates& c,
                               int month_index) {
  Eigen::VectorXd x(1 + names.size());
  x[0] = 1.0;
  for (std::size_t i = 0; i < names.size(); ++i)
    x[1 + i] = covariate_value(names[i], c, month_index);
  return x;
}

std::vector<int> sample_latent_path(const ModelSpec& spec, const LmmParameters& params,
                                    const SimCovariates& c, RngStream& rng) {
  std::vector<int> path(spec.T);
  Eigen::VectorXd probs;
  if (params.form == TransitionForm::LogitHomogeneous)
    probs = initial_probs(params.beta, sim_design_row(spec.init_covariates, c, 0));
  else
    probs = params.delta;
  path[0] = static_cast<int>(rng.categorical({probs.data(), static_cast<std::size_t>(probs.size())}));
  for (int t = 1; t < spec.T; ++t) {
    Eigen::VectorXd row;
    if (params.form == TransitionForm::LogitHomogeneous)
      row = transition_row(params.gamma, path[t - 1],
                           sim_design_row(spec.trans_covariates, c, t));
    else
      row = params.trans[t - 1].row(path[t - 1]).transpose();
    path[t] = static_cast<int>(rng.categorical({row.data(), static_cast<std::size_t>(row.size())}));
  }
  return path;
}

// Integer day-count bands of the three adherence levels at month t (1-based):
// level 0 <=> 2n < 15t, level 1 <=> 15t <= 2n and n < 24t, level 2 <=> n >= 24t.
struct LevelBand {
  int lo;
  int hi;
};

std::array<LevelBand, 3> level_bands(int month) {
  const int t = month;
  return {LevelBand{0, (15 * t - 1) / 2}, LevelBand{(15 * t + 1) / 2, 24 * t - 1},
          LevelBand{24 * t, 30 * t}};
}

std::string format_date(int days_from_epoch_2006) {
  using namespace std::chrono;
  const year_month_day date{sys_days{year{2006} / January / 1} + days{days_from_epoch_2006}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

std::string make_patient_id(long index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%06ld", index + 1);
  return buf;
}

}  // namespace

SimulatedCohort simulate_cohort(const SyntheticCohortConfig& config, int threads) {
  config.validate();
  const long n = config.n_patients;

  SimulatedCohort out;
  out.data.patients.resize(n);
  out.true_paths.resize(n);
  out.true_panels.resize(n);
  std::vector<std::vector<PurchaseEvent>> purchases(n);

  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(config.seed, i);
    PatientRecord& rec = out.data.patients[i];
    rec.patient_id = make_patient_id(static_cast<long>(i));
    rec.index_date = format_date(static_cast<int>(rng.below(2557)));  // 2006..2012
    const SimCovariates cov = sample_covariates(config.covariates, rng);
    rec.age = cov.age;
    rec.gender = cov.gender;
    rec.mcs = cov.mcs;

    const std::vector<int> path = sample_latent_path(config.spec, config.true_params, cov, rng);
    out.true_paths[i].states.resize(path.size());
    for (std::size_t t = 0; t < path.size(); ++t)
      out.true_paths[i].states[t] = path[t] + 1;

    AdherencePanel& truth = out.true_panels[i];
    truth.patient_id = rec.patient_id;
    for (int j = 0; j < kNumDrugs; ++j) {
      DrugChannel& ch = truth.channels[j];
      ch.user = rng.bernoulli(config.user_prob[j]);
      if (!ch.user) continue;
      int covered = 0;
      for (int t = 1; t <= kMonths; ++t) {
        const auto bands = level_bands(t);
        const int window_lo = covered;
        const int window_hi = covered + kDaysPerMonth;
        // Emission probabilities restricted to the reachable bands.
        std::array<double, 3> weights{};
        bool any = false;
        for (int c = 0; c < 3; ++c) {
          if (std::max(bands[c].lo, window_lo) <= std::min(bands[c].hi, window_hi)) {
            weights[c] = config.true_params.phi[j](c, path[t - 1]);
            any = any || weights[c] > 0.0;
          }
        }
        if (!any) {
          // All reachable bands have zero emission mass; fall back to the
          // reachable band closest to the current ratio.
          for (int c = 0; c < 3; ++c)
            weights[c] =
                std::max(bands[c].lo, window_lo) <= std::min(bands[c].hi, window_hi) ? 1.0 : 0.0;
        }
        const int level = static_cast<int>(rng.categorical(weights));
        const int lo = std::max(bands[level].lo, window_lo);
        const int hi = std::min(bands[level].hi, window_hi);
        const int next_covered = rng.uniform_int(lo, hi);
        const int new_days = next_covered - covered;
        if (new_days > 0) {
          PurchaseEvent e;
          e.patient_id = rec.patient_id;
          e.drug = static_cast<Drug>(j);
          e.dispense_day = (t - 1) * kDaysPerMonth;
          e.coverage_days = new_days;
          purchases[i].push_back(e);
        }
        covered = next_covered;
        ch.levels[t - 1] = level;
        ch.ratios[t - 1] = static_cast<double>(covered) / (kDaysPerMonth * t);
      }
      if (covered == 0) {
        // User status requires at least one purchase in the first year; an
        // all-low user gets a marker purchase past the panel window.
        PurchaseEvent e;
        e.patient_id = rec.patient_id;
        e.drug = static_cast<Drug>(j);
        e.dispense_day = kPanelDays + static_cast<int>(rng.below(kUserWindowDays - kPanelDays));
        e.coverage_days = 1 + static_cast<int>(rng.below(14));
        purchases[i].push_back(e);
      }
    }

    // Exponential survival from the index date, hazard scaled by the mean
    // multiplier of the states actually visited.
    double mean_multiplier = 0.0;
    for (const int u : path) mean_multiplier += config.survival.state_multipliers[u];
    mean_multiplier /= static_cast<double>(path.size());
    const double hazard_per_day =
        config.survival.baseline_hazard_per_year * mean_multiplier / 365.25;
    const double death_time = rng.exponential(hazard_per_day);
    const long death_day = 1 + static_cast<long>(std::floor(death_time));
    rec.followup_days = std::min(death_day, config.censor_horizon_days);
    rec.event = death_day <= config.censor_horizon_days;
  });

  for (long i = 0; i < n; ++i)
    out.data.purchases.insert(out.data.purchases.end(), purchases[i].begin(),
                              purchases[i].end());
  return out;
}

SampledPanel sample_panel(const ModelSpec& spec, const LmmParameters& params, long n,
                          const CovariateModel& covariates, std::uint64_t seed,
                          const std::vector<double>& user_prob, int threads) {
  spec.validate();
  params.validate(spec);
  if (n < 1) throw ValidationError("sample_panel: n must be >= 1");
  if (!user_prob.empty() && static_cast<int>(user_prob.size()) != spec.n_channels())
    throw ValidationError("sample_panel: one user probability per channel required");

  SampledPanel out;
  out.data.T = spec.T;
  out.data.categories = spec.categories;
  out.data.covariate_names = {"age", "gender", "mcs"};
  out.data.subject_ids.resize(n);
  out.data.responses.resize(n);
  out.data.observed.resize(n);
  out.data.init_covariate_values.resize(n, 3);
  out.data.trans_covariate_values.resize(n);
  out.paths.resize(n);

  const int J = spec.n_channels();
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(seed, i);
    const SimCovariates cov = sample_covariates(covariates, rng);
    out.data.subject_ids[i] = make_patient_id(static_cast<long>(i));
    const double gender_f = cov.gender == Gender::F ? 1.0 : 0.0;
    out.data.init_covariate_values(static_cast<long>(i), 0) = cov.age;
    out.data.init_covariate_values(static_cast<long>(i), 1) = gender_f;
    out.data.init_covariate_values(static_cast<long>(i), 2) = cov.mcs[0];
    Eigen::MatrixXd tv(spec.T - 1, 3);
    for (int s = 0; s < spec.T - 1; ++s) {
      tv(s, 0) = cov.age;
      tv(s, 1) = gender_f;
      tv(s, 2) = cov.mcs[std::min(s + 1, kMonths - 1)];
    }
    out.data.trans_covariate_values[i] = std::move(tv);

    const std::vector<int> path = sample_latent_path(spec, params, cov, rng);
    out.paths[i].states.resize(path.size());
    for (std::size_t t = 0; t < path.size(); ++t) out.paths[i].states[t] = path[t] + 1;

    out.data.responses[i] = Eigen::MatrixXi::Constant(J, spec.T, -1);
    out.data.observed[i].assign(J, 0);
    std::vector<double> cell;
    for (int j = 0; j < J; ++j) {
      const bool observed = user_prob.empty() ? true : rng.bernoulli(user_prob[j]);
      if (!observed) continue;
      out.data.observed[i][j] = 1;
      for (int t = 0; t < spec.T; ++t) {
        const Eigen::VectorXd col = params.phi[j].col(path[t]);
        out.data.responses[i](j, t) = static_cast<int>(
            rng.categorical({col.data(), static_cast<std::size_t>(col.size())}));
      }
    }
  });
  out.data.validate();
  return out;
}

}  // namespace adherelm
