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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "adherelm/adherence.hpp"
#include "adherelm/decoding.hpp"
#include "adherelm/lmm.hpp"
#include "adherelm/records.hpp"

namespace adherelm {

struct CohortData {
  std::vector<PatientRecord> patients;
  std::vector<PurchaseEvent> purchases;
};

/// Loads the patients and purchases files (column contracts documented in
/// the README). Purchases are deduplicated on (patient_id, drug,
/// dispense_day) keeping the largest coverage; every purchase must resolve
/// to a patient. Errors name file, line and column.
CohortData load_cohort(const std::string& patients_path,
                       const std::string& purchases_path);

struct CohortFilterOptions {
  // Patients who die before the end of the 360-day panel window cannot enter
  // the landmark survival analysis; excluded by default.
  bool exclude_observation_deaths = true;
};

struct CohortFilterStats {
  long n_input = 0;
  long n_kept = 0;
  long n_excluded_unexposed_censored = 0;  // follow-up < 365d and no purchases
  long n_excluded_observation_deaths = 0;  // death before day 360
};

/// Standard cohort exclusions applied before panel construction.
CohortData filter_cohort(const CohortData& cohort, const CohortFilterOptions& options = {},
                         CohortFilterStats* stats = nullptr);

/// Distributions for synthetic demographics. MCS starts near a truncated
/// normal and drifts by +-1 steps month to month.
struct CovariateModel {
  double age_mean = 76.0;
  double age_sd = 9.0;
  int age_min = 18;
  int age_max = 100;
  double prob_female = 0.47;
  double mcs_init_mean = 8.0;
  double mcs_init_sd = 4.0;
  double mcs_step_prob = 0.15;
};

/// Exponential survival linked to the true latent path: the per-year hazard
/// is the baseline scaled by the mean state multiplier over the 12 months.
struct SurvivalSimModel {
  double baseline_hazard_per_year = 0.15;
  std::vector<double> state_multipliers;  // one per latent state, > 0
};

struct SyntheticCohortConfig {
  long n_patients = 0;
  std::uint64_t seed = 1;
  ModelSpec spec;  // generative model; three 3-level channels over 12 months
  LmmParameters true_params;
  CovariateModel covariates;
  SurvivalSimModel survival;
  long censor_horizon_days = 3650;  // administrative censoring from index
  std::array<double, kNumDrugs> user_prob{0.95, 0.85, 0.5};

  void validate() const;
};

struct SimulatedCohort {
  CohortData data;
  std::vector<LatentPath> true_paths;
  // The categories the simulator targeted; build_panel on data reproduces
  // these exactly, user flags included.
  std::vector<AdherencePanel> true_panels;
};

/// Samples a synthetic cohort: covariates, latent paths from the true
/// model, monthly adherence categories, purchase events realizing those
/// categories as cumulative coverage, and follow-up outcomes. Pure function
/// of (config); per-patient substreams make any thread count reproduce the
/// sequential output bit for bit.
///
/// Because adherence ratios are cumulative, a freely sampled category can be
/// unreachable from the previous month's coverage; each month the category
/// is drawn from the emission distribution restricted to the reachable
/// bands, and the coverage-day total is drawn inside the chosen band.
SimulatedCohort simulate_cohort(const SyntheticCohortConfig& config, int threads = 1);

/// Direct panel sampling (iid emissions given the latent path), without the
/// cumulative-coverage constraint. This is the generator for estimation
/// studies where responses must follow the model exactly.
struct SampledPanel {
  DataPanel data;
  std::vector<LatentPath> paths;
};

SampledPanel sample_panel(const ModelSpec& spec, const LmmParameters& params, long n,
                          const CovariateModel& covariates, std::uint64_t seed,
                          const std::vector<double>& user_prob = {}, int threads = 1);

}  // namespace adherelm
