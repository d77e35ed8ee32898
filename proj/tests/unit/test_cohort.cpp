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

#include <filesystem>
#include <fstream>

#include "adherelm/adherence.hpp"
#include "adherelm/cohort.hpp"
#include "adherelm/csv.hpp"
#include "adherelm/errors.hpp"

using namespace adherelm;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("adherelm_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

const char* kPatientsHeader =
    "patient_id,index_date,age,gender,followup_days,event,"
    "mcs_1,mcs_2,mcs_3,mcs_4,mcs_5,mcs_6,mcs_7,mcs_8,mcs_9,mcs_10,mcs_11,mcs_12\n";

std::string patient_row(const std::string& id, int followup, int event) {
  return id + ",2006-03-14,74,F," + std::to_string(followup) + "," + std::to_string(event) +
         ",3,3,3,4,4,4,4,5,5,5,5,5\n";
}

// Emission table putting most mass on one level per state.
Eigen::MatrixXd banded_phi(int k) {
  Eigen::MatrixXd phi(3, k);
  for (int u = 0; u < k; ++u) {
    const int peak = k == 1 ? 2 : (u * 2) / (k - 1);
    for (int y = 0; y < 3; ++y) phi(y, u) = y == peak ? 0.9 : 0.05;
  }
  return phi;
}

SyntheticCohortConfig sticky_config(int k, double diagonal, long n, std::uint64_t seed) {
  SyntheticCohortConfig config;
  config.n_patients = n;
  config.seed = seed;
  config.spec.k = k;
  config.spec.transition_form = TransitionForm::UnrestrictedTimeVarying;
  config.true_params.form = TransitionForm::UnrestrictedTimeVarying;
  config.true_params.phi.assign(kNumDrugs, banded_phi(k));
  config.true_params.delta = Eigen::VectorXd::Constant(k, 1.0 / k);
  Eigen::MatrixXd tau = Eigen::MatrixXd::Constant(
      k, k, k == 1 ? 1.0 : (1.0 - diagonal) / (k - 1));
  tau.diagonal().setConstant(k == 1 ? 1.0 : diagonal);
  config.true_params.trans.assign(kMonths - 1, tau);
  config.survival.baseline_hazard_per_year = 0.1;
  config.survival.state_multipliers.assign(k, 1.0);
  config.censor_horizon_days = 3000;
  return config;
}

}  // namespace

TEST_CASE("load_cohort links purchases and applies the dedup rule") {
  const auto dir = scratch_dir("load");
  write(dir / "patients.csv",
        std::string(kPatientsHeader) + patient_row("p1", 1500, 0) + patient_row("p2", 900, 1));
  write(dir / "purchases.csv",
        "patient_id,drug,dispense_day,coverage_days\n"
        "p1,RAS,10,28\n"
        "p1,RAS,10,30\n"  // duplicate key, larger coverage wins
        "p2,BB,40,30\n");

  const CohortData cohort =
      load_cohort((dir / "patients.csv").string(), (dir / "purchases.csv").string());
  CHECK(cohort.patients.size() == 2);
  REQUIRE(cohort.purchases.size() == 2);
  for (const PurchaseEvent& e : cohort.purchases) {
    if (e.patient_id == "p1") {
      CHECK(e.dispense_day == 10);
      CHECK(e.coverage_days == 30);
    }
  }
}

TEST_CASE("load_cohort rejects orphans naming the offending id") {
  const auto dir = scratch_dir("orphan");
  write(dir / "patients.csv", std::string(kPatientsHeader) + patient_row("p1", 1500, 0));
  write(dir / "purchases.csv",
        "patient_id,drug,dispense_day,coverage_days\nX9,RAS,10,28\n");
  CHECK_THROWS_WITH_AS(
      load_cohort((dir / "patients.csv").string(), (dir / "purchases.csv").string()),
      doctest::Contains("X9"), ValidationError);
}

TEST_CASE("load_cohort errors carry file, line and column") {
  const auto dir = scratch_dir("malformed");
  write(dir / "patients.csv",
        std::string(kPatientsHeader) + "p1,2006-03-14,not_a_number,F,1500,0" +
            ",3,3,3,4,4,4,4,5,5,5,5,5\n");
  write(dir / "purchases.csv", "patient_id,drug,dispense_day,coverage_days\n");
  try {
    load_cohort((dir / "patients.csv").string(), (dir / "purchases.csv").string());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("patients.csv") != std::string::npos);
    CHECK(what.find(":2:") != std::string::npos);
    CHECK(what.find("age") != std::string::npos);
  }
}

TEST_CASE("cohort filtering follows the exclusion rules") {
  CohortData cohort;
  auto add = [&](const std::string& id, long followup, bool event) {
    PatientRecord p;
    p.patient_id = id;
    p.index_date = "2006-01-01";
    p.age = 70;
    p.gender = Gender::M;
    p.followup_days = followup;
    p.event = event;
    cohort.patients.push_back(p);
  };
  add("early_censor_no_drugs", 200, false);  // excluded: early censor, no purchases
  add("early_death_with_drugs", 200, true);  // excluded: death inside panel window
  add("early_censor_with_drugs", 200, false);
  add("keeper", 2000, true);
  PurchaseEvent e;
  e.drug = Drug::RAS;
  e.dispense_day = 5;
  e.coverage_days = 30;
  for (const std::string id : {"early_death_with_drugs", "early_censor_with_drugs", "keeper"}) {
    e.patient_id = id;
    cohort.purchases.push_back(e);
  }

  CohortFilterStats stats;
  const CohortData kept = filter_cohort(cohort, {}, &stats);
  CHECK(stats.n_input == 4);
  CHECK(stats.n_excluded_unexposed_censored == 1);
  CHECK(stats.n_excluded_observation_deaths == 1);
  CHECK(kept.patients.size() == 2);
  CHECK(kept.purchases.size() == 2);

  CohortFilterOptions keep_deaths;
  keep_deaths.exclude_observation_deaths = false;
  CHECK(filter_cohort(cohort, keep_deaths).patients.size() == 3);
}

TEST_CASE("single-state simulation gives constant latent paths") {
  const SimulatedCohort sim = simulate_cohort(sticky_config(1, 1.0, 50, 11));
  REQUIRE(sim.true_paths.size() == 50);
  for (const LatentPath& path : sim.true_paths)
    for (const int s : path.states) CHECK(s == 1);
}

TEST_CASE("simulation is a pure function of config and seed") {
  const SyntheticCohortConfig config = sticky_config(3, 0.9, 120, 77);
  const SimulatedCohort a = simulate_cohort(config, 1);
  const SimulatedCohort b = simulate_cohort(config, 1);
  const SimulatedCohort c = simulate_cohort(config, 4);  // thread count must not matter

  REQUIRE(a.data.patients.size() == b.data.patients.size());
  REQUIRE(a.data.purchases.size() == b.data.purchases.size());
  REQUIRE(a.data.purchases.size() == c.data.purchases.size());
  for (std::size_t i = 0; i < a.data.patients.size(); ++i) {
    CHECK(a.data.patients[i].followup_days == b.data.patients[i].followup_days);
    CHECK(a.data.patients[i].followup_days == c.data.patients[i].followup_days);
    CHECK(a.data.patients[i].age == c.data.patients[i].age);
    CHECK(a.true_paths[i].states == c.true_paths[i].states);
  }
  for (std::size_t i = 0; i < a.data.purchases.size(); ++i) {
    CHECK(a.data.purchases[i].dispense_day == c.data.purchases[i].dispense_day);
    CHECK(a.data.purchases[i].coverage_days == c.data.purchases[i].coverage_days);
  }

  const SimulatedCohort d = simulate_cohort(sticky_config(3, 0.9, 120, 78));
  bool any_difference = false;
  for (std::size_t i = 0; i < a.data.patients.size(); ++i)
    any_difference = any_difference ||
                     a.data.patients[i].followup_days != d.data.patients[i].followup_days;
  CHECK(any_difference);
}

TEST_CASE("near-identity transitions give mostly constant paths") {
  const SimulatedCohort sim = simulate_cohort(sticky_config(3, 0.999, 400, 5));
  long constant = 0;
  for (const LatentPath& path : sim.true_paths) {
    bool is_constant = true;
    for (const int s : path.states) is_constant = is_constant && s == path.states.front();
    constant += is_constant ? 1 : 0;
  }
  // Direct path counting: P(constant) ~ 0.999^11 ~ 0.989 per patient.
  CHECK(constant >= 380);  // >= 95%
}

TEST_CASE("simulator round-trip: adherence module reproduces sampled categories") {
  const SyntheticCohortConfig config = sticky_config(3, 0.85, 150, 99);
  const SimulatedCohort sim = simulate_cohort(config);
  const std::vector<AdherencePanel> panels =
      build_panels(sim.data.patients, sim.data.purchases);
  REQUIRE(panels.size() == sim.true_panels.size());
  for (std::size_t i = 0; i < panels.size(); ++i) {
    for (int j = 0; j < kNumDrugs; ++j) {
      const DrugChannel& computed = panels[i].channels[j];
      const DrugChannel& truth = sim.true_panels[i].channels[j];
      REQUIRE(computed.user == truth.user);
      if (!truth.user) continue;
      for (int t = 0; t < kMonths; ++t) {
        CHECK(computed.levels[t] == truth.levels[t]);
        CHECK(computed.ratios[t] == doctest::Approx(truth.ratios[t]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("simulation config validation") {
  SyntheticCohortConfig config = sticky_config(2, 0.9, 10, 1);
  config.n_patients = 0;
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = sticky_config(2, 0.9, 10, 1);
  config.survival.state_multipliers = {1.0};  // wrong length
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = sticky_config(2, 0.9, 10, 1);
  config.survival.state_multipliers = {1.0, -0.5};
  CHECK_THROWS_AS(config.validate(), ValidationError);
}
