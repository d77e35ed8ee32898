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
#include <string>

namespace adherelm {

// Panel clock: 12 observation months of exactly 30 days (days 0..359).
// User status is judged on the full first follow-up year (days 0..364).
inline constexpr int kMonths = 12;
inline constexpr int kDaysPerMonth = 30;
inline constexpr int kPanelDays = kMonths * kDaysPerMonth;  // 360
inline constexpr int kUserWindowDays = 365;

/// Drug classes tracked by the pipeline. Labels are opaque here; coverage
/// days arrive already dose-adjusted upstream.
enum class Drug : int { RAS = 0, BB = 1, MRA = 2 };
inline constexpr int kNumDrugs = 3;

const std::string& drug_name(Drug d);
Drug parse_drug(const std::string& name);

enum class Gender : int { M = 0, F = 1 };

const std::string& gender_name(Gender g);
Gender parse_gender(const std::string& name);

/// One cohort member: demographics at the index discharge, the monthly
/// comorbidity score series over the observation year, and the follow-up
/// outcome. mcs always has one entry per observation month.
struct PatientRecord {
  std::string patient_id;
  std::string index_date;  // ISO-8601 calendar date
  int age = 0;             // years at index, >= 18
  Gender gender = Gender::M;
  std::array<int, kMonths> mcs{};
  long followup_days = 0;  // days from index to event/censor
  bool event = false;      // true = death observed

  void validate() const;  // throws ValidationError
};

/// One dispensing of a drug class. coverage_days is the dose-adjusted days
/// supplied; dispense_day counts from the index date.
struct PurchaseEvent {
  std::string patient_id;
  Drug drug = Drug::RAS;
  int dispense_day = 0;   // in [0, kUserWindowDays)
  int coverage_days = 0;  // >= 1

  void validate() const;  // throws ValidationError
};

}  // namespace adherelm
