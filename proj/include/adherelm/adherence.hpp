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
#include <bitset>
#include <span>
#include <vector>

#include "adherelm/records.hpp"

namespace adherelm {

/// Distinct days of drug coverage inside the 360-day panel window. Set
/// semantics: overlapping dispensings never count a day twice, and unused
/// supply is not carried forward past its own window.
struct CoverageTimeline {
  Drug drug = Drug::RAS;
  std::bitset<kPanelDays> covered;

  /// Number of covered days in [0, day_limit).
  int covered_days_before(int day_limit) const;
};

/// Union of [dispense_day, dispense_day + coverage_days) over the events,
/// clipped to the panel window. All events must share one patient and drug;
/// empty input gives an empty timeline.
CoverageTimeline build_timeline(std::span<const PurchaseEvent> purchases);

/// Cumulative covered-day ratio over months 1..month: distinct covered days
/// in [0, 30*month) divided by 30*month. month must be in 1..12.
double cumulative_ratio(const CoverageTimeline& timeline, int month);

/// Three-level categorization of a cumulative ratio:
///   0 for [0, 0.25), 1 for [0.25, 0.8), 2 for [0.8, 1].
/// Intervals are closed below, so 0.25 -> 1 and 0.8 -> 2 exactly.
int adherence_level(double ratio);

/// Monthly adherence for one drug. Non-users carry no levels: the whole
/// channel is a missing response, never imputed as low adherence.
struct DrugChannel {
  bool user = false;
  std::array<double, kMonths> ratios{};  // meaningful only when user
  std::array<int, kMonths> levels{};     // meaningful only when user
};

/// Per-patient adherence panel across all drug classes.
struct AdherencePanel {
  std::string patient_id;
  std::array<DrugChannel, kNumDrugs> channels;

  const DrugChannel& channel(Drug d) const {
    return channels[static_cast<int>(d)];
  }
};

/// Builds the panel for one patient. A patient is a user of drug j iff at
/// least one purchase of j falls in days [0, 365); levels are computed from
/// cumulative ratios over the 360-day panel window, so a purchase in days
/// 360..364 makes a user whose ratios are all zero.
AdherencePanel build_panel(const PatientRecord& patient,
                           std::span<const PurchaseEvent> purchases);

/// Panels for a whole cohort, evaluated independently per patient.
std::vector<AdherencePanel> build_panels(std::span<const PatientRecord> patients,
                                         std::span<const PurchaseEvent> purchases,
                                         int threads = 1);

}  // namespace adherelm
