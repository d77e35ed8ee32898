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

#include "adherelm/adherence.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "adherelm/errors.hpp"
#include "adherelm/parallel.hpp"

namespace adherelm {

int CoverageTimeline::covered_days_before(int day_limit) const {
  const int limit = std::min(day_limit, kPanelDays);
  int count = 0;
  for (int d = 0; d < limit; ++d) count += covered[d] ? 1 : 0;
  return count;
}

CoverageTimeline build_timeline(std::span<const PurchaseEvent> purchases) {
  CoverageTimeline timeline;
  if (purchases.empty()) return timeline;
  timeline.drug = purchases.front().drug;
  for (const PurchaseEvent& e : purchases) {
    if (e.patient_id != purchases.front().patient_id)
      throw ValidationError("build_timeline: events span multiple patients");
    if (e.drug != timeline.drug)
      throw ValidationError("build_timeline: events span multiple drugs");
    const int begin = std::max(e.dispense_day, 0);
    const int end = std::min(e.dispense_day + e.coverage_days, kPanelDays);
    for (int d = begin; d < end; ++d) timeline.covered.set(static_cast<std::size_t>(d));
  }
  return timeline;
}

double cumulative_ratio(const CoverageTimeline& timeline, int month) {
  if (month < 1 || month > kMonths)
    throw ValidationError("cumulative_ratio: month must be in 1.." + std::to_string(kMonths));
  const int window = kDaysPerMonth * month;
  return static_cast<double>(timeline.covered_days_before(window)) / window;
}

int adherence_level(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ValidationError("adherence_level: ratio must be in [0, 1]");
  if (ratio < 0.25) return 0;
  if (ratio < 0.8) return 1;
  return 2;
}

AdherencePanel build_panel(const PatientRecord& patient,
                           std::span<const PurchaseEvent> purchases) {
  AdherencePanel panel;
  panel.patient_id = patient.patient_id;

  std::array<std::vector<PurchaseEvent>, kNumDrugs> by_drug;
  for (const PurchaseEvent& e : purchases) {
    if (e.patient_id != patient.patient_id)
      throw ValidationError("build_panel: purchase for patient '" + e.patient_id +
                            "' does not belong to '" + patient.patient_id + "'");
    by_drug[static_cast<int>(e.drug)].push_back(e);
  }

  for (int j = 0; j < kNumDrugs; ++j) {
    DrugChannel& ch = panel.channels[j];
    ch.user = std::any_of(by_drug[j].begin(), by_drug[j].end(), [](const PurchaseEvent& e) {
      return e.dispense_day >= 0 && e.dispense_day < kUserWindowDays;
    });
    if (!ch.user) continue;
    const CoverageTimeline timeline = build_timeline(by_drug[j]);
    for (int t = 1; t <= kMonths; ++t) {
      ch.ratios[t - 1] = cumulative_ratio(timeline, t);
      ch.levels[t - 1] = adherence_level(ch.ratios[t - 1]);
    }
  }
  return panel;
}

std::vector<AdherencePanel> build_panels(std::span<const PatientRecord> patients,
                                         std::span<const PurchaseEvent> purchases,
                                         int threads) {
  std::unordered_map<std::string, std::vector<PurchaseEvent>> by_patient;
  by_patient.reserve(patients.size());
  for (const PurchaseEvent& e : purchases) by_patient[e.patient_id].push_back(e);

  std::vector<AdherencePanel> panels(patients.size());
  static const std::vector<PurchaseEvent> kNone;
  parallel_for(patients.size(), threads, [&](std::size_t i) {
    const auto it = by_patient.find(patients[i].patient_id);
    const auto& events = it == by_patient.end() ? kNone : it->second;
    panels[i] = build_panel(patients[i], events);
  });
  return panels;
}

}  // namespace adherelm
