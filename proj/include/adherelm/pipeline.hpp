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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adherelm/cohort.hpp"
#include "adherelm/lmm.hpp"

namespace adherelm {

enum class DecodeMode { Global, Local };

/// Shared configuration for the pipeline subcommands, loaded from one JSON
/// document. The seed is mandatory: no wall-clock fallback, every run is a
/// pure function of (inputs, config).
struct PipelineConfig {
  std::string config_dir;  // directory of the config file, for relative paths

  std::string patients_path;   // defaults to <output_dir>/patients.csv
  std::string purchases_path;  // defaults to <output_dir>/purchases.csv
  std::string output_dir = "out";

  std::uint64_t seed = 0;
  int threads = 1;

  std::optional<SyntheticCohortConfig> simulate;

  std::vector<int> k_range = {1, 2, 3, 4, 5};
  std::vector<std::string> covariates = {"age", "gender", "mcs"};

  EmOptions em;

  long profile_min_count = 1500;
  DecodeMode decode_mode = DecodeMode::Global;

  double tau_years = 7.0;
  bool landmark = true;  // survival clock starts at the end of the panel window
  bool rmst_truncate_at_last_event = false;

  std::string resolved_patients_path() const;
  std::string resolved_purchases_path() const;
  std::string artifact_path(const std::string& name) const;
};

/// Parses and fully validates the config document before anything runs.
PipelineConfig load_pipeline_config(const std::string& path);

// Subcommand entry points. Each validates its inputs completely before
// writing any artifact and reports a short human-readable summary to `out`.
// Artifacts are machine-readable delimited/JSON files in output_dir.

/// Writes patients.csv, purchases.csv and true_paths.csv from the simulate
/// section.
void cmd_simulate(const PipelineConfig& config, std::ostream& out);

/// Writes adherence_panel.csv for the filtered cohort.
void cmd_adherence(const PipelineConfig& config, std::ostream& out);

/// Runs model selection and writes selection_table.csv plus model.json for
/// the winning model.
void cmd_fit(const PipelineConfig& config, std::ostream& out);

/// Decodes latent paths under a fitted model and writes decoded_paths.csv,
/// profiles.csv and profile_counts.csv.
void cmd_profile(const PipelineConfig& config, const std::string& model_path,
                 std::ostream& out);

/// Profile-stratified survival analysis: km_curves.csv, cox_hr.csv and
/// survival_report.json.
void cmd_survival(const PipelineConfig& config, const std::string& profiles_path,
                  std::ostream& out);

/// Aggregates existing artifacts into report.txt.
void cmd_report(const PipelineConfig& config, std::ostream& out);

}  // namespace adherelm
