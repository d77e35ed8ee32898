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

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "adherelm/errors.hpp"
#include "adherelm/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitComputation = 2;
constexpr int kExitIo = 3;

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> output;
};

void add_common_options(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "Pipeline configuration (JSON)")
      ->required();
  cmd->add_option("--seed", args.seed, "Override the config seed");
  cmd->add_option("--threads", args.threads, "Worker thread cap (>=1)");
  cmd->add_option("--output", args.output, "Override the output directory");
}

adherelm::PipelineConfig resolve_config(const GlobalArgs& args) {
  adherelm::PipelineConfig config = adherelm::load_pipeline_config(args.config_path);
  if (args.seed) {
    config.seed = *args.seed;
    config.em.seed = *args.seed;
    if (config.simulate) config.simulate->seed = *args.seed;
  }
  if (args.threads) {
    if (*args.threads < 1) throw adherelm::ValidationError("--threads must be >= 1");
    config.threads = *args.threads;
  }
  if (args.output) config.output_dir = *args.output;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adherence panels, latent Markov fits, behavioural profiles and "
               "survival reports from drug-purchase logs"};
  app.require_subcommand(1);

  GlobalArgs simulate_args, adherence_args, fit_args, profile_args, survival_args,
      report_args;
  std::string model_path, profiles_path;

  CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort");
  add_common_options(simulate, simulate_args);
  CLI::App* adherence = app.add_subcommand("adherence", "Build the adherence panel export");
  add_common_options(adherence, adherence_args);
  CLI::App* fit = app.add_subcommand("fit", "Model selection and final fit");
  add_common_options(fit, fit_args);
  CLI::App* profile = app.add_subcommand("profile", "Decode paths and classify profiles");
  add_common_options(profile, profile_args);
  profile->add_option("--model", model_path, "Fitted model document (default: <output>/model.json)");
  CLI::App* survival = app.add_subcommand("survival", "Profile-stratified survival analysis");
  add_common_options(survival, survival_args);
  survival->add_option("--profiles", profiles_path,
                       "Profile assignments (default: <output>/profiles.csv)");
  CLI::App* report = app.add_subcommand("report", "Summarize pipeline artifacts");
  add_common_options(report, report_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      adherelm::cmd_simulate(resolve_config(simulate_args), std::cout);
    else if (adherence->parsed())
      adherelm::cmd_adherence(resolve_config(adherence_args), std::cout);
    else if (fit->parsed())
      adherelm::cmd_fit(resolve_config(fit_args), std::cout);
    else if (profile->parsed())
      adherelm::cmd_profile(resolve_config(profile_args), model_path, std::cout);
    else if (survival->parsed())
      adherelm::cmd_survival(resolve_config(survival_args), profiles_path, std::cout);
    else if (report->parsed())
      adherelm::cmd_report(resolve_config(report_args), std::cout);
  } catch (const adherelm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const adherelm::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const adherelm::ComputationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitComputation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitComputation;
  }
  return kExitOk;
}
