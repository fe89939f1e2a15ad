// Command line front end: simulate / check / compare a scenario config, or
// reproduce one of the canned experiments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "psl/experiment.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<long> horizon;
  std::optional<int> stride;
  std::optional<std::string> out;
  bool waive = false;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "override the base seed");
  cmd->add_option("--trials", ov.trials, "override the trial count");
  cmd->add_option("--horizon", ov.horizon, "override the iteration horizon");
  cmd->add_option("--stride", ov.stride, "override the snapshot stride");
  cmd->add_option("--out", ov.out, "output directory");
  cmd->add_flag("--waive-assumptions", ov.waive,
                "run even when assumption checks fail");
}

psl::ExperimentConfig apply(psl::ExperimentConfig config, const Overrides& ov) {
  if (ov.seed) {
    config.seed = *ov.seed;
    config.trial_seeds.clear();
  }
  if (ov.trials) {
    config.trials = *ov.trials;
    config.trial_seeds.clear();
  }
  if (ov.horizon) config.horizon = *ov.horizon;
  if (ov.stride) config.stride = *ov.stride;
  if (ov.out) config.out_dir = *ov.out;
  if (ov.waive) config.waive_assumptions = true;
  return config;
}

psl::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw psl::ConfigError({"cannot open config file '" + path + "'"});
  std::ostringstream text;
  text << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return psl::ExperimentConfig::parse(text.str(), dir.empty() ? "." : dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"social learning under partial information sharing"};
  app.require_subcommand(1);

  std::string config_path, scenario_name;
  Overrides ov;

  auto* simulate = app.add_subcommand("simulate", "run a scenario config");
  simulate->add_option("config", config_path, "scenario config file")->required();
  add_override_flags(simulate, ov);

  auto* check = app.add_subcommand("check", "validate a config and audit assumptions");
  check->add_option("config", config_path, "scenario config file")->required();

  auto* compare = app.add_subcommand("compare",
                                     "run all four strategies on shared observations");
  compare->add_option("config", config_path, "scenario config file")->required();
  add_override_flags(compare, ov);

  auto* reproduce = app.add_subcommand("reproduce", "run a canned scenario");
  reproduce->add_option("scenario", scenario_name,
                        "fig2-panel2 | fig2-panel3 | fig2-panel4")->required();
  add_override_flags(reproduce, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : psl::kExitValidation;
  }

  try {
    if (simulate->parsed())
      return psl::run_experiment(apply(load_config(config_path), ov), std::cout);
    if (check->parsed())
      return psl::check_experiment(load_config(config_path), std::cout);
    if (compare->parsed())
      return psl::compare_strategies(apply(load_config(config_path), ov), std::cout);
    if (reproduce->parsed()) {
      auto config = psl::ExperimentConfig::parse(psl::canned_scenario(scenario_name));
      if (!ov.out) config.out_dir = scenario_name;
      return psl::run_experiment(apply(std::move(config), ov), std::cout);
    }
  } catch (const psl::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return psl::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return psl::kExitNumerical;
  }
  return psl::kExitValidation;
}
