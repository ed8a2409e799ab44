// Command-line runner for corruption sweeps.
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "csu/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"csu_lab: label-corruption experiments with class-wise unreliability weighting"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::size_t jobs = 1;
  std::uint64_t seed_offset = 0;
  bool quiet = false;

  struct Command {
    const char* name;
    const char* help;
    std::size_t (*run)(const csu::ExperimentConfig&, const csu::CommandOptions&);
  };
  const Command commands[] = {
      {"gen", "generate or validate the clean dataset splits", csu::cmd_gen},
      {"corrupt", "write corrupted training targets and reports", csu::cmd_corrupt},
      {"train", "train every grid cell", csu::cmd_train},
      {"eval", "score trained cells on the clean test split", csu::cmd_eval},
      {"sweep", "gen, corrupt, train and eval, skipping finished cells", csu::cmd_sweep},
      {"analyze", "export trajectory, density, surface and geometry CSVs", csu::cmd_analyze},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--jobs", jobs, "cells run in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--seed-offset", seed_offset, "added to every configured seed");
    sub->add_flag("-q,--quiet", quiet, "suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (app.got_subcommand(c.name)) chosen = &c;

  csu::ExperimentConfig config;
  try {
    config = csu::load_config(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    config = csu::with_seed_offset(std::move(config), seed_offset);
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  csu::CommandOptions options;
  options.jobs = jobs;
  options.seed_offset = seed_offset;
  options.verbose = !quiet;
  try {
    chosen->run(config, options);
  } catch (const csu::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cout << csu::experiment_root(config).string() << '\n';
  return 0;
}
