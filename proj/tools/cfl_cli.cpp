#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfl/checks.hpp"
#include "cfl/config.hpp"
#include "cfl/errors.hpp"
#include "cfl/harness.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> alpha;
  std::optional<std::string> algorithm;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> repeats;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool seed_required) {
  cmd->add_option("-c,--config", o.config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  auto* seed = cmd->add_option("--seed", o.seed, "base RNG seed for user selection");
  if (seed_required) seed->required();
  cmd->add_option("--set", o.overrides, "override a config field, key=value (repeatable)");
  cmd->add_option("-o,--output", o.output, "trace CSV path");
  cmd->add_option("--alpha", o.alpha, "selection probability (list for sweep)");
  cmd->add_option("--algorithm", o.algorithm, "cfl-admm | gt-saga | d-sgd (list for sweep)");
  cmd->add_option("--iterations", o.iterations, "outer iterations per run");
  cmd->add_option("--repeats", o.repeats, "independent seeds per cell");
}

cfl::harness::ExperimentConfig resolve(const CommonOptions& o) {
  auto config = cfl::harness::load_config(o.config_path);
  for (const auto& text : o.overrides) {
    const auto [key, value] = cfl::harness::split_assignment(text);
    config.set(key, value);
  }
  if (o.seed) config.set("seed", std::to_string(*o.seed));
  if (o.output) config.set("output", *o.output);
  if (o.alpha) config.set("alpha", *o.alpha);
  if (o.algorithm) config.set("algorithm", *o.algorithm);
  if (o.iterations) config.set("iterations", std::to_string(*o.iterations));
  if (o.repeats) config.set("repeats", std::to_string(*o.repeats));
  return config;
}

int report(const cfl::harness::ExperimentResult& r) {
  std::cout << "cells: " << r.cells << " (failed: " << r.failed_cells << ")\n"
            << "traces: " << r.trace_path.string() << "\n"
            << "means:  " << r.mean_path.string() << "\n";
  return r.failed_cells == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confederated learning simulator: CFL-ADMM and decentralized gradient baselines"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "run one (algorithm, alpha, epsilon) cell");
  add_common(run, run_opts, true);

  CommonOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "run the full algorithm x alpha x epsilon grid");
  add_common(sweep, sweep_opts, false);

  CommonOptions ref_opts;
  auto* reference = app.add_subcommand("reference", "compute and cache the reference optimum x*");
  add_common(reference, ref_opts, false);

  auto* check = app.add_subcommand("check", "run the invariant suite on a built-in tiny instance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = resolve(run_opts);
      config.algorithms.resize(1);
      config.alphas.resize(1);
      config.epsilons.erase(config.epsilons.begin() + 1, config.epsilons.end());
      return report(cfl::harness::run_experiment(config));
    }
    if (*sweep) return report(cfl::harness::run_experiment(resolve(sweep_opts)));
    if (*reference) {
      const auto config = resolve(ref_opts);
      const auto inst = cfl::harness::build_instance(config);
      const auto path = cfl::harness::reference_cache_path(config.cache_dir, inst.content_hash);
      std::cout << "x* cached at " << path.string() << " (solver iterations " << inst.reference_iterations
                << ", gradient norm " << cfl::harness::format_double(inst.reference_gradient_norm) << ")\n";
      return 0;
    }
    if (*check) {
      bool all = true;
      for (const auto& r : cfl::checks::run_invariant_checks()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const cfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
