#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cfl/cfl_admm.hpp"

namespace cfl::harness {

enum class Algorithm { cfl_admm, gt_saga, d_sgd };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

/// Everything needed to build an instance and run a grid of cells.
/// Loaded from a flat "key = value" file; lists are comma separated.
struct ExperimentConfig {
  // topology
  std::string topology = "ring";  // ring | path | star | erdos_renyi | edges
  std::size_t servers = 4;
  std::vector<std::size_t> users_per_server = {20};  // one value or one per server
  std::string edges;                                 // "0-1,1-2" for topology = edges
  double er_probability = 0.5;
  std::uint64_t topology_seed = 1;

  // data
  std::string dataset;  // synthetic | csv; must be set
  std::filesystem::path csv_path;
  bool csv_skip_header = false;
  std::size_t csv_feature_columns = 23;
  long dim = 10;
  double feature_scale = 0.6;
  double label_noise = 1.0;
  std::uint64_t data_seed = 1;
  std::size_t samples_per_user = 20;
  double ridge = 0.01;

  // algorithms
  std::vector<Algorithm> algorithms = {Algorithm::cfl_admm};
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  std::vector<double> alphas = {0.3};
  std::vector<admm::EpsilonSchedule> epsilons = {admm::EpsilonSchedule::decreasing()};
  std::size_t iterations = 500;
  std::size_t max_inner = 100'000;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::size_t repeats = 20;
  std::vector<double> stepsizes = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  double tune_target = 1e-4;

  // output
  std::filesystem::path output = "trace.csv";
  std::filesystem::path cache_dir = ".cfl_cache";
  double reference_tol = 1e-10;
  bool record_wall_time = false;

  /// Applies one key/value pair. Throws ConfigError on unknown keys or
  /// malformed values.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError if the config cannot describe a run.
  void validate() const;
  /// Output path with the CFL_OUTPUT_DIR environment override applied.
  std::filesystem::path resolved_output() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// "key=value" -> pair; throws ConfigError without '='.
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace cfl::harness
