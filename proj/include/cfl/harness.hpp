#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfl/config.hpp"
#include "cfl/problem.hpp"
#include "cfl/topology.hpp"

namespace cfl::harness {

/// Per-iteration metrics of one run.
struct TraceRecord {
  std::size_t iteration = 0;
  double optimality_gap = 0.0;
  double global_objective = 0.0;
  double consensus_user_es = 0.0;
  double consensus_es_es = 0.0;
  double cumulative_messages = 0.0;  // averaged in mean traces, hence real
  double wall_time = 0.0;
};

using Trace = std::vector<TraceRecord>;

/// d = sum_u ||x_u - x*||^2 / (||x*||^2 * #users). Throws InvalidParameter
/// when x* is zero.
double optimality_gap(const RowStack& user_models, const Vector& x_star,
                      const topology::EsGraph& graph);

struct Instance {
  topology::EsGraph graph;
  std::vector<problem::ObjectivePtr> objectives;
  Vector x_star;
  std::uint64_t content_hash = 0;
  std::size_t reference_iterations = 0;
  double reference_gradient_norm = 0.0;
};

topology::EsGraph build_graph(const ExperimentConfig& config);

/// Loads or generates data, partitions it, and attaches x* (from the cache
/// when available, otherwise solved and cached).
Instance build_instance(const ExperimentConfig& config);

/// 64-bit FNV-1a over the objectives' data, ridge weights and the reference
/// tolerance.
std::uint64_t content_hash(std::span<const problem::ObjectivePtr> objectives, double tolerance);

std::filesystem::path reference_cache_path(const std::filesystem::path& cache_dir, std::uint64_t hash);

/// Returns the cached x* for hash, or nullopt when no (valid) cache exists.
std::optional<problem::ReferenceSolution> read_reference_cache(const std::filesystem::path& path,
                                                               std::uint64_t hash);
void write_reference_cache(const std::filesystem::path& path, std::uint64_t hash, double tolerance,
                           const problem::ReferenceSolution& solution);

struct CellSpec {
  Algorithm algorithm = Algorithm::cfl_admm;
  double alpha = 0.3;
  admm::EpsilonSchedule epsilon = admm::EpsilonSchedule::decreasing();
  double stepsize = 0.0;  // baselines only
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  std::size_t iterations = 500;
  std::size_t max_inner = 100'000;
  std::uint64_t seed = 1;
  bool record_wall_time = false;
};

/// One seeded run of a cell, one record per iteration.
Trace run_cell(const Instance& instance, const CellSpec& spec);

/// Elementwise arithmetic mean of equally long traces.
Trace mean_trace(std::span<const Trace> traces);

/// First iteration whose gap is <= threshold.
std::optional<std::size_t> first_iteration_below(const Trace& trace, double threshold);

/// Runs `repeats` seeds (seed, seed+1, ...) of a cell.
std::vector<Trace> run_repeats(const Instance& instance, const CellSpec& spec, std::size_t repeats);

struct TunedCell {
  double stepsize = 0.0;
  std::vector<Trace> traces;
  Trace mean;
};

/// Grid search over stepsizes: the winner reaches `target` on the mean
/// trace earliest; ties and never-reaching cells are ranked by final gap.
TunedCell tune_stepsize(const Instance& instance, CellSpec spec, std::span<const double> grid,
                        std::size_t repeats, double target);

struct ExperimentResult {
  std::filesystem::path trace_path;
  std::filesystem::path mean_path;
  std::size_t cells = 0;
  std::size_t failed_cells = 0;
};

/// Runs every (algorithm, alpha, epsilon) cell with `repeats` seeds and
/// writes per-repeat and mean traces as CSV.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Column header shared by all trace files.
std::string csv_header();

/// Formats a double with 17 significant digits.
std::string format_double(double v);

}  // namespace cfl::harness
