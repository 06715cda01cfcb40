#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "cfl/cfl_admm.hpp"
#include "cfl/problem.hpp"
#include "cfl/topology.hpp"
#include "cfl/types.hpp"

namespace cfl::baselines {

/// Symmetric doubly-stochastic matrix supported on the server graph.
struct MixingMatrix {
  Matrix base;
};

/// W_ij = 1/(1 + max(deg i, deg j)) on edges, W_ii = 1 - sum_j W_ij.
MixingMatrix metropolis_weights(const topology::EsGraph& graph);

/// Largest singular value of W restricted to the complement of the
/// consensus direction, i.e. || W - (1/l) 11^T ||_2.
double mixing_rate(const MixingMatrix& w);

/// Model, tracker and SAGA memory for gradient tracking with
/// variance reduction, run over the server network.
struct GtSagaState {
  std::size_t iteration = 0;
  RowStack y;          // servers x n
  RowStack tracker;    // servers x n
  RowStack estimator;  // servers x n, last variance-reduced gradient of f_i
  RowStack table;      // users x n, last gradient each user reported
  RowStack table_sum;  // servers x n, sum of the server's table rows
  std::uint64_t messages_sent = 0;

  /// Arithmetic mean of server i's stored gradients.
  Vector table_average(const topology::EsGraph& graph, std::size_t server) const;
};

/// All users report their gradient at y = 0 once; trackers start at the
/// aggregated gradients. That setup round is charged to messages_sent.
GtSagaState gt_saga_init(std::span<const problem::ObjectivePtr> objectives,
                         const topology::EsGraph& graph);

/// One round: selected users upload grad f_ij(y_i); each server forms
///   v_i = sum_j table_ij + (1/alpha) sum_{j selected} (grad_ij - table_ij),
/// refreshes its table, sets tracker <- W tracker + v_new - v_old and
/// y <- W y - stepsize * tracker.
void gt_saga_step(GtSagaState& state, std::span<const problem::ObjectivePtr> objectives,
                  const topology::EsGraph& graph, const MixingMatrix& w, double stepsize,
                  double alpha, const admm::CounterRng& rng);

struct DsgdState {
  std::size_t iteration = 0;
  RowStack y;  // servers x n
  std::uint64_t messages_sent = 0;

  static DsgdState zeros(const topology::EsGraph& graph, Eigen::Index dim);
};

/// y_i <- sum_j W_ij y_j - stepsize * (1/alpha) sum_{j selected} grad f_ij(y_i).
void d_sgd_step(DsgdState& state, std::span<const problem::ObjectivePtr> objectives,
                const topology::EsGraph& graph, const MixingMatrix& w, double stepsize,
                double alpha, const admm::CounterRng& rng);

/// Standard full-participation ADMM on the consensus formulation, with
/// dense A, H and an optional extra proximal term (sigma2/2)||y - y^k||_M^2
/// in the y-subproblem.
struct CentralizedAdmmState {
  std::size_t iteration = 0;
  RowStack x;       // users x n
  RowStack lambda;  // users x n
  RowStack y;       // servers x n
  RowStack beta;    // edges x n

  static CentralizedAdmmState zeros(const topology::EsGraph& graph, Eigen::Index dim);
};

struct CentralizedAdmmOptions {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  std::optional<Matrix> proximal_weight;  // l x l base of M
  double inner_tolerance = 1e-10;
  std::size_t max_inner = 1'000'000;
};

void centralized_admm_step(CentralizedAdmmState& state,
                           std::span<const problem::ObjectivePtr> objectives,
                           const topology::EsGraph& graph, const CentralizedAdmmOptions& options);

/// Per-user models implied by per-server models: user (i, j) holds y_i.
RowStack broadcast_to_users(const RowStack& y, const topology::EsGraph& graph);

}  // namespace cfl::baselines
