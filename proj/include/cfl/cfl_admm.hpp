#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "cfl/problem.hpp"
#include "cfl/topology.hpp"
#include "cfl/types.hpp"

namespace cfl::admm {

/// Inner-solve accuracy per outer iteration: a constant, or 1/(100 + k^2).
class EpsilonSchedule {
 public:
  static EpsilonSchedule constant(double epsilon);
  static EpsilonSchedule decreasing();

  /// Tolerance for outer iteration k (1-based).
  double at(std::size_t k) const;
  bool is_decreasing() const noexcept { return decreasing_; }
  double constant_value() const noexcept { return value_; }

 private:
  EpsilonSchedule(bool decreasing, double value) : decreasing_(decreasing), value_(value) {}
  bool decreasing_;
  double value_;
};

struct RunConfig {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double alpha = 0.3;
  EpsilonSchedule epsilon = EpsilonSchedule::decreasing();
  std::size_t max_iterations = 500;
  std::size_t max_inner = 100'000;
  std::uint64_t seed = 1;

  /// Throws InvalidParameter on out-of-range fields.
  void validate() const;
};

/// Counter-based uniform stream: the draw for a key tuple depends only on
/// (seed, stream, keys), never on how many draws were made before.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}
  double uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c) const;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Users activated at one iteration, grouped by server (local indices j).
struct Selection {
  std::vector<std::vector<std::size_t>> per_server;

  std::size_t count() const;
};

/// Each user independently with probability alpha. alpha == 0 is accepted
/// and selects nobody.
Selection select_users(const topology::EsGraph& graph, double alpha, const CounterRng& rng,
                       std::size_t iteration);

/// Full algorithm state. Per-user and per-server vectors are rows.
struct CflState {
  std::size_t iteration = 0;
  RowStack x;        // users x n; doubles as each server's history of its users' models
  RowStack lambda;   // users x n
  RowStack y;        // servers x n
  RowStack beta;     // edges x n, central bookkeeping only
  // Server-local state, maintained from own users and one-hop neighbours.
  RowStack dual_accumulator;       // (H lambda^k)_i
  RowStack laplacian_accumulator;  // (A^T beta^k)_i
  RowStack neighbor_laplacian;     // (A^T A y^k)_i, learned in the last neighbour exchange
  std::uint64_t messages_sent = 0;

  static CflState zeros(const topology::EsGraph& graph, Eigen::Index dim);
  Eigen::Index dim() const noexcept { return y.cols(); }
};

/// Matrices fixed for a run.
struct CflMatrices {
  topology::BlockMatrix d;
  topology::BlockMatrix p;

  static CflMatrices build(const topology::EsGraph& graph, const RunConfig& config,
                           Eigen::Index dim);
};

struct XUpdateStats {
  std::size_t selected = 0;
  std::size_t inner_iterations = 0;
  double max_residual = 0.0;
};

/// Solves the subproblems of the selected users to epsilon accuracy, warm
/// started from their previous models. Unselected users keep x unchanged.
/// Prox nonconvergence is rethrown naming the (server, user) pair.
XUpdateStats x_update(CflState& state, std::span<const problem::ObjectivePtr> objectives,
                      const topology::EsGraph& graph, const Selection& selection, double epsilon,
                      const RunConfig& config);

/// What one server can see when it solves its y-subproblem: its own
/// users' latest models (history database), its own accumulators and the
/// Laplacian term it assembled from its neighbours' last broadcast.
struct LocalServerView {
  std::size_t users = 0;
  double d_ii = 0.0;
  Vector own_y;
  Vector user_model_sum;      // sum_j x_ij^{k+1}
  Vector dual_accumulator;    // (H lambda^k)_i
  Vector laplacian_accumulator;  // (A^T beta^k)_i
  Vector neighbor_laplacian;  // (A^T A y^k)_i
};

LocalServerView local_view(const CflState& state, const topology::EsGraph& graph,
                           const topology::BlockMatrix& d, std::size_t server);

/// Closed-form per-server y-update computed from local information only.
Vector local_y_update(const LocalServerView& view, const RunConfig& config);

/// All servers' y-updates. Needs no communication: the neighbour term was
/// gathered in the previous exchange round.
void y_update(CflState& state, const topology::EsGraph& graph, const topology::BlockMatrix& d,
              const RunConfig& config);

/// One neighbour exchange round: every server broadcasts y_i to its
/// neighbours. Returns, per server, the messages it received.
struct NeighborMessage {
  std::size_t from;
  Vector y;
};
std::vector<std::vector<NeighborMessage>> exchange_neighbors(const topology::EsGraph& graph,
                                                             const RowStack& y);

/// beta += sigma2 A y^{k+1} (central) and, per server from the exchange
/// round, s_i += sigma2 (A^T A y^{k+1})_i. Caches (A^T A y^{k+1})_i for the
/// next y-update.
void beta_update(CflState& state, const topology::EsGraph& graph, const RunConfig& config);

/// Two-step dual update for every user, selected or not:
///   lambda_bar = lambda + sigma1 (x - y_i);  lambda += alpha (lambda_bar - lambda).
/// Servers fold the change into their (H lambda)_i accumulators.
void lambda_update(CflState& state, const topology::EsGraph& graph, const RunConfig& config);

/// Messages for one iteration: l downlink broadcasts, l neighbour
/// broadcasts and one uplink per selected user.
std::uint64_t message_count(const topology::EsGraph& graph, std::size_t selected);

struct StepStats {
  std::size_t iteration = 0;
  double epsilon = 0.0;
  XUpdateStats x;
  std::uint64_t messages = 0;
};

/// One full iteration (selection, x-update, upload, y-update, neighbour
/// exchange and beta, download and lambda).
StepStats step(CflState& state, std::span<const problem::ObjectivePtr> objectives,
               const topology::EsGraph& graph, const CflMatrices& matrices,
               const RunConfig& config, const CounterRng& rng);

using TraceHook = std::function<void(const CflState&, const StepStats&)>;

/// Runs config.max_iterations steps from the all-zero state, calling hook
/// after each.
CflState run(std::span<const problem::ObjectivePtr> objectives, const topology::EsGraph& graph,
             const RunConfig& config, const TraceHook& hook = {});

/// Theorem-style weighted average of an iterate history, t = 1..kbar:
/// delta^kbar = 1/(1 + alpha (kbar - 1)), delta^t = alpha delta^kbar.
class WeightedAverager {
 public:
  WeightedAverager(double alpha, std::size_t kbar);

  void add(const RowStack& x, const RowStack& y);
  std::size_t count() const noexcept { return added_; }
  const RowStack& x_average() const;
  const RowStack& y_average() const;
  double weight(std::size_t t) const;

 private:
  double alpha_;
  std::size_t kbar_;
  std::size_t added_ = 0;
  RowStack x_sum_;
  RowStack y_sum_;
};

struct Averages {
  RowStack x;
  RowStack y;
};

Averages weighted_averages(std::span<const RowStack> x_history, std::span<const RowStack> y_history,
                           double alpha);

struct ConsensusResiduals {
  double user_server = 0.0;    // sum_i || x_i - H_i^T y_i ||_2
  double server_server = 0.0;  // || A y ||_2
};

ConsensusResiduals consensus_residuals(const RowStack& x, const RowStack& y,
                                       const topology::EsGraph& graph);

/// Flat binary snapshot (length-prefixed matrices of raw doubles).
void write_snapshot(std::ostream& out, const CflState& state);
CflState read_snapshot(std::istream& in);

}  // namespace cfl::admm
