#include "cfl/cfl_admm.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "cfl/errors.hpp"

namespace cfl::admm {

using topology::BlockMatrix;
using topology::EsGraph;

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

EpsilonSchedule EpsilonSchedule::constant(double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidParameter("epsilon must be nonnegative");
  return EpsilonSchedule(false, epsilon);
}

EpsilonSchedule EpsilonSchedule::decreasing() { return EpsilonSchedule(true, 0.0); }

double EpsilonSchedule::at(std::size_t k) const {
  if (!decreasing_) return value_;
  const double kk = static_cast<double>(k);
  return 1.0 / (100.0 + kk * kk);
}

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in (0, 1]");
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw InvalidParameter("sigma1 and sigma2 must be positive");
  if (max_iterations < 1) throw InvalidParameter("max_iterations must be at least 1");
  if (max_inner < 1) throw InvalidParameter("max_inner must be at least 1");
}

double CounterRng::uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  std::uint64_t h = splitmix(seed_);
  h = splitmix(h ^ stream_);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  h = splitmix(h ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::size_t Selection::count() const {
  std::size_t total = 0;
  for (const auto& s : per_server) total += s.size();
  return total;
}

Selection select_users(const EsGraph& graph, double alpha, const CounterRng& rng,
                       std::size_t iteration) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in [0, 1]");
  Selection sel;
  sel.per_server.resize(graph.num_servers());
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    for (std::size_t j = 0; j < graph.users(i); ++j) {
      if (rng.uniform(iteration, i, j) < alpha) sel.per_server[i].push_back(j);
    }
  }
  return sel;
}

CflState CflState::zeros(const EsGraph& graph, Eigen::Index dim) {
  if (dim <= 0) throw InvalidParameter("model dimension must be positive");
  const auto users = idx(graph.total_users());
  const auto servers = idx(graph.num_servers());
  CflState s;
  s.x = RowStack::Zero(users, dim);
  s.lambda = RowStack::Zero(users, dim);
  s.y = RowStack::Zero(servers, dim);
  s.beta = RowStack::Zero(idx(graph.num_edges()), dim);
  s.dual_accumulator = RowStack::Zero(servers, dim);
  s.laplacian_accumulator = RowStack::Zero(servers, dim);
  s.neighbor_laplacian = RowStack::Zero(servers, dim);
  return s;
}

CflMatrices CflMatrices::build(const EsGraph& graph, const RunConfig& config, Eigen::Index dim) {
  auto d = topology::build_d_matrix(graph, config.alpha, config.sigma1, config.sigma2, dim);
  auto p = topology::build_p_matrix(graph, d, config.alpha);
  return {std::move(d), std::move(p)};
}

XUpdateStats x_update(CflState& state, std::span<const problem::ObjectivePtr> objectives,
                      const EsGraph& graph, const Selection& selection, double epsilon,
                      const RunConfig& config) {
  if (objectives.size() != graph.total_users()) {
    throw InvalidParameter("one objective per user required");
  }
  XUpdateStats stats;
  for (std::size_t i = 0; i < selection.per_server.size(); ++i) {
    const Vector y_i = state.y.row(idx(i)).transpose();
    for (auto j : selection.per_server[i]) {
      const auto u = graph.user_offset(i) + j;
      const Vector warm = state.x.row(idx(u)).transpose();
      const Vector lambda = state.lambda.row(idx(u)).transpose();
      problem::ProxResult r;
      try {
        r = problem::prox_solve(*objectives[u], warm, y_i, lambda, config.sigma1, epsilon,
                                config.max_inner);
      } catch (const NonConvergence& e) {
        throw NonConvergence("user (" + std::to_string(i) + ", " + std::to_string(j) + "): " +
                                 e.what(),
                             e.best_residual(), e.iterations());
      }
      state.x.row(idx(u)) = r.point.transpose();
      ++stats.selected;
      stats.inner_iterations += r.inner_iterations;
      stats.max_residual = std::max(stats.max_residual, r.residual_norm);
    }
  }
  return stats;
}

LocalServerView local_view(const CflState& state, const EsGraph& graph, const BlockMatrix& d,
                           std::size_t server) {
  const auto i = idx(server);
  LocalServerView v;
  v.users = graph.users(server);
  v.d_ii = d.base(i, i);
  v.own_y = state.y.row(i).transpose();
  v.user_model_sum =
      state.x.middleRows(idx(graph.user_offset(server)), idx(v.users)).colwise().sum().transpose();
  v.dual_accumulator = state.dual_accumulator.row(i).transpose();
  v.laplacian_accumulator = state.laplacian_accumulator.row(i).transpose();
  v.neighbor_laplacian = state.neighbor_laplacian.row(i).transpose();
  return v;
}

Vector local_y_update(const LocalServerView& v, const RunConfig& config) {
  const double as1 = config.alpha * config.sigma1;
  const double s2 = config.sigma2;
  const Vector rhs = as1 * v.user_model_sum + v.dual_accumulator - v.laplacian_accumulator +
                     s2 * (v.d_ii * v.own_y - v.neighbor_laplacian);
  return rhs / (as1 * static_cast<double>(v.users) + s2 * v.d_ii);
}

void y_update(CflState& state, const EsGraph& graph, const BlockMatrix& d,
              const RunConfig& config) {
  RowStack next(state.y.rows(), state.y.cols());
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    next.row(idx(i)) = local_y_update(local_view(state, graph, d, i), config).transpose();
  }
  state.y = std::move(next);
}

std::vector<std::vector<NeighborMessage>> exchange_neighbors(const EsGraph& graph,
                                                             const RowStack& y) {
  std::vector<std::vector<NeighborMessage>> inbox(graph.num_servers());
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    for (auto j : graph.neighbors(i)) inbox[j].push_back({i, y.row(idx(i)).transpose()});
  }
  return inbox;
}

void beta_update(CflState& state, const EsGraph& graph, const RunConfig& config) {
  const double s2 = config.sigma2;
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto& edge = graph.edges()[e];
    state.beta.row(idx(e)) += s2 * (state.y.row(idx(edge.tail)) - state.y.row(idx(edge.head)));
  }

  const auto inbox = exchange_neighbors(graph, state.y);
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    Vector lap = static_cast<double>(inbox[i].size()) * state.y.row(idx(i)).transpose();
    for (const auto& msg : inbox[i]) lap -= msg.y;
    state.neighbor_laplacian.row(idx(i)) = lap.transpose();
    state.laplacian_accumulator.row(idx(i)) += s2 * lap.transpose();
  }
}

void lambda_update(CflState& state, const EsGraph& graph, const RunConfig& config) {
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    const auto y_i = state.y.row(idx(i));
    for (std::size_t j = 0; j < graph.users(i); ++j) {
      const auto u = idx(graph.user_offset(i) + j);
      const Eigen::RowVectorXd lambda_bar =
          state.lambda.row(u) + config.sigma1 * (state.x.row(u) - y_i);
      const Eigen::RowVectorXd next = state.lambda.row(u) + config.alpha * (lambda_bar - state.lambda.row(u));
      state.lambda.row(u) = next;
    }
    // The server knows its users' x^{k+1} and y_i^{k+1}, hence this increment.
    state.dual_accumulator.row(idx(i)) +=
        config.alpha * config.sigma1 *
        (state.x.middleRows(idx(graph.user_offset(i)), idx(graph.users(i))).colwise().sum() -
         static_cast<double>(graph.users(i)) * y_i);
  }
}

std::uint64_t message_count(const EsGraph& graph, std::size_t selected) {
  return 2 * static_cast<std::uint64_t>(graph.num_servers()) + selected;
}

StepStats step(CflState& state, std::span<const problem::ObjectivePtr> objectives,
               const EsGraph& graph, const CflMatrices& matrices, const RunConfig& config,
               const CounterRng& rng) {
  StepStats stats;
  stats.iteration = state.iteration + 1;
  stats.epsilon = config.epsilon.at(stats.iteration);
  const auto selection = select_users(graph, config.alpha, rng, stats.iteration);
  stats.x = x_update(state, objectives, graph, selection, stats.epsilon, config);
  y_update(state, graph, matrices.d, config);
  beta_update(state, graph, config);
  lambda_update(state, graph, config);
  stats.messages = message_count(graph, selection.count());
  state.messages_sent += stats.messages;
  state.iteration = stats.iteration;
  return stats;
}

CflState run(std::span<const problem::ObjectivePtr> objectives, const EsGraph& graph,
             const RunConfig& config, const TraceHook& hook) {
  config.validate();
  if (objectives.empty()) throw InvalidParameter("no objectives");
  const auto dim = objectives.front()->dim();
  const auto matrices = CflMatrices::build(graph, config, dim);
  const CounterRng rng(config.seed);
  auto state = CflState::zeros(graph, dim);
  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    const auto stats = step(state, objectives, graph, matrices, config, rng);
    if (hook) hook(state, stats);
  }
  return state;
}

WeightedAverager::WeightedAverager(double alpha, std::size_t kbar) : alpha_(alpha), kbar_(kbar) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in (0, 1]");
  if (kbar < 1) throw InvalidParameter("kbar must be at least 1");
}

double WeightedAverager::weight(std::size_t t) const {
  if (t < 1 || t > kbar_) throw InvalidParameter("weight index out of range");
  const double last = 1.0 / (1.0 + alpha_ * static_cast<double>(kbar_ - 1));
  return t == kbar_ ? last : alpha_ * last;
}

void WeightedAverager::add(const RowStack& x, const RowStack& y) {
  if (added_ >= kbar_) throw InvalidParameter("more iterates than kbar");
  const double w = weight(added_ + 1);
  if (added_ == 0) {
    x_sum_ = w * x;
    y_sum_ = w * y;
  } else {
    x_sum_ += w * x;
    y_sum_ += w * y;
  }
  ++added_;
}

const RowStack& WeightedAverager::x_average() const {
  if (added_ != kbar_) throw InvalidParameter("average requested before kbar iterates were added");
  return x_sum_;
}

const RowStack& WeightedAverager::y_average() const {
  if (added_ != kbar_) throw InvalidParameter("average requested before kbar iterates were added");
  return y_sum_;
}

Averages weighted_averages(std::span<const RowStack> x_history, std::span<const RowStack> y_history,
                           double alpha) {
  if (x_history.size() != y_history.size() || x_history.empty()) {
    throw InvalidParameter("x and y histories must be nonempty and of equal length");
  }
  WeightedAverager avg(alpha, x_history.size());
  for (std::size_t t = 0; t < x_history.size(); ++t) avg.add(x_history[t], y_history[t]);
  return {avg.x_average(), avg.y_average()};
}

ConsensusResiduals consensus_residuals(const RowStack& x, const RowStack& y, const EsGraph& graph) {
  ConsensusResiduals r;
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    const auto block = x.middleRows(idx(graph.user_offset(i)), idx(graph.users(i)));
    r.user_server += (block.rowwise() - y.row(idx(i))).norm();
  }
  double sq = 0.0;
  for (const auto& e : graph.edges()) sq += (y.row(idx(e.tail)) - y.row(idx(e.head))).squaredNorm();
  r.server_server = std::sqrt(sq);
  return r;
}

namespace {

constexpr std::array<char, 8> kSnapshotMagic = {'C', 'F', 'L', 'S', 'N', 'A', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> bytes{};
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(v >> (8 * b));
  out.write(reinterpret_cast<const char*>(bytes.data()), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) throw DataError("truncated snapshot");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return v;
}

void put_matrix(std::ostream& out, const RowStack& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    std::uint64_t bits = 0;
    const double v = m.data()[k];
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(out, bits);
  }
}

RowStack get_matrix(std::istream& in) {
  const auto rows = get_u64(in);
  const auto cols = get_u64(in);
  if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw DataError("implausible snapshot matrix size");
  RowStack m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const std::uint64_t bits = get_u64(in);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    m.data()[k] = v;
  }
  return m;
}

}  // namespace

void write_snapshot(std::ostream& out, const CflState& state) {
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  put_u64(out, state.iteration);
  put_u64(out, state.messages_sent);
  for (const RowStack* m : {&state.x, &state.lambda, &state.y, &state.beta, &state.dual_accumulator,
                            &state.laplacian_accumulator, &state.neighbor_laplacian}) {
    put_matrix(out, *m);
  }
}

CflState read_snapshot(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kSnapshotMagic) {
    throw DataError("not a CFL state snapshot");
  }
  CflState s;
  s.iteration = get_u64(in);
  s.messages_sent = get_u64(in);
  for (RowStack* m : {&s.x, &s.lambda, &s.y, &s.beta, &s.dual_accumulator,
                      &s.laplacian_accumulator, &s.neighbor_laplacian}) {
    *m = get_matrix(in);
  }
  return s;
}

}  // namespace cfl::admm
