#include "cfl/baselines.hpp"

#include <algorithm>

#include "cfl/errors.hpp"

namespace cfl::baselines {

using topology::EsGraph;

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in (0, 1]");
}

Matrix user_gather_matrix(const EsGraph& graph) {
  Matrix h = Matrix::Zero(idx(graph.num_servers()), idx(graph.total_users()));
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    h.row(idx(i)).segment(idx(graph.user_offset(i)), idx(graph.users(i))).setOnes();
  }
  return h;
}

}  // namespace

MixingMatrix metropolis_weights(const EsGraph& graph) {
  const auto l = idx(graph.num_servers());
  Matrix w = Matrix::Zero(l, l);
  for (const auto& e : graph.edges()) {
    const double v = 1.0 / (1.0 + static_cast<double>(std::max(graph.degree(e.tail), graph.degree(e.head))));
    w(idx(e.tail), idx(e.head)) = v;
    w(idx(e.head), idx(e.tail)) = v;
  }
  for (Eigen::Index i = 0; i < l; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return {std::move(w)};
}

double mixing_rate(const MixingMatrix& w) {
  const auto l = w.base.rows();
  const Matrix centered = w.base - Matrix::Constant(l, l, 1.0 / static_cast<double>(l));
  Eigen::JacobiSVD<Matrix> svd(centered);
  return svd.singularValues()(0);
}

Vector GtSagaState::table_average(const EsGraph& graph, std::size_t server) const {
  return table_sum.row(idx(server)).transpose() / static_cast<double>(graph.users(server));
}

GtSagaState gt_saga_init(std::span<const problem::ObjectivePtr> objectives, const EsGraph& graph) {
  if (objectives.size() != graph.total_users()) throw InvalidParameter("one objective per user required");
  const auto n = objectives.front()->dim();
  const auto l = idx(graph.num_servers());
  GtSagaState s;
  s.y = RowStack::Zero(l, n);
  s.table.resize(idx(graph.total_users()), n);
  s.table_sum = RowStack::Zero(l, n);
  const Vector origin = Vector::Zero(n);
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    for (std::size_t j = 0; j < graph.users(i); ++j) {
      const auto u = graph.user_offset(i) + j;
      s.table.row(idx(u)) = objectives[u]->gradient(origin).transpose();
      s.table_sum.row(idx(i)) += s.table.row(idx(u));
    }
  }
  s.estimator = s.table_sum;
  s.tracker = s.estimator;
  s.messages_sent = graph.num_servers() + graph.total_users();
  return s;
}

void gt_saga_step(GtSagaState& state, std::span<const problem::ObjectivePtr> objectives,
                  const EsGraph& graph, const MixingMatrix& w, double stepsize, double alpha,
                  const admm::CounterRng& rng) {
  check_alpha(alpha);
  const std::size_t k = state.iteration + 1;
  const auto selection = admm::select_users(graph, alpha, rng, k);

  RowStack estimator = state.table_sum;
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    const Vector y_i = state.y.row(idx(i)).transpose();
    for (auto j : selection.per_server[i]) {
      const auto u = idx(graph.user_offset(i) + j);
      const Eigen::RowVectorXd fresh = objectives[static_cast<std::size_t>(u)]->gradient(y_i).transpose();
      estimator.row(idx(i)) += (fresh - state.table.row(u)) / alpha;
      state.table_sum.row(idx(i)) += fresh - state.table.row(u);
      state.table.row(u) = fresh;
    }
  }

  state.tracker = RowStack(w.base * state.tracker) + estimator - state.estimator;
  state.estimator = std::move(estimator);
  state.y = RowStack(w.base * state.y) - stepsize * state.tracker;
  state.messages_sent += admm::message_count(graph, selection.count());
  state.iteration = k;
}

DsgdState DsgdState::zeros(const EsGraph& graph, Eigen::Index dim) {
  DsgdState s;
  s.y = RowStack::Zero(idx(graph.num_servers()), dim);
  return s;
}

void d_sgd_step(DsgdState& state, std::span<const problem::ObjectivePtr> objectives,
                const EsGraph& graph, const MixingMatrix& w, double stepsize, double alpha,
                const admm::CounterRng& rng) {
  check_alpha(alpha);
  const std::size_t k = state.iteration + 1;
  const auto selection = admm::select_users(graph, alpha, rng, k);

  RowStack grads = RowStack::Zero(state.y.rows(), state.y.cols());
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    const Vector y_i = state.y.row(idx(i)).transpose();
    for (auto j : selection.per_server[i]) {
      grads.row(idx(i)) += objectives[graph.user_offset(i) + j]->gradient(y_i).transpose();
    }
  }
  state.y = RowStack(w.base * state.y) - (stepsize / alpha) * grads;
  state.messages_sent += admm::message_count(graph, selection.count());
  state.iteration = k;
}

CentralizedAdmmState CentralizedAdmmState::zeros(const EsGraph& graph, Eigen::Index dim) {
  CentralizedAdmmState s;
  s.x = RowStack::Zero(idx(graph.total_users()), dim);
  s.lambda = RowStack::Zero(idx(graph.total_users()), dim);
  s.y = RowStack::Zero(idx(graph.num_servers()), dim);
  s.beta = RowStack::Zero(idx(graph.num_edges()), dim);
  return s;
}

void centralized_admm_step(CentralizedAdmmState& state,
                           std::span<const problem::ObjectivePtr> objectives, const EsGraph& graph,
                           const CentralizedAdmmOptions& options) {
  if (objectives.size() != graph.total_users()) throw InvalidParameter("one objective per user required");
  const double s1 = options.sigma1;
  const double s2 = options.sigma2;
  const Matrix h = user_gather_matrix(graph);
  const Matrix a = topology::incidence_matrix(graph).base;

  for (std::size_t u = 0; u < graph.total_users(); ++u) {
    const auto i = idx(graph.server_of_user(u));
    const auto r = problem::prox_solve(*objectives[u], state.x.row(idx(u)).transpose(),
                                       state.y.row(i).transpose(), state.lambda.row(idx(u)).transpose(),
                                       s1, options.inner_tolerance, options.max_inner);
    state.x.row(idx(u)) = r.point.transpose();
  }

  Matrix system = s1 * h * h.transpose() + s2 * a.transpose() * a;
  Matrix rhs = s1 * h * state.x + h * state.lambda - a.transpose() * state.beta;
  if (options.proximal_weight) {
    const Matrix& m = *options.proximal_weight;
    if (m.rows() != system.rows() || m.cols() != system.cols()) {
      throw InvalidParameter("proximal weight does not match the server count");
    }
    system += s2 * m;
    rhs += s2 * m * state.y;
  }
  state.y = system.partialPivLu().solve(rhs);

  state.lambda += s1 * (state.x - h.transpose() * state.y);
  state.beta += s2 * a * state.y;
  ++state.iteration;
}

RowStack broadcast_to_users(const RowStack& y, const EsGraph& graph) {
  RowStack x(idx(graph.total_users()), y.cols());
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    x.middleRows(idx(graph.user_offset(i)), idx(graph.users(i))).rowwise() = y.row(idx(i));
  }
  return x;
}

}  // namespace cfl::baselines
