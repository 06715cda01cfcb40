#include "cfl/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cfl/problem.hpp"

namespace cfl::checks {

using topology::EsGraph;

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

Matrix gather_matrix(const EsGraph& graph) {
  Matrix h = Matrix::Zero(idx(graph.num_servers()), idx(graph.total_users()));
  for (std::size_t i = 0; i < graph.num_servers(); ++i) {
    h.row(idx(i)).segment(idx(graph.user_offset(i)), idx(graph.users(i))).setOnes();
  }
  return h;
}

std::string sci(double v) {
  std::ostringstream out;
  out.precision(3);
  out << std::scientific << v;
  return out.str();
}

}  // namespace

RowStack dense_y_update(const admm::CflState& state, const EsGraph& graph,
                        const topology::BlockMatrix& d, const admm::RunConfig& config) {
  const Matrix h = gather_matrix(graph);
  const Matrix a = topology::incidence_matrix(graph).base;
  const double as1 = config.alpha * config.sigma1;
  const Matrix system = as1 * h * h.transpose() + config.sigma2 * d.base;
  const Matrix rhs = as1 * h * state.x + h * state.lambda - a.transpose() * state.beta +
                     config.sigma2 * (d.base - a.transpose() * a) * state.y;
  return system.partialPivLu().solve(rhs);
}

std::vector<CheckResult> run_invariant_checks() {
  std::vector<CheckResult> results;
  auto record = [&](std::string name, bool ok, std::string detail) {
    results.push_back({std::move(name), ok, std::move(detail)});
  };

  // Matrix conditions over a handful of small graphs.
  {
    double worst = std::numeric_limits<double>::infinity();
    const std::vector<EsGraph> graphs = {
        topology::make_ring(5, topology::uniform_users(5, 3)),
        topology::make_path(4, {1, 2, 3, 4}),
        topology::make_star(5, topology::uniform_users(5, 2)),
        topology::make_erdos_renyi(6, 0.5, 3, topology::uniform_users(6, 4)),
    };
    for (const auto& g : graphs) {
      for (double alpha : {0.1, 0.3, 0.5, 1.0}) {
        const auto d = topology::build_d_matrix(g, alpha, 1.0, 1.0);
        const auto p = topology::build_p_matrix(g, d, alpha);
        worst = std::min({worst, topology::d_condition_margin(g, d, alpha, 1.0, 1.0),
                          topology::p_condition_margin(g, p, alpha, 1.0, 1.0)});
      }
    }
    record("matrix conditions", worst >= topology::kPsdTolerance, "min eigenvalue " + sci(worst));
  }

  // Tiny logistic instance.
  const auto graph = topology::make_ring(3, {3, 2, 3});
  problem::SyntheticSpec spec;
  spec.dim = 3;
  spec.seed = 7;
  const auto samples = problem::generate_synthetic(spec, 5 * graph.total_users());
  const auto objectives =
      problem::make_logistic_objectives(problem::partition(samples, graph, 5, 7), 0.01);

  admm::RunConfig config;
  config.alpha = 0.5;
  config.sigma1 = 0.5;
  config.sigma2 = 1.0;
  config.max_iterations = 60;
  const auto matrices = admm::CflMatrices::build(graph, config, spec.dim);
  const admm::CounterRng rng(11);
  const Matrix h = gather_matrix(graph);
  const Matrix a = topology::incidence_matrix(graph).base;

  auto state = admm::CflState::zeros(graph, spec.dim);
  double y_err = 0.0;
  double acc_err = 0.0;
  double dual_acc_err = 0.0;
  double identity_err = 0.0;
  bool messages_ok = true;
  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    const auto before = state;
    const auto selection = admm::select_users(graph, config.alpha, rng, k + 1);
    admm::x_update(state, objectives, graph, selection, config.epsilon.at(k + 1), config);
    const RowStack dense = dense_y_update(state, graph, matrices.d, config);
    admm::y_update(state, graph, matrices.d, config);
    y_err = std::max(y_err, (dense - state.y).cwiseAbs().maxCoeff());
    admm::beta_update(state, graph, config);
    admm::lambda_update(state, graph, config);
    acc_err = std::max(acc_err, (RowStack(a.transpose() * state.beta) - state.laplacian_accumulator)
                                    .cwiseAbs()
                                    .maxCoeff());
    dual_acc_err = std::max(dual_acc_err, (RowStack(h * state.lambda) - state.dual_accumulator)
                                              .cwiseAbs()
                                              .maxCoeff());
    const RowStack expected = config.alpha * config.sigma1 * (state.x - RowStack(h.transpose() * state.y));
    identity_err = std::max(identity_err, (state.lambda - before.lambda - expected).cwiseAbs().maxCoeff());
    const auto msgs = admm::message_count(graph, selection.count());
    messages_ok = messages_ok && msgs == 2 * graph.num_servers() + selection.count();
  }
  record("local y-update equals dense closed form", y_err <= 1e-10, "max abs error " + sci(y_err));
  record("laplacian accumulator equals A^T beta", acc_err <= 1e-10, "max abs error " + sci(acc_err));
  record("dual accumulator equals H lambda", dual_acc_err <= 1e-10, "max abs error " + sci(dual_acc_err));
  record("dual update identity", identity_err <= 1e-12, "max abs error " + sci(identity_err));
  record("message accounting", messages_ok, "2l + selected per iteration");

  // Gradient against central differences.
  {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (const auto& f : objectives) {
      Vector x(spec.dim);
      for (auto& v : x) v = normal(gen);
      const Vector g = f->gradient(x);
      Vector fd(spec.dim);
      for (Eigen::Index c = 0; c < spec.dim; ++c) {
        Vector e = Vector::Zero(spec.dim);
        e(c) = 1e-6;
        fd(c) = (f->loss(x + e) - f->loss(x - e)) / 2e-6;
      }
      worst = std::max(worst, (fd - g).norm() / std::max(1.0, g.norm()));
    }
    record("gradient vs finite differences", worst <= 1e-6, "max relative error " + sci(worst));
  }
  return results;
}

}  // namespace cfl::checks
