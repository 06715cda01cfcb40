#include "cfl/topology.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "cfl/errors.hpp"

namespace cfl::topology {

namespace {

bool is_connected(std::size_t n, const std::vector<std::vector<std::size_t>>& adj) {
  if (n == 0) return false;
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const auto v = frontier.front();
    frontier.pop();
    for (auto w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++reached;
        frontier.push(w);
      }
    }
  }
  return reached == n;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidParameter("alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
}

void check_sigmas(double sigma1, double sigma2) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
    throw InvalidParameter("sigma1 and sigma2 must be positive");
  }
}

double relaxed_user_weight(double alpha, double sigma1, double sigma2) {
  return (1.0 / alpha) * (1.0 / (alpha * alpha) - 1.0) * (sigma1 / sigma2);
}

}  // namespace

EsGraph::EsGraph(std::size_t num_servers, std::vector<std::pair<std::size_t, std::size_t>> edges,
                 std::vector<std::size_t> users_per_server)
    : users_per_server_(std::move(users_per_server)), neighbors_(num_servers) {
  if (num_servers == 0) throw InvalidParameter("graph needs at least one server");
  if (users_per_server_.size() != num_servers) {
    throw InvalidParameter("users_per_server has " + std::to_string(users_per_server_.size()) +
                           " entries for " + std::to_string(num_servers) + " servers");
  }
  for (std::size_t i = 0; i < num_servers; ++i) {
    if (users_per_server_[i] == 0) {
      throw InvalidParameter("server " + std::to_string(i) + " has no users");
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto [a, b] : edges) {
    if (a >= num_servers || b >= num_servers) {
      throw InvalidParameter("edge endpoint out of range: " + std::to_string(a) + "-" +
                             std::to_string(b));
    }
    if (a == b) throw InvalidParameter("self loop at server " + std::to_string(a));
    const auto key = std::minmax(a, b);
    if (!seen.insert(key).second) {
      throw InvalidParameter("duplicate edge " + std::to_string(key.first) + "-" +
                             std::to_string(key.second));
    }
  }
  edges_.reserve(seen.size());
  for (auto [tail, head] : seen) {
    edges_.push_back({tail, head});
    neighbors_[tail].push_back(head);
    neighbors_[head].push_back(tail);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());

  if (!is_connected(num_servers, neighbors_)) {
    throw InvalidParameter("server graph is not connected");
  }

  user_offsets_.resize(num_servers + 1, 0);
  std::partial_sum(users_per_server_.begin(), users_per_server_.end(), user_offsets_.begin() + 1);
}

std::size_t EsGraph::server_of_user(std::size_t user) const {
  if (user >= total_users()) throw InvalidParameter("user index out of range");
  const auto it = std::upper_bound(user_offsets_.begin(), user_offsets_.end(), user);
  return static_cast<std::size_t>(it - user_offsets_.begin()) - 1;
}

std::string EsGraph::describe_edges() const {
  std::ostringstream out;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (e) out << ';';
    out << edges_[e].tail << '-' << edges_[e].head;
  }
  return out.str();
}

RowStack BlockMatrix::apply(const RowStack& blocks) const {
  if (blocks.rows() != base.cols()) {
    throw InvalidParameter("block matrix / block vector size mismatch");
  }
  return base * blocks;
}

Matrix BlockMatrix::kronecker() const {
  const Eigen::Index n = block_dim;
  Matrix out = Matrix::Zero(base.rows() * n, base.cols() * n);
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      out.block(r * n, c * n, n, n).diagonal().setConstant(base(r, c));
    }
  }
  return out;
}

BlockMatrix incidence_matrix(const EsGraph& graph, Eigen::Index block_dim) {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(graph.num_edges()),
                          static_cast<Eigen::Index>(graph.num_servers()));
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto& edge = graph.edges()[e];
    a(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(edge.tail)) = 1.0;
    a(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(edge.head)) = -1.0;
  }
  return {std::move(a), block_dim};
}

BlockMatrix laplacian_matrix(const EsGraph& graph, Eigen::Index block_dim) {
  const auto a = incidence_matrix(graph).base;
  return {a.transpose() * a, block_dim};
}

BlockMatrix degree_matrix(const EsGraph& graph, Eigen::Index block_dim) {
  const auto l = static_cast<Eigen::Index>(graph.num_servers());
  Matrix d = Matrix::Zero(l, l);
  for (Eigen::Index i = 0; i < l; ++i) d(i, i) = static_cast<double>(graph.degree(i));
  return {std::move(d), block_dim};
}

BlockMatrix user_count_matrix(const EsGraph& graph, Eigen::Index block_dim) {
  const auto l = static_cast<Eigen::Index>(graph.num_servers());
  Matrix h = Matrix::Zero(l, l);
  for (Eigen::Index i = 0; i < l; ++i) h(i, i) = static_cast<double>(graph.users(i));
  return {std::move(h), block_dim};
}

BlockMatrix build_d_matrix(const EsGraph& graph, double alpha, double sigma1, double sigma2,
                           Eigen::Index block_dim) {
  check_alpha(alpha);
  check_sigmas(sigma1, sigma2);
  const double w = relaxed_user_weight(alpha, sigma1, sigma2);
  const auto l = static_cast<Eigen::Index>(graph.num_servers());
  Matrix d = Matrix::Zero(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    d(i, i) = w * static_cast<double>(graph.users(i)) + 1.5 * static_cast<double>(graph.degree(i));
  }
  return {std::move(d), block_dim};
}

BlockMatrix build_p_matrix(const EsGraph& graph, const BlockMatrix& d, double alpha) {
  check_alpha(alpha);
  const auto l = static_cast<Eigen::Index>(graph.num_servers());
  if (d.base.rows() != l || d.base.cols() != l) {
    throw InvalidParameter("D matrix is " + std::to_string(d.base.rows()) + "x" +
                           std::to_string(d.base.cols()) + ", graph has " + std::to_string(l) +
                           " servers");
  }
  return {alpha * (d.base - laplacian_matrix(graph).base), d.block_dim};
}

double min_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double d_condition_margin(const EsGraph& graph, const BlockMatrix& d, double alpha, double sigma1,
                          double sigma2) {
  const Matrix gap = d.base -
                     relaxed_user_weight(alpha, sigma1, sigma2) * user_count_matrix(graph).base -
                     0.75 * laplacian_matrix(graph).base;
  return min_eigenvalue(gap);
}

double p_condition_margin(const EsGraph& graph, const BlockMatrix& p, double alpha, double sigma1,
                          double sigma2) {
  const Matrix rhs = (1.0 / (alpha * alpha) - 1.0) * (sigma1 / sigma2) *
                         user_count_matrix(graph).base -
                     (alpha / 4.0) * laplacian_matrix(graph).base;
  return min_eigenvalue(p.base - rhs);
}

EsGraph make_ring(std::size_t num_servers, std::vector<std::size_t> users_per_server) {
  if (num_servers < 3) throw InvalidParameter("a ring needs at least 3 servers");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < num_servers; ++i) edges.emplace_back(i, (i + 1) % num_servers);
  return EsGraph(num_servers, std::move(edges), std::move(users_per_server));
}

EsGraph make_path(std::size_t num_servers, std::vector<std::size_t> users_per_server) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i + 1 < num_servers; ++i) edges.emplace_back(i, i + 1);
  return EsGraph(num_servers, std::move(edges), std::move(users_per_server));
}

EsGraph make_star(std::size_t num_servers, std::vector<std::size_t> users_per_server) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 1; i < num_servers; ++i) edges.emplace_back(0, i);
  return EsGraph(num_servers, std::move(edges), std::move(users_per_server));
}

EsGraph make_erdos_renyi(std::size_t num_servers, double probability, std::uint64_t seed,
                         std::vector<std::size_t> users_per_server, std::size_t max_attempts) {
  if (!(probability > 0.0 && probability <= 1.0)) {
    throw InvalidParameter("edge probability must lie in (0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::vector<std::size_t>> adj(num_servers);
    for (std::size_t i = 0; i < num_servers; ++i) {
      for (std::size_t j = i + 1; j < num_servers; ++j) {
        if (unit(rng) < probability) {
          edges.emplace_back(i, j);
          adj[i].push_back(j);
          adj[j].push_back(i);
        }
      }
    }
    if (is_connected(num_servers, adj)) {
      return EsGraph(num_servers, std::move(edges), std::move(users_per_server));
    }
  }
  throw InvalidParameter("no connected Erdos-Renyi sample after " + std::to_string(max_attempts) +
                         " attempts");
}

}  // namespace cfl::topology
