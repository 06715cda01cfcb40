#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfl/types.hpp"

namespace cfl::topology {

/// Undirected edge with canonical orientation: tail < head. The tail gets
/// +1 and the head -1 in the incidence matrix.
struct Edge {
  std::size_t tail;
  std::size_t head;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Edge-server communication graph with per-server user counts.
///
/// Construction validates the graph: no self loops, no duplicate edges,
/// connected, and every server serves at least one user. Edges are stored
/// sorted in canonical orientation so that edge indices (and hence the
/// per-edge dual variables) are reproducible.
class EsGraph {
 public:
  EsGraph(std::size_t num_servers, std::vector<std::pair<std::size_t, std::size_t>> edges,
          std::vector<std::size_t> users_per_server);

  std::size_t num_servers() const noexcept { return users_per_server_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  const std::vector<std::size_t>& users_per_server() const noexcept { return users_per_server_; }
  std::size_t users(std::size_t server) const { return users_per_server_.at(server); }
  std::size_t total_users() const noexcept { return user_offsets_.back(); }
  /// Global index of user (server, 0) in flat per-user arrays.
  std::size_t user_offset(std::size_t server) const { return user_offsets_.at(server); }
  std::size_t server_of_user(std::size_t user) const;

  std::size_t degree(std::size_t server) const { return neighbors_.at(server).size(); }
  const std::vector<std::size_t>& neighbors(std::size_t server) const { return neighbors_.at(server); }

  /// Human-readable edge list, e.g. "0-1;1-2".
  std::string describe_edges() const;

 private:
  std::vector<Edge> edges_;
  std::vector<std::size_t> users_per_server_;
  std::vector<std::size_t> user_offsets_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Dense base matrix B standing for B kron I_n, with n = block_dim.
struct BlockMatrix {
  Matrix base;
  Eigen::Index block_dim = 1;

  /// (B kron I_n) applied to a stack of per-node vectors.
  RowStack apply(const RowStack& blocks) const;
  /// Materialized Kronecker form. Only meant for small test oracles.
  Matrix kronecker() const;
};

BlockMatrix incidence_matrix(const EsGraph& graph, Eigen::Index block_dim = 1);
/// Graph Laplacian A_in^T A_in.
BlockMatrix laplacian_matrix(const EsGraph& graph, Eigen::Index block_dim = 1);
/// D_L: diagonal of the Laplacian, i.e. server degrees.
BlockMatrix degree_matrix(const EsGraph& graph, Eigen::Index block_dim = 1);
/// H H^T: diagonal with |S_i| on the diagonal.
BlockMatrix user_count_matrix(const EsGraph& graph, Eigen::Index block_dim = 1);

/// Diagonal D with D_ii = (1/a)(1/a^2 - 1)(s1/s2)|S_i| + (3/2) deg(i).
/// Throws InvalidParameter unless 0 < alpha <= 1 and sigma1, sigma2 > 0.
BlockMatrix build_d_matrix(const EsGraph& graph, double alpha, double sigma1, double sigma2,
                           Eigen::Index block_dim = 1);

/// P = alpha (D - A^T A). Throws InvalidParameter if d does not match graph.
BlockMatrix build_p_matrix(const EsGraph& graph, const BlockMatrix& d, double alpha);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& symmetric);

/// Tolerance used for PSD checks on analytically PSD matrices.
inline constexpr double kPsdTolerance = -1e-10;

/// Smallest eigenvalue of D - (1/a)(1/a^2-1)(s1/s2) H H^T - (3/4) A^T A.
double d_condition_margin(const EsGraph& graph, const BlockMatrix& d, double alpha, double sigma1,
                          double sigma2);
/// Smallest eigenvalue of P - (1/a^2-1)(s1/s2) H H^T + (a/4) A^T A.
double p_condition_margin(const EsGraph& graph, const BlockMatrix& p, double alpha, double sigma1,
                          double sigma2);

// Generators. All place `users` users on every server unless a per-server
// list is given.
EsGraph make_ring(std::size_t num_servers, std::vector<std::size_t> users_per_server);
EsGraph make_path(std::size_t num_servers, std::vector<std::size_t> users_per_server);
EsGraph make_star(std::size_t num_servers, std::vector<std::size_t> users_per_server);
/// G(l, p) with retries until connected; throws InvalidParameter when no
/// connected sample is found within max_attempts.
EsGraph make_erdos_renyi(std::size_t num_servers, double probability, std::uint64_t seed,
                         std::vector<std::size_t> users_per_server, std::size_t max_attempts = 1000);

/// Convenience: the same user count on every server.
inline std::vector<std::size_t> uniform_users(std::size_t num_servers, std::size_t users) {
  return std::vector<std::size_t>(num_servers, users);
}

}  // namespace cfl::topology
