#pragma once

#include <string>
#include <vector>

#include "cfl/cfl_admm.hpp"
#include "cfl/topology.hpp"

namespace cfl::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// y^{k+1} from the closed form with explicitly materialized A, H and beta:
///   (a s1 H H^T + s2 D)^{-1} (a s1 H x + H lambda - A^T beta + s2 (D - A^T A) y).
RowStack dense_y_update(const admm::CflState& state, const topology::EsGraph& graph,
                        const topology::BlockMatrix& d, const admm::RunConfig& config);

/// Runs the invariant suite on a small built-in instance: matrix
/// conditions, local/dense y-update agreement, accumulator bookkeeping,
/// the dual identity and message accounting.
std::vector<CheckResult> run_invariant_checks();

}  // namespace cfl::checks
