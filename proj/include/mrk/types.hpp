#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <vector>

namespace mrk {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Sorted list of state indices.
using IndexList = std::vector<Index>;

/// Per-component count of RHS evaluations, Jacobians and Newton work.
struct WorkCounters {
  std::int64_t rhs_calls = 0;
  std::int64_t jacobians = 0;
  std::int64_t newton_iterations = 0;
  std::int64_t factorizations = 0;
  std::int64_t stage_refreshes = 0;  ///< Jacobians re-evaluated inside a Newton solve

  WorkCounters& operator+=(const WorkCounters& o) {
    rhs_calls += o.rhs_calls;
    jacobians += o.jacobians;
    newton_iterations += o.newton_iterations;
    factorizations += o.factorizations;
    stage_refreshes += o.stage_refreshes;
    return *this;
  }
};

}  // namespace mrk
