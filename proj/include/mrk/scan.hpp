#pragma once

#include "mrk/stability.hpp"

#include <string>

namespace mrk {

/// Parameters of the 2-DOF or 4-DOF model problem.
struct ModelParams {
  std::string kind = "2dof";  ///< "2dof" or "4dof"
  double alpha = 10.0;
  double kappa = 0.0;
  double gamma1 = 0.01;  ///< 4-DOF only
  double omega1 = 1.0;   ///< 4-DOF only
  double beta = 1.0;     ///< 4-DOF only

  PartitionedLinearModel build() const;
};

/// One (model, M) cell of a stability table.
struct ScanCell {
  ModelParams params;
  int M = 1;
};

struct ScanCellResult {
  std::vector<ScanPoint> points;
  StabilityLimit limit;
};

/// Worker cap: MRK_NUM_WORKERS when set to a positive integer, otherwise
/// the OpenMP default.
int scan_worker_count();

/// rho over the C grid for every cell. All (cell, C) pairs are distributed
/// over `workers` OpenMP threads (0 selects scan_worker_count()). Results
/// are identical to scan_cells_serial.
std::vector<ScanCellResult> scan_cells(const std::vector<ScanCell>& cells, const ButcherTableau& method,
                                       InterpKind interp, const std::vector<double>& C_grid,
                                       double rho_tol = kDefaultRhoTol, int workers = 0);

/// Single-threaded reference for scan_cells.
std::vector<ScanCellResult> scan_cells_serial(const std::vector<ScanCell>& cells, const ButcherTableau& method,
                                              InterpKind interp, const std::vector<double>& C_grid,
                                              double rho_tol = kDefaultRhoTol);

}  // namespace mrk
