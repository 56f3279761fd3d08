#include "mrk/scan.hpp"

#include <omp.h>

#include <cstdlib>
#include <exception>
#include <stdexcept>

namespace mrk {

PartitionedLinearModel ModelParams::build() const {
  if (kind == "2dof") return model_2dof(alpha, kappa);
  if (kind == "4dof") return model_4dof(omega1, gamma1, alpha, beta, kappa);
  throw std::invalid_argument("unknown model '" + kind + "' (expected 2dof or 4dof)");
}

int scan_worker_count() {
  if (const char* env = std::getenv("MRK_NUM_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return omp_get_max_threads();
}

namespace {

std::vector<ScanCellResult> empty_results(const std::vector<ScanCell>& cells, std::size_t n_c) {
  std::vector<ScanCellResult> out(cells.size());
  for (auto& r : out) r.points.resize(n_c);
  return out;
}

void finish(std::vector<ScanCellResult>& results) {
  for (auto& r : results) r.limit = summarize_scan(r.points);
}

}  // namespace

std::vector<ScanCellResult> scan_cells(const std::vector<ScanCell>& cells, const ButcherTableau& method,
                                       InterpKind interp, const std::vector<double>& C_grid, double rho_tol,
                                       int workers) {
  if (workers <= 0) workers = scan_worker_count();
  std::vector<PartitionedLinearModel> models;
  models.reserve(cells.size());
  for (const auto& c : cells) models.push_back(c.params.build());

  auto results = empty_results(cells, C_grid.size());
  const long n_cells = static_cast<long>(cells.size());
  const long n_c = static_cast<long>(C_grid.size());
  const long total = n_cells * n_c;
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 4) num_threads(workers)
  for (long task = 0; task < total; ++task) {
    const auto cell = static_cast<std::size_t>(task / n_c);
    const auto k = static_cast<std::size_t>(task % n_c);
    try {
      const double C = C_grid[k];
      const double rho = multirate_rho(models[cell], C, cells[cell].M, method, interp);
      results[cell].points[k] = {C, rho, rho <= 1.0 + rho_tol};
    } catch (...) {
#pragma omp critical(mrk_scan_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  finish(results);
  return results;
}

std::vector<ScanCellResult> scan_cells_serial(const std::vector<ScanCell>& cells, const ButcherTableau& method,
                                              InterpKind interp, const std::vector<double>& C_grid,
                                              double rho_tol) {
  auto results = empty_results(cells, C_grid.size());
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    const auto model = cells[cell].params.build();
    results[cell].points = scan_rho(model, method, interp, cells[cell].M, C_grid, rho_tol);
  }
  finish(results);
  return results;
}

}  // namespace mrk
