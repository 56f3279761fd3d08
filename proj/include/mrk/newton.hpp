#pragma once

#include "mrk/subsystem.hpp"

#include <memory>
#include <string_view>

namespace mrk {

enum class JacobianStrategy {
  jac_a,  ///< reuse across steps, periodic and stall-driven refresh
  jac_b,  ///< recompute at the start of every step
};

std::string_view to_string(JacobianStrategy s);
JacobianStrategy jacobian_strategy_from_string(std::string_view s);

struct NewtonConfig {
  int max_iters = 20;
  /// Residual tolerances in the weighted norm max_i |r_i| / (rel_tol |U_i| + abs_tol).
  double abs_tol = 1e-8;
  double rel_tol = 1e-8;
  JacobianStrategy strategy = JacobianStrategy::jac_b;
  int jac_a_refresh_period = 10;
  double stall_ratio = 0.9;
  int stall_window = 3;
  double divergence_ratio = 2.0;
  /// Residual contraction above which the Jacobian is re-evaluated at the
  /// current iterate.
  double refresh_ratio = 0.1;
  /// In-solve Jacobian re-evaluations allowed per stage solve. Stall and
  /// divergence only end a solve once these are used up.
  int max_refreshes = 20;
  /// Step halvings tried when a Newton update does not reduce the residual.
  int max_backtracks = 3;
  /// Systems up to this size, or denser than a quarter, use dense LU.
  Index dense_threshold = 64;
};

/// Jacobian J of one Subsystem plus the LU factorization of I - gamma_h J.
class JacobianCache {
 public:
  JacobianCache();
  ~JacobianCache();
  JacobianCache(JacobianCache&&) noexcept;
  JacobianCache& operator=(JacobianCache&&) noexcept;

  /// Evaluates J at (t, u) through `sys` and drops the factorization.
  void refresh(Subsystem& sys, double t, const Vector& u, const NewtonConfig& cfg);

  /// Replaces J directly.
  void set(SparseMatrix J, const NewtonConfig& cfg);

  void invalidate();
  bool valid() const { return valid_; }

  /// Steps since the last refresh.
  int age() const { return age_; }
  void tick() { ++age_; }

  /// Factorizes I - gamma_h J unless already factorized for gamma_h.
  /// Returns false when the iteration matrix is numerically singular.
  bool factorize(double gamma_h, WorkCounters& work);

  /// Solves (I - gamma_h J) x = rhs with the current factorization.
  Vector solve(const Vector& rhs) const;

  const SparseMatrix& jacobian() const { return J_; }
  bool uses_dense_solver() const { return dense_; }

 private:
  struct Factor;

  SparseMatrix J_;
  bool valid_ = false;
  bool dense_ = true;
  int age_ = 0;
  double gamma_h_ = -1.0;
  bool factored_ = false;
  std::unique_ptr<Factor> factor_;
};

enum class NewtonStatus { converged, max_iterations, diverged, singular };

struct StageSolveResult {
  NewtonStatus status = NewtonStatus::converged;
  Vector U;
  int iterations = 0;
  bool refreshed = false;

  bool ok() const { return status == NewtonStatus::converged; }
};

/// Solves U = v + gamma_h f(t, U) by modified Newton with the cached
/// Jacobian, taking at least one update. A slowly contracting residual
/// triggers re-evaluation of the Jacobian at the current iterate, up to
/// cfg.max_refreshes times; each one is counted in
/// sys.counters.stage_refreshes.
StageSolveResult solve_stage(Subsystem& sys, double t, double gamma_h, const Vector& v, Vector guess,
                             JacobianCache& cache, const NewtonConfig& cfg);

}  // namespace mrk
