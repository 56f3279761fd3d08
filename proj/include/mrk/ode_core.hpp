#pragma once

#include "mrk/newton.hpp"
#include "mrk/subsystem.hpp"
#include "mrk/tableaux.hpp"

#include <functional>

namespace mrk {

/// Stage data of one RK step, in the coordinates of the system it ran on.
struct StageSet {
  double t_n = 0.0;
  double h = 0.0;
  Vector u_n;
  std::vector<Vector> U;  ///< stage values
  std::vector<Vector> K;  ///< stage derivatives f(t_n + c_i h, U_i)
};

enum class StepStatus { ok, convergence_failure, blowup };

struct StepResult {
  StepStatus status = StepStatus::ok;
  Vector u_next;
  Vector u_hat;  ///< embedded solution; equals u_next without an embedded pair
  StageSet stages;
  WorkCounters work;
  int failed_stage = -1;

  bool ok() const { return status == StepStatus::ok; }
};

/// Writes an initial Newton guess for the stage at time t_stage.
using StagePredictor = std::function<void(double t_stage, Vector& guess)>;

/// Implicit-stage resources for rk_step; unused by explicit methods.
struct ImplicitContext {
  JacobianCache* cache = nullptr;
  const NewtonConfig* newton = nullptr;
  const StagePredictor* predictor = nullptr;
};

/// One step of `method` on `sys` from (t_n, u_n). When `f_n` is given it must
/// equal f(t_n, u_n) and replaces the first explicit stage evaluation.
/// Work is recorded in the result and in sys.counters.
StepResult rk_step(Subsystem& sys, const ButcherTableau& method, double t_n, const Vector& u_n, double h,
                   const ImplicitContext& implicit = {}, const Vector* f_n = nullptr);

/// Convenience form on the full problem with a fresh Jacobian at u_n.
StepResult rk_step(const OdeProblem& problem, const Vector& u_n, double t_n, double h,
                   const ButcherTableau& method, const NewtonConfig& newton = {});

/// u_n + h sum_i b*_i(tau) K_i; throws std::domain_error for tau outside [0, 1].
Vector dense_eval(const StageSet& stages, const DenseOutputCoeffs& coeffs, double tau);

/// eta_i = |u_i - u_hat_i| / (rtol |u_i| + atol).
Vector error_quotients(const Vector& u, const Vector& u_hat, double rtol, double atol);

struct SafetyFactors {
  double alpha = 0.9;
  double alpha_min = 0.5;
  double alpha_max = 1.2;
};

/// h * min(alpha_max, max(alpha_min, alpha * eta^(-1/(q+1)))); eta = 0 gives
/// the alpha_max clamp.
double new_step_size(double h, double eta, int q, const SafetyFactors& safety = {});

}  // namespace mrk
