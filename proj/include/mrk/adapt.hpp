#pragma once

#include "mrk/interp.hpp"
#include "mrk/ode_core.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace mrk {

enum class IntegrationMode { single, multi };

std::string_view to_string(IntegrationMode mode);
IntegrationMode integration_mode_from_string(std::string_view s);

struct SolverConfig {
  double rtol = 1e-6;
  double atol = 1e-6;
  SafetyFactors safety;
  double beta = 1.0;  ///< acceptance threshold on the error quotients
  double phi = 0.1;   ///< maximum fraction of fast components
  double h0 = 0.0;    ///< initial step; 0 selects one from the RHS scale
  double h_min = 0.0; ///< smallest admissible step; 0 selects 1e-12 (t_end - t0)
  IntegrationMode mode = IntegrationMode::single;
  /// Interpolant for slow components and output sampling. `dense` falls back
  /// to `hermite` for methods without continuous output.
  InterpKind interp = InterpKind::dense;
  JacobianStrategy jacobian_strategy = JacobianStrategy::jac_b;
  int newton_max_iters = 20;
  int jac_a_refresh_period = 10;
  /// Start Newton from the previous step's Hermite extrapolation.
  bool extrapolate_guess = true;
  std::int64_t max_attempts = 50'000'000;  ///< global plus fast attempts

  /// Sorted sample times in [t0, t_end]; empty records no trajectory.
  std::vector<double> output_times;
  /// Sampled components; empty samples all of them.
  IndexList output_indices;
  bool record_activity = true;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;

  /// Newton settings derived from this configuration (tolerances 0.01x).
  NewtonConfig newton() const;
};

/// Uniform grid t0, t0 + dt, ..., ending exactly at t_end.
std::vector<double> uniform_grid(double t0, double t_end, double dt);

struct StepStats {
  std::int64_t accepted_global = 0;
  std::int64_t rejected_global_error = 0;
  std::int64_t rejected_global_convergence = 0;
  std::int64_t accepted_fast = 0;
  std::int64_t rejected_fast_error = 0;
  std::int64_t rejected_fast_convergence = 0;
  std::int64_t global_rhs_calls = 0;
  std::int64_t global_jacobians = 0;
  std::int64_t local_rhs_calls = 0;
  std::int64_t local_jacobians = 0;
  std::int64_t newton_iterations = 0;
  std::int64_t factorizations = 0;
  /// Jacobians re-evaluated inside Newton solves (included in the totals).
  std::int64_t global_stage_refreshes = 0;
  std::int64_t local_stage_refreshes = 0;
  double wall_time = 0.0;  ///< seconds

  std::int64_t global_attempts() const {
    return accepted_global + rejected_global_error + rejected_global_convergence;
  }
  StepStats& operator+=(const StepStats& o);
};

enum class StepKind { global, fast };

/// One accepted step. Global records cover every component and leave
/// `active` empty; fast records list the refined components.
struct ActivityRecord {
  std::int64_t step_index = 0;  ///< global step this record belongs to
  double t_start = 0.0;
  double t_end = 0.0;
  StepKind kind = StepKind::global;
  IndexList active;
};

// ---------------------------------------------------------------- partition

enum class PartitionDecision { accept, reject, go_multirate };

struct Partition {
  PartitionDecision decision = PartitionDecision::accept;
  IndexList fast;  ///< sorted; empty unless go_multirate
  Index m = 0;     ///< cap on the number of fast components
  double eta_s = 0.0;
  double eta_f = 0.0;
};

/// m = floor(phi N) clamped to [1, N - 1] (0 when N = 1). Components are
/// ranked by descending eta, ties by ascending index; eta_s is the maximum
/// beyond rank m and eta_f the maximum of the top m. Rejects when
/// eta_s > beta, accepts when eta_f <= beta, and otherwise marks
/// {i : eta_i > beta} as fast.
Partition select_partition(const Vector& eta, double phi, double beta);

// ---------------------------------------------------------------- drivers

enum class IntegrationStatus { success, step_size_underflow, attempt_limit, nonfinite };

std::string_view to_string(IntegrationStatus s);

struct IntegrationResult {
  IntegrationStatus status = IntegrationStatus::success;
  std::string message;
  double t_final = 0.0;
  Vector y_final;  ///< state at t_final (the failure point when not ok)

  IndexList output_indices;
  std::vector<double> output_times;  ///< the reached prefix of the requested grid
  std::vector<Vector> outputs;       ///< one row per output time

  StepStats stats;
  std::vector<ActivityRecord> activity;

  bool ok() const { return status == IntegrationStatus::success; }
};

/// Embedded-error controlled integration over [t0, t_end].
IntegrationResult integrate_single_rate(const OdeProblem& problem, const ButcherTableau& method,
                                        const SolverConfig& config);

/// Self-adjusting multirate integration over [t0, t_end].
IntegrationResult integrate_multirate(const OdeProblem& problem, const ButcherTableau& method,
                                      const SolverConfig& config);

/// Dispatches on config.mode.
IntegrationResult integrate(const OdeProblem& problem, const ButcherTableau& method, const SolverConfig& config);

// ---------------------------------------------------------------- one step

struct MultirateStepOptions {
  /// Skips partition selection and refines exactly these components.
  std::optional<IndexList> forced_fast;
  /// When positive, takes this many equal fast sub-steps without error control.
  int fixed_substeps = 0;
};

enum class StepOutcome { accepted_global, accepted_multirate, rejected_error, rejected_convergence };

struct MultirateStepResult {
  StepOutcome outcome = StepOutcome::accepted_global;
  Vector u_next;         ///< combined state at t_n + h_n when accepted
  Vector global_u_next;  ///< the tentative global step
  IndexList fast;
  double eta_s = 0.0;
  double eta_f = 0.0;
  double h_next = 0.0;             ///< proposed next global step
  std::vector<double> substeps;    ///< accepted fast sub-step sizes in order
  std::vector<ActivityRecord> activity;
  StepStats stats;

  bool accepted() const {
    return outcome == StepOutcome::accepted_global || outcome == StepOutcome::accepted_multirate;
  }
};

/// One step of the multirate controller from (t_n, u_n) with a fresh
/// Jacobian and no extrapolated guess.
MultirateStepResult multirate_step(const OdeProblem& problem, const ButcherTableau& method,
                                   const SolverConfig& config, double t_n, const Vector& u_n, double h_n,
                                   const MultirateStepOptions& options = {});

}  // namespace mrk
