#pragma once

#include "mrk/interp.hpp"
#include "mrk/tableaux.hpp"

#include <complex>
#include <optional>
#include <string>

namespace mrk {

/// y' = L y with a slow/fast split of the state indices.
struct PartitionedLinearModel {
  std::string name;
  Matrix L;
  IndexList slow;
  IndexList fast;
  double spectral_scale = 0.0;  ///< max |eigenvalue| of L

  Index size() const { return L.rows(); }
  Index fast_size() const { return static_cast<Index>(fast.size()); }

  Matrix block(const IndexList& rows, const IndexList& cols) const;
  Matrix L_ss() const { return block(slow, slow); }
  Matrix L_sf() const { return block(slow, fast); }
  Matrix L_fs() const { return block(fast, slow); }
  Matrix L_ff() const { return block(fast, fast); }
};

/// Builds a model from L and its fast indices; the slow set is the complement.
PartitionedLinearModel make_partitioned_model(Matrix L, IndexList fast, std::string name = "custom");

/// L = [[-1, 1], [-kappa alpha, -alpha]]; the second variable is fast.
PartitionedLinearModel model_2dof(double alpha, double kappa);

/// Two damped masses on springs in first-order form (positions and
/// velocities); the second mass (y3, y4) is fast.
PartitionedLinearModel model_4dof(double omega1, double gamma1, double alpha, double beta, double kappa);

/// All eigenvalues of a real square matrix: balancing, Hessenberg reduction
/// and shifted double-step QR. Throws std::runtime_error on non-convergence.
std::vector<std::complex<double>> eigenvalues(const Matrix& A);

double spectral_radius(const Matrix& A);

/// exp(L t) by scaling and squaring around a degree-13 Pade approximant.
Matrix matrix_exponential(const Matrix& L, double t = 1.0);

/// R(hL) of a single-rate step.
Matrix single_rate_R(const Matrix& L, double h, const ButcherTableau& method);

/// One multi-rate step on y' = L y: a global step of size h_s for the slow
/// variables and M equal fast sub-steps, with slow values from the
/// global-step interpolant.
struct MultirateAmplification {
  Matrix R;  ///< N x N, acting on the full state u_n
  double h_s = 0.0;
  int M = 1;
  /// Fast sub-step operator R(h_f L_ff).
  Matrix C_ff;
  /// Fast-row contribution of u_n per sub-step, d x N each.
  std::vector<Matrix> D;
};

MultirateAmplification multirate_R(const PartitionedLinearModel& model, double h_s, int M,
                                   const ButcherTableau& method, InterpKind interp);

/// Growth of one multi-rate step at C = h_s * spectral_scale.
double multirate_rho(const PartitionedLinearModel& model, double C, int M, const ButcherTableau& method,
                     InterpKind interp);

inline constexpr double kDefaultRhoTol = 1e-8;

/// Integer grid 1..c_max.
std::vector<double> default_c_grid(int c_max = 100);

struct ScanPoint {
  double C = 0.0;
  double rho = 0.0;
  bool stable = false;
};

/// Stability summary of one (model, M) cell over a C grid.
struct StabilityLimit {
  /// First grid C whose rho test fails; empty when every grid point passes.
  std::optional<double> first_unstable;
  /// Largest grid C whose rho test passes; empty when none passes.
  std::optional<double> largest_stable;
  double grid_max = 0.0;

  /// "≥ C_max" when no grid point fails, otherwise the first failing C.
  std::string table_entry() const;
};

std::vector<ScanPoint> scan_rho(const PartitionedLinearModel& model, const ButcherTableau& method,
                                InterpKind interp, int M, const std::vector<double>& C_grid,
                                double rho_tol = kDefaultRhoTol);

StabilityLimit summarize_scan(const std::vector<ScanPoint>& points);

StabilityLimit max_stable_C(const PartitionedLinearModel& model, const ButcherTableau& method, InterpKind interp,
                            int M, const std::vector<double>& C_grid, double rho_tol = kDefaultRhoTol);

enum class PropagatorMode { single, multi };

struct PropagatorError {
  double error = 0.0;        ///< ||A^n - exp(L T)||_2 / ||exp(L T)||_2
  long steps = 0;            ///< n
  double effective_C = 0.0;  ///< (T / n) * spectral_scale
};

/// Compares n steps of the single- or multi-rate amplification with the exact
/// propagator; n = round(T spectral_scale / C) so that n h_s = T exactly.
PropagatorError propagator_error(const PartitionedLinearModel& model, const ButcherTableau& method, InterpKind interp,
                                 PropagatorMode mode, int M, double C, double t_final);

}  // namespace mrk
