#pragma once

#include "mrk/ode_core.hpp"
#include "mrk/tableaux.hpp"

#include <span>
#include <stdexcept>
#include <string_view>

namespace mrk {

enum class InterpKind { linear, hermite, dense };

std::string_view to_string(InterpKind kind);
InterpKind interp_kind_from_string(std::string_view s);

/// Inputs of one step for the data-form interpolants. Pointers that a kind
/// does not need may be null.
struct InterpData {
  double h = 0.0;
  const Vector* u_n = nullptr;
  const Vector* u_next = nullptr;
  const Vector* f_n = nullptr;
  const Vector* f_next = nullptr;
  const StageSet* stages = nullptr;
  const DenseOutputCoeffs* coeffs = nullptr;
};

/// Missing inputs for the requested interpolant kind.
class InterpConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Interpolated state at t_n + tau h.
Vector interp_value(InterpKind kind, const InterpData& data, double tau);

/// Writes the interpolated value of each component i in `indices` into out(i).
void interp_components(InterpKind kind, const InterpData& data, double tau, std::span<const Index> indices,
                       Vector& out);

/// A stage factor I - h a_kk L that cannot be inverted.
class SingularStageFactor : public std::runtime_error {
 public:
  SingularStageFactor(int stage, int substep);
  int stage;    ///< 1-based stage index
  int substep;  ///< 0-based sub-step index, or -1 for a single-rate step
};

/// Stage operators R^(i) with U_i = R^(i) u_n on y' = L y, and the step
/// operator R(hL) = I + h sum_i b_i L R^(i).
struct StageOperators {
  std::vector<Matrix> stage;
  Matrix step;
};

StageOperators stage_operators(const Matrix& L, double h, const ButcherTableau& method);

/// Operator form Q(tau) with Q(tau) u_n equal to the data-form interpolant
/// of a single-rate step on y' = L y.
Matrix interp_operator(InterpKind kind, const Matrix& L, double h, const ButcherTableau& method, double tau);

/// Same as above with precomputed stage operators for (L, h, method).
Matrix interp_operator(InterpKind kind, const StageOperators& ops, const Matrix& L, double h,
                       const ButcherTableau& method, double tau);

/// The interpolating polynomial continued to any tau >= 0. Fast stages with
/// abscissa c_i > 1 in the last sub-step sample the slow interpolant past
/// the step end.
Matrix interp_operator_extended(InterpKind kind, const StageOperators& ops, const Matrix& L, double h,
                                const ButcherTableau& method, double tau);

}  // namespace mrk
