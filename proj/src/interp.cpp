#include "mrk/interp.hpp"

#include <cmath>
#include <string>

namespace mrk {

std::string_view to_string(InterpKind kind) {
  switch (kind) {
    case InterpKind::linear:
      return "linear";
    case InterpKind::hermite:
      return "hermite";
    case InterpKind::dense:
      return "dense";
  }
  return "unknown";
}

InterpKind interp_kind_from_string(std::string_view s) {
  if (s == "linear") return InterpKind::linear;
  if (s == "hermite") return InterpKind::hermite;
  if (s == "dense") return InterpKind::dense;
  throw std::invalid_argument("unknown interpolant '" + std::string(s) + "' (expected linear, hermite or dense)");
}

namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::domain_error("interpolation at tau = " + std::to_string(tau) + " outside [0, 1]");
}

void require(bool present, InterpKind kind, const char* what) {
  if (!present)
    throw InterpConfigError(std::string(to_string(kind)) + " interpolation needs " + what);
}

void check_inputs(InterpKind kind, const InterpData& d) {
  switch (kind) {
    case InterpKind::linear:
      require(d.u_n && d.u_next, kind, "u_n and u_next");
      break;
    case InterpKind::hermite:
      require(d.u_n && d.u_next, kind, "u_n and u_next");
      require(d.f_n && d.f_next, kind, "derivatives at both endpoints");
      break;
    case InterpKind::dense:
      require(d.stages != nullptr, kind, "stored stages");
      require(d.coeffs != nullptr, kind, "dense-output coefficients");
      break;
  }
}

struct HermiteWeights {
  double u0, u1, f0, f1;
};

HermiteWeights hermite_weights(double tau, double h) {
  const double s = 1.0 - tau;
  return {(1.0 + 2.0 * tau) * s * s, (3.0 - 2.0 * tau) * tau * tau, h * tau * s * s, h * (tau - 1.0) * tau * tau};
}

}  // namespace

Vector interp_value(InterpKind kind, const InterpData& d, double tau) {
  check_tau(tau);
  check_inputs(kind, d);
  switch (kind) {
    case InterpKind::linear:
      return (1.0 - tau) * *d.u_n + tau * *d.u_next;
    case InterpKind::hermite: {
      const auto w = hermite_weights(tau, d.h);
      return w.u0 * *d.u_n + w.u1 * *d.u_next + w.f0 * *d.f_n + w.f1 * *d.f_next;
    }
    case InterpKind::dense:
      return dense_eval(*d.stages, *d.coeffs, tau);
  }
  return {};
}

void interp_components(InterpKind kind, const InterpData& d, double tau, std::span<const Index> indices,
                       Vector& out) {
  check_tau(tau);
  check_inputs(kind, d);
  switch (kind) {
    case InterpKind::linear:
      for (Index i : indices) out(i) = (1.0 - tau) * (*d.u_n)(i) + tau * (*d.u_next)(i);
      return;
    case InterpKind::hermite: {
      const auto w = hermite_weights(tau, d.h);
      for (Index i : indices)
        out(i) = w.u0 * (*d.u_n)(i) + w.u1 * (*d.u_next)(i) + w.f0 * (*d.f_n)(i) + w.f1 * (*d.f_next)(i);
      return;
    }
    case InterpKind::dense: {
      const Vector b = d.coeffs->weights(tau);
      const auto& st = *d.stages;
      for (Index i : indices) {
        double acc = 0.0;
        for (Index k = 0; k < b.size(); ++k) acc += b(k) * st.K[static_cast<std::size_t>(k)](i);
        out(i) = st.u_n(i) + st.h * acc;
      }
      return;
    }
  }
}

SingularStageFactor::SingularStageFactor(int stage_, int substep_)
    : std::runtime_error("near-singular stage factor at stage " + std::to_string(stage_) +
                         (substep_ >= 0 ? ", sub-step " + std::to_string(substep_) : std::string())),
      stage(stage_),
      substep(substep_) {}

StageOperators stage_operators(const Matrix& L, double h, const ButcherTableau& method) {
  const Index n = L.rows();
  const int s = method.stages();
  const Matrix I = Matrix::Identity(n, n);
  StageOperators ops;
  ops.stage.reserve(static_cast<std::size_t>(s));
  std::vector<Matrix> LR;  // L R^(j)
  LR.reserve(static_cast<std::size_t>(s));
  for (int k = 0; k < s; ++k) {
    Matrix rhs = I;
    for (int j = 0; j < k; ++j)
      if (method.A(k, j) != 0.0) rhs.noalias() += (h * method.A(k, j)) * LR[static_cast<std::size_t>(j)];
    const double a_kk = method.A(k, k);
    if (a_kk != 0.0) {
      Matrix factor = I - (h * a_kk) * L;
      Eigen::PartialPivLU<Matrix> lu(factor);
      const double rc = lu.rcond();
      if (!std::isfinite(rc) || rc < 1e-14) throw SingularStageFactor(k + 1, -1);
      rhs = lu.solve(rhs);
    }
    LR.push_back(L * rhs);
    ops.stage.push_back(std::move(rhs));
  }
  ops.step = I;
  for (int i = 0; i < s; ++i)
    if (method.b(i) != 0.0) ops.step.noalias() += (h * method.b(i)) * LR[static_cast<std::size_t>(i)];
  return ops;
}

Matrix interp_operator(InterpKind kind, const Matrix& L, double h, const ButcherTableau& method, double tau) {
  return interp_operator(kind, stage_operators(L, h, method), L, h, method, tau);
}

Matrix interp_operator(InterpKind kind, const StageOperators& ops, const Matrix& L, double h,
                       const ButcherTableau& method, double tau) {
  check_tau(tau);
  return interp_operator_extended(kind, ops, L, h, method, tau);
}

Matrix interp_operator_extended(InterpKind kind, const StageOperators& ops, const Matrix& L, double h,
                                const ButcherTableau& method, double tau) {
  if (!(tau >= 0.0)) throw std::domain_error("interpolation at negative tau");
  const Index n = L.rows();
  const Matrix I = Matrix::Identity(n, n);
  switch (kind) {
    case InterpKind::linear:
      return (1.0 - tau) * I + tau * ops.step;
    case InterpKind::hermite: {
      const auto w = hermite_weights(tau, h);
      return w.u0 * I + w.u1 * ops.step + w.f0 * L + w.f1 * (L * ops.step);
    }
    case InterpKind::dense: {
      if (!method.dense) throw InterpConfigError("dense interpolation needs dense-output coefficients for " + method.name);
      const Vector b = method.dense->weights(tau);
      Matrix acc = Matrix::Zero(n, n);
      for (Index i = 0; i < b.size(); ++i)
        if (b(i) != 0.0) acc.noalias() += b(i) * ops.stage[static_cast<std::size_t>(i)];
      return I + h * (L * acc);
    }
  }
  return I;
}

}  // namespace mrk
