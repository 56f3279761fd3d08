#include "mrk/ode_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrk {

namespace {

WorkCounters difference(const WorkCounters& after, const WorkCounters& before) {
  WorkCounters d;
  d.rhs_calls = after.rhs_calls - before.rhs_calls;
  d.jacobians = after.jacobians - before.jacobians;
  d.newton_iterations = after.newton_iterations - before.newton_iterations;
  d.factorizations = after.factorizations - before.factorizations;
  return d;
}

}  // namespace

StepResult rk_step(Subsystem& sys, const ButcherTableau& method, double t_n, const Vector& u_n, double h,
                   const ImplicitContext& implicit, const Vector* f_n) {
  const int s = method.stages();
  const WorkCounters before = sys.counters;

  StepResult res;
  StageSet& st = res.stages;
  st.t_n = t_n;
  st.h = h;
  st.u_n = u_n;
  st.U.resize(static_cast<std::size_t>(s));
  st.K.resize(static_cast<std::size_t>(s));

  for (int i = 0; i < s; ++i) {
    Vector v = u_n;
    for (int j = 0; j < i; ++j)
      if (method.A(i, j) != 0.0) v.noalias() += (h * method.A(i, j)) * st.K[static_cast<std::size_t>(j)];
    const double t_i = t_n + method.c(i) * h;
    const double a_ii = method.A(i, i);
    auto& U = st.U[static_cast<std::size_t>(i)];
    auto& K = st.K[static_cast<std::size_t>(i)];

    if (a_ii == 0.0) {
      U = std::move(v);
      if (i == 0 && f_n != nullptr) {
        K = *f_n;
      } else {
        sys.eval(t_i, U, K);
      }
      continue;
    }

    if (implicit.cache == nullptr || implicit.newton == nullptr)
      throw std::logic_error("rk_step: implicit method '" + method.name + "' needs a Jacobian cache and Newton config");
    Vector guess = u_n;
    if (implicit.predictor != nullptr && *implicit.predictor) (*implicit.predictor)(t_i, guess);
    auto solved = solve_stage(sys, t_i, h * a_ii, v, std::move(guess), *implicit.cache, *implicit.newton);
    if (!solved.ok()) {
      res.status = StepStatus::convergence_failure;
      res.failed_stage = i;
      res.work = difference(sys.counters, before);
      return res;
    }
    U = std::move(solved.U);
    K = (U - v) / (h * a_ii);
  }

  res.u_next = u_n;
  for (int i = 0; i < s; ++i)
    if (method.b(i) != 0.0) res.u_next.noalias() += (h * method.b(i)) * st.K[static_cast<std::size_t>(i)];
  if (method.b_hat) {
    res.u_hat = u_n;
    for (int i = 0; i < s; ++i)
      if ((*method.b_hat)(i) != 0.0) res.u_hat.noalias() += (h * (*method.b_hat)(i)) * st.K[static_cast<std::size_t>(i)];
  } else {
    res.u_hat = res.u_next;
  }

  if (!res.u_next.allFinite() || !res.u_hat.allFinite()) res.status = StepStatus::blowup;
  res.work = difference(sys.counters, before);
  return res;
}

StepResult rk_step(const OdeProblem& problem, const Vector& u_n, double t_n, double h,
                   const ButcherTableau& method, const NewtonConfig& newton) {
  Subsystem sys(problem);
  JacobianCache cache;
  if (method.implicit()) cache.refresh(sys, t_n, u_n, newton);
  ImplicitContext ctx{&cache, &newton, nullptr};
  return rk_step(sys, method, t_n, u_n, h, ctx);
}

Vector dense_eval(const StageSet& stages, const DenseOutputCoeffs& coeffs, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::domain_error("dense_eval: tau = " + std::to_string(tau) + " outside [0, 1]");
  const Vector w = coeffs.weights(tau);
  if (static_cast<std::size_t>(w.size()) != stages.K.size())
    throw std::invalid_argument("dense_eval: coefficient rows do not match stage count");
  Vector out = stages.u_n;
  for (Index i = 0; i < w.size(); ++i)
    if (w(i) != 0.0) out.noalias() += (stages.h * w(i)) * stages.K[static_cast<std::size_t>(i)];
  return out;
}

Vector error_quotients(const Vector& u, const Vector& u_hat, double rtol, double atol) {
  return (u - u_hat).cwiseAbs().array() / (rtol * u.cwiseAbs().array() + atol);
}

double new_step_size(double h, double eta, int q, const SafetyFactors& safety) {
  if (eta <= 0.0) return h * safety.alpha_max;
  const double factor = safety.alpha * std::pow(eta, -1.0 / (q + 1));
  return h * std::min(safety.alpha_max, std::max(safety.alpha_min, factor));
}

}  // namespace mrk
