#include "mrk/newton.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mrk {

std::string_view to_string(JacobianStrategy s) {
  return s == JacobianStrategy::jac_a ? "JacA" : "JacB";
}

JacobianStrategy jacobian_strategy_from_string(std::string_view s) {
  if (s == "JacA" || s == "jaca" || s == "A" || s == "a") return JacobianStrategy::jac_a;
  if (s == "JacB" || s == "jacb" || s == "B" || s == "b") return JacobianStrategy::jac_b;
  throw std::invalid_argument("unknown Jacobian strategy '" + std::string(s) + "' (expected JacA or JacB)");
}

struct JacobianCache::Factor {
  Eigen::PartialPivLU<Matrix> dense;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> sparse;
  SparseMatrix iteration;
  bool pattern_ready = false;
};

JacobianCache::JacobianCache() : factor_(std::make_unique<Factor>()) {}
JacobianCache::~JacobianCache() = default;
JacobianCache::JacobianCache(JacobianCache&&) noexcept = default;
JacobianCache& JacobianCache::operator=(JacobianCache&&) noexcept = default;

void JacobianCache::refresh(Subsystem& sys, double t, const Vector& u, const NewtonConfig& cfg) {
  set(sys.jacobian(t, u), cfg);
}

void JacobianCache::set(SparseMatrix J, const NewtonConfig& cfg) {
  const bool same_pattern = valid_ && !dense_ && J.rows() == J_.rows() && J.nonZeros() == J_.nonZeros();
  J_ = std::move(J);
  const Index n = J_.rows();
  dense_ = n <= cfg.dense_threshold || 4 * J_.nonZeros() >= n * n;
  if (!same_pattern) factor_->pattern_ready = false;
  valid_ = true;
  age_ = 0;
  factored_ = false;
}

void JacobianCache::invalidate() {
  valid_ = false;
  factored_ = false;
  factor_->pattern_ready = false;
}

bool JacobianCache::factorize(double gamma_h, WorkCounters& work) {
  if (!valid_) throw std::logic_error("JacobianCache::factorize without a Jacobian");
  if (factored_ && gamma_h == gamma_h_) return true;
  ++work.factorizations;
  const Index n = J_.rows();
  gamma_h_ = gamma_h;
  factored_ = false;
  if (dense_) {
    Matrix M = -gamma_h * Matrix(J_);
    M.diagonal().array() += 1.0;
    factor_->dense.compute(M);
    const double rc = factor_->dense.rcond();
    if (!std::isfinite(rc) || rc < 1e-14) return false;
  } else {
    SparseMatrix I(n, n);
    I.setIdentity();
    factor_->iteration = I - gamma_h * J_;
    factor_->iteration.makeCompressed();
    if (!factor_->pattern_ready) {
      factor_->sparse.analyzePattern(factor_->iteration);
      factor_->pattern_ready = true;
    }
    factor_->sparse.factorize(factor_->iteration);
    if (factor_->sparse.info() != Eigen::Success) return false;
  }
  factored_ = true;
  return true;
}

Vector JacobianCache::solve(const Vector& rhs) const {
  if (dense_) return factor_->dense.solve(rhs);
  return factor_->sparse.solve(rhs);
}

namespace {

double weighted_norm(const Vector& r, const Vector& U, const NewtonConfig& cfg) {
  double worst = 0.0;
  for (Index i = 0; i < r.size(); ++i) {
    const double q = std::abs(r(i)) / (cfg.rel_tol * std::abs(U(i)) + cfg.abs_tol);
    if (!(q <= worst)) worst = q;  // propagates NaN
  }
  return worst;
}

}  // namespace

StageSolveResult solve_stage(Subsystem& sys, double t, double gamma_h, const Vector& v, Vector guess,
                             JacobianCache& cache, const NewtonConfig& cfg) {
  StageSolveResult out;
  out.U = std::move(guess);
  int refreshes = 0;
  auto refresh = [&]() {
    cache.refresh(sys, t, out.U, cfg);
    out.refreshed = true;
    return cache.factorize(gamma_h, sys.counters);
  };
  if (!cache.valid()) {
    if (!refresh()) {
      out.status = NewtonStatus::singular;
      return out;
    }
  } else if (!cache.factorize(gamma_h, sys.counters)) {
    out.status = NewtonStatus::singular;
    return out;
  }

  Vector f(sys.size());
  Vector r(sys.size());
  auto residual = [&](const Vector& U) {
    sys.eval(t, U, f);
    r = U - v - gamma_h * f;
    return weighted_norm(r, U, cfg);
  };

  double norm = residual(out.U);
  int slow_iterations = 0;
  while (true) {
    if (!std::isfinite(norm)) {
      out.status = NewtonStatus::diverged;
      return out;
    }
    // At least one update, so that a linear stage is solved exactly.
    if (norm <= 1.0 && out.iterations > 0) {
      out.status = NewtonStatus::converged;
      return out;
    }
    if (out.iterations >= cfg.max_iters) {
      out.status = NewtonStatus::max_iterations;
      return out;
    }

    const Vector step = cache.solve(r);
    ++out.iterations;
    ++sys.counters.newton_iterations;

    // Halve the update while it does not reduce the residual; the last
    // trial is kept either way.
    Vector trial = out.U - step;
    double trial_norm = residual(trial);
    for (int k = 1; k <= cfg.max_backtracks && !(trial_norm < norm); ++k) {
      trial = out.U - std::ldexp(1.0, -k) * step;
      trial_norm = residual(trial);
    }
    const double ratio = trial_norm / norm;
    out.U = std::move(trial);
    norm = trial_norm;
    if (!(norm > 1.0)) continue;

    slow_iterations = ratio > cfg.stall_ratio ? slow_iterations + 1 : 0;
    if (!(ratio > cfg.refresh_ratio)) continue;
    if (refreshes < cfg.max_refreshes) {
      ++refreshes;
      ++sys.counters.stage_refreshes;
      slow_iterations = 0;
      if (!refresh()) {
        out.status = NewtonStatus::singular;
        return out;
      }
      continue;
    }
    if (!(ratio <= cfg.divergence_ratio)) {
      out.status = NewtonStatus::diverged;
      return out;
    }
    if (slow_iterations >= cfg.stall_window) {
      out.status = NewtonStatus::max_iterations;
      return out;
    }
  }
}

}  // namespace mrk
