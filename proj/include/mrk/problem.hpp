#pragma once

#include "mrk/types.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>

namespace mrk {

/// An initial value problem y' = f(y, t) with structural dependency data.
///
/// Implementations must be safe to evaluate concurrently: all scratch lives
/// in caller-supplied buffers.
class OdeProblem {
 public:
  virtual ~OdeProblem() = default;

  virtual std::string name() const = 0;
  virtual Index size() const = 0;

  double t0() const { return t0_; }
  double t_end() const { return t_end_; }
  const Vector& initial_state() const { return y0_; }

  virtual void rhs(double t, const Vector& y, Vector& dydt) const = 0;

  /// Writes f_i(y, t) for every i in `rows` into `out(i)`; other entries of
  /// `out` are left untouched. Only reads y at indices in the dependency
  /// sets of `rows`. The default evaluates the full RHS.
  virtual void rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const;

  /// dependency(i): sorted indices read by f_i.
  virtual const std::vector<IndexList>& dependencies() const = 0;

  /// Optional exact Jacobian; the solvers fall back to finite differences.
  virtual std::optional<SparseMatrix> analytic_jacobian(double /*t*/, const Vector& /*y*/) const {
    return std::nullopt;
  }

 protected:
  OdeProblem(double t0, double t_end, Vector y0) : t0_(t0), t_end_(t_end), y0_(std::move(y0)) {}

  double t0_;
  double t_end_;
  Vector y0_;
};

/// Dependency sets of a matrix sparsity pattern (row i reads column j when
/// L(i, j) != 0).
std::vector<IndexList> dependencies_from_pattern(const Matrix& L);

/// Dense dependency sets: every row reads every column.
std::vector<IndexList> dense_dependencies(Index n);

/// y' = L y.
class LinearProblem final : public OdeProblem {
 public:
  LinearProblem(Matrix L, Vector y0, double t0 = 0.0, double t_end = 1.0);

  std::string name() const override { return "linear"; }
  Index size() const override { return L_.rows(); }
  void rhs(double t, const Vector& y, Vector& dydt) const override;
  void rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const override;
  const std::vector<IndexList>& dependencies() const override { return deps_; }
  std::optional<SparseMatrix> analytic_jacobian(double t, const Vector& y) const override;

  const Matrix& matrix() const { return L_; }

 private:
  Matrix L_;
  std::vector<IndexList> deps_;
};

/// Wraps a callable RHS; dependencies default to dense.
class FunctionProblem final : public OdeProblem {
 public:
  using Rhs = std::function<void(double t, const Vector& y, Vector& dydt)>;

  FunctionProblem(std::string name, Rhs f, Vector y0, double t0, double t_end,
                  std::vector<IndexList> deps = {});

  std::string name() const override { return name_; }
  Index size() const override { return y0_.size(); }
  void rhs(double t, const Vector& y, Vector& dydt) const override { f_(t, y, dydt); }
  const std::vector<IndexList>& dependencies() const override { return deps_; }

 private:
  std::string name_;
  Rhs f_;
  std::vector<IndexList> deps_;
};

}  // namespace mrk
