#include "mrk/problem.hpp"

namespace mrk {

void OdeProblem::rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const {
  Vector full(size());
  rhs(t, y, full);
  for (Index i : rows) out(i) = full(i);
}

std::vector<IndexList> dependencies_from_pattern(const Matrix& L) {
  std::vector<IndexList> deps(static_cast<std::size_t>(L.rows()));
  for (Index i = 0; i < L.rows(); ++i)
    for (Index j = 0; j < L.cols(); ++j)
      if (L(i, j) != 0.0) deps[static_cast<std::size_t>(i)].push_back(j);
  return deps;
}

std::vector<IndexList> dense_dependencies(Index n) {
  IndexList all(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) all[static_cast<std::size_t>(j)] = j;
  return std::vector<IndexList>(static_cast<std::size_t>(n), all);
}

LinearProblem::LinearProblem(Matrix L, Vector y0, double t0, double t_end)
    : OdeProblem(t0, t_end, std::move(y0)), L_(std::move(L)), deps_(dependencies_from_pattern(L_)) {}

void LinearProblem::rhs(double, const Vector& y, Vector& dydt) const { dydt.noalias() = L_ * y; }

void LinearProblem::rhs_rows(double, const Vector& y, std::span<const Index> rows, Vector& out) const {
  for (Index i : rows) {
    double acc = 0.0;
    for (Index j : deps_[static_cast<std::size_t>(i)]) acc += L_(i, j) * y(j);
    out(i) = acc;
  }
}

std::optional<SparseMatrix> LinearProblem::analytic_jacobian(double, const Vector&) const {
  return L_.sparseView();
}

FunctionProblem::FunctionProblem(std::string name, Rhs f, Vector y0, double t0, double t_end,
                                 std::vector<IndexList> deps)
    : OdeProblem(t0, t_end, std::move(y0)), name_(std::move(name)), f_(std::move(f)), deps_(std::move(deps)) {
  if (deps_.empty()) deps_ = dense_dependencies(y0_.size());
}

}  // namespace mrk
