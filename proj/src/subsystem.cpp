#include "mrk/subsystem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mrk {

namespace {

IndexList identity_list(Index n) {
  IndexList out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), Index{0});
  return out;
}

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

}  // namespace

Subsystem::Subsystem(const OdeProblem& problem)
    : problem_(&problem), full_(true), active_(identity_list(problem.size())) {
  build_pattern();
}

Subsystem::Subsystem(const OdeProblem& problem, IndexList active, BackgroundFill fill)
    : problem_(&problem), full_(false), active_(std::move(active)), fill_(std::move(fill)) {
  std::sort(active_.begin(), active_.end());
  active_.erase(std::unique(active_.begin(), active_.end()), active_.end());
  full_ = size() == problem.size();
  build_pattern();
}

void Subsystem::build_pattern() {
  const Index n_global = problem_->size();
  const Index n = size();
  const auto& deps = problem_->dependencies();

  local_of_.assign(at(n_global), -1);
  for (Index k = 0; k < n; ++k) local_of_[at(active_[at(k)])] = k;

  std::vector<char> in_closure(at(n_global), 0);
  row_cols_.assign(at(n), {});
  col_rows_.assign(at(n), {});
  for (Index r = 0; r < n; ++r) {
    const Index g = active_[at(r)];
    IndexList& cols = row_cols_[at(r)];
    cols.push_back(r);
    for (Index j : deps[at(g)]) {
      const Index lj = local_of_[at(j)];
      if (lj >= 0) {
        cols.push_back(lj);
      } else {
        in_closure[at(j)] = 1;
      }
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (Index c : cols) col_rows_[at(c)].push_back(r);
  }
  closure_.clear();
  for (Index j = 0; j < n_global; ++j)
    if (in_closure[at(j)]) closure_.push_back(j);

  // Rows reading many columns would force every column into its own color.
  is_dense_row_.assign(at(n), 0);
  dense_rows_.clear();
  for (Index r = 0; r < n; ++r) {
    const auto nnz = static_cast<Index>(row_cols_[at(r)].size());
    if (nnz > 32 && nnz * 8 > n) {
      is_dense_row_[at(r)] = 1;
      dense_rows_.push_back(r);
    }
  }

  // Greedy column coloring: two columns share a color only when no sparse
  // row reads both.
  std::vector<int> color(at(n), -1);
  std::vector<Index> stamp;
  int n_colors = 0;
  for (Index c = 0; c < n; ++c) {
    stamp.assign(at(n_colors) + 1, -1);
    for (Index r : col_rows_[at(c)]) {
      if (is_dense_row_[at(r)]) continue;
      for (Index k : row_cols_[at(r)])
        if (color[at(k)] >= 0) stamp[at(color[at(k)])] = c;
    }
    int chosen = 0;
    while (chosen < n_colors && stamp[at(chosen)] == c) ++chosen;
    color[at(c)] = chosen;
    n_colors = std::max(n_colors, chosen + 1);
  }

  colors_.assign(at(n_colors), {});
  for (Index c = 0; c < n; ++c) colors_[at(color[at(c)])].cols.push_back(c);
  std::vector<Index> seen(at(n), -1);
  for (std::size_t k = 0; k < colors_.size(); ++k) {
    auto& group = colors_[k];
    for (Index c : group.cols)
      for (Index r : col_rows_[at(c)])
        if (!is_dense_row_[at(r)] && seen[at(r)] != static_cast<Index>(k)) {
          seen[at(r)] = static_cast<Index>(k);
          group.rows_global.push_back(active_[at(r)]);
        }
    std::sort(group.rows_global.begin(), group.rows_global.end());
  }

  y_ = problem_->initial_state();
  fbuf_ = Vector::Zero(n_global);
  f0_ = Vector::Zero(n_global);
}

void Subsystem::load(double t, const Vector& u) {
  if (full_) {
    y_ = u;
    return;
  }
  for (Index k = 0; k < size(); ++k) y_(active_[at(k)]) = u(k);
  if (fill_ && !closure_.empty()) fill_(t, closure_, y_);
}

void Subsystem::eval_rows(double t, std::span<const Index> rows_global) {
  problem_->rhs_rows(t, y_, rows_global, fbuf_);
}

void Subsystem::eval(double t, const Vector& u, Vector& f) {
  ++counters.rhs_calls;
  load(t, u);
  if (full_) {
    f.resize(size());
    problem_->rhs(t, y_, f);
    return;
  }
  eval_rows(t, active_);
  f = gather(fbuf_);
}

SparseMatrix Subsystem::jacobian(double t, const Vector& u) {
  ++counters.jacobians;
  const Index n = size();
  if (full_) {
    if (auto J = problem_->analytic_jacobian(t, u)) return *J;
  }

  load(t, u);
  eval_rows(t, active_);
  f0_ = fbuf_;

  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  auto increment = [&](Index g) { return sqrt_eps * std::max(std::abs(y_(g)), 1.0); };

  std::vector<Eigen::Triplet<double>> entries;
  std::size_t nnz = 0;
  for (const auto& cols : row_cols_) nnz += cols.size();
  entries.reserve(nnz);

  std::vector<double> delta(at(n), 0.0);
  for (const auto& group : colors_) {
    for (Index c : group.cols) {
      const Index g = active_[at(c)];
      const double base = y_(g);
      y_(g) = base + increment(g);
      delta[at(c)] = y_(g) - base;
    }
    eval_rows(t, group.rows_global);
    for (Index c : group.cols) {
      y_(active_[at(c)]) = u(c);
      for (Index r : col_rows_[at(c)]) {
        if (is_dense_row_[at(r)]) continue;
        const Index gr = active_[at(r)];
        entries.emplace_back(r, c, (fbuf_(gr) - f0_(gr)) / delta[at(c)]);
      }
    }
  }

  for (Index r : dense_rows_) {
    const Index gr = active_[at(r)];
    const Index row_list[1] = {gr};
    for (Index c : row_cols_[at(r)]) {
      const Index g = active_[at(c)];
      const double base = y_(g);
      y_(g) = base + increment(g);
      const double d = y_(g) - base;
      eval_rows(t, row_list);
      y_(g) = base;
      entries.emplace_back(r, c, (fbuf_(gr) - f0_(gr)) / d);
    }
  }

  SparseMatrix J(n, n);
  J.setFromTriplets(entries.begin(), entries.end());
  J.makeCompressed();
  return J;
}

Vector Subsystem::gather(const Vector& full) const {
  if (full_) return full;
  Vector out(size());
  for (Index k = 0; k < size(); ++k) out(k) = full(active_[at(k)]);
  return out;
}

void Subsystem::scatter(const Vector& local, Vector& full) const {
  if (full_) {
    full = local;
    return;
  }
  for (Index k = 0; k < size(); ++k) full(active_[at(k)]) = local(k);
}

}  // namespace mrk
