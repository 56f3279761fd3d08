#pragma once

#include "mrk/problem.hpp"

#include <functional>
#include <span>

namespace mrk {

/// Writes values of inactive components y(i), i in `indices`, at time t.
using BackgroundFill = std::function<void(double t, std::span<const Index> indices, Vector& y)>;

/// The active part of an OdeProblem as a standalone system in local
/// coordinates. Inactive components that active rows read are supplied by a
/// BackgroundFill; no other inactive component is ever touched.
///
/// A Subsystem owns its scratch buffers and is not safe to share across
/// threads.
class Subsystem {
 public:
  /// The full system.
  explicit Subsystem(const OdeProblem& problem);

  /// The rows in `active` (sorted, unique) with inactive inputs from `fill`.
  Subsystem(const OdeProblem& problem, IndexList active, BackgroundFill fill);

  const OdeProblem& problem() const { return *problem_; }
  Index size() const { return static_cast<Index>(active_.size()); }
  bool full() const { return full_; }
  const IndexList& active() const { return active_; }

  /// Inactive indices read by active rows.
  const IndexList& closure() const { return closure_; }

  /// Local RHS; counts one RHS call.
  void eval(double t, const Vector& u, Vector& f);

  /// Local Jacobian d f_active / d u_active. Uses the problem's analytic
  /// Jacobian for the full system when available, otherwise column-colored
  /// forward differences over the dependency pattern. Counts one Jacobian;
  /// difference evaluations are not counted as RHS calls.
  SparseMatrix jacobian(double t, const Vector& u);

  Vector gather(const Vector& full) const;
  void scatter(const Vector& local, Vector& full) const;

  /// Number of colors in the difference-Jacobian column grouping.
  int color_count() const { return static_cast<int>(colors_.size()); }

  WorkCounters counters;

 private:
  struct ColorGroup {
    IndexList cols;         // local columns perturbed together
    IndexList rows_global;  // rows affected, dense rows excluded
  };

  void build_pattern();
  void load(double t, const Vector& u);
  void eval_rows(double t, std::span<const Index> rows_global);

  const OdeProblem* problem_;
  bool full_ = true;
  IndexList active_;
  IndexList closure_;
  BackgroundFill fill_;

  std::vector<Index> local_of_;             // global -> local, -1 when inactive
  std::vector<IndexList> row_cols_;         // local pattern per local row
  std::vector<IndexList> col_rows_;         // transpose pattern
  std::vector<ColorGroup> colors_;
  IndexList dense_rows_;                    // local rows handled column by column
  std::vector<char> is_dense_row_;

  Vector y_;     // full-length state: active values plus background
  Vector fbuf_;  // full-length RHS output
  Vector f0_;
};

}  // namespace mrk
