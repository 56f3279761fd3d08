#include "mrk/adapt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mrk {

std::string_view to_string(IntegrationMode mode) { return mode == IntegrationMode::single ? "single" : "multi"; }

IntegrationMode integration_mode_from_string(std::string_view s) {
  if (s == "single") return IntegrationMode::single;
  if (s == "multi") return IntegrationMode::multi;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected single or multi)");
}

std::string_view to_string(IntegrationStatus s) {
  switch (s) {
    case IntegrationStatus::success:
      return "success";
    case IntegrationStatus::step_size_underflow:
      return "step_size_underflow";
    case IntegrationStatus::attempt_limit:
      return "attempt_limit";
    case IntegrationStatus::nonfinite:
      return "nonfinite";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("solver config: " + what); };
  if (!(rtol >= 0.0 && atol >= 0.0) || rtol + atol <= 0.0) fail("tolerances must be non-negative and not both zero");
  if (!(safety.alpha > 0.0)) fail("alpha must be positive");
  if (!(safety.alpha_min > 0.0 && safety.alpha_min < 1.0)) fail("alpha_min must lie in (0, 1)");
  if (!(safety.alpha_max > 1.0)) fail("alpha_max must exceed 1");
  if (!(beta > 0.0)) fail("beta must be positive");
  if (!(phi > 0.0 && phi < 1.0)) fail("phi must lie in (0, 1)");
  if (!(h0 >= 0.0) || !(h_min >= 0.0)) fail("h0 and h_min must be non-negative");
  if (newton_max_iters < 1) fail("newton_max_iters must be at least 1");
  if (jac_a_refresh_period < 1) fail("jac_a_refresh_period must be at least 1");
  if (max_attempts < 1) fail("max_attempts must be positive");
  if (!std::is_sorted(output_times.begin(), output_times.end())) fail("output_times must be sorted");
}

NewtonConfig SolverConfig::newton() const {
  NewtonConfig cfg;
  cfg.max_iters = newton_max_iters;
  cfg.abs_tol = 0.01 * atol;
  cfg.rel_tol = 0.01 * rtol;
  cfg.strategy = jacobian_strategy;
  cfg.jac_a_refresh_period = jac_a_refresh_period;
  return cfg;
}

std::vector<double> uniform_grid(double t0, double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= t0)) throw std::invalid_argument("uniform_grid needs dt > 0 and t_end >= t0");
  const auto n = static_cast<std::int64_t>(std::floor((t_end - t0) / dt * (1.0 + 1e-12)));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n + 2));
  for (std::int64_t k = 0; k <= n; ++k) grid.push_back(std::min(t0 + static_cast<double>(k) * dt, t_end));
  if (grid.back() < t_end) {
    if (t_end - grid.back() <= 1e-9 * dt) {
      grid.back() = t_end;
    } else {
      grid.push_back(t_end);
    }
  }
  return grid;
}

StepStats& StepStats::operator+=(const StepStats& o) {
  accepted_global += o.accepted_global;
  rejected_global_error += o.rejected_global_error;
  rejected_global_convergence += o.rejected_global_convergence;
  accepted_fast += o.accepted_fast;
  rejected_fast_error += o.rejected_fast_error;
  rejected_fast_convergence += o.rejected_fast_convergence;
  global_rhs_calls += o.global_rhs_calls;
  global_jacobians += o.global_jacobians;
  local_rhs_calls += o.local_rhs_calls;
  local_jacobians += o.local_jacobians;
  newton_iterations += o.newton_iterations;
  factorizations += o.factorizations;
  global_stage_refreshes += o.global_stage_refreshes;
  local_stage_refreshes += o.local_stage_refreshes;
  wall_time += o.wall_time;
  return *this;
}

Partition select_partition(const Vector& eta, double phi, double beta) {
  const Index n = eta.size();
  Partition p;
  if (n == 0) return p;
  Index m = static_cast<Index>(std::floor(phi * static_cast<double>(n) * (1.0 + 1e-12)));
  m = n == 1 ? 0 : std::clamp<Index>(m, 1, n - 1);
  p.m = m;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return eta(a) > eta(b); });
  for (Index r = 0; r < n; ++r) {
    const double e = eta(order[static_cast<std::size_t>(r)]);
    if (r < m) {
      p.eta_f = std::max(p.eta_f, e);
    } else {
      p.eta_s = std::max(p.eta_s, e);
    }
  }
  if (!(p.eta_s <= beta)) {
    p.decision = PartitionDecision::reject;
  } else if (p.eta_f <= beta) {
    p.decision = PartitionDecision::accept;
  } else {
    p.decision = PartitionDecision::go_multirate;
    for (Index i = 0; i < n; ++i)
      if (eta(i) > beta) p.fast.push_back(i);
  }
  return p;
}

namespace {

using Clock = std::chrono::steady_clock;

double max_or_zero(const Vector& v) { return v.size() == 0 ? 0.0 : v.maxCoeff(); }

/// Weighted RMS norm used by the starting-step heuristic.
double weighted_rms(const Vector& v, const Vector& y, double rtol, double atol) {
  if (v.size() == 0) return 0.0;
  const Vector w = (rtol * y.cwiseAbs()).array() + atol;
  return std::sqrt((v.array() / w.array()).square().mean());
}

/// One RK step (or a pair of half steps) with the data needed to interpolate it.
struct Segment {
  StageSet stages;
  Vector u_end;
  Vector f_end;  // empty until known
};

/// Continuous representation of one accepted step in the coordinates of the
/// system that produced it. Times outside the step clamp to its ends.
struct StepInterpolant {
  InterpKind kind = InterpKind::linear;
  const DenseOutputCoeffs* coeffs = nullptr;
  std::vector<Segment> segments;

  double t_start() const { return segments.front().stages.t_n; }

  void eval(double t, std::span<const Index> indices, Vector& out) const {
    std::size_t k = 0;
    while (k + 1 < segments.size() && t >= segments[k + 1].stages.t_n) ++k;
    const Segment& s = segments[k];
    InterpData d;
    d.h = s.stages.h;
    d.u_n = &s.stages.u_n;
    d.u_next = &s.u_end;
    d.f_n = &s.stages.K.front();
    d.f_next = s.f_end.size() > 0 ? &s.f_end : nullptr;
    d.stages = &s.stages;
    d.coeffs = coeffs;
    const double tau = std::clamp((t - s.stages.t_n) / s.stages.h, 0.0, 1.0);
    interp_components(kind, d, tau, indices, out);
  }
};

/// Cubic Hermite through the previous accepted step, used for extrapolated
/// Newton guesses.
struct History {
  bool valid = false;
  double t0 = 0.0;
  double h = 0.0;
  Vector u0, u1, f0, f1;

  void set(double t, double step, const Vector& a, const Vector& b, const Vector& fa, const Vector& fb) {
    valid = true;
    t0 = t;
    h = step;
    u0 = a;
    u1 = b;
    f0 = fa;
    f1 = fb;
  }

  void eval(double t, Vector& out) const {
    const double tau = (t - t0) / h;
    const double s = 1.0 - tau;
    out = (1.0 + 2.0 * tau) * s * s * u0 + (3.0 - 2.0 * tau) * tau * tau * u1 + h * tau * s * s * f0 +
          h * (tau - 1.0) * tau * tau * f1;
  }
};

enum class AttemptStatus { ok, convergence_failure, nonfinite };

struct Attempt {
  AttemptStatus status = AttemptStatus::ok;
  Vector u_next;
  Vector u_hat;
  StepInterpolant interp;
};

bool all_finite(const Vector& v) { return v.allFinite(); }

/// Output sampler over a sorted time grid.
class Sampler {
 public:
  Sampler(const SolverConfig& cfg, Index n) : times_(&cfg.output_times) {
    if (cfg.output_indices.empty()) {
      indices_.resize(static_cast<std::size_t>(n));
      std::iota(indices_.begin(), indices_.end(), Index{0});
    } else {
      indices_ = cfg.output_indices;
      for (Index i : indices_)
        if (i < 0 || i >= n) throw std::invalid_argument("output index out of range");
    }
    scratch_ = Vector::Zero(n);
  }

  const IndexList& indices() const { return indices_; }
  bool pending_in(double t_end) const { return next_ < times_->size() && (*times_)[next_] <= t_end; }

  /// Records every pending time <= t using `value(t, scratch)` to fill the
  /// sampled components of a full-length scratch vector.
  template <class F>
  void take_until(double t, F&& value, IntegrationResult& out) {
    while (next_ < times_->size() && (*times_)[next_] <= t) {
      const double s = (*times_)[next_];
      value(s, scratch_);
      Vector row(static_cast<Index>(indices_.size()));
      for (std::size_t k = 0; k < indices_.size(); ++k) row(static_cast<Index>(k)) = scratch_(indices_[k]);
      out.output_times.push_back(s);
      out.outputs.push_back(std::move(row));
      ++next_;
    }
  }

 private:
  const std::vector<double>* times_;
  IndexList indices_;
  Vector scratch_;
  std::size_t next_ = 0;
};

/// Fast refinement result.
struct Refinement {
  bool ok = true;
  Vector u_fast;  // local coordinates
  std::vector<double> substeps;
  std::vector<StepInterpolant> pieces;
};

class Driver {
 public:
  Driver(const OdeProblem& problem, const ButcherTableau& method, const SolverConfig& cfg)
      : problem_(problem), method_(method), cfg_(cfg), newton_(cfg.newton()), global_(problem) {
    cfg_.validate();
    q_ = method_.error_order();
    doubling_ = !method_.has_embedded();
    kind_ = cfg_.interp;
    if (kind_ == InterpKind::dense && (!method_.dense || doubling_)) kind_ = InterpKind::hermite;
    coeffs_ = method_.dense ? &*method_.dense : nullptr;
    const double span = problem_.t_end() - problem_.t0();
    h_min_ = cfg_.h_min > 0.0 ? cfg_.h_min : 1e-12 * std::max(span, 1e-300);
  }

  IntegrationResult run(bool multirate);
  MultirateStepResult single_multirate_step(double t_n, const Vector& u_n, double h_n,
                                            const MultirateStepOptions& options);

 private:
  struct GlobalOutcome {
    StepOutcome outcome = StepOutcome::accepted_global;
    Vector u_next;
    Partition partition;
    double h_next = 0.0;
    Attempt attempt;
    Refinement refinement;
  };

  Attempt attempt(Subsystem& sys, JacobianCache& cache, const History* history, double t, const Vector& u,
                  const Vector& f, double h);
  StepResult one_step(Subsystem& sys, JacobianCache& cache, const History* history, double t, const Vector& u,
                      const Vector* f, double h);

  GlobalOutcome global_step(double t, const Vector& u, const Vector& f, double h, bool multirate,
                            const MultirateStepOptions& options, std::int64_t step_index);
  Refinement refine(const Attempt& global, double t, const Vector& u, double h, const IndexList& fast, double eta_f,
                    const MultirateStepOptions& options, std::int64_t step_index);

  void prepare_global_jacobian(double t, const Vector& u);
  double initial_step(double t, const Vector& u, const Vector& f);
  void flush_work();
  void record(std::int64_t step, double t0, double t1, StepKind kind, const IndexList* active);

  const OdeProblem& problem_;
  const ButcherTableau& method_;
  SolverConfig cfg_;
  NewtonConfig newton_;
  Subsystem global_;
  JacobianCache global_cache_;
  History global_history_;
  WorkCounters local_work_;
  int q_ = 1;
  bool doubling_ = false;
  InterpKind kind_ = InterpKind::hermite;
  const DenseOutputCoeffs* coeffs_ = nullptr;
  double h_min_ = 0.0;
  std::int64_t attempts_ = 0;
  StepStats stats_;
  std::vector<ActivityRecord> activity_;
};

void Driver::record(std::int64_t step, double t0, double t1, StepKind kind, const IndexList* active) {
  if (!cfg_.record_activity) return;
  ActivityRecord r;
  r.step_index = step;
  r.t_start = t0;
  r.t_end = t1;
  r.kind = kind;
  if (active != nullptr) r.active = *active;
  activity_.push_back(std::move(r));
}

void Driver::flush_work() {
  stats_.global_rhs_calls = global_.counters.rhs_calls;
  stats_.global_jacobians = global_.counters.jacobians;
  stats_.local_rhs_calls = local_work_.rhs_calls;
  stats_.local_jacobians = local_work_.jacobians;
  stats_.newton_iterations = global_.counters.newton_iterations + local_work_.newton_iterations;
  stats_.factorizations = global_.counters.factorizations + local_work_.factorizations;
  stats_.global_stage_refreshes = global_.counters.stage_refreshes;
  stats_.local_stage_refreshes = local_work_.stage_refreshes;
}

StepResult Driver::one_step(Subsystem& sys, JacobianCache& cache, const History* history, double t,
                            const Vector& u, const Vector* f, double h) {
  if (!method_.implicit()) return rk_step(sys, method_, t, u, h, {}, f);
  StagePredictor predictor;
  if (history != nullptr && history->valid && cfg_.extrapolate_guess)
    predictor = [history](double ts, Vector& guess) { history->eval(ts, guess); };
  ImplicitContext ctx{&cache, &newton_, &predictor};
  return rk_step(sys, method_, t, u, h, ctx, f);
}

Attempt Driver::attempt(Subsystem& sys, JacobianCache& cache, const History* history, double t, const Vector& u,
                        const Vector& f, double h) {
  Attempt a;
  a.interp.kind = kind_;
  a.interp.coeffs = coeffs_;
  auto failed = [&](const StepResult& r) {
    a.status = r.status == StepStatus::convergence_failure ? AttemptStatus::convergence_failure
                                                            : AttemptStatus::nonfinite;
    return a;
  };

  if (!doubling_) {
    StepResult r = one_step(sys, cache, history, t, u, &f, h);
    if (!r.ok()) return failed(r);
    a.u_next = std::move(r.u_next);
    a.u_hat = std::move(r.u_hat);
    a.interp.segments.push_back({std::move(r.stages), a.u_next, Vector()});
  } else {
    // Richardson estimate from one full step and two half steps.
    StepResult full = one_step(sys, cache, history, t, u, &f, h);
    if (!full.ok()) return failed(full);
    StepResult first = one_step(sys, cache, history, t, u, &f, 0.5 * h);
    if (!first.ok()) return failed(first);
    StepResult second = one_step(sys, cache, history, t + 0.5 * h, first.u_next, nullptr, 0.5 * h);
    if (!second.ok()) return failed(second);
    const double scale = 1.0 / (std::ldexp(1.0, method_.order) - 1.0);
    a.u_next = second.u_next;
    a.u_hat = second.u_next + scale * (full.u_next - second.u_next);
    Segment s1{std::move(first.stages), first.u_next, second.stages.K.front()};
    Segment s2{std::move(second.stages), a.u_next, Vector()};
    a.interp.segments.push_back(std::move(s1));
    a.interp.segments.push_back(std::move(s2));
  }
  if (!all_finite(a.u_next) || !all_finite(a.u_hat)) {
    a.status = AttemptStatus::nonfinite;
    return a;
  }
  return a;
}

void Driver::prepare_global_jacobian(double t, const Vector& u) {
  if (!method_.implicit()) return;
  const bool jac_a = newton_.strategy == JacobianStrategy::jac_a;
  if (!jac_a || !global_cache_.valid() || global_cache_.age() >= newton_.jac_a_refresh_period)
    global_cache_.refresh(global_, t, u, newton_);
}

double Driver::initial_step(double t, const Vector& u, const Vector& f) {
  const double span = problem_.t_end() - t;
  if (cfg_.h0 > 0.0) return std::min(cfg_.h0, span);
  const double d0 = weighted_rms(u, u, cfg_.rtol, cfg_.atol);
  const double d1 = weighted_rms(f, u, cfg_.rtol, cfg_.atol);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  const Vector u1 = u + h0 * f;
  Vector f1;
  global_.eval(t + h0, u1, f1);
  const double d2 = weighted_rms(f1 - f, u, cfg_.rtol, cfg_.atol) / h0;
  const double d = std::max(d1, d2);
  const double h1 = d <= 1e-15 ? std::max(1e-6, 1e-3 * h0) : std::pow(0.01 / d, 1.0 / (method_.order + 1));
  return std::max(std::min({100.0 * h0, h1, span}), h_min_);
}

Refinement Driver::refine(const Attempt& global, double t, const Vector& u, double h, const IndexList& fast,
                          double eta_f, const MultirateStepOptions& options, std::int64_t step_index) {
  Refinement out;
  const double t_end = t + h;
  const StepInterpolant* background = &global.interp;
  Subsystem sys(problem_, fast,
                [background](double ts, std::span<const Index> idx, Vector& y) { background->eval(ts, idx, y); });
  JacobianCache cache;
  History history;
  const bool implicit = method_.implicit();
  const bool jac_a = newton_.strategy == JacobianStrategy::jac_a;

  Vector uf = sys.gather(u);
  Vector ff;
  sys.eval(t, uf, ff);
  const int fixed = options.fixed_substeps;
  double hf = fixed > 0 ? h / fixed : new_step_size(h, eta_f, q_, cfg_.safety);
  double tf = t;
  int taken = 0;

  auto finish = [&](bool ok) {
    local_work_ += sys.counters;
    out.ok = ok;
    out.u_fast = uf;
    return out;
  };

  while (tf < t_end) {
    if (++attempts_ > cfg_.max_attempts) return finish(false);
    bool last = false;
    if (fixed > 0) {
      last = taken + 1 == fixed;
      if (last) hf = t_end - tf;
    } else if (tf + hf * (1.0 + 1e-12) >= t_end) {
      hf = t_end - tf;
      last = true;
    }
    if (!(hf >= h_min_) && !last) return finish(false);

    if (implicit && (!jac_a || !cache.valid() || cache.age() >= newton_.jac_a_refresh_period))
      cache.refresh(sys, tf, uf, newton_);

    Attempt a = attempt(sys, cache, &history, tf, uf, ff, hf);
    if (a.status != AttemptStatus::ok) {
      if (fixed > 0) return finish(false);
      if (a.status == AttemptStatus::convergence_failure) {
        ++stats_.rejected_fast_convergence;
        if (jac_a) cache.invalidate();
        hf *= 0.5;
      } else {
        ++stats_.rejected_fast_error;
        hf *= cfg_.safety.alpha_min;
      }
      if (hf < h_min_) return finish(false);
      continue;
    }
    const double eta = max_or_zero(error_quotients(a.u_next, a.u_hat, cfg_.rtol, cfg_.atol));
    if (fixed == 0 && eta > cfg_.beta) {
      ++stats_.rejected_fast_error;
      hf = new_step_size(hf, eta, q_, cfg_.safety);
      if (hf < h_min_) return finish(false);
      continue;
    }

    ++stats_.accepted_fast;
    ++taken;
    const double t_next = last ? t_end : tf + hf;
    record(step_index, tf, t_next, StepKind::fast, &fast);
    out.substeps.push_back(t_next - tf);
    if (implicit) cache.tick();
    Vector u_prev = std::move(uf);
    Vector f_prev = std::move(ff);
    uf = std::move(a.u_next);
    out.pieces.push_back(std::move(a.interp));
    if (!last) {
      sys.eval(t_next, uf, ff);
      if (kind_ == InterpKind::hermite) out.pieces.back().segments.back().f_end = ff;
      if (implicit && cfg_.extrapolate_guess) history.set(tf, t_next - tf, u_prev, uf, f_prev, ff);
    }
    tf = t_next;
    if (fixed == 0) hf = new_step_size(hf, eta, q_, cfg_.safety);
  }
  return finish(true);
}

Driver::GlobalOutcome Driver::global_step(double t, const Vector& u, const Vector& f, double h, bool multirate,
                                          const MultirateStepOptions& options, std::int64_t step_index) {
  GlobalOutcome g;
  prepare_global_jacobian(t, u);
  g.attempt = attempt(global_, global_cache_, &global_history_, t, u, f, h);
  if (g.attempt.status == AttemptStatus::convergence_failure) {
    ++stats_.rejected_global_convergence;
    if (newton_.strategy == JacobianStrategy::jac_a) global_cache_.invalidate();
    g.outcome = StepOutcome::rejected_convergence;
    g.h_next = 0.5 * h;
    return g;
  }
  if (g.attempt.status == AttemptStatus::nonfinite) {
    ++stats_.rejected_global_error;
    g.partition.eta_s = std::numeric_limits<double>::infinity();
    g.outcome = StepOutcome::rejected_error;
    g.h_next = cfg_.safety.alpha_min * h;
    return g;
  }

  const Vector eta = error_quotients(g.attempt.u_next, g.attempt.u_hat, cfg_.rtol, cfg_.atol);
  if (!multirate) {
    g.partition.eta_s = max_or_zero(eta);
    g.partition.decision = g.partition.eta_s <= cfg_.beta ? PartitionDecision::accept : PartitionDecision::reject;
  } else if (options.forced_fast) {
    g.partition.fast = *options.forced_fast;
    for (Index i = 0; i < eta.size(); ++i) {
      double& bound =
          std::binary_search(g.partition.fast.begin(), g.partition.fast.end(), i) ? g.partition.eta_f : g.partition.eta_s;
      bound = std::max(bound, eta(i));
    }
    g.partition.decision = g.partition.fast.empty() ? PartitionDecision::accept : PartitionDecision::go_multirate;
  } else {
    g.partition = select_partition(eta, cfg_.phi, cfg_.beta);
  }
  const double h_next = new_step_size(h, g.partition.eta_s, q_, cfg_.safety);

  switch (g.partition.decision) {
    case PartitionDecision::reject:
      ++stats_.rejected_global_error;
      g.outcome = StepOutcome::rejected_error;
      g.h_next = h_next;
      return g;
    case PartitionDecision::accept:
      ++stats_.accepted_global;
      record(step_index, t, t + h, StepKind::global, nullptr);
      g.outcome = StepOutcome::accepted_global;
      g.u_next = g.attempt.u_next;
      g.h_next = h_next;
      return g;
    case PartitionDecision::go_multirate:
      break;
  }

  if (kind_ == InterpKind::hermite) global_.eval(t + h, g.attempt.u_next, g.attempt.interp.segments.back().f_end);
  const std::size_t activity_mark = activity_.size();
  record(step_index, t, t + h, StepKind::global, nullptr);
  g.refinement = refine(g.attempt, t, u, h, g.partition.fast, g.partition.eta_f, options, step_index);
  if (!g.refinement.ok) {
    activity_.resize(activity_mark);
    ++stats_.rejected_global_convergence;
    if (newton_.strategy == JacobianStrategy::jac_a) global_cache_.invalidate();
    g.outcome = StepOutcome::rejected_convergence;
    g.h_next = 0.5 * h;
    return g;
  }
  ++stats_.accepted_global;
  g.outcome = StepOutcome::accepted_multirate;
  g.u_next = g.attempt.u_next;
  for (std::size_t k = 0; k < g.partition.fast.size(); ++k)
    g.u_next(g.partition.fast[k]) = g.refinement.u_fast(static_cast<Index>(k));
  g.h_next = h_next;
  return g;
}

IntegrationResult Driver::run(bool multirate) {
  const auto started = Clock::now();
  IntegrationResult res;
  const double t_end = problem_.t_end();
  double t = problem_.t0();
  Vector u = problem_.initial_state();
  const Index n = u.size();
  if (n != problem_.size()) throw std::invalid_argument("initial state size does not match the problem");

  Sampler sampler(cfg_, n);
  res.output_indices = sampler.indices();
  sampler.take_until(t, [&](double, Vector& y) { y = u; }, res);

  Vector f;
  global_.eval(t, u, f);
  double h = std::min(initial_step(t, u, f), t_end - t);
  std::int64_t step_index = 0;
  const MultirateStepOptions no_options;

  auto fail = [&](IntegrationStatus status, const std::string& msg) {
    res.status = status;
    res.message = msg + " at t = " + std::to_string(t) + " with h = " + std::to_string(h);
  };

  while (t < t_end) {
    if (++attempts_ > cfg_.max_attempts) {
      fail(IntegrationStatus::attempt_limit, "attempt limit reached");
      break;
    }
    bool last = false;
    if (t + h * (1.0 + 1e-12) >= t_end) {
      h = t_end - t;
      last = true;
    }
    if (h < h_min_ && !last) {
      fail(IntegrationStatus::step_size_underflow, "step size below h_min");
      break;
    }

    GlobalOutcome g = global_step(t, u, f, h, multirate, no_options, step_index);
    if (g.outcome == StepOutcome::rejected_convergence || g.outcome == StepOutcome::rejected_error) {
      h = g.h_next;
      if (h < h_min_) {
        fail(g.attempt.status == AttemptStatus::nonfinite ? IntegrationStatus::nonfinite
                                                          : IntegrationStatus::step_size_underflow,
             "step size below h_min after rejection");
        break;
      }
      continue;
    }

    const double t_next = last ? t_end : t + h;
    if (method_.implicit()) global_cache_.tick();
    Vector f_next;
    if (kind_ == InterpKind::hermite && g.outcome == StepOutcome::accepted_global) {
      global_.eval(t_next, g.u_next, f_next);
      g.attempt.interp.segments.back().f_end = f_next;
    }

    if (sampler.pending_in(t_next)) {
      const auto& fast = g.partition.fast;
      auto& pieces = g.refinement.pieces;
      IndexList out_fast_global, out_fast_local;
      if (g.outcome == StepOutcome::accepted_multirate) {
        for (Index i : sampler.indices()) {
          auto it = std::lower_bound(fast.begin(), fast.end(), i);
          if (it != fast.end() && *it == i) {
            out_fast_global.push_back(i);
            out_fast_local.push_back(static_cast<Index>(it - fast.begin()));
          }
        }
      }
      Vector local(static_cast<Index>(fast.size()));
      auto value = [&](double s, Vector& y) {
        if (s >= t_next) {
          y = g.u_next;
          return;
        }
        g.attempt.interp.eval(s, sampler.indices(), y);
        if (out_fast_global.empty()) return;
        std::size_t k = 0;
        while (k + 1 < pieces.size() && s >= pieces[k + 1].t_start()) ++k;
        StepInterpolant& piece = pieces[k];
        Segment& tail = piece.segments.back();
        if (kind_ == InterpKind::hermite && tail.f_end.size() == 0) {
          // The final fast piece gets its end derivative on first use.
          Subsystem sys(problem_, fast, [&](double ts, std::span<const Index> idx, Vector& yy) {
            g.attempt.interp.eval(ts, idx, yy);
          });
          sys.eval(t_next, g.refinement.u_fast, tail.f_end);
          local_work_ += sys.counters;
        }
        piece.eval(s, out_fast_local, local);
        for (std::size_t j = 0; j < out_fast_global.size(); ++j) y(out_fast_global[j]) = local(out_fast_local[j]);
      };
      sampler.take_until(t_next, value, res);
    }

    ++step_index;
    const Vector u_prev = u;
    const Vector f_prev = f;
    const double t_prev = t;
    u = std::move(g.u_next);
    t = t_next;
    if (f_next.size() > 0) {
      f = std::move(f_next);
    } else {
      global_.eval(t, u, f);
    }
    if (method_.implicit() && cfg_.extrapolate_guess) global_history_.set(t_prev, t - t_prev, u_prev, u, f_prev, f);
    h = g.h_next;
  }

  res.t_final = t;
  res.y_final = u;
  flush_work();
  stats_.wall_time = std::chrono::duration<double>(Clock::now() - started).count();
  res.stats = stats_;
  res.activity = std::move(activity_);
  return res;
}

MultirateStepResult Driver::single_multirate_step(double t_n, const Vector& u_n, double h_n,
                                                  const MultirateStepOptions& options) {
  Vector f;
  global_.eval(t_n, u_n, f);
  GlobalOutcome g = global_step(t_n, u_n, f, h_n, true, options, 0);
  MultirateStepResult r;
  r.outcome = g.outcome;
  r.u_next = std::move(g.u_next);
  r.global_u_next = g.attempt.u_next;
  r.fast = g.partition.fast;
  r.eta_s = g.partition.eta_s;
  r.eta_f = g.partition.eta_f;
  r.h_next = g.h_next;
  r.substeps = g.refinement.substeps;
  r.activity = activity_;
  flush_work();
  r.stats = stats_;
  return r;
}

}  // namespace

IntegrationResult integrate_single_rate(const OdeProblem& problem, const ButcherTableau& method,
                                        const SolverConfig& config) {
  Driver d(problem, method, config);
  return d.run(false);
}

IntegrationResult integrate_multirate(const OdeProblem& problem, const ButcherTableau& method,
                                      const SolverConfig& config) {
  Driver d(problem, method, config);
  return d.run(true);
}

IntegrationResult integrate(const OdeProblem& problem, const ButcherTableau& method, const SolverConfig& config) {
  return config.mode == IntegrationMode::multi ? integrate_multirate(problem, method, config)
                                               : integrate_single_rate(problem, method, config);
}

MultirateStepResult multirate_step(const OdeProblem& problem, const ButcherTableau& method,
                                   const SolverConfig& config, double t_n, const Vector& u_n, double h_n,
                                   const MultirateStepOptions& options) {
  if (options.forced_fast) {
    const IndexList& fast = *options.forced_fast;
    if (!std::is_sorted(fast.begin(), fast.end()) || std::adjacent_find(fast.begin(), fast.end()) != fast.end())
      throw std::invalid_argument("forced fast set must be sorted and unique");
    if (!fast.empty() && (fast.front() < 0 || fast.back() >= u_n.size()))
      throw std::invalid_argument("forced fast index out of range");
  }
  if (options.fixed_substeps < 0) throw std::invalid_argument("fixed_substeps must be non-negative");
  Driver d(problem, method, config);
  return d.single_multirate_step(t_n, u_n, h_n, options);
}

}  // namespace mrk
