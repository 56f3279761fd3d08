#pragma once

/// Randomized property checks of the multirate controller, shared by the
/// unit tests and the acceptance suite.

#include "mrk/adapt.hpp"
#include "mrk/interp.hpp"
#include "mrk/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace mrk::props {

struct TraceReport {
  int traces = 0;
  int multirate_steps = 0;     ///< single steps that refined a fast set
  int integrated_steps = 0;    ///< global steps of the integrated traces
  int checks = 0;
  int failures = 0;
  double worst_tiling = 0.0;   ///< max |sum of sub-steps - h| / h
  double worst_endpoint = 0.0; ///< max |Q(1) - u_{n+1}| relative to the step's data
  int integrated_multirate = 0; ///< integrated global steps with fast refinement
  std::vector<std::string> messages;

  bool ok() const { return failures == 0 && traces > 0; }
};

namespace detail {

inline void expect(TraceReport& rep, bool cond, int trace, const std::string& what) {
  ++rep.checks;
  if (cond) return;
  ++rep.failures;
  if (rep.messages.size() < 10) rep.messages.push_back("trace " + std::to_string(trace) + ": " + what);
}

/// Reference partition: explicit ranking by (eta descending, index ascending).
inline Partition reference_partition(const Vector& eta, double phi, double beta) {
  const Index n = eta.size();
  Partition p;
  Index m = static_cast<Index>(std::floor(phi * static_cast<double>(n) * (1.0 + 1e-12)));
  m = n == 1 ? 0 : std::clamp<Index>(m, 1, n - 1);
  p.m = m;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return eta(a) != eta(b) ? eta(a) > eta(b) : a < b; });
  for (Index r = 0; r < n; ++r) {
    double& bound = r < m ? p.eta_f : p.eta_s;
    bound = std::max(bound, eta(order[static_cast<std::size_t>(r)]));
  }
  if (p.eta_s > beta) {
    p.decision = PartitionDecision::reject;
  } else if (p.eta_f <= beta) {
    p.decision = PartitionDecision::accept;
  } else {
    p.decision = PartitionDecision::go_multirate;
    for (Index r = 0; r < m; ++r) {
      const Index i = order[static_cast<std::size_t>(r)];
      if (eta(i) > beta) p.fast.push_back(i);
    }
    std::sort(p.fast.begin(), p.fast.end());
  }
  return p;
}

/// Random stiff test problem: a weakly coupled linear chain or a nonlinear
/// forced relaxation chain with rates spread over several decades.
inline std::unique_ptr<OdeProblem> random_problem(std::mt19937_64& rng, Index n, bool stiff_ok, double t_end) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double top = stiff_ok ? 4.0 : 2.5;
  Vector rate(n);
  for (Index i = 0; i < n; ++i) rate(i) = std::pow(10.0, -1.0 + (top + 1.0) * unit(rng));
  Vector y0(n);
  for (Index i = 0; i < n; ++i) y0(i) = 2.0 * unit(rng) - 1.0;
  if (unit(rng) < 0.5) {
    Matrix L = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      L(i, i) = -rate(i);
      if (i > 0) L(i, i - 1) = 0.3 * (2.0 * unit(rng) - 1.0);
      if (i + 1 < n) L(i, i + 1) = 0.3 * (2.0 * unit(rng) - 1.0);
    }
    return std::make_unique<LinearProblem>(L, y0, 0.0, t_end);
  }
  Vector omega(n);
  for (Index i = 0; i < n; ++i) omega(i) = 1.0 + 20.0 * unit(rng);
  std::vector<IndexList> deps(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    for (Index j = std::max<Index>(0, i - 1); j <= std::min(n - 1, i + 1); ++j) deps[static_cast<std::size_t>(i)].push_back(j);
  auto f = [rate, omega, n](double t, const Vector& y, Vector& dy) {
    dy.resize(n);
    for (Index i = 0; i < n; ++i) {
      const double left = i > 0 ? y(i - 1) : 0.0;
      const double right = i + 1 < n ? y(i + 1) : 0.0;
      dy(i) = -rate(i) * (y(i) - std::sin(omega(i) * t)) + 0.2 * left * right - 0.1 * y(i) * y(i) * y(i);
    }
  };
  return std::make_unique<FunctionProblem>("relaxation", f, y0, 0.0, t_end, deps);
}

inline bool same(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace detail

/// Runs `count` randomized traces. Each trace draws a problem, method,
/// interpolant and tolerances, then checks one controller step (partition
/// rules, slow bitwise equality, sub-step tiling, determinism, interpolant
/// endpoints) and a short integration (activity tiling).
inline TraceReport run_controller_traces(int count, std::uint64_t seed) {
  using detail::expect;
  TraceReport rep;
  const auto& names = method_names();
  const InterpKind kinds[] = {InterpKind::linear, InterpKind::hermite, InterpKind::dense};
  for (int trace = 0; trace < count; ++trace) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(trace));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& method = get_method(names[static_cast<std::size_t>(rng() % names.size())]);
    const Index n = 2 + static_cast<Index>(rng() % 11);
    const auto problem = detail::random_problem(rng, n, method.implicit(), 0.05 + 0.15 * unit(rng));

    SolverConfig cfg;
    cfg.mode = IntegrationMode::multi;
    cfg.rtol = cfg.atol = std::pow(10.0, -7.0 + 4.0 * unit(rng));
    cfg.phi = 0.1 + 0.4 * unit(rng);
    cfg.interp = kinds[rng() % 3];
    const InterpKind used = cfg.interp == InterpKind::dense && !method.dense ? InterpKind::hermite : cfg.interp;

    // ---- one controller step
    Vector u_n(n);
    for (Index i = 0; i < n; ++i) u_n(i) = 2.0 * unit(rng) - 1.0;
    const double t_n = unit(rng);
    const double h = std::pow(10.0, -3.0 + 2.5 * unit(rng));
    const auto r = multirate_step(*problem, method, cfg, t_n, u_n, h);
    const auto again = multirate_step(*problem, method, cfg, t_n, u_n, h);
    expect(rep, r.outcome == again.outcome && r.fast == again.fast && detail::same(r.u_next, again.u_next) &&
                    r.substeps == again.substeps && r.h_next == again.h_next,
           trace, "repeated step differs");

    if (r.outcome == StepOutcome::rejected_error) expect(rep, r.eta_s > cfg.beta, trace, "rejection with eta_s <= beta");
    if (r.outcome == StepOutcome::accepted_global) {
      expect(rep, detail::same(r.u_next, r.global_u_next), trace, "global acceptance altered the state");
      expect(rep, r.fast.empty() && r.substeps.empty(), trace, "global acceptance with a fast set");
    }
    if (r.outcome == StepOutcome::accepted_multirate) {
      ++rep.multirate_steps;
      expect(rep, r.eta_s <= cfg.beta && r.eta_f > cfg.beta, trace, "multirate step outside its partition case");
      expect(rep, !r.fast.empty() && std::is_sorted(r.fast.begin(), r.fast.end()), trace, "fast set not sorted");
      const Index m = std::clamp<Index>(static_cast<Index>(std::floor(cfg.phi * static_cast<double>(n) * (1.0 + 1e-12))), 1, n - 1);
      expect(rep, static_cast<Index>(r.fast.size()) <= m, trace, "fast set exceeds the cap");
      for (Index i = 0; i < n; ++i) {
        if (std::binary_search(r.fast.begin(), r.fast.end(), i)) continue;
        expect(rep, std::bit_cast<std::uint64_t>(r.u_next(i)) == std::bit_cast<std::uint64_t>(r.global_u_next(i)), trace,
               "slow component " + std::to_string(i) + " differs from the global step");
      }
      double sum = 0.0;
      for (double s : r.substeps) {
        expect(rep, s > 0.0, trace, "nonpositive sub-step");
        sum += s;
      }
      const double tiling = std::abs(sum - h) / h;
      rep.worst_tiling = std::max(rep.worst_tiling, tiling);
      expect(rep, tiling <= 1e-12, trace, "sub-steps do not tile the global step");
      std::vector<const ActivityRecord*> fast_records;
      for (const auto& a : r.activity)
        if (a.kind == StepKind::fast) fast_records.push_back(&a);
      expect(rep, fast_records.size() == r.substeps.size(), trace, "fast records do not match sub-steps");
      if (!fast_records.empty()) {
        expect(rep, fast_records.front()->t_start == t_n && fast_records.back()->t_end == t_n + h, trace,
               "fast records do not start and end with the global step");
        for (std::size_t k = 1; k < fast_records.size(); ++k)
          expect(rep, fast_records[k]->t_start == fast_records[k - 1]->t_end, trace, "gap between fast records");
        for (const auto* a : fast_records) expect(rep, a->active == r.fast, trace, "fast record lists another set");
      }
    }

    // ---- interpolant endpoints of the global step
    const auto g = rk_step(*problem, u_n, t_n, h, method, cfg.newton());
    if (g.ok()) {
      const double scale = std::max(1.0, g.u_next.cwiseAbs().maxCoeff());
      // Without an embedded pair the global step is taken by step doubling.
      if (method.has_embedded() && r.outcome != StepOutcome::rejected_convergence)
        expect(rep, r.global_u_next.size() == n && (g.u_next - r.global_u_next).cwiseAbs().maxCoeff() <= 1e-12 * scale,
               trace, "global step differs from a plain step");
      Vector f_n(n), f_next(n);
      problem->rhs(t_n, u_n, f_n);
      problem->rhs(t_n + h, g.u_next, f_next);
      InterpData data;
      data.h = h;
      data.u_n = &u_n;
      data.u_next = &g.u_next;
      data.f_n = &f_n;
      data.f_next = &f_next;
      data.stages = &g.stages;
      data.coeffs = method.dense ? &*method.dense : nullptr;
      expect(rep, detail::same(interp_value(used, data, 0.0), u_n), trace, "Q(0) differs from u_n");
      double stage_scale = scale;
      for (const auto& K : g.stages.K) stage_scale = std::max(stage_scale, h * K.cwiseAbs().maxCoeff());
      const double end = (interp_value(used, data, 1.0) - g.u_next).cwiseAbs().maxCoeff() / stage_scale;
      rep.worst_endpoint = std::max(rep.worst_endpoint, end);
      expect(rep, end <= 1e-12, trace, "Q(1) differs from u_{n+1}");
    }

    // ---- partition ranking with ties
    {
      Vector eta(n);
      for (Index i = 0; i < n; ++i) eta(i) = 0.5 * static_cast<double>(rng() % 5);
      const auto p = select_partition(eta, cfg.phi, cfg.beta);
      const auto ref = detail::reference_partition(eta, cfg.phi, cfg.beta);
      expect(rep, p.decision == ref.decision && p.fast == ref.fast && p.m == ref.m && p.eta_s == ref.eta_s &&
                      p.eta_f == ref.eta_f,
             trace, "partition differs from the reference ranking");
      std::vector<Index> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      Vector permuted(n);
      for (Index i = 0; i < n; ++i) permuted(i) = eta(perm[static_cast<std::size_t>(i)]);
      const auto q = select_partition(permuted, cfg.phi, cfg.beta);
      IndexList mapped;
      for (Index i : q.fast) mapped.push_back(perm[static_cast<std::size_t>(i)]);
      std::sort(mapped.begin(), mapped.end());
      expect(rep, q.decision == p.decision && mapped == p.fast && q.eta_s == p.eta_s && q.eta_f == p.eta_f, trace,
             "partition depends on the component ordering");
    }

    // ---- short integration: activity tiling
    {
      const auto run = integrate_multirate(*problem, method, cfg);
      expect(rep, run.ok(), trace, "integration failed: " + run.message);
      std::map<std::int64_t, std::pair<const ActivityRecord*, std::vector<const ActivityRecord*>>> by_step;
      double t_prev = problem->t0();
      for (const auto& a : run.activity) {
        if (a.kind == StepKind::global) {
          expect(rep, a.t_start == t_prev && a.active.empty(), trace, "global records are not contiguous");
          t_prev = a.t_end;
          by_step[a.step_index].first = &a;
        } else {
          by_step[a.step_index].second.push_back(&a);
        }
      }
      if (run.ok()) expect(rep, t_prev == problem->t_end(), trace, "global records stop before t_end");
      for (const auto& [step, recs] : by_step) {
        ++rep.integrated_steps;
        const auto* gl = recs.first;
        expect(rep, gl != nullptr, trace, "fast records without a global record");
        if (!gl || recs.second.empty()) continue;
        ++rep.integrated_multirate;
        expect(rep, recs.second.front()->t_start == gl->t_start && recs.second.back()->t_end == gl->t_end, trace,
               "fast records do not span their global step");
        for (std::size_t k = 1; k < recs.second.size(); ++k)
          expect(rep, recs.second[k]->t_start == recs.second[k - 1]->t_end, trace, "gap between fast records");
      }
      expect(rep, run.stats.accepted_global + run.stats.accepted_fast == static_cast<std::int64_t>(run.activity.size()),
             trace, "activity rows do not match the accepted counters");
    }
    ++rep.traces;
  }
  return rep;
}

inline std::string summary(const TraceReport& rep) {
  std::ostringstream os;
  os << rep.traces << " traces, " << rep.multirate_steps << " multirate steps, " << rep.integrated_steps
     << " integrated steps (" << rep.integrated_multirate << " refined), " << rep.checks << " checks, " << rep.failures << " failures, worst tiling "
     << rep.worst_tiling << ", worst Q(1) " << rep.worst_endpoint;
  for (const auto& m : rep.messages) os << "\n  " << m;
  return os.str();
}

}  // namespace mrk::props
