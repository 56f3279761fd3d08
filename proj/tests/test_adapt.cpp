#include "controller_properties.hpp"
#include "mrk/adapt.hpp"
#include "mrk/bench.hpp"
#include "mrk/stability.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace mrk;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_SUITE("adapt") {
  TEST_CASE("partition examples") {
    auto p = select_partition(vec({0.5, 2.0, 0.1}), 0.4, 1.0);
    CHECK(p.m == 1);
    CHECK(p.eta_s == 0.5);
    CHECK(p.eta_f == 2.0);
    CHECK(p.decision == PartitionDecision::go_multirate);
    CHECK(p.fast == IndexList{1});

    p = select_partition(vec({0.5, 0.9, 0.1, 1.0}), 0.5, 1.0);
    CHECK(p.decision == PartitionDecision::accept);
    CHECK(p.fast.empty());

    p = select_partition(vec({5, 5, 5, 0}), 0.3, 1.0);
    CHECK(p.m == 1);
    CHECK(p.eta_s == 5.0);
    CHECK(p.decision == PartitionDecision::reject);
  }

  TEST_CASE("partition cap and ties") {
    CHECK(select_partition(Vector::Zero(10), 0.0, 1.0).m == 1);
    CHECK(select_partition(Vector::Zero(10), 1.0, 1.0).m == 9);
    CHECK(select_partition(Vector::Zero(10), 0.3, 1.0).m == 3);
    CHECK(select_partition(Vector::Zero(1), 0.5, 1.0).m == 0);
    // Two components tie at the cap boundary; both exceed beta, so the
    // global step must be rejected whichever one ranks first.
    const auto p = select_partition(vec({3, 0, 3, 0}), 0.25, 1.0);
    CHECK(p.decision == PartitionDecision::reject);
    CHECK(p.eta_f == 3.0);
    CHECK(p.eta_s == 3.0);
    const auto q = select_partition(vec({3, 0, 3, 0}), 0.5, 1.0);
    CHECK(q.decision == PartitionDecision::go_multirate);
    CHECK(q.fast == IndexList{0, 2});
  }

  TEST_CASE("configuration validation") {
    SolverConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.phi = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    cfg.rtol = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    CHECK(cfg.newton().abs_tol == doctest::Approx(0.01 * cfg.atol));
  }

  TEST_CASE("uniform grid") {
    const auto g = uniform_grid(0.0, 1.0, 0.3);
    REQUIRE(g.size() == 5);
    CHECK(g[3] == doctest::Approx(0.9));
    CHECK(g.back() == 1.0);
    CHECK(uniform_grid(0.0, 1.0, 0.25).size() == 5);
  }

  TEST_CASE("forced empty fast set accepts the global step") {
    Matrix L(2, 2);
    L << -1, 0.5, 0.2, -400;
    LinearProblem p(L, vec({1.0, 1.0}));
    SolverConfig cfg;
    for (const std::string name : {"erk4-owren", "esdirk3", "esdirk4"}) {
      CAPTURE(name);
      const auto r = multirate_step(p, get_method(name), cfg, 0.0, p.initial_state(), 0.01, {IndexList{}, 0});
      CHECK(r.outcome == StepOutcome::accepted_global);
      CHECK(r.u_next == r.global_u_next);
      CHECK(r.substeps.empty());
    }
  }

  TEST_CASE("all-fast equal sub-steps compose single-rate steps") {
    Matrix L(3, 3);
    L << -1, 0.5, 0, 0.2, -40, 1, 0, 3, -7;
    const Vector u0 = vec({1.0, -0.5, 2.0});
    LinearProblem p(L, u0);
    SolverConfig cfg;
    const double h = 0.05;
    for (const std::string name : {"erk4-owren", "esdirk3", "esdirk4"}) {
      const auto& m = get_method(name);
      for (int M : {1, 3, 5}) {
        CAPTURE(name);
        CAPTURE(M);
        const auto r = multirate_step(p, m, cfg, 0.0, u0, h, {IndexList{0, 1, 2}, M});
        REQUIRE(r.outcome == StepOutcome::accepted_multirate);
        CHECK(r.substeps.size() == static_cast<std::size_t>(M));
        Vector u = u0;
        for (int k = 0; k < M; ++k) u = rk_step(p, u, k * h / M, h / M, m).u_next;
        CHECK((r.u_next - u).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }

  TEST_CASE("two-mode step equals the clamped amplification matrix") {
    const auto model = model_2dof(50.0, 0.1);
    LinearProblem p(model.L, vec({1.0, 0.3}));
    SolverConfig cfg;
    cfg.interp = InterpKind::linear;
    // Restricted systems use difference Jacobians; tight Newton tolerances
    // make the stage solves exact to rounding.
    cfg.rtol = cfg.atol = 1e-13;
    const double h = 0.02;
    for (const std::string name : {"erk4-owren", "esdirk3", "esdirk4"}) {
      CAPTURE(name);
      const auto& m = get_method(name);
      const auto r = multirate_step(p, m, cfg, 0.0, p.initial_state(), h, {IndexList{1}, 2});
      REQUIRE(r.outcome == StepOutcome::accepted_multirate);
      // Stage abscissae past 1 read the slow values at the step end.
      const Vector expected =
          oracle::multirate_R(model.L, IndexList{1}, h, 2, m, InterpKind::linear, true) * p.initial_state();
      CHECK((r.u_next - expected).cwiseAbs().maxCoeff() <= 1e-12);
      if ((m.c.array() <= 1.0).all())
        CHECK((multirate_R(model, h, 2, m, InterpKind::linear).R * p.initial_state() - expected).cwiseAbs().maxCoeff() <=
              1e-13);
    }
  }

  TEST_CASE("exponential decay") {
    LinearProblem p(Matrix::Constant(1, 1, -1.0), Vector::Ones(1));
    SolverConfig cfg;
    for (auto mode : {IntegrationMode::single, IntegrationMode::multi}) {
      cfg.mode = mode;
      const auto r = integrate(p, get_method("esdirk3"), cfg);
      REQUIRE(r.ok());
      CHECK(r.t_final == 1.0);
      CHECK(std::abs(r.y_final(0) - std::exp(-1.0)) <= 5e-6);
    }
  }

  TEST_CASE("zero right-hand side") {
    auto p = make_benchmark("zero", {{"N", 5}, {"t_end", 10.0}});
    for (const auto& name : method_names()) {
      for (auto mode : {IntegrationMode::single, IntegrationMode::multi}) {
        CAPTURE(name);
        SolverConfig cfg;
        cfg.mode = mode;
        const auto r = integrate(*p, get_method(name), cfg);
        REQUIRE(r.ok());
        CHECK(r.y_final == p->initial_state());
        CHECK(r.stats.rejected_global_error + r.stats.rejected_global_convergence == 0);
        CHECK(r.stats.accepted_fast == 0);
        // Steps grow by the maximal factor until the final clipped step.
        for (std::size_t k = 2; k + 1 < r.activity.size(); ++k) {
          const double prev = r.activity[k - 1].t_end - r.activity[k - 1].t_start;
          const double cur = r.activity[k].t_end - r.activity[k].t_start;
          CHECK(cur == doctest::Approx(1.2 * prev));
        }
      }
    }
  }

  TEST_CASE("explicit controller finds the stability bound") {
    const auto model = model_4dof(1.0, 0.01, 50.0, 1.0, 1e-3);
    LinearProblem p(model.L, vec({1.0, 0.0, 1.0, 0.0}), 0.0, 20.0);
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-3;
    const auto r = integrate(p, get_method("erk4"), cfg);
    REQUIRE(r.ok());
    CHECK(r.stats.rejected_global_error > 0);
    // Once the initial transient has decayed, accuracy no longer limits the
    // step and it settles below the single-rate bound of about C = 3. Each
    // accepted step advances by two half steps (step doubling).
    double late = 0.0;
    int count = 0;
    for (const auto& a : r.activity)
      if (a.t_start > 10.0) {
        late += 0.5 * (a.t_end - a.t_start) * model.spectral_scale;
        ++count;
      }
    REQUIRE(count > 0);
    CHECK(late / count < 3.0);
    CHECK(late / count > 1.0);
  }

  TEST_CASE("uniformly stiff problem stays single-rate") {
    LinearProblem p(Matrix::Identity(4, 4) * -1e6, Vector::Ones(4), 0.0, 1.0);
    SolverConfig cfg;
    cfg.mode = IntegrationMode::multi;
    cfg.phi = 0.25;
    const auto r = integrate(p, get_method("esdirk3"), cfg);
    REQUIRE(r.ok());
    CHECK(r.stats.accepted_fast == 0);
    CHECK(r.y_final.cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("multirate with a full fast share matches single rate") {
    Matrix L = Matrix::Zero(6, 6);
    for (Index i = 0; i < 6; ++i) {
      L(i, i) = -std::pow(5.0, static_cast<double>(i));
      if (i > 0) L(i, i - 1) = 0.5;
    }
    LinearProblem p(L, Vector::Ones(6), 0.0, 2.0);
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-7;
    const auto s = integrate(p, get_method("esdirk4"), cfg);
    cfg.mode = IntegrationMode::multi;
    cfg.phi = 0.99;
    const auto m = integrate(p, get_method("esdirk4"), cfg);
    REQUIRE(s.ok());
    REQUIRE(m.ok());
    const Vector exact = matrix_exponential(L, 2.0) * Vector::Ones(6);
    CHECK((s.y_final - exact).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK((m.y_final - exact).cwiseAbs().maxCoeff() <= 1e-5);
  }

  TEST_CASE("output sampling") {
    LinearProblem p(Matrix::Constant(2, 2, -0.5), Vector::Ones(2), 0.0, 1.0);
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-9;
    cfg.output_times = uniform_grid(0.0, 1.0, 0.1);
    cfg.output_indices = {1};
    for (auto mode : {IntegrationMode::single, IntegrationMode::multi}) {
      cfg.mode = mode;
      const auto r = integrate(p, get_method("esdirk4"), cfg);
      REQUIRE(r.ok());
      REQUIRE(r.outputs.size() == 11);
      CHECK(r.output_indices == IndexList{1});
      for (std::size_t k = 0; k < r.outputs.size(); ++k) {
        const double t = r.output_times[k];
        CHECK(r.outputs[k].size() == 1);
        CHECK(r.outputs[k](0) == doctest::Approx(std::exp(-t)).epsilon(1e-7));
      }
    }
  }

  TEST_CASE("inverter chain multirate economy") {
    auto inv = make_benchmark("inverter", {{"N", 200}});
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-5;
    cfg.phi = 0.05;
    cfg.record_activity = false;
    const auto& m = get_method("esdirk3");
    const auto single = integrate(*inv, m, cfg);
    cfg.mode = IntegrationMode::multi;
    const auto multi = integrate(*inv, m, cfg);
    REQUIRE(single.ok());
    REQUIRE(multi.ok());
    const double ratio = static_cast<double>(multi.stats.accepted_global) / static_cast<double>(single.stats.accepted_global);
    MESSAGE("global step ratio " << ratio);
    CHECK(ratio <= 0.05);
    CHECK((multi.y_final - single.y_final).cwiseAbs().maxCoeff() <= 0.05);
  }

  TEST_CASE("counters are consistent") {
    auto inv = make_benchmark("inverter", {{"N", 60}, {"t_end", 40.0}});
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-5;
    cfg.mode = IntegrationMode::multi;
    cfg.phi = 0.1;
    const auto r = integrate(*inv, get_method("esdirk3"), cfg);
    REQUIRE(r.ok());
    const auto& s = r.stats;
    CHECK(s.accepted_global + s.accepted_fast == static_cast<std::int64_t>(r.activity.size()));
    CHECK(s.global_attempts() == s.accepted_global + s.rejected_global_error + s.rejected_global_convergence);
    CHECK(s.global_rhs_calls > 0);
    CHECK(s.local_rhs_calls > 0);
    CHECK(s.factorizations > 0);
    CHECK(s.newton_iterations > 0);
  }

  TEST_CASE("attempt limit is reported") {
    auto inv = make_benchmark("inverter", {{"N", 20}, {"t_end", 40.0}});
    SolverConfig cfg;
    cfg.max_attempts = 10;
    const auto r = integrate(*inv, get_method("esdirk3"), cfg);
    CHECK(r.status == IntegrationStatus::attempt_limit);
    CHECK(r.t_final < 40.0);
  }

  TEST_CASE("controller properties on randomized traces") {
    const auto rep = props::run_controller_traces(100, 99);
    INFO(props::summary(rep));
    CHECK(rep.ok());
    CHECK(rep.multirate_steps > 0);
  }
}
