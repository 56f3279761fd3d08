#include "mrk/interp.hpp"
#include "mrk/problem.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace mrk;

namespace {

const InterpKind kKinds[] = {InterpKind::linear, InterpKind::hermite, InterpKind::dense};

struct StepData {
  StepResult step;
  Vector f_n;
  Vector f_next;
};

StepData step_on(const Matrix& L, const Vector& u, double h, const ButcherTableau& m) {
  LinearProblem p(L, u);
  StepData d{rk_step(p, u, 0.0, h, m), L * u, Vector()};
  d.f_next = L * d.step.u_next;
  return d;
}

InterpData data_of(const StepData& d, const ButcherTableau& m) {
  InterpData data;
  data.h = d.step.stages.h;
  data.u_n = &d.step.stages.u_n;
  data.u_next = &d.step.u_next;
  data.f_n = &d.f_n;
  data.f_next = &d.f_next;
  data.stages = &d.step.stages;
  data.coeffs = m.dense ? &*m.dense : nullptr;
  return data;
}

}  // namespace

TEST_SUITE("interp") {
  TEST_CASE("names round trip") {
    for (auto k : kKinds) CHECK(interp_kind_from_string(to_string(k)) == k);
    CHECK_THROWS(interp_kind_from_string("spline"));
  }

  TEST_CASE("endpoints") {
    std::mt19937_64 rng(7);
    const Matrix L = oracle::random_matrix(rng, 3, 1.0, 1.0);
    const Vector u = Vector::Random(3);
    for (const auto& name : method_names()) {
      const auto& m = get_method(name);
      const auto d = step_on(L, u, 0.3, m);
      const auto data = data_of(d, m);
      for (auto k : kKinds) {
        if (k == InterpKind::dense && !m.dense) continue;
        CAPTURE(name);
        CAPTURE(to_string(k));
        CHECK((interp_value(k, data, 0.0) - u).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((interp_value(k, data, 1.0) - d.step.u_next).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }

  TEST_CASE("hermite reproduces cubics") {
    // y = t^3 on [1, 2]: u, u', and the end values come from the exact solution.
    Vector u(1), un(1), fn(1), fnext(1);
    u << 1.0;
    un << 8.0;
    fn << 3.0;
    fnext << 12.0;
    InterpData data;
    data.h = 1.0;
    data.u_n = &u;
    data.u_next = &un;
    data.f_n = &fn;
    data.f_next = &fnext;
    const double t = 1.37;
    CHECK(interp_value(InterpKind::hermite, data, 0.37)(0) == doctest::Approx(t * t * t).epsilon(1e-14));
    CHECK(interp_value(InterpKind::linear, data, 0.5)(0) == doctest::Approx(4.5));
  }

  TEST_CASE("missing inputs are reported") {
    Vector u = Vector::Ones(2);
    InterpData data;
    data.h = 1.0;
    data.u_n = &u;
    CHECK_THROWS_AS(interp_value(InterpKind::linear, data, 0.5), InterpConfigError);
    data.u_next = &u;
    CHECK_NOTHROW(interp_value(InterpKind::linear, data, 0.5));
    CHECK_THROWS_AS(interp_value(InterpKind::hermite, data, 0.5), InterpConfigError);
    CHECK_THROWS_AS(interp_value(InterpKind::dense, data, 0.5), InterpConfigError);
  }

  TEST_CASE("component form agrees with the vector form") {
    std::mt19937_64 rng(11);
    const Matrix L = oracle::random_matrix(rng, 5, 1.0, 2.0);
    const Vector u = Vector::Random(5);
    const auto& m = get_method("esdirk4");
    const auto d = step_on(L, u, 0.25, m);
    const auto data = data_of(d, m);
    const IndexList idx = {1, 3, 4};
    for (auto k : kKinds) {
      Vector out = Vector::Constant(5, -7.0);
      interp_components(k, data, 0.6, idx, out);
      const Vector full = interp_value(k, data, 0.6);
      CHECK(out(0) == -7.0);
      CHECK(out(2) == -7.0);
      for (Index i : idx) CHECK(out(i) == doctest::Approx(full(i)).epsilon(1e-14));
    }
  }

  TEST_CASE("stage operators match stepping") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const Index n = 1 + static_cast<Index>(trial % 5);
      const Matrix L = oracle::random_matrix(rng, n, 1.0, 0.5);
      const Vector u = Vector::Random(n);
      for (const auto& name : method_names()) {
        const auto& m = get_method(name);
        const auto ops = stage_operators(L, 0.4, m);
        const auto o = oracle::linear_step(L, m, 0.4, u, [n](int) { return Vector::Zero(n); });
        CHECK((ops.step * u - o.u_next).cwiseAbs().maxCoeff() <= 1e-12);
        for (int i = 0; i < m.stages(); ++i)
          CHECK((ops.stage[static_cast<std::size_t>(i)] * u - o.U[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() <=
                1e-12);
      }
    }
  }

  TEST_CASE("operator and data forms are dual") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Index n = 1 + static_cast<Index>(trial % 6);
      const Matrix L = oracle::random_matrix(rng, n, 2.0, 1.0);
      const Vector u = Vector::Random(n);
      const auto& m = get_method(method_names()[static_cast<std::size_t>(trial % 4)]);
      const double h = 0.05 + unit(rng);
      const double tau = unit(rng);
      const auto d = step_on(L, u, h, m);
      const auto data = data_of(d, m);
      for (auto k : kKinds) {
        if (k == InterpKind::dense && !m.dense) continue;
        const Vector a = interp_operator(k, L, h, m, tau) * u;
        const Vector b = interp_value(k, data, tau);
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff()));
      }
    }
    CHECK(worst <= 1e-11);
  }

  TEST_CASE("extended operator continues the polynomial") {
    std::mt19937_64 rng(5);
    const Matrix L = oracle::random_matrix(rng, 3, 1.0, 1.0);
    const Vector u = Vector::Random(3);
    for (const auto& name : method_names()) {
      const auto& m = get_method(name);
      const auto ops = stage_operators(L, 0.3, m);
      const auto o = oracle::linear_step(L, m, 0.3, u, [](int) { return Vector::Zero(3); });
      for (auto k : kKinds) {
        if (k == InterpKind::dense && !m.dense) continue;
        for (double tau : {0.2, 0.9, 1.04, 1.3}) {
          const Vector a = interp_operator_extended(k, ops, L, 0.3, m, tau) * u;
          CHECK((a - oracle::interpolate(k, m, L, 0.3, u, o, tau)).cwiseAbs().maxCoeff() <= 1e-12);
        }
      }
    }
  }
}
