#include "mrk/adapt.hpp"
#include "mrk/bench.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace mrk;

namespace {

/// Evaluates every row alone with all state entries outside its declared
/// dependencies poisoned by NaN; returns the number of rows whose value is
/// not finite or differs from the full evaluation.
int dependency_violations(const OdeProblem& p, double t, const Vector& y) {
  Vector full;
  p.rhs(t, y, full);
  int bad = 0;
  const auto& deps = p.dependencies();
  for (Index i = 0; i < p.size(); ++i) {
    Vector poisoned = Vector::Constant(p.size(), std::numeric_limits<double>::quiet_NaN());
    for (Index j : deps[static_cast<std::size_t>(i)]) poisoned(j) = y(j);
    Vector out = Vector::Constant(p.size(), -123.0);
    const Index row[] = {i};
    p.rhs_rows(t, poisoned, row, out);
    bool touched_other = false;
    for (Index k = 0; k < p.size(); ++k)
      if (k != i && out(k) != -123.0) touched_other = true;
    if (!std::isfinite(out(i)) || std::abs(out(i) - full(i)) > 1e-12 * std::max(1.0, std::abs(full(i))) || touched_other)
      ++bad;
  }
  return bad;
}

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("registry") {
    CHECK(benchmark_names() == std::vector<std::string>{"inverter", "burgers", "heating", "zero", "decay"});
    CHECK_THROWS_AS(make_benchmark("lorenz"), std::invalid_argument);
    CHECK_THROWS_AS(make_benchmark("inverter", {{"bogus", 1}}), std::invalid_argument);
    CHECK(make_benchmark("inverter", {{"N", 30}})->size() == 30);
    CHECK(make_benchmark("heating", {{"N", 7}})->size() == 16);
  }

  TEST_CASE("inverter conductance and input") {
    CHECK(inverter_g(0.0, 0.0, 1.0) == 0.0);
    CHECK(inverter_g(5.0, 0.0, 1.0) == 0.0);
    CHECK(inverter_g(5.0, 5.0, 1.0) == 16.0);
    CHECK(inverter_input(0.0) == 0.0);
    CHECK(inverter_input(7.5) == 2.5);
    CHECK(inverter_input(12.5) == 5.0);
    CHECK(inverter_input(17.0) == 3.0);
    CHECK(inverter_input(25.0) == 0.0);
  }

  TEST_CASE("inverter initial states") {
    InverterChain verbatim(InverterChainParams{.N = 6});
    CHECK(verbatim.initial_state()(0) == 5.0);
    CHECK(verbatim.initial_state()(1) == 6.247e-3);
    CHECK(verbatim.dependencies()[0] == IndexList{0});
    CHECK(verbatim.dependencies()[3] == IndexList{2, 3});

    InverterChain eq(InverterChainParams{.N = 50, .initial = InverterInitial::equilibrium});
    Vector f;
    eq.rhs(0.0, eq.initial_state(), f);
    CHECK(f.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(eq.initial_state()(0) == doctest::Approx(5.0));
    // Downstream of a high stage: 500 y^2 - 4001 y + 5 = 0.
    const double low = (4001.0 - std::sqrt(4001.0 * 4001.0 - 10000.0)) / 1000.0;
    CHECK(eq.initial_state()(1) == doctest::Approx(low).epsilon(1e-12));
    CHECK(eq.initial_state()(2) == doctest::Approx(5.0).epsilon(1e-12));
  }

  TEST_CASE("inverter stays bounded") {
    auto p = make_benchmark("inverter", {{"N", 40}, {"t_end", 60.0}});
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-6;
    cfg.output_times = uniform_grid(0.0, 60.0, 0.05);
    for (auto mode : {IntegrationMode::single, IntegrationMode::multi}) {
      cfg.mode = mode;
      const auto r = integrate(*p, get_method("esdirk3"), cfg);
      REQUIRE(r.ok());
      for (const auto& row : r.outputs) {
        CHECK(row.minCoeff() >= -0.5);
        CHECK(row.maxCoeff() <= 5.5);
      }
    }
  }

  TEST_CASE("burgers stencil") {
    Burgers b(BurgersParams{.N = 1001});
    CHECK(b.dx() == doctest::Approx(0.025));
    CHECK(b.initial_state()(500) == doctest::Approx(1.0));
    Vector f;
    b.rhs(0.0, Vector::Constant(1001, 0.7), f);
    CHECK(f.segment(1, 999).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(f(0) == 0.0);
    CHECK(f(1000) == 0.0);

    Burgers small(BurgersParams{.N = 5, .nu = 0.0, .length = 4.0});
    Vector u(5);
    u << 0, 1, 2, 1, 0;
    small.rhs(0.0, u, f);
    CHECK(f(2) == 0.0);
    CHECK(f(1) == doctest::Approx(-1.0 * (2.0 - 0.0) / 2.0));
    Burgers viscous(BurgersParams{.N = 5, .nu = 0.5, .length = 4.0});
    viscous.rhs(0.0, u, f);
    CHECK(f(2) == doctest::Approx(0.5 * (1.0 - 4.0 + 1.0)));
  }

  TEST_CASE("smoothing functions") {
    CHECK(smooth_step(3.0, 3.0, 1.0) == 0.5);
    CHECK(std::abs(smooth_step(13.0, 3.0, 1.0) - 1.0) <= 1e-8);
    CHECK(std::abs(smooth_step(-7.0, 3.0, 1.0)) <= 1e-8);
    CHECK(smooth_sat(0.5, 0.0, 1.0) == doctest::Approx(0.5 + 0.5 * std::tanh(0.0)));
    CHECK(smooth_sat(0.0, 0.0, 1.0) == doctest::Approx(0.11920).epsilon(1e-4));
    CHECK(smooth_sat(1e6, 0.0, 1.0) == doctest::Approx(1.0));
    CHECK(smooth_sat(2.0, 1.0, 3.0) == doctest::Approx(2.0 + std::tanh(0.0)));
  }

  TEST_CASE("mixing generator") {
    SplitMix64 a(42), b(42), c(43);
    const auto first = a.next();
    CHECK(first == b.next());
    CHECK(first != c.next());
    SplitMix64 zero(0);
    CHECK(zero.next() == 0xE220A8397B1DCDAFULL);
    for (int i = 0; i < 1000; ++i) {
      const double u = a.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }

  TEST_CASE("heating model") {
    CHECK(heating_outdoor_temperature(14 * 3600.0) == doctest::Approx(286.15));
    CHECK(heating_outdoor_temperature(2 * 3600.0) == doctest::Approx(270.15));
    Heating h(HeatingParams{.N = 8});
    const Vector& y0 = h.initial_state();
    CHECK(y0(h.index_supply()) == 343.15);
    for (Index j = 0; j < 8; ++j) {
      CHECK(y0(h.index_conductance(j)) == 0.0);
      CHECK(y0(h.index_unit(j)) == 288.15);
    }
    CHECK(y0(h.index_energy()) == 0.0);
    Vector f;
    const double t = 3600.0;
    h.rhs(t, y0, f);
    const double Te = heating_outdoor_temperature(t);
    for (Index j = 0; j < 8; ++j)
      CHECK(f(h.index_unit(j)) == doctest::Approx(-150.0 * (288.15 - Te) / h.params().C_u(j + 1)));
    CHECK(h.dependencies()[static_cast<std::size_t>(h.index_unit(3))] ==
          IndexList{h.index_supply(), h.index_conductance(3), h.index_unit(3)});
    for (Index j = 0; j < 8; ++j) {
      CHECK(h.switch_on_time(j) < h.switch_off_time(j));
      const double on = h.switch_on_time(j);
      CHECK(h.set_point(j, on + 100.0) == doctest::Approx(293.15).epsilon(1e-6));
    }
    Heating same(HeatingParams{.N = 8});
    Heating other(HeatingParams{.N = 8, .seed = 7});
    CHECK(same.switch_on_time(2) == h.switch_on_time(2));
    CHECK(other.switch_on_time(2) != h.switch_on_time(2));
  }

  TEST_CASE("dependency sets are exact") {
    InverterChain inv(InverterChainParams{.N = 12});
    Vector y = inv.initial_state();
    y(3) = 2.0;
    CHECK(dependency_violations(inv, 7.0, y) == 0);

    Burgers b(BurgersParams{.N = 40});
    CHECK(dependency_violations(b, 0.0, b.initial_state() + Vector::LinSpaced(40, 0.0, 0.3)) == 0);

    Heating h(HeatingParams{.N = 6});
    Vector z = h.initial_state();
    for (Index j = 0; j < 6; ++j) z(h.index_conductance(j)) = 10.0 * static_cast<double>(j + 1);
    for (double t : {0.0, 6.5 * 3600, 20.0 * 3600}) CHECK(dependency_violations(h, t, z) == 0);
  }

  TEST_CASE("heating energy is nondecreasing") {
    auto p = make_benchmark("heating", {{"N", 10}, {"t_end", 86400.0}});
    const auto& h = static_cast<const Heating&>(*p);
    SolverConfig cfg;
    cfg.rtol = cfg.atol = 1e-6;
    cfg.mode = IntegrationMode::multi;
    cfg.phi = 0.1;
    cfg.output_times = uniform_grid(0.0, 86400.0, 600.0);
    cfg.output_indices = {h.index_energy()};
    const auto r = integrate(*p, get_method("esdirk4"), cfg);
    REQUIRE(r.ok());
    const double slack = 1e-9 * h.params().Q_max();
    for (std::size_t k = 1; k < r.outputs.size(); ++k) CHECK(r.outputs[k](0) >= r.outputs[k - 1](0) - slack);
    CHECK(r.y_final(h.index_energy()) > 0.0);
  }
}
