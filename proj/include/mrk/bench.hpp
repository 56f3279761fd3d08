#pragma once

#include "mrk/problem.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string_view>

namespace mrk {

// ---------------------------------------------------------------- inverter

/// Conductance term max(y - u_tau, 0)^2 - max(y - z - u_tau, 0)^2.
double inverter_g(double y, double z, double u_tau);

/// Piecewise-linear input through (0,0), (5,0), (10,5), (15,5), (20,0), then 0.
double inverter_input(double t);

enum class InverterInitial {
  verbatim,     ///< odd j at U_op, even j at 6.247e-3
  equilibrium,  ///< the exact zero-input equilibrium
};

struct InverterChainParams {
  Index N = 1000;
  double U_op = 5.0;
  double U_tau = 1.0;
  double Gamma = 500.0;
  double t_end = 200.0;
  InverterInitial initial = InverterInitial::verbatim;
};

class InverterChain final : public OdeProblem {
 public:
  explicit InverterChain(const InverterChainParams& p);

  std::string name() const override { return "inverter"; }
  Index size() const override { return p_.N; }
  void rhs(double t, const Vector& y, Vector& dydt) const override;
  void rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const override;
  const std::vector<IndexList>& dependencies() const override { return deps_; }

  const InverterChainParams& params() const { return p_; }

  /// Zero-input equilibrium by damped fixed-point iteration along the chain
  /// (row j only depends on rows up to j).
  Vector equilibrium() const;

 private:
  double row(double t, const Vector& y, Index j) const;

  InverterChainParams p_;
  std::vector<IndexList> deps_;
};

// ---------------------------------------------------------------- burgers

struct BurgersParams {
  Index N = 1000;
  double nu = 1e-2;
  double length = 25.0;
  double t_end = 5.0;
};

/// Centered finite differences on a uniform mesh; both boundary nodes frozen.
class Burgers final : public OdeProblem {
 public:
  explicit Burgers(const BurgersParams& p);

  std::string name() const override { return "burgers"; }
  Index size() const override { return p_.N; }
  void rhs(double t, const Vector& y, Vector& dydt) const override;
  void rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const override;
  const std::vector<IndexList>& dependencies() const override { return deps_; }

  double dx() const { return dx_; }
  double node(Index i) const { return static_cast<double>(i) * dx_; }

 private:
  double row(const Vector& u, Index i) const;

  BurgersParams p_;
  double dx_;
  std::vector<IndexList> deps_;
};

// ---------------------------------------------------------------- heating

/// 1/2 (tanh((t - t_s) / dt) + 1).
double smooth_step(double t, double t_s, double dt);

/// (x_max + x_min)/2 + (x_max - x_min)/2 tanh(2 (x - x_min)/(x_max - x_min) - 1).
double smooth_sat(double x, double x_min, double x_max);

/// SplitMix64: a 64-bit mixing generator with a documented, portable output
/// sequence.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform();

 private:
  std::uint64_t state_;
};

struct HeatingParams {
  Index N = 100;
  double K_ps = 0.2;
  double T_h = 293.15;
  double T_l = 288.15;
  double T_s0 = 343.15;
  double G_hn = 200.0;
  double G_u = 150.0;
  double t_h = 20.0;
  double K_pu = 1.0;
  double switch_width = 1.0;  ///< smooth_step dt, seconds
  double t_end = 172800.0;
  std::uint64_t seed = 42;

  double Q_max() const { return 0.7 * static_cast<double>(N) * G_hn * (T_s0 - T_h); }
  double C_s() const { return 2e6 * static_cast<double>(N); }
  /// Unit heat capacity, j = 1..N.
  double C_u(Index j) const { return (1.0 + 0.348 * static_cast<double>(j) / static_cast<double>(N)) * 1e7; }
};

/// Outdoor temperature 278.15 + 8 cos(2 pi (t - 14 h) / 24 h).
double heating_outdoor_temperature(double t);

/// State [T_s, G_1..G_N, T_u1..T_uN, E].
class Heating final : public OdeProblem {
 public:
  explicit Heating(const HeatingParams& p);

  std::string name() const override { return "heating"; }
  Index size() const override { return 2 * p_.N + 2; }
  void rhs(double t, const Vector& y, Vector& dydt) const override;
  void rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const override;
  const std::vector<IndexList>& dependencies() const override { return deps_; }

  const HeatingParams& params() const { return p_; }

  Index index_supply() const { return 0; }
  Index index_conductance(Index j) const { return 1 + j; }    ///< j = 0..N-1
  Index index_unit(Index j) const { return 1 + p_.N + j; }    ///< j = 0..N-1
  Index index_energy() const { return 2 * p_.N + 1; }

  /// Set point of unit j (0-based) at time t.
  double set_point(Index j, double t) const;
  double switch_on_time(Index j) const { return on_[static_cast<std::size_t>(j)]; }
  double switch_off_time(Index j) const { return off_[static_cast<std::size_t>(j)]; }

 private:
  double supply_heat(double T_s) const;
  double conductance_row(double t, const Vector& y, Index j) const;
  double unit_row(double t, const Vector& y, Index j) const;
  double supply_row(const Vector& y) const;

  HeatingParams p_;
  std::vector<double> on_;
  std::vector<double> off_;
  int days_ = 0;
  std::vector<IndexList> deps_;
};

// ---------------------------------------------------------------- registry

/// Names accepted by make_benchmark.
const std::vector<std::string>& benchmark_names();

/// Builds a problem by name with optional parameter overrides:
/// inverter {N, U_op, U_tau, Gamma, t_end, initial}, burgers {N, nu, length,
/// t_end}, heating {N, seed, t_end, ...}, zero {N, t_end}, decay {N, rate,
/// t_end}. Throws std::invalid_argument on unknown names or keys.
std::unique_ptr<OdeProblem> make_benchmark(std::string_view name, const nlohmann::json& params = nlohmann::json::object());

}  // namespace mrk
