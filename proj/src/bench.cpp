#include "mrk/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

namespace mrk {

namespace {

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

double sq_pos(double x) { return x > 0.0 ? x * x : 0.0; }

}  // namespace

// ---------------------------------------------------------------- inverter

double inverter_g(double y, double z, double u_tau) { return sq_pos(y - u_tau) - sq_pos(y - z - u_tau); }

double inverter_input(double t) {
  if (t <= 5.0) return 0.0;
  if (t <= 10.0) return t - 5.0;
  if (t <= 15.0) return 5.0;
  if (t <= 20.0) return 20.0 - t;
  return 0.0;
}

InverterChain::InverterChain(const InverterChainParams& p) : OdeProblem(0.0, p.t_end, Vector()), p_(p) {
  if (p_.N < 2) throw std::invalid_argument("inverter chain needs N >= 2");
  if (!(p_.U_op > p_.U_tau && p_.U_tau > 0.0)) throw std::invalid_argument("inverter chain needs U_op > U_tau > 0");
  if (!(p_.Gamma > 0.0)) throw std::invalid_argument("inverter chain needs Gamma > 0");
  deps_.resize(at(p_.N));
  deps_[0] = {0};
  for (Index j = 1; j < p_.N; ++j) deps_[at(j)] = {j - 1, j};

  if (p_.initial == InverterInitial::equilibrium) {
    y0_ = equilibrium();
  } else {
    y0_.resize(p_.N);
    // 0-based index k is inverter j = k + 1: odd j at logical one.
    for (Index k = 0; k < p_.N; ++k) y0_(k) = (k % 2 == 0) ? p_.U_op : 6.247e-3;
  }
}

double InverterChain::row(double t, const Vector& y, Index j) const {
  const double upstream = j == 0 ? inverter_input(t) : y(j - 1);
  return p_.U_op - y(j) - p_.Gamma * inverter_g(upstream, y(j), p_.U_tau);
}

void InverterChain::rhs(double t, const Vector& y, Vector& dydt) const {
  dydt.resize(p_.N);
  for (Index j = 0; j < p_.N; ++j) dydt(j) = row(t, y, j);
}

void InverterChain::rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const {
  for (Index j : rows) out(j) = row(t, y, j);
}

Vector InverterChain::equilibrium() const {
  Vector y(p_.N);
  double upstream = 0.0;
  for (Index j = 0; j < p_.N; ++j) {
    // Damping by the local slope 1 + 2 Gamma (upstream - U_tau)^+ keeps the
    // iteration contractive.
    const double damping = 1.0 / (1.0 + 2.0 * p_.Gamma * std::max(upstream - p_.U_tau, 0.0));
    double v = upstream > p_.U_tau ? 0.0 : p_.U_op;
    for (int it = 0; it < 500; ++it) {
      const double step = damping * (p_.U_op - v - p_.Gamma * inverter_g(upstream, v, p_.U_tau));
      v += step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(v))) break;
    }
    y(j) = v;
    upstream = v;
  }
  return y;
}

// ---------------------------------------------------------------- burgers

Burgers::Burgers(const BurgersParams& p) : OdeProblem(0.0, p.t_end, Vector()), p_(p) {
  if (p_.N < 3) throw std::invalid_argument("burgers needs N >= 3");
  if (!(p_.nu >= 0.0)) throw std::invalid_argument("burgers needs nu >= 0");
  dx_ = p_.length / static_cast<double>(p_.N - 1);
  y0_.resize(p_.N);
  const double center = p_.length / 2.0;
  const double width = p_.length / 50.0;
  for (Index i = 0; i < p_.N; ++i) {
    const double s = (node(i) - center) / width;
    y0_(i) = std::exp(-s * s);
  }
  deps_.resize(at(p_.N));
  deps_[0] = {0};
  deps_[at(p_.N - 1)] = {p_.N - 1};
  for (Index i = 1; i + 1 < p_.N; ++i) deps_[at(i)] = {i - 1, i, i + 1};
}

double Burgers::row(const Vector& u, Index i) const {
  if (i == 0 || i == p_.N - 1) return 0.0;
  const double left = u(i - 1), mid = u(i), right = u(i + 1);
  return -mid * (right - left) / (2.0 * dx_) + p_.nu * (right - 2.0 * mid + left) / (dx_ * dx_);
}

void Burgers::rhs(double, const Vector& y, Vector& dydt) const {
  dydt.resize(p_.N);
  for (Index i = 0; i < p_.N; ++i) dydt(i) = row(y, i);
}

void Burgers::rhs_rows(double, const Vector& y, std::span<const Index> rows, Vector& out) const {
  for (Index i : rows) out(i) = row(y, i);
}

// ---------------------------------------------------------------- heating

double smooth_step(double t, double t_s, double dt) { return 0.5 * (std::tanh((t - t_s) / dt) + 1.0); }

double smooth_sat(double x, double x_min, double x_max) {
  const double span = x_max - x_min;
  return 0.5 * (x_max + x_min) + 0.5 * span * std::tanh(2.0 * (x - x_min) / span - 1.0);
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double heating_outdoor_temperature(double t) {
  return 278.15 + 8.0 * std::cos(2.0 * std::numbers::pi * (t - 14.0 * 3600.0) / 86400.0);
}

Heating::Heating(const HeatingParams& p) : OdeProblem(0.0, p.t_end, Vector()), p_(p) {
  if (p_.N < 1) throw std::invalid_argument("heating needs N >= 1");
  const Index N = p_.N;
  SplitMix64 rng(p_.seed);
  on_.resize(at(N));
  off_.resize(at(N));
  for (Index j = 0; j < N; ++j) {
    on_[at(j)] = 3600.0 * (6.0 + 6.0 * rng.uniform());
    off_[at(j)] = 3600.0 * (15.0 + 7.0 * rng.uniform());
  }
  days_ = static_cast<int>(std::ceil(p_.t_end / 86400.0)) + 1;

  y0_ = Vector::Zero(size());
  y0_(index_supply()) = p_.T_s0;
  for (Index j = 0; j < N; ++j) y0_(index_unit(j)) = 288.15;

  deps_.resize(at(size()));
  IndexList& supply = deps_[at(index_supply())];
  for (Index k = 0; k <= 2 * N; ++k) supply.push_back(k);
  for (Index j = 0; j < N; ++j) {
    deps_[at(index_conductance(j))] = {index_conductance(j), index_unit(j)};
    deps_[at(index_unit(j))] = {index_supply(), index_conductance(j), index_unit(j)};
  }
  deps_[at(index_energy())] = {index_supply()};
}

double Heating::set_point(Index j, double t) const {
  double on = 0.0;
  for (int day = 0; day < days_; ++day) {
    const double shift = 86400.0 * day;
    on += smooth_step(t, on_[at(j)] + shift, p_.switch_width) - smooth_step(t, off_[at(j)] + shift, p_.switch_width);
  }
  return p_.T_l + (p_.T_h - p_.T_l) * on;
}

double Heating::supply_heat(double T_s) const {
  const double q_max = p_.Q_max();
  return smooth_sat(p_.K_ps * q_max * (p_.T_s0 - T_s), 0.0, q_max);
}

double Heating::conductance_row(double t, const Vector& y, Index j) const {
  const double command = smooth_sat(p_.K_pu * (set_point(j, t) - y(index_unit(j))), 0.0, 1.0);
  return (command * p_.G_hn - y(index_conductance(j))) / p_.t_h;
}

double Heating::unit_row(double t, const Vector& y, Index j) const {
  const double T_u = y(index_unit(j));
  const double heating = y(index_conductance(j)) * (y(index_supply()) - T_u);
  const double losses = p_.G_u * (T_u - heating_outdoor_temperature(t));
  return (heating - losses) / p_.C_u(j + 1);
}

double Heating::supply_row(const Vector& y) const {
  const double T_s = y(index_supply());
  double q_ht = 0.0;
  for (Index j = 0; j < p_.N; ++j) q_ht += y(index_conductance(j)) * (T_s - y(index_unit(j)));
  return (supply_heat(T_s) - q_ht) / p_.C_s();
}

void Heating::rhs(double t, const Vector& y, Vector& dydt) const {
  dydt.resize(size());
  dydt(index_supply()) = supply_row(y);
  for (Index j = 0; j < p_.N; ++j) {
    dydt(index_conductance(j)) = conductance_row(t, y, j);
    dydt(index_unit(j)) = unit_row(t, y, j);
  }
  dydt(index_energy()) = supply_heat(y(index_supply()));
}

void Heating::rhs_rows(double t, const Vector& y, std::span<const Index> rows, Vector& out) const {
  for (Index k : rows) {
    if (k == index_supply()) {
      out(k) = supply_row(y);
    } else if (k == index_energy()) {
      out(k) = supply_heat(y(index_supply()));
    } else if (k <= p_.N) {
      out(k) = conductance_row(t, y, k - 1);
    } else {
      out(k) = unit_row(t, y, k - 1 - p_.N);
    }
  }
}

// ---------------------------------------------------------------- registry

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {"inverter", "burgers", "heating", "zero", "decay"};
  return names;
}

namespace {

void check_keys(std::string_view problem, const nlohmann::json& params, std::initializer_list<const char*> allowed) {
  if (!params.is_object()) throw std::invalid_argument("problem parameters must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : params.items())
    if (!ok.count(item.key()))
      throw std::invalid_argument("unknown parameter '" + item.key() + "' for problem '" + std::string(problem) + "'");
}

}  // namespace

std::unique_ptr<OdeProblem> make_benchmark(std::string_view name, const nlohmann::json& params) {
  if (name == "inverter") {
    check_keys(name, params, {"N", "U_op", "U_tau", "Gamma", "t_end", "initial"});
    InverterChainParams p;
    p.N = params.value("N", p.N);
    p.U_op = params.value("U_op", p.U_op);
    p.U_tau = params.value("U_tau", p.U_tau);
    p.Gamma = params.value("Gamma", p.Gamma);
    p.t_end = params.value("t_end", p.t_end);
    const std::string initial = params.value("initial", std::string("verbatim"));
    if (initial == "verbatim") {
      p.initial = InverterInitial::verbatim;
    } else if (initial == "equilibrium") {
      p.initial = InverterInitial::equilibrium;
    } else {
      throw std::invalid_argument("inverter initial must be 'verbatim' or 'equilibrium'");
    }
    return std::make_unique<InverterChain>(p);
  }
  if (name == "burgers") {
    check_keys(name, params, {"N", "nu", "length", "t_end"});
    BurgersParams p;
    p.N = params.value("N", p.N);
    p.nu = params.value("nu", p.nu);
    p.length = params.value("length", p.length);
    p.t_end = params.value("t_end", p.t_end);
    return std::make_unique<Burgers>(p);
  }
  if (name == "heating") {
    check_keys(name, params, {"N", "seed", "t_end", "K_ps", "T_h", "T_l", "T_s0", "G_hn", "G_u", "t_h", "K_pu",
                              "switch_width"});
    HeatingParams p;
    p.N = params.value("N", p.N);
    p.seed = params.value("seed", p.seed);
    p.t_end = params.value("t_end", p.t_end);
    p.K_ps = params.value("K_ps", p.K_ps);
    p.T_h = params.value("T_h", p.T_h);
    p.T_l = params.value("T_l", p.T_l);
    p.T_s0 = params.value("T_s0", p.T_s0);
    p.G_hn = params.value("G_hn", p.G_hn);
    p.G_u = params.value("G_u", p.G_u);
    p.t_h = params.value("t_h", p.t_h);
    p.K_pu = params.value("K_pu", p.K_pu);
    p.switch_width = params.value("switch_width", p.switch_width);
    return std::make_unique<Heating>(p);
  }
  if (name == "zero") {
    check_keys(name, params, {"N", "t_end", "value"});
    const Index n = params.value("N", Index{1});
    const double value = params.value("value", 1.0);
    std::vector<IndexList> deps(at(n));
    for (Index i = 0; i < n; ++i) deps[at(i)] = {i};
    return std::make_unique<FunctionProblem>(
        "zero", [](double, const Vector& y, Vector& f) { f = Vector::Zero(y.size()); }, Vector::Constant(n, value),
        0.0, params.value("t_end", 1.0), std::move(deps));
  }
  if (name == "decay") {
    check_keys(name, params, {"N", "t_end", "rate"});
    const Index n = params.value("N", Index{1});
    const double rate = params.value("rate", 1.0);
    std::vector<IndexList> deps(at(n));
    for (Index i = 0; i < n; ++i) deps[at(i)] = {i};
    return std::make_unique<FunctionProblem>(
        "decay", [rate](double, const Vector& y, Vector& f) { f = -rate * y; }, Vector::Ones(n), 0.0,
        params.value("t_end", 1.0), std::move(deps));
  }
  std::string known;
  for (const auto& n : benchmark_names()) known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown problem '" + std::string(name) + "' (known: " + known + ")");
}

}  // namespace mrk
