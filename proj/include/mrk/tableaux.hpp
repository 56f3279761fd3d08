#pragma once

#include "mrk/types.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mrk {

enum class MethodKind { explicit_rk, dirk, esdirk };

std::string_view to_string(MethodKind kind);

/// Continuous-output weights b*_i(tau) = sum_j B*(i, j) tau^(j+1).
///
/// There is no constant term, so every b*_i(0) = 0 and the dense output
/// reproduces u_n at tau = 0.
struct DenseOutputCoeffs {
  Matrix b_star;  // stages x degree

  int degree() const { return static_cast<int>(b_star.cols()); }

  /// Weights b*_i(tau) for all stages.
  Vector weights(double tau) const;
};

struct ButcherTableau {
  std::string name;
  MethodKind kind = MethodKind::explicit_rk;
  Matrix A;
  Vector b;
  std::optional<Vector> b_hat;
  Vector c;
  int order = 0;
  int embedded_order = 0;
  std::optional<DenseOutputCoeffs> dense;

  int stages() const { return static_cast<int>(b.size()); }
  bool implicit() const { return kind != MethodKind::explicit_rk; }
  bool has_embedded() const { return b_hat.has_value(); }

  /// Exponent base used in the step-size formula: min(p, p_hat), or p when
  /// the error comes from step doubling.
  int error_order() const { return has_embedded() ? std::min(order, embedded_order) : order; }

  /// True when b equals the last row of A (u_{n+1} is the last stage value).
  bool stiffly_accurate() const;
};

class MethodNotFound : public std::invalid_argument {
 public:
  explicit MethodNotFound(const std::string& name);
};

/// Registered method identifiers, in registry order.
const std::vector<std::string>& method_names();

/// Looks up a registry method; throws MethodNotFound for unknown names.
const ButcherTableau& get_method(std::string_view name);

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double residual = 0.0;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const;
  const ValidationCheck* find(std::string_view name) const;
};

/// Checks consistency, the row-sum condition, the structural pattern implied
/// by `kind`, and dense-output endpoint consistency. Never throws.
ValidationReport validate_tableau(const ButcherTableau& t, double tol = 1e-12);

/// Reads {name, A (row-major), b, b_hat, c, p, p_hat, kind, b_star}.
ButcherTableau tableau_from_json(const nlohmann::json& doc);
nlohmann::json tableau_to_json(const ButcherTableau& t);

}  // namespace mrk
