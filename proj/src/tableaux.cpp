#include "mrk/tableaux.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mrk {

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::explicit_rk:
      return "explicit";
    case MethodKind::dirk:
      return "dirk";
    case MethodKind::esdirk:
      return "esdirk";
  }
  return "unknown";
}

Vector DenseOutputCoeffs::weights(double tau) const {
  Vector w = Vector::Zero(b_star.rows());
  double power = tau;
  for (Index j = 0; j < b_star.cols(); ++j) {
    w += b_star.col(j) * power;
    power *= tau;
  }
  return w;
}

bool ButcherTableau::stiffly_accurate() const {
  const Index s = stages();
  return (A.row(s - 1).transpose() - b).cwiseAbs().maxCoeff() < 1e-15;
}

namespace {

std::string registry_listing() {
  std::ostringstream os;
  const auto& names = method_names();
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? ", " : "") << names[i];
  return os.str();
}

Vector row(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ButcherTableau make_erk4() {
  ButcherTableau t;
  t.name = "erk4";
  t.kind = MethodKind::explicit_rk;
  t.A = Matrix::Zero(4, 4);
  t.A(1, 0) = 0.5;
  t.A(2, 1) = 0.5;
  t.A(3, 2) = 1.0;
  t.b = row({1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0});
  t.c = row({0.0, 0.5, 0.5, 1.0});
  t.order = 4;
  t.embedded_order = 0;
  return t;
}

// Owren-Zennaro optimal continuous fourth order method. Row 6 of A is the
// fourth order solution (FSAL) and matches B*(1). The printed a43 carries a
// sign error: -8140/4913 violates c4 = 11/17, +8140/4913 satisfies it. The
// printed weight row 101/363, ... is third order and serves as b_hat.
ButcherTableau make_erk4_owren() {
  ButcherTableau t;
  t.name = "erk4-owren";
  t.kind = MethodKind::explicit_rk;
  t.A = Matrix::Zero(6, 6);
  t.A(1, 0) = 1.0 / 6.0;
  t.A(2, 0) = 44.0 / 1369.0;
  t.A(2, 1) = 363.0 / 1369.0;
  t.A(3, 0) = 3388.0 / 4913.0;
  t.A(3, 1) = -8349.0 / 4913.0;
  t.A(3, 2) = 8140.0 / 4913.0;
  t.A(4, 0) = -36764.0 / 408375.0;
  t.A(4, 1) = 767.0 / 1125.0;
  t.A(4, 2) = -32708.0 / 136125.0;
  t.A(4, 3) = 210392.0 / 408375.0;
  t.A(5, 0) = 1697.0 / 18876.0;
  t.A(5, 1) = 0.0;
  t.A(5, 2) = 50653.0 / 116160.0;
  t.A(5, 3) = 299693.0 / 1626240.0;
  t.A(5, 4) = 3375.0 / 11648.0;
  t.b = t.A.row(5).transpose();
  t.b_hat = row({101.0 / 363.0, 0.0, -1369.0 / 14520.0, 11849.0 / 14520.0, 0.0, 0.0});
  t.c = row({0.0, 1.0 / 6.0, 11.0 / 37.0, 11.0 / 17.0, 13.0 / 15.0, 1.0});
  t.order = 4;
  t.embedded_order = 3;

  DenseOutputCoeffs d;
  d.b_star = Matrix::Zero(6, 4);
  d.b_star.row(0) << 1.0, -104217.0 / 37466.0, 1806901.0 / 618189.0, -866577.0 / 824252.0;
  d.b_star.row(2) << 0.0, 861101.0 / 230560.0, -2178079.0 / 380424.0, 12308679.0 / 5072320.0;
  d.b_star.row(3) << 0.0, -63869.0 / 293440.0, 6244423.0 / 5325936.0, -7816583.0 / 10144640.0;
  d.b_star.row(4) << 0.0, -1522125.0 / 762944.0, 982125.0 / 190736.0, -624375.0 / 217984.0;
  d.b_star.row(5) << 0.0, 165.0 / 131.0, -461.0 / 131.0, 296.0 / 131.0;
  t.dense = d;
  return t;
}

// ESDIRK3(2)4L[2]SA. gamma is the L-stability root; a3j and b follow from
// c3 = 3/5 and the order conditions:
//   a32 = c3 (c3 - 2 gamma) / (4 gamma),  a31 = c3 - a32 - gamma,
//   b2 = (-2 + 3 c3 + 6 gamma (1 - c3)) / (12 gamma (c3 - 2 gamma)),
//   b3 = (1 - 6 gamma + 6 gamma^2) / (3 c3 (c3 - 2 gamma)),
//   b1 = 1 - b2 - b3 - gamma.
// The embedded row is the second order weights of the ARK3(2)4L[2]SA implicit
// tableau, which shares gamma and the abscissae.
ButcherTableau make_esdirk3() {
  const double g = 0.43586652150845899941601945;
  const double c3 = 3.0 / 5.0;
  const double abar = 1.0 - 6.0 * g + 6.0 * g * g;
  const double a32 = c3 * (c3 - 2.0 * g) / (4.0 * g);
  const double a31 = c3 - a32 - g;
  const double b2 = (-2.0 + 3.0 * c3 + 6.0 * g * (1.0 - c3)) / (12.0 * g * (c3 - 2.0 * g));
  const double b3 = abar / (3.0 * c3 * (c3 - 2.0 * g));
  const double b1 = 1.0 - b2 - b3 - g;

  ButcherTableau t;
  t.name = "esdirk3";
  t.kind = MethodKind::esdirk;
  t.A = Matrix::Zero(4, 4);
  t.A.row(1) << g, g, 0.0, 0.0;
  t.A.row(2) << a31, a32, g, 0.0;
  t.A.row(3) << b1, b2, b3, g;
  t.b = t.A.row(3).transpose();
  t.b_hat = row({2756255671327.0 / 12835298489170.0, -10771552573575.0 / 22201958757719.0,
                 9247589265047.0 / 10645013368117.0, 2193209047091.0 / 5459859503100.0});
  t.c = row({0.0, 2.0 * g, c3, 1.0});
  t.order = 3;
  t.embedded_order = 2;

  // The published B*(3,2) is printed with a minus sign, which breaks
  // b*_3(1) = b_3 by 9.12; the positive value restores the endpoint.
  DenseOutputCoeffs d;
  d.b_star = Matrix::Zero(4, 3);
  d.b_star.row(0) << 6071615849858.0 / 5506968783323.0, -9135504192562.0 / 5563158936341.0,
      5884850621193.0 / 8091909798020.0;
  d.b_star.row(1) << 24823866123060.0 / 14064067831369.0, -184358657789355.0 / 34679930461469.0,
      40093531604824.0 / 13565043189019.0;
  d.b_star.row(2) << -4639021340861.0 / 5641321412596.0, 36951656213070.0 / 8103384546449.0,
      -9445293799577.0 / 3414897167914.0;
  d.b_star.row(3) << -4782987747279.0 / 4575882152666.0, 22547150295437.0 / 9402010570133.0,
      -8621837051676.0 / 9402290144509.0;
  t.dense = d;
  return t;
}

// ESDIRK4(3)6L[2]SA with gamma = 1/4 and the sqrt(2) closed forms.
// Embedded weights: the third order row with b_hat1 = b_hat2 (bounded
// R_hat(z) as z -> -inf) and R_hat(-inf) = 0, solved in 50-digit arithmetic.
ButcherTableau make_esdirk4() {
  const double s2 = std::sqrt(2.0);
  const double g = 0.25;
  const double c3 = (2.0 - s2) / 4.0;
  const double c4 = 5.0 / 8.0;
  const double c5 = 26.0 / 25.0;
  const double a32 = (1.0 - s2) / 8.0;
  const double a31 = c3 - a32 - g;
  const double a42 = (5.0 - 7.0 * s2) / 64.0;
  const double a43 = 7.0 * (1.0 + s2) / 32.0;
  const double a41 = c4 - a42 - a43 - g;
  const double a52 = (-13796.0 - 54539.0 * s2) / 125000.0;
  const double a53 = (506605.0 + 132109.0 * s2) / 437500.0;
  const double a54 = 166.0 * (-97.0 + 376.0 * s2) / 109375.0;
  const double a51 = c5 - a52 - a53 - a54 - g;
  const double b2 = (1181.0 - 987.0 * s2) / 13782.0;
  const double b3 = 47.0 * (-267.0 + 1783.0 * s2) / 273343.0;
  const double b4 = -16.0 * (-22922.0 + 3525.0 * s2) / 571953.0;
  const double b5 = -15625.0 * (97.0 + 376.0 * s2) / 90749876.0;
  const double b1 = 1.0 - b2 - b3 - b4 - b5 - g;

  ButcherTableau t;
  t.name = "esdirk4";
  t.kind = MethodKind::esdirk;
  t.A = Matrix::Zero(6, 6);
  t.A.row(1) << g, g, 0, 0, 0, 0;
  t.A.row(2) << a31, a32, g, 0, 0, 0;
  t.A.row(3) << a41, a42, a43, g, 0, 0;
  t.A.row(4) << a51, a52, a53, a54, g, 0;
  t.A.row(5) << b1, b2, b3, b4, b5, g;
  t.b = t.A.row(5).transpose();
  t.b_hat = row({-0.189280274448638938946176, -0.189280274448638938946176,
                 0.6777594693227287323825677, 0.5421132707302418643581714,
                 -0.05310105255011713693373231, 0.2117888613944244180853451});
  t.c = row({0.0, 2.0 * g, c3, c4, c5, 1.0});
  t.order = 4;
  t.embedded_order = 3;

  DenseOutputCoeffs d;
  d.b_star = Matrix::Zero(6, 4);
  d.b_star.row(0) << 11963910384665.0 / 12483345430363.0, -69996760330788.0 / 18526599551455.0,
      32473635429419.0 / 7030701510665.0, -14668528638623.0 / 8083464301755.0;
  d.b_star.row(1) = d.b_star.row(0);
  d.b_star.row(2) << -28603264624.0 / 1970169629981.0, 102610171905103.0 / 26266659717953.0,
      -38866317253841.0 / 6249835826165.0, 21103455885091.0 / 7774428730952.0;
  d.b_star.row(3) << -3524425447183.0 / 2683177070205.0, 74957623907620.0 / 12279805097313.0,
      -26705717223886.0 / 4265677133337.0, 30155591475533.0 / 15293695940061.0;
  d.b_star.row(4) << -17173522440186.0 / 10195024317061.0, 113853199235633.0 / 9983266320290.0,
      -121105382143155.0 / 6658412667527.0, 119853375102088.0 / 14336240079991.0;
  d.b_star.row(5) << 27308879169709.0 / 13030500014233.0, -84229392543950.0 / 6077740599399.0,
      1102028547503824.0 / 51424476870755.0, -63602213973224.0 / 6753880425717.0;
  t.dense = d;
  return t;
}

const std::map<std::string, ButcherTableau, std::less<>>& registry() {
  static const std::map<std::string, ButcherTableau, std::less<>> reg = [] {
    std::map<std::string, ButcherTableau, std::less<>> m;
    for (auto t : {make_erk4(), make_erk4_owren(), make_esdirk3(), make_esdirk4()}) {
      m.emplace(t.name, std::move(t));
    }
    return m;
  }();
  return reg;
}

}  // namespace

MethodNotFound::MethodNotFound(const std::string& name)
    : std::invalid_argument("unknown method '" + name + "'; available: " + registry_listing()) {}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"erk4", "erk4-owren", "esdirk3", "esdirk4"};
  return names;
}

const ButcherTableau& get_method(std::string_view name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw MethodNotFound(std::string(name));
  return it->second;
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const ValidationCheck* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ValidationReport validate_tableau(const ButcherTableau& t, double tol) {
  ValidationReport report;
  const Index s = t.b.size();
  auto add = [&](std::string name, double residual, bool extra_ok = true) {
    report.checks.push_back({std::move(name), extra_ok && std::isfinite(residual) && residual <= tol,
                             residual});
  };

  const bool shapes_ok = t.A.rows() == s && t.A.cols() == s && t.c.size() == s &&
                         (!t.b_hat || t.b_hat->size() == s) &&
                         (!t.dense || t.dense->b_star.rows() == s);
  report.checks.push_back({"shapes", shapes_ok, shapes_ok ? 0.0 : 1.0});
  if (!shapes_ok) return report;

  add("consistency", std::abs(t.b.sum() - 1.0));
  if (t.b_hat) add("embedded_consistency", std::abs(t.b_hat->sum() - 1.0));
  add("row_sums", (t.A.rowwise().sum() - t.c).cwiseAbs().maxCoeff());

  double upper = 0.0;
  for (Index i = 0; i < s; ++i)
    for (Index j = i + 1; j < s; ++j) upper = std::max(upper, std::abs(t.A(i, j)));
  add("lower_triangular", upper);

  const Vector diag = t.A.diagonal();
  switch (t.kind) {
    case MethodKind::explicit_rk:
      add("explicit_diagonal", diag.cwiseAbs().maxCoeff());
      break;
    case MethodKind::esdirk: {
      double spread = 0.0;
      for (Index i = 1; i < s; ++i) spread = std::max(spread, std::abs(diag(i) - diag(1)));
      add("esdirk_first_stage", std::abs(diag(0)));
      add("esdirk_constant_gamma", spread, s > 1 && diag(1) > 0.0);
      break;
    }
    case MethodKind::dirk:
      add("dirk_positive_diagonal", 0.0, diag.minCoeff() > 0.0);
      break;
  }

  if (t.dense) {
    const Vector at_one = t.dense->weights(1.0);
    add("dense_endpoint", (at_one - t.b).cwiseAbs().maxCoeff());
  }
  return report;
}

namespace {

Matrix matrix_from_rows(const nlohmann::json& j, Index rows, Index cols, const char* what) {
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Index>(flat.size()) != rows * cols)
    throw std::invalid_argument(std::string("tableau field '") + what + "' has wrong size");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = flat[static_cast<std::size_t>(i * cols + k)];
  return m;
}

Vector vector_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

MethodKind kind_from(const std::string& s) {
  if (s == "explicit") return MethodKind::explicit_rk;
  if (s == "dirk") return MethodKind::dirk;
  if (s == "esdirk") return MethodKind::esdirk;
  throw std::invalid_argument("unknown tableau kind '" + s + "'");
}

}  // namespace

ButcherTableau tableau_from_json(const nlohmann::json& doc) {
  ButcherTableau t;
  t.name = doc.at("name").get<std::string>();
  t.b = vector_from(doc.at("b"));
  const Index s = t.b.size();
  t.A = matrix_from_rows(doc.at("A"), s, s, "A");
  t.c = vector_from(doc.at("c"));
  if (doc.contains("b_hat") && !doc.at("b_hat").is_null()) t.b_hat = vector_from(doc.at("b_hat"));
  t.order = doc.at("p").get<int>();
  t.embedded_order = doc.value("p_hat", 0);
  t.kind = kind_from(doc.at("kind").get<std::string>());
  if (doc.contains("b_star") && !doc.at("b_star").is_null()) {
    const auto flat = doc.at("b_star").get<std::vector<double>>();
    if (s == 0 || flat.size() % static_cast<std::size_t>(s) != 0)
      throw std::invalid_argument("tableau field 'b_star' must be s x p* row-major");
    const Index degree = static_cast<Index>(flat.size()) / s;
    t.dense = DenseOutputCoeffs{matrix_from_rows(doc.at("b_star"), s, degree, "b_star")};
  }
  return t;
}

nlohmann::json tableau_to_json(const ButcherTableau& t) {
  auto flat = [](const Matrix& m) {
    std::vector<double> v;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
    return v;
  };
  auto vec = [](const Vector& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  nlohmann::json j;
  j["name"] = t.name;
  j["kind"] = std::string(to_string(t.kind));
  j["A"] = flat(t.A);
  j["b"] = vec(t.b);
  j["b_hat"] = t.b_hat ? nlohmann::json(vec(*t.b_hat)) : nlohmann::json(nullptr);
  j["c"] = vec(t.c);
  j["p"] = t.order;
  j["p_hat"] = t.embedded_order;
  j["b_star"] = t.dense ? nlohmann::json(flat(t.dense->b_star)) : nlohmann::json(nullptr);
  return j;
}

}  // namespace mrk
