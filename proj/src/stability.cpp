#include "mrk/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mrk {

namespace {

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

IndexList complement(Index n, const IndexList& fast) {
  std::vector<char> is_fast(at(n), 0);
  for (Index i : fast) is_fast[at(i)] = 1;
  IndexList slow;
  for (Index i = 0; i < n; ++i)
    if (!is_fast[at(i)]) slow.push_back(i);
  return slow;
}

// Diagonal similarity scaling by powers of two so that row and column norms
// are comparable.
void balance(Matrix& a) {
  const Index n = a.rows();
  const double radix = 2.0;
  const double sqrdx = radix * radix;
  bool done = false;
  while (!done) {
    done = true;
    for (Index i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (Index j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        a.row(i) *= g;
        a.col(i) *= f;
      }
    }
  }
}

// Reduction to upper Hessenberg form by stabilized elementary similarity
// transformations.
void hessenberg(Matrix& a) {
  const Index n = a.rows();
  for (Index m = 1; m < n - 1; ++m) {
    double x = 0.0;
    Index i = m;
    for (Index j = m; j < n; ++j)
      if (std::abs(a(j, m - 1)) > std::abs(x)) {
        x = a(j, m - 1);
        i = j;
      }
    if (i != m) {
      for (Index j = m - 1; j < n; ++j) std::swap(a(i, j), a(m, j));
      for (Index j = 0; j < n; ++j) std::swap(a(j, i), a(j, m));
    }
    if (x != 0.0) {
      for (i = m + 1; i < n; ++i) {
        double y = a(i, m - 1);
        if (y == 0.0) continue;
        y /= x;
        a(i, m - 1) = y;
        for (Index j = m; j < n; ++j) a(i, j) -= y * a(m, j);
        for (Index j = 0; j < n; ++j) a(j, m) += y * a(j, i);
      }
    }
  }
  for (Index i = 2; i < n; ++i)
    for (Index j = 0; j < i - 1; ++j) a(i, j) = 0.0;
}

double sign_of(double magnitude, double sign) { return sign >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

// Francis double-shift QR on an upper Hessenberg matrix.
std::vector<std::complex<double>> hessenberg_qr(Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<std::complex<double>> w(static_cast<std::size_t>(n));
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  int nn = n - 1;
  double t = 0.0;
  double p = 0.0, q = 0.0, r = 0.0, s = 0.0, x = 0.0, y = 0.0, z = 0.0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l > 0; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= eps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        w[static_cast<std::size_t>(nn--)] = x + t;
      } else {
        y = a(nn - 1, nn - 1);
        double wprod = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + wprod;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            w[static_cast<std::size_t>(nn - 1)] = w[static_cast<std::size_t>(nn)] = x + z;
            if (z != 0.0) w[static_cast<std::size_t>(nn)] = x - wprod / z;
          } else {
            w[static_cast<std::size_t>(nn)] = {x + p, -z};
            w[static_cast<std::size_t>(nn - 1)] = std::conj(w[static_cast<std::size_t>(nn)]);
          }
          nn -= 2;
        } else {
          if (its == 60) throw std::runtime_error("eigenvalues: QR iteration did not converge");
          if (its > 0 && its % 10 == 0) {
            // Exceptional shift.
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            wprod = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - wprod) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

}  // namespace

Matrix PartitionedLinearModel::block(const IndexList& rows, const IndexList& cols) const {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = L(rows[i], cols[j]);
  return out;
}

PartitionedLinearModel make_partitioned_model(Matrix L, IndexList fast, std::string name) {
  if (L.rows() != L.cols()) throw std::invalid_argument("partitioned model: L must be square");
  std::sort(fast.begin(), fast.end());
  fast.erase(std::unique(fast.begin(), fast.end()), fast.end());
  for (Index i : fast)
    if (i < 0 || i >= L.rows()) throw std::invalid_argument("partitioned model: fast index out of range");
  PartitionedLinearModel m;
  m.name = std::move(name);
  m.slow = complement(L.rows(), fast);
  m.fast = std::move(fast);
  m.L = std::move(L);
  m.spectral_scale = spectral_radius(m.L);
  return m;
}

PartitionedLinearModel model_2dof(double alpha, double kappa) {
  if (!(alpha > 0.0)) throw std::invalid_argument("model_2dof: alpha must be positive");
  if (!(kappa < 1.0)) throw std::invalid_argument("model_2dof: kappa must be below 1");
  Matrix L(2, 2);
  L << -1.0, 1.0, -kappa * alpha, -alpha;
  return make_partitioned_model(std::move(L), {1}, "2dof");
}

PartitionedLinearModel model_4dof(double omega1, double gamma1, double alpha, double beta, double kappa) {
  if (!(omega1 > 0.0)) throw std::invalid_argument("model_4dof: omega1 must be positive");
  if (!(gamma1 >= 0.0)) throw std::invalid_argument("model_4dof: gamma1 must be nonnegative");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("model_4dof: alpha and beta must be positive");
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("model_4dof: kappa must lie in [0, 1]");
  const double w2 = omega1 * omega1;
  const double a2 = alpha * alpha;
  Matrix L = Matrix::Zero(4, 4);
  L(0, 1) = 1.0;
  L(1, 0) = -w2 * (1.0 + a2 * kappa);
  L(1, 1) = -gamma1;
  L(1, 2) = kappa * a2 * w2;
  L(2, 3) = 1.0;
  L(3, 0) = a2 * w2;
  L(3, 2) = -a2 * w2;
  L(3, 3) = -beta * gamma1;
  return make_partitioned_model(std::move(L), {2, 3}, "4dof");
}

std::vector<std::complex<double>> eigenvalues(const Matrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("eigenvalues: matrix must be square");
  if (!A.allFinite()) throw std::runtime_error("eigenvalues: non-finite entries");
  if (A.rows() == 0) return {};
  if (A.rows() == 1) return {A(0, 0)};
  Matrix a = A;
  balance(a);
  hessenberg(a);
  return hessenberg_qr(a);
}

double spectral_radius(const Matrix& A) {
  double rho = 0.0;
  for (const auto& z : eigenvalues(A)) rho = std::max(rho, std::abs(z));
  return rho;
}

Matrix matrix_exponential(const Matrix& L, double t) {
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;
  const Index n = L.rows();
  Matrix A = L * t;
  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 == 0.0) return Matrix::Identity(n, n);
  int squarings = 0;
  if (norm1 > theta13) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
  A /= std::ldexp(1.0, squarings);

  const Matrix I = Matrix::Identity(n, n);
  const Matrix A2 = A * A;
  const Matrix A4 = A2 * A2;
  const Matrix A6 = A4 * A2;
  const Matrix U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
  const Matrix V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
  Matrix R = (V - U).partialPivLu().solve(V + U);
  for (int k = 0; k < squarings; ++k) R = R * R;
  return R;
}

Matrix single_rate_R(const Matrix& L, double h, const ButcherTableau& method) {
  return stage_operators(L, h, method).step;
}

MultirateAmplification multirate_R(const PartitionedLinearModel& model, double h_s, int M,
                                   const ButcherTableau& method, InterpKind interp) {
  if (M < 1) throw std::invalid_argument("multirate_R: M must be at least 1");
  const Index N = model.size();
  const Index d = model.fast_size();
  const int s = method.stages();
  const double h_f = h_s / M;

  const StageOperators global = stage_operators(model.L, h_s, method);

  MultirateAmplification out;
  out.h_s = h_s;
  out.M = M;
  out.R = global.step;
  if (d == 0) {
    out.C_ff = Matrix(0, 0);
    return out;
  }

  const Matrix L_ff = model.L_ff();
  const Matrix L_fs_Ps = [&] {
    // L_fs P_s as a d x N matrix acting on the full state.
    Matrix m = Matrix::Zero(d, N);
    for (std::size_t j = 0; j < model.slow.size(); ++j)
      for (Index i = 0; i < d; ++i) m(i, model.slow[j]) = model.L(model.fast[at(i)], model.slow[j]);
    return m;
  }();

  StageOperators fast;
  try {
    fast = stage_operators(L_ff, h_f, method);
  } catch (const SingularStageFactor& e) {
    throw SingularStageFactor(e.stage, 0);
  }
  out.C_ff = fast.step;

  const Matrix Id = Matrix::Identity(d, d);
  std::vector<Eigen::PartialPivLU<Matrix>> factors(static_cast<std::size_t>(s));
  for (int k = 0; k < s; ++k) {
    const double a_kk = method.A(k, k);
    if (a_kk == 0.0) continue;
    auto& lu = factors[static_cast<std::size_t>(k)];
    lu.compute(Id - (h_f * a_kk) * L_ff);
    if (!std::isfinite(lu.rcond()) || lu.rcond() < 1e-14) throw SingularStageFactor(k + 1, 0);
  }

  std::vector<Matrix> fs_Q(static_cast<std::size_t>(s));  // L_fs P_s Q^(j,l)
  std::vector<Matrix> ff_B(static_cast<std::size_t>(s));  // L_ff B^(j,l)
  out.D.reserve(static_cast<std::size_t>(M));
  for (int l = 0; l < M; ++l) {
    for (int j = 0; j < s; ++j) {
      const double tau = (l + method.c(j)) / M;
      fs_Q[static_cast<std::size_t>(j)] = L_fs_Ps * interp_operator_extended(interp, global, model.L, h_s, method, tau);
    }
    Matrix D = Matrix::Zero(d, N);
    for (int k = 0; k < s; ++k) {
      Matrix acc = Matrix::Zero(d, N);
      for (int j = 0; j <= k; ++j) {
        const double a = method.A(k, j);
        if (a == 0.0) continue;
        acc.noalias() += (h_f * a) * fs_Q[static_cast<std::size_t>(j)];
        if (j < k) acc.noalias() += (h_f * a) * ff_B[static_cast<std::size_t>(j)];
      }
      const double a_kk = method.A(k, k);
      Matrix B_k = a_kk != 0.0 ? Matrix(factors[static_cast<std::size_t>(k)].solve(acc)) : acc;
      ff_B[static_cast<std::size_t>(k)] = L_ff * B_k;
      if (method.b(k) != 0.0)
        D.noalias() += method.b(k) * (ff_B[static_cast<std::size_t>(k)] + fs_Q[static_cast<std::size_t>(k)]);
    }
    out.D.push_back(std::move(D));
  }

  // Fast rows: C_ff^M P_f + h_f sum_l C_ff^(M-1-l) D^(l), accumulated by Horner.
  Matrix fast_rows = Matrix::Zero(d, N);
  for (int l = 0; l < M; ++l) fast_rows = out.C_ff * fast_rows + h_f * out.D[static_cast<std::size_t>(l)];
  Matrix C_pow = Id;
  for (int l = 0; l < M; ++l) C_pow = out.C_ff * C_pow;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) fast_rows(i, model.fast[at(j)]) += C_pow(i, j);

  for (Index i = 0; i < d; ++i) out.R.row(model.fast[at(i)]) = fast_rows.row(i);
  return out;
}

double multirate_rho(const PartitionedLinearModel& model, double C, int M, const ButcherTableau& method,
                     InterpKind interp) {
  return spectral_radius(multirate_R(model, C / model.spectral_scale, M, method, interp).R);
}

std::vector<double> default_c_grid(int c_max) {
  std::vector<double> grid;
  for (int c = 1; c <= c_max; ++c) grid.push_back(c);
  return grid;
}

std::string StabilityLimit::table_entry() const {
  std::ostringstream os;
  if (first_unstable) {
    os << *first_unstable;
  } else {
    os << ">=" << grid_max;
  }
  return os.str();
}

std::vector<ScanPoint> scan_rho(const PartitionedLinearModel& model, const ButcherTableau& method, InterpKind interp,
                                int M, const std::vector<double>& C_grid, double rho_tol) {
  std::vector<ScanPoint> points;
  points.reserve(C_grid.size());
  for (double C : C_grid) {
    const double rho = multirate_rho(model, C, M, method, interp);
    points.push_back({C, rho, rho <= 1.0 + rho_tol});
  }
  return points;
}

StabilityLimit summarize_scan(const std::vector<ScanPoint>& points) {
  StabilityLimit lim;
  for (const auto& p : points) {
    lim.grid_max = std::max(lim.grid_max, p.C);
    if (p.stable) {
      if (!lim.largest_stable || p.C > *lim.largest_stable) lim.largest_stable = p.C;
    } else if (!lim.first_unstable || p.C < *lim.first_unstable) {
      lim.first_unstable = p.C;
    }
  }
  return lim;
}

StabilityLimit max_stable_C(const PartitionedLinearModel& model, const ButcherTableau& method, InterpKind interp,
                            int M, const std::vector<double>& C_grid, double rho_tol) {
  if (C_grid.empty()) throw std::invalid_argument("max_stable_C: empty C grid");
  return summarize_scan(scan_rho(model, method, interp, M, C_grid, rho_tol));
}

PropagatorError propagator_error(const PartitionedLinearModel& model, const ButcherTableau& method, InterpKind interp,
                                 PropagatorMode mode, int M, double C, double t_final) {
  if (!(C > 0.0) || !(t_final > 0.0)) throw std::invalid_argument("propagator_error: C and t_final must be positive");
  PropagatorError out;
  out.steps = std::max(1L, std::lround(t_final * model.spectral_scale / C));
  const double h_s = t_final / static_cast<double>(out.steps);
  out.effective_C = h_s * model.spectral_scale;

  const Matrix A = mode == PropagatorMode::single ? single_rate_R(model.L, h_s, method)
                                                  : multirate_R(model, h_s, M, method, interp).R;
  Matrix power = Matrix::Identity(A.rows(), A.cols());
  Matrix base = A;
  for (long n = out.steps; n > 0; n >>= 1) {
    if (n & 1) power = power * base;
    if (n > 1) base = base * base;
  }
  const Matrix exact = matrix_exponential(model.L, t_final);
  auto norm2 = [](const Matrix& X) { return Eigen::JacobiSVD<Matrix>(X).singularValues()(0); };
  out.error = norm2(power - exact) / norm2(exact);
  return out;
}

}  // namespace mrk
