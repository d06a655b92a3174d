#include "iterlstm/core_math.hpp"

#include <cmath>
#include <sstream>

namespace iterlstm {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

void Matrix::scale(double s) {
  for (double& x : data) x *= s;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string Rng::state_string() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw ConfigError("invalid RNG state string");
}

void matvec_into(const Matrix& m, const Vector& v, Vector& out) {
  if (m.cols != v.size())
    throw std::invalid_argument("matvec: dimension mismatch (" +
                                std::to_string(m.cols) + " cols vs vector " +
                                std::to_string(v.size()) + ")");
  out.resize(m.rows);
  const double* a = m.data.data();
  const double* x = v.data();
  const std::size_t n = m.cols;
  std::size_t r = 0;
  // Four rows per pass keeps four accumulation chains in flight; each row
  // still sums strictly left to right.
  for (; r + 4 <= m.rows; r += 4) {
    const double* r0 = a + r * n;
    const double* r1 = r0 + n;
    const double* r2 = r1 + n;
    const double* r3 = r2 + n;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double xj = x[j];
      s0 += r0[j] * xj;
      s1 += r1[j] * xj;
      s2 += r2[j] * xj;
      s3 += r3[j] * xj;
    }
    out[r] = s0;
    out[r + 1] = s1;
    out[r + 2] = s2;
    out[r + 3] = s3;
  }
  for (; r < m.rows; ++r) {
    const double* rp = a + r * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += rp[j] * x[j];
    out[r] = s;
  }
}

Vector matvec(const Matrix& m, const Vector& v) {
  Vector out;
  matvec_into(m, v, out);
  return out;
}

void matvec_transpose_add(const Matrix& m, const Vector& v, Vector& out) {
  if (m.rows != v.size())
    throw std::invalid_argument("matvec_transpose: dimension mismatch");
  out.resize(m.cols);
  const double* a = m.data.data();
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* rp = a + r * m.cols;
    const double vr = v[r];
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += rp[j] * vr;
  }
}

Vector matvec_transpose(const Matrix& m, const Vector& v) {
  Vector out(m.cols, 0.0);
  matvec_transpose_add(m, v, out);
  return out;
}

void add_outer(Matrix& g, const Vector& a, const Vector& b) {
  if (g.rows != a.size() || g.cols != b.size())
    throw std::invalid_argument("add_outer: dimension mismatch");
  double* gp = g.data.data();
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double ar = a[r];
    double* row = gp + r * g.cols;
    for (std::size_t j = 0; j < g.cols; ++j) row[j] += ar * b[j];
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: dimension mismatch");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * b.at(k, j);
      crow[j] = s;
    }
  }
  return c;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double inf_norm_diff(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("inf_norm_diff: dimension mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

void add_scaled(Vector& y, double a, const Vector& x) {
  if (y.size() != x.size())
    throw std::invalid_argument("add_scaled: dimension mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector sigmoid(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid_scalar(v[i]);
  return out;
}

Vector tanh_vec(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

Vector sigmoid_deriv(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double s = sigmoid_scalar(v[i]);
    out[i] = s * (1.0 - s);
  }
  return out;
}

Vector tanh_deriv(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double t = std::tanh(v[i]);
    out[i] = 1.0 - t * t;
  }
  return out;
}

double principal_singular_value(const Matrix& m, double tol,
                                std::size_t max_iter) {
  if (m.rows == 0 || m.cols == 0)
    throw std::invalid_argument("principal_singular_value: empty matrix");
  if (tol <= 0.0)
    throw std::invalid_argument("principal_singular_value: tol must be > 0");

  // Fixed seed so the start vector (and thus the whole computation) is
  // deterministic for a given shape.
  Rng rng(0x5eedu);
  Vector v = uniform_vector(m.cols, -0.5, 0.5, rng);
  double nv = l2_norm(v);
  if (nv == 0.0) return 0.0;  // cannot happen with the draw above
  for (double& x : v) x /= nv;

  Vector w(m.rows), z(m.cols);
  double est = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    matvec_into(m, v, w);
    double s = l2_norm(w);  // ||m v|| with ||v|| = 1 estimates sigma_max
    if (s == 0.0) return 0.0;
    z.assign(m.cols, 0.0);
    matvec_transpose_add(m, w, z);
    double nz = l2_norm(z);
    if (nz == 0.0) return 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) v[i] = z[i] / nz;
    if (it > 0 && std::fabs(s - est) <= tol * std::fabs(s)) return s;
    est = s;
  }
  throw ConvergenceError(
      "principal_singular_value: no convergence within " +
          std::to_string(max_iter) + " iterations",
      est);
}

Matrix uniform_init(std::size_t rows, std::size_t cols, double lo, double hi,
                    Rng& rng) {
  if (!(lo < hi))
    throw std::invalid_argument("uniform_init: requires lo < hi");
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

Vector uniform_vector(std::size_t dim, double lo, double hi, Rng& rng) {
  if (!(lo < hi))
    throw std::invalid_argument("uniform_vector: requires lo < hi");
  Vector v(dim);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace iterlstm
