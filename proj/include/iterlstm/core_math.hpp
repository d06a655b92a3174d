#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace iterlstm {

using Vector = std::vector<double>;

// Dense row-major matrix, 64-bit entries throughout.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  static Matrix identity(std::size_t n);
  void scale(double s);
};

// Raised on malformed configuration or unusable input files (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when an iterative numerical routine fails to converge. Carries the
// last estimate so callers can still report a partial result.
struct ConvergenceError : std::runtime_error {
  double last_estimate;
  ConvergenceError(const std::string& what, double est)
      : std::runtime_error(what), last_estimate(est) {}
};

// Raised when training produces a non-finite loss or gradient.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Seeded RNG with a platform-independent stream. mt19937_64 output is fully
// specified by the standard; the double mappings below are our own, so the
// whole stream is bit-exact everywhere for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform draw in [lo, hi). 53-bit mantissa resolution.
  double uniform(double lo, double hi) {
    double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Uniform draw in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Decorrelated sub-stream seed for draw `index` (splitmix64 finalizer).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

  // Engine state as text, for byte-exact checkpoint round-trips.
  std::string state_string() const;
  void restore_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

// Named view over one parameter or gradient buffer. Used for gradient
// clipping, SGD updates, finite-difference sweeps and checkpoint layout.
struct TensorView {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
  std::vector<std::size_t> shape;
};

// y = m * v with strictly left-to-right summation per row.
Vector matvec(const Matrix& m, const Vector& v);
void matvec_into(const Matrix& m, const Vector& v, Vector& out);

// y = m^T * v; per output coordinate the sum runs over rows in ascending
// order, so results are run-to-run identical.
Vector matvec_transpose(const Matrix& m, const Vector& v);
void matvec_transpose_add(const Matrix& m, const Vector& v, Vector& out);

// g += a * b^T (outer-product accumulation used by the backward passes).
void add_outer(Matrix& g, const Vector& a, const Vector& b);

// c = a * b, inner sums strictly left to right.
Matrix matmul(const Matrix& a, const Matrix& b);

double dot(const Vector& a, const Vector& b);
double l2_norm(const Vector& v);
double inf_norm_diff(const Vector& a, const Vector& b);
void add_scaled(Vector& y, double a, const Vector& x);  // y += a*x

// Elementwise nonlinearities and their derivative diagonals, all taken on
// pre-activations: sigmoid_deriv(x) = s(x)(1-s(x)), tanh_deriv(x) = 1-tanh(x)^2.
Vector sigmoid(const Vector& v);
Vector tanh_vec(const Vector& v);
Vector sigmoid_deriv(const Vector& v);
Vector tanh_deriv(const Vector& v);
double sigmoid_scalar(double x);

// Largest singular value via power iteration on m^T m with a fixed seeded
// start vector. Converges when the relative change of the estimate drops
// below tol; throws ConvergenceError (carrying the last estimate) otherwise.
double principal_singular_value(const Matrix& m, double tol = 1e-12,
                                std::size_t max_iter = 100000);

// i.i.d. uniform entries from the seeded stream. Requires lo < hi.
Matrix uniform_init(std::size_t rows, std::size_t cols, double lo, double hi,
                    Rng& rng);
Vector uniform_vector(std::size_t dim, double lo, double hi, Rng& rng);

}  // namespace iterlstm
