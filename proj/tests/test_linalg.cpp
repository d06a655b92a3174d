#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "iterlstm/core_math.hpp"
#include "oracles.hpp"

using namespace iterlstm;

TEST_CASE("matvec identity and zero") {
  const Vector v{1.0, 2.0, 3.0};
  CHECK(matvec(Matrix::identity(3), v) == Vector{1.0, 2.0, 3.0});

  const Matrix zero(2, 2);
  CHECK(matvec(zero, Vector{5.0, 7.0}) == Vector{0.0, 0.0});
}

TEST_CASE("matvec agrees with an independent implementation") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = uniform_init(4, 4, -1.0, 1.0, rng);
    const Vector v = uniform_vector(4, -1.0, 1.0, rng);
    CHECK(testutil::max_abs_diff(matvec(m, v), oracles::naive_matvec(m, v)) <
          1e-15);
  }
}

TEST_CASE("matvec rejects shape mismatch") {
  CHECK_THROWS_AS(matvec(Matrix(2, 3), Vector{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("transpose matvec is the adjoint") {
  Rng rng(7);
  const Matrix m = uniform_init(5, 3, -1.0, 1.0, rng);
  const Vector u = uniform_vector(5, -1.0, 1.0, rng);
  const Vector v = uniform_vector(3, -1.0, 1.0, rng);
  // <m v, u> = <v, m^T u>
  CHECK(dot(matvec(m, v), u) ==
        doctest::Approx(dot(v, matvec_transpose(m, u))).epsilon(1e-13));
}

TEST_CASE("add_outer accumulates a rank-1 update") {
  Matrix g(2, 3);
  add_outer(g, Vector{2.0, -1.0}, Vector{1.0, 0.0, 3.0});
  add_outer(g, Vector{1.0, 1.0}, Vector{0.0, 1.0, 0.0});
  CHECK(g.at(0, 0) == 2.0);
  CHECK(g.at(0, 1) == 1.0);
  CHECK(g.at(0, 2) == 6.0);
  CHECK(g.at(1, 0) == -1.0);
  CHECK(g.at(1, 1) == 1.0);
  CHECK(g.at(1, 2) == -3.0);
}

TEST_CASE("elementwise maps hit known values") {
  CHECK(sigmoid(Vector{0.0})[0] == 0.5);
  CHECK(sigmoid_scalar(0.0) == 0.5);
  CHECK(tanh_vec(Vector{0.0})[0] == 0.0);
  CHECK(sigmoid_scalar(50.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sigmoid_scalar(-50.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(tanh_vec(Vector{50.0})[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("derivative maps satisfy their identities") {
  Rng rng(5);
  const Vector z = uniform_vector(64, -4.0, 4.0, rng);
  const Vector s = sigmoid(z), ds = sigmoid_deriv(z);
  const Vector t = tanh_vec(z), dt = tanh_deriv(z);
  for (std::size_t k = 0; k < z.size(); ++k) {
    CHECK(ds[k] == doctest::Approx(s[k] * (1.0 - s[k])).epsilon(1e-14));
    CHECK(dt[k] == doctest::Approx(1.0 - t[k] * t[k]).epsilon(1e-14));
    CHECK(ds[k] > 0.0);
    CHECK(ds[k] <= 0.25);
    CHECK(dt[k] > 0.0);
    CHECK(dt[k] <= 1.0);
  }
}

TEST_CASE("principal singular value on diagonal matrices") {
  Matrix m(3, 3);
  m.at(0, 0) = -2.5;
  m.at(1, 1) = 1.0;
  m.at(2, 2) = 0.25;
  CHECK(principal_singular_value(m) == doctest::Approx(2.5).epsilon(1e-10));
}

TEST_CASE("principal singular value of a rank-1 matrix") {
  Rng rng(11);
  const Vector u = uniform_vector(6, -1.0, 1.0, rng);
  const Vector v = uniform_vector(4, -1.0, 1.0, rng);
  Matrix m(6, 4);
  add_outer(m, u, v);
  CHECK(principal_singular_value(m) ==
        doctest::Approx(l2_norm(u) * l2_norm(v)).epsilon(1e-10));
}

TEST_CASE("principal singular value matches the Jacobi oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = uniform_init(6, 6, -1.0, 1.0, rng);
    CHECK(principal_singular_value(m) ==
          doctest::Approx(oracles::jacobi_sigma_max(m)).epsilon(1e-9));
  }
}

TEST_CASE("principal singular value of the zero matrix is zero") {
  CHECK(principal_singular_value(Matrix(4, 4)) == 0.0);
}

TEST_CASE("non-convergence carries the last estimate") {
  Rng rng(17);
  const Matrix m = uniform_init(8, 8, -1.0, 1.0, rng);
  try {
    principal_singular_value(m, 1e-30, 2);  // unreachable tolerance
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_estimate > 0.0);
    CHECK(e.last_estimate < 10.0);
  }
}

TEST_CASE("rng streams are reproducible and seed-sensitive") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int k = 0; k < 100; ++k) {
    const double ua = a.uniform(-1.0, 1.0);
    const double ub = b.uniform(-1.0, 1.0);
    const double uc = c.uniform(-1.0, 1.0);
    all_equal = all_equal && ua == ub;
    any_diff = any_diff || ua != uc;
    CHECK(ua >= -1.0);
    CHECK(ua < 1.0);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng state round-trips through text") {
  Rng a(99);
  for (int k = 0; k < 7; ++k) a.uniform(0.0, 1.0);
  const std::string saved = a.state_string();
  Vector expect;
  for (int k = 0; k < 20; ++k) expect.push_back(a.uniform(0.0, 1.0));
  Rng b(1);
  b.restore_state(saved);
  for (int k = 0; k < 20; ++k) CHECK(b.uniform(0.0, 1.0) == expect[k]);
}

TEST_CASE("derive produces decorrelated sub-seeds") {
  CHECK(Rng::derive(1, 0) != Rng::derive(1, 1));
  CHECK(Rng::derive(1, 0) != Rng::derive(2, 0));
  // near-identical inputs should still scatter
  CHECK((Rng::derive(1, 0) ^ Rng::derive(1, 1)) > 0xFFFFFFFFull);
}

TEST_CASE("uniform_index covers its range") {
  Rng rng(3);
  bool seen[5] = {false, false, false, false, false};
  for (int k = 0; k < 200; ++k) {
    const auto i = rng.uniform_index(5);
    REQUIRE(i < 5);
    seen[i] = true;
  }
  for (bool s : seen) CHECK(s);
}
