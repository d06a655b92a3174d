#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "iterlstm/cell.hpp"
#include "iterlstm/core_math.hpp"
#include "oracles.hpp"

using namespace iterlstm;
using testutil::max_abs_diff;

namespace {

Vector rand_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("constants vanish with zero parameters") {
  CellParams p(3, 2);
  GateConstants c = precompute_constants(p, {0.4, -1.2});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(c.j[k] == 0.0);
    CHECK(c.i[k] == 0.0);
    CHECK(c.f[k] == 0.0);
    CHECK(c.o[k] == 0.0);
  }
}

TEST_CASE("constants reproduce the input under identity weights") {
  CellParams p(4, 4);
  p.w_in_j = Matrix::identity(4);
  p.w_in_i = Matrix::identity(4);
  p.w_in_f = Matrix::identity(4);
  p.w_in_o = Matrix::identity(4);
  GateConstants c = precompute_constants(p, Vector(4, 1.0));
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(c.j[k] == 1.0);
    CHECK(c.i[k] == 1.0);
    CHECK(c.f[k] == 1.0);
    CHECK(c.o[k] == 1.0);
  }
}

TEST_CASE("constants match a hand-rolled recomputation bit for bit") {
  Rng rng(91);
  CellParams p = testutil::rand_cell(5, 3, rng);
  Vector x = rand_vec(3, rng);
  GateConstants c = precompute_constants(p, x);
  // Same left-to-right row sums as the library contract, written from the
  // definition C_phi = W_in_phi x + b_phi.
  auto naive = [&](const Matrix& w, const Vector& b, std::size_t r) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.cols; ++k) s += w.at(r, k) * x[k];
    return s + b[r];
  };
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(c.j[r] == naive(p.w_in_j, p.b_j, r));
    CHECK(c.i[r] == naive(p.w_in_i, p.b_i, r));
    CHECK(c.f[r] == naive(p.w_in_f, p.b_f, r));
    CHECK(c.o[r] == naive(p.w_in_o, p.b_o, r));
  }
}

TEST_CASE("gate cascade closed form at zero parameters") {
  CellParams p(3, 3);
  GateConstants consts = precompute_constants(p, Vector(3, 0.7));
  Rng rng(7);
  Vector h = rand_vec(3, rng);

  SUBCASE("zero frozen cell state") {
    IterationValues v = cell_iteration(p, consts, Vector(3, 0.0), h);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(v.j[k] == 0.0);
      CHECK(v.i[k] == 0.5);
      CHECK(v.f[k] == 0.5);
      CHECK(v.o[k] == 0.5);
      CHECK(v.c[k] == 0.0);
      CHECK(v.h_next[k] == 0.0);
    }
  }
  SUBCASE("unit frozen cell state") {
    IterationValues v = cell_iteration(p, consts, Vector(3, 1.0), h);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(v.c[k] == 0.5);
      CHECK(v.h_next[k] == 0.5 * std::tanh(0.5));
      CHECK(v.h_next[k] == doctest::Approx(0.2310585786).epsilon(1e-9));
    }
  }
}

TEST_CASE("single gate cascade agrees with an independent LSTM step") {
  Rng rng(1234);
  for (int draw = 0; draw < 25; ++draw) {
    std::size_t n = 2 + rng.uniform_index(9);
    std::size_t d = 2 + rng.uniform_index(9);
    CellParams p = testutil::rand_cell(n, d, rng);
    Vector x = rand_vec(d, rng);
    Vector h = rand_vec(n, rng);
    Vector c0 = rand_vec(n, rng);

    GateConstants consts = precompute_constants(p, x);
    IterationValues v = cell_iteration(p, consts, c0, h);
    oracles::VanillaStep ref =
        oracles::vanilla_forward(testutil::to_vanilla(p), x, h, c0);

    CHECK(max_abs_diff(v.j, ref.j) < 1e-15);
    CHECK(max_abs_diff(v.i, ref.i) < 1e-15);
    CHECK(max_abs_diff(v.f, ref.f) < 1e-15);
    CHECK(max_abs_diff(v.c, ref.c) < 1e-15);
    CHECK(max_abs_diff(v.o, ref.o) < 1e-15);
    CHECK(max_abs_diff(v.h_next, ref.h) < 1e-15);
  }
}

TEST_CASE("iteration gate closed forms") {
  CellParams p(4, 2);
  Vector x(2, 0.3), h(4, -0.2), i(4, 0.6), j(4, 0.1), f(4, 0.9);
  CHECK(iteration_gate(p, x, h, i, j, f) == 0.5);
  p.b_p = 50.0;
  CHECK(iteration_gate(p, x, h, i, j, f) > 1.0 - 1e-9);
  p.b_p = -50.0;
  CHECK(iteration_gate(p, x, h, i, j, f) < 1e-9);
}

TEST_CASE("iteration gate matches a hand-rolled dot product bit for bit") {
  Rng rng(55);
  CellParams p = testutil::rand_cell(6, 3, rng);
  Vector x = rand_vec(3, rng), h = rand_vec(6, rng), i = rand_vec(6, rng),
         j = rand_vec(6, rng), f = rand_vec(6, rng);
  auto acc = [](const Vector& w, const Vector& v) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * v[k];
    return s;
  };
  double pre = acc(p.w_px, x) + acc(p.w_ph, h) + acc(p.w_pi, i) +
               acc(p.w_pj, j) + acc(p.w_pf, f) + p.b_p;
  CHECK(iteration_gate_preactivation(p, x, h, i, j, f) == pre);
  CHECK(iteration_gate(p, x, h, i, j, f) == sigmoid_scalar(pre));
}

TEST_CASE("threshold schedule ramps linearly and caps") {
  IterationConfig cfg;  // base 0.5, step 0.1, cap 0.95
  CHECK(cfg.threshold(1) == 0.5);
  CHECK(cfg.threshold(2) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(cfg.threshold(5) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(cfg.threshold(6) == 0.95);
  CHECK(cfg.threshold(40) == 0.95);
}

TEST_CASE("configuration validation rejects malformed setups") {
  CellParams p(3, 3);
  CellState prev(3);
  Vector x(3, 0.1);

  IterationConfig cfg;
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cell_step(p, cfg, x, prev), ConfigError);

  cfg = IterationConfig{};
  cfg.fixed_iterations = 0;
  CHECK_THROWS_AS(cell_step(p, cfg, x, prev), ConfigError);

  cfg = IterationConfig{};
  cfg.fixed_iterations = 9;  // exceeds max_iterations = 8
  CHECK_THROWS_AS(cell_step(p, cfg, x, prev), ConfigError);

  cfg = IterationConfig{};
  cfg.threshold_base = 0.9;
  cfg.threshold_cap = 0.8;
  CHECK_THROWS_AS(cell_step(p, cfg, x, prev), ConfigError);

  // Residual output needs matching dimensions.
  CellParams rect(3, 2);
  IterationConfig res;
  res.residual = true;
  CHECK_THROWS_AS(cell_step(rect, res, Vector(2, 0.0), prev), ConfigError);
  res.residual = false;
  CHECK_NOTHROW(cell_step(rect, res, Vector(2, 0.0), prev));

  CHECK_THROWS_AS(cell_step(p, IterationConfig{}, x, CellState(4)),
                  std::invalid_argument);
}

TEST_CASE("zero cell passes the input through the residual") {
  CellParams p(3, 3);
  Rng rng(3);
  Vector x = rand_vec(3, rng);
  StepResult out = cell_step(p, IterationConfig{}, x, CellState(3));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(out.state.h[k] == 0.0);
    CHECK(out.y[k] == x[k]);
  }
}

TEST_CASE("closed gate halts after one iteration") {
  Rng rng(17);
  CellParams p = testutil::rand_cell(4, 4, rng);
  std::fill(p.w_px.begin(), p.w_px.end(), 0.0);
  std::fill(p.w_ph.begin(), p.w_ph.end(), 0.0);
  std::fill(p.w_pi.begin(), p.w_pi.end(), 0.0);
  std::fill(p.w_pj.begin(), p.w_pj.end(), 0.0);
  std::fill(p.w_pf.begin(), p.w_pf.end(), 0.0);
  p.b_p = -50.0;

  IterationConfig cfg;  // adaptive
  StepResult out = cell_step(p, cfg, rand_vec(4, rng), CellState(4));
  CHECK(out.trace.executed() == 1);
  CHECK(out.trace.iterations[0].halted);
  CHECK(out.trace.iterations[0].p < cfg.threshold(1));
}

TEST_CASE("fixed mode runs exactly the configured count") {
  Rng rng(23);
  CellParams p = testutil::rand_cell(5, 5, rng);
  p.b_p = -50.0;  // would halt instantly in adaptive mode
  for (std::size_t k = 1; k <= 4; ++k) {
    IterationConfig cfg;
    cfg.mode = IterationMode::kFixed;
    cfg.fixed_iterations = k;
    StepResult out = cell_step(p, cfg, rand_vec(5, rng), CellState(5));
    CHECK(out.trace.executed() == k);
    CHECK(out.trace.iterations.back().halted);
  }
}

TEST_CASE("open gate runs to the iteration cap") {
  Rng rng(29);
  CellParams p = testutil::rand_cell(4, 4, rng);
  testutil::force_gate_open(p);
  IterationConfig cfg;
  cfg.max_iterations = 5;
  StepResult out = cell_step(p, cfg, rand_vec(4, rng), CellState(4));
  CHECK(out.trace.executed() == 5);
  CHECK(out.trace.iterations.back().halted);
}

TEST_CASE("adaptive halting honors the recorded gate decisions") {
  Rng rng(31);
  for (int draw = 0; draw < 20; ++draw) {
    std::size_t n = 2 + rng.uniform_index(7);
    CellParams p = testutil::rand_cell(n, n, rng, 1.0);
    IterationConfig cfg;
    StepResult out = cell_step(p, cfg, rand_vec(n, rng), CellState(n));
    const auto& its = out.trace.iterations;
    REQUIRE(its.size() >= 1);
    CHECK(its.size() <= cfg.max_iterations);
    for (std::size_t t = 0; t + 1 < its.size(); ++t) {
      CHECK(!its[t].halted);
      CHECK(its[t].p >= cfg.threshold(t + 1));
    }
    CHECK(its.back().halted);
    bool last_low = its.back().p < cfg.threshold(its.size());
    CHECK((last_low || its.size() == cfg.max_iterations));
  }
}

TEST_CASE("blend weights each candidate against the carried state") {
  Rng rng(37);
  CellParams p = testutil::rand_cell(4, 4, rng);
  IterationConfig cfg;
  cfg.mode = IterationMode::kFixed;
  cfg.fixed_iterations = 3;
  Vector x = rand_vec(4, rng);
  CellState prev;
  prev.h = rand_vec(4, rng, 0.5);
  prev.c = rand_vec(4, rng, 0.5);

  StepResult out = cell_step(p, cfg, x, prev);
  GateConstants consts = precompute_constants(p, x);
  Vector h = prev.h;
  for (const auto& rec : out.trace.iterations) {
    IterationValues v = cell_iteration(p, consts, prev.c, h);
    double pg = iteration_gate(p, x, v.h_next, v.i, v.j, v.f);
    CHECK(rec.p == pg);
    for (std::size_t k = 0; k < 4; ++k) {
      double blended = pg * v.h_next[k] + (1.0 - pg) * h[k];
      CHECK(rec.h[k] == blended);
    }
    h = rec.h;
  }
  CHECK(max_abs_diff(out.state.h, out.trace.iterations.back().h) == 0.0);
  CHECK(max_abs_diff(out.state.c, out.trace.iterations.back().c) == 0.0);
  for (std::size_t k = 0; k < 4; ++k) CHECK(out.y[k] == out.state.h[k] + x[k]);
}

TEST_CASE("hidden state stays inside the unit box under large weights") {
  Rng rng(41);
  CellParams p = testutil::rand_cell(6, 6, rng, 3.0);
  IterationConfig cfg;
  CellState state(6);
  for (int t = 0; t < 12; ++t) {
    StepResult out = cell_step(p, cfg, rand_vec(6, rng, 2.0), state);
    state = out.state;
    for (double hk : state.h) CHECK(std::abs(hk) < 1.0);
    for (double ck : state.c) CHECK(std::isfinite(ck));
    for (const auto& rec : out.trace.iterations) {
      CHECK(rec.p > 0.0);
      CHECK(rec.p < 1.0);
    }
  }
}

TEST_CASE("forced-open one-iteration step equals the vanilla cell") {
  Rng rng(4242);
  for (int draw = 0; draw < 25; ++draw) {
    std::size_t n = 2 + rng.uniform_index(9);
    std::size_t d = 2 + rng.uniform_index(9);
    CellParams p = testutil::rand_cell(n, d, rng);
    testutil::force_gate_open(p);

    IterationConfig cfg;
    cfg.mode = IterationMode::kFixed;
    cfg.fixed_iterations = 1;
    cfg.residual = false;

    Vector x = rand_vec(d, rng);
    CellState prev;
    prev.h = rand_vec(n, rng, 0.8);
    prev.c = rand_vec(n, rng, 0.8);

    StepResult out = cell_step(p, cfg, x, prev);
    oracles::VanillaStep ref =
        oracles::vanilla_forward(testutil::to_vanilla(p), x, prev.h, prev.c);

    CHECK(out.trace.executed() == 1);
    CHECK(out.trace.iterations[0].p == 1.0);
    CHECK(max_abs_diff(out.y, ref.h) < 1e-15);
    CHECK(max_abs_diff(out.state.h, ref.h) < 1e-15);
    CHECK(max_abs_diff(out.state.c, ref.c) < 1e-15);
  }
}

TEST_CASE("trace records the frozen constants and replays bit-exactly") {
  Rng rng(47);
  CellParams p = testutil::rand_cell(5, 5, rng);
  Vector x = rand_vec(5, rng);
  CellState prev;
  prev.h = rand_vec(5, rng, 0.5);
  prev.c = rand_vec(5, rng, 0.5);

  StepResult out = cell_step(p, IterationConfig{}, x, prev);
  CHECK(max_abs_diff(out.trace.x, x) == 0.0);
  CHECK(max_abs_diff(out.trace.c0, prev.c) == 0.0);
  CHECK(max_abs_diff(out.trace.h0, prev.h) == 0.0);
  GateConstants consts = precompute_constants(p, x);
  CHECK(max_abs_diff(out.trace.consts.j, consts.j) == 0.0);
  CHECK(max_abs_diff(out.trace.consts.o, consts.o) == 0.0);
  CHECK(trace_matches(p, out.trace));
}

TEST_CASE("trace replay detects tampering") {
  Rng rng(53);
  CellParams p = testutil::rand_cell(4, 4, rng);
  StepResult out =
      cell_step(p, IterationConfig{}, rand_vec(4, rng), CellState(4));
  REQUIRE(trace_matches(p, out.trace));

  auto tampered = out.trace;
  tampered.iterations[0].j[0] += 1e-12;
  CHECK(!trace_matches(p, tampered));

  tampered = out.trace;
  tampered.consts.i[1] += 1e-12;
  CHECK(!trace_matches(p, tampered));

  tampered = out.trace;
  tampered.iterations.back().p += 1e-12;
  CHECK(!trace_matches(p, tampered));

  tampered = out.trace;
  tampered.x[0] += 1e-9;
  CHECK(!trace_matches(p, tampered));

  tampered = out.trace;
  tampered.iterations.clear();
  CHECK(!trace_matches(p, tampered));

  CellParams other = p;
  other.w_rec_j.data[0] += 1e-12;
  CHECK(!trace_matches(other, out.trace));
}

TEST_CASE("layer forward over an empty sequence is the identity") {
  CellParams p(3, 3);
  CellState init;
  init.h = {0.1, -0.2, 0.3};
  init.c = {0.5, 0.0, -0.5};
  LayerForwardResult out = layer_forward(p, IterationConfig{}, {}, init);
  CHECK(out.ys.empty());
  CHECK(out.traces.empty());
  CHECK(max_abs_diff(out.final_state.h, init.h) == 0.0);
  CHECK(max_abs_diff(out.final_state.c, init.c) == 0.0);
}

TEST_CASE("layer forward composes single steps bit-exactly") {
  Rng rng(59);
  CellParams p = testutil::rand_cell(4, 4, rng);
  IterationConfig cfg;
  std::vector<Vector> xs = {rand_vec(4, rng), rand_vec(4, rng),
                            rand_vec(4, rng)};
  CellState init;
  init.h = rand_vec(4, rng, 0.5);
  init.c = rand_vec(4, rng, 0.5);

  LayerForwardResult out = layer_forward(p, cfg, xs, init);
  REQUIRE(out.ys.size() == 3);
  REQUIRE(out.traces.size() == 3);

  CellState state = init;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    StepResult step = cell_step(p, cfg, xs[t], state);
    CHECK(max_abs_diff(out.ys[t], step.y) == 0.0);
    CHECK(out.traces[t].executed() == step.trace.executed());
    state = step.state;
  }
  CHECK(max_abs_diff(out.final_state.h, state.h) == 0.0);
  CHECK(max_abs_diff(out.final_state.c, state.c) == 0.0);
}

TEST_CASE("layer forward applies dropout masks to its inputs") {
  Rng rng(61);
  CellParams p = testutil::rand_cell(3, 3, rng);
  std::vector<Vector> xs = {rand_vec(3, rng), rand_vec(3, rng)};
  std::vector<Vector> masks = {{2.0, 0.0, 1.0}, {0.0, 1.0, 2.0}};

  LayerForwardResult masked = layer_forward(p, IterationConfig{}, xs, CellState(3), &masks);
  std::vector<Vector> pre(xs);
  for (std::size_t t = 0; t < xs.size(); ++t)
    for (std::size_t k = 0; k < 3; ++k) pre[t][k] *= masks[t][k];
  LayerForwardResult direct = layer_forward(p, IterationConfig{}, pre, CellState(3));
  for (std::size_t t = 0; t < xs.size(); ++t)
    CHECK(max_abs_diff(masked.ys[t], direct.ys[t]) == 0.0);

  std::vector<Vector> short_masks = {masks[0]};
  CHECK_THROWS_AS(layer_forward(p, IterationConfig{}, xs, CellState(3), &short_masks),
                  std::invalid_argument);
  std::vector<Vector> bad_dim = {{1.0, 1.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(layer_forward(p, IterationConfig{}, xs, CellState(3), &bad_dim),
                  std::invalid_argument);
}

TEST_CASE("parameter enumeration covers every buffer once") {
  CellParams p(5, 3);
  auto views = p.tensor_views("layer0.");
  std::size_t total = 0;
  for (const auto& v : views) total += v.size;
  CHECK(total == p.parameter_count());
  CHECK(p.parameter_count() == 4 * (25 + 15 + 5) + (3 + 4 * 5 + 1));
  CHECK(views.front().name == "layer0.w_rec_j");
  CHECK(views.back().name == "layer0.b_p");
  for (std::size_t a = 0; a < views.size(); ++a)
    for (std::size_t b = a + 1; b < views.size(); ++b)
      CHECK(views[a].name != views[b].name);
}

TEST_CASE("parameter validation flags broken shapes and values") {
  CellParams p(3, 3);
  CHECK_NOTHROW(p.validate());
  p.b_j.resize(2);
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = CellParams(3, 3);
  p.w_rec_f.data[4] = std::nan("");
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_THROWS_AS(CellParams(0, 3).validate(), ConfigError);
}
