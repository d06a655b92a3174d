#include "iterlstm/cell.hpp"

#include <cmath>
#include <string>

namespace iterlstm {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Matrix& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

bool same_bits(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

CellParams::CellParams(std::size_t n_units, std::size_t in_dim)
    : n(n_units),
      d(in_dim),
      w_rec_j(n_units, n_units),
      w_rec_i(n_units, n_units),
      w_rec_f(n_units, n_units),
      w_rec_o(n_units, n_units),
      w_in_j(n_units, in_dim),
      w_in_i(n_units, in_dim),
      w_in_f(n_units, in_dim),
      w_in_o(n_units, in_dim),
      b_j(n_units, 0.0),
      b_i(n_units, 0.0),
      b_f(n_units, 0.0),
      b_o(n_units, 0.0),
      w_px(in_dim, 0.0),
      w_ph(n_units, 0.0),
      w_pi(n_units, 0.0),
      w_pj(n_units, 0.0),
      w_pf(n_units, 0.0) {}

void CellParams::validate() const {
  require(n > 0 && d > 0, "CellParams: n and d must be positive");
  auto check_mat = [&](const Matrix& m, std::size_t r, std::size_t c,
                       const char* name) {
    require(m.rows == r && m.cols == c,
            std::string("CellParams: bad shape for ") + name);
    require(all_finite(m), std::string("CellParams: non-finite entries in ") + name);
  };
  check_mat(w_rec_j, n, n, "w_rec_j");
  check_mat(w_rec_i, n, n, "w_rec_i");
  check_mat(w_rec_f, n, n, "w_rec_f");
  check_mat(w_rec_o, n, n, "w_rec_o");
  check_mat(w_in_j, n, d, "w_in_j");
  check_mat(w_in_i, n, d, "w_in_i");
  check_mat(w_in_f, n, d, "w_in_f");
  check_mat(w_in_o, n, d, "w_in_o");
  auto check_vec = [&](const Vector& v, std::size_t dim, const char* name) {
    require(v.size() == dim, std::string("CellParams: bad size for ") + name);
    require(all_finite(v), std::string("CellParams: non-finite entries in ") + name);
  };
  check_vec(b_j, n, "b_j");
  check_vec(b_i, n, "b_i");
  check_vec(b_f, n, "b_f");
  check_vec(b_o, n, "b_o");
  check_vec(w_px, d, "w_px");
  check_vec(w_ph, n, "w_ph");
  check_vec(w_pi, n, "w_pi");
  check_vec(w_pj, n, "w_pj");
  check_vec(w_pf, n, "w_pf");
  require(std::isfinite(b_p), "CellParams: non-finite b_p");
}

std::size_t CellParams::parameter_count() const {
  return 4 * (n * n + n * d + n) + (d + 4 * n + 1);
}

std::vector<TensorView> CellParams::tensor_views(const std::string& prefix) {
  std::vector<TensorView> v;
  auto mat = [&](Matrix& m, const char* name) {
    v.push_back({prefix + name, m.data.data(), m.data.size(), {m.rows, m.cols}});
  };
  auto vec = [&](Vector& x, const char* name) {
    v.push_back({prefix + name, x.data(), x.size(), {x.size()}});
  };
  mat(w_rec_j, "w_rec_j");
  mat(w_rec_i, "w_rec_i");
  mat(w_rec_f, "w_rec_f");
  mat(w_rec_o, "w_rec_o");
  mat(w_in_j, "w_in_j");
  mat(w_in_i, "w_in_i");
  mat(w_in_f, "w_in_f");
  mat(w_in_o, "w_in_o");
  vec(b_j, "b_j");
  vec(b_i, "b_i");
  vec(b_f, "b_f");
  vec(b_o, "b_o");
  vec(w_px, "w_px");
  vec(w_ph, "w_ph");
  vec(w_pi, "w_pi");
  vec(w_pj, "w_pj");
  vec(w_pf, "w_pf");
  v.push_back({prefix + "b_p", &b_p, 1, {1}});
  return v;
}

void IterationConfig::validate() const {
  require(max_iterations >= 1, "IterationConfig: max_iterations must be >= 1");
  require(fixed_iterations >= 1,
          "IterationConfig: fixed_iterations must be >= 1");
  require(fixed_iterations <= max_iterations,
          "IterationConfig: fixed_iterations must not exceed max_iterations");
  require(threshold_base > 0.0 && threshold_base < 1.0,
          "IterationConfig: threshold_base must lie in (0,1)");
  require(threshold_step >= 0.0,
          "IterationConfig: threshold_step must be >= 0");
  require(threshold_cap < 1.0, "IterationConfig: threshold_cap must be < 1");
  require(threshold_base <= threshold_cap,
          "IterationConfig: threshold_base must not exceed threshold_cap");
}

double IterationConfig::threshold(std::size_t tau) const {
  double t = threshold_base + static_cast<double>(tau - 1) * threshold_step;
  return t < threshold_cap ? t : threshold_cap;
}

GateConstants precompute_constants(const CellParams& params, const Vector& x) {
  GateConstants c;
  c.j = matvec(params.w_in_j, x);
  c.i = matvec(params.w_in_i, x);
  c.f = matvec(params.w_in_f, x);
  c.o = matvec(params.w_in_o, x);
  for (std::size_t k = 0; k < params.n; ++k) {
    c.j[k] += params.b_j[k];
    c.i[k] += params.b_i[k];
    c.f[k] += params.b_f[k];
    c.o[k] += params.b_o[k];
  }
  return c;
}

IterationValues cell_iteration(const CellParams& params,
                               const GateConstants& consts, const Vector& c0,
                               const Vector& h) {
  if (c0.size() != params.n)
    throw std::invalid_argument("cell_iteration: c0 dimension mismatch");
  IterationValues v;
  v.pre_j = matvec(params.w_rec_j, h);
  for (std::size_t k = 0; k < params.n; ++k) v.pre_j[k] += consts.j[k];
  v.j = tanh_vec(v.pre_j);

  v.pre_i = matvec(params.w_rec_i, h);
  for (std::size_t k = 0; k < params.n; ++k) v.pre_i[k] += consts.i[k];
  v.i = sigmoid(v.pre_i);

  v.pre_f = matvec(params.w_rec_f, h);
  for (std::size_t k = 0; k < params.n; ++k) v.pre_f[k] += consts.f[k];
  v.f = sigmoid(v.pre_f);

  v.c.resize(params.n);
  for (std::size_t k = 0; k < params.n; ++k)
    v.c[k] = v.f[k] * c0[k] + v.i[k] * v.j[k];

  v.pre_o = matvec(params.w_rec_o, h);
  for (std::size_t k = 0; k < params.n; ++k) v.pre_o[k] += consts.o[k];
  v.o = sigmoid(v.pre_o);

  v.h_next.resize(params.n);
  for (std::size_t k = 0; k < params.n; ++k)
    v.h_next[k] = v.o[k] * std::tanh(v.c[k]);
  return v;
}

double iteration_gate_preactivation(const CellParams& params, const Vector& x,
                                    const Vector& h, const Vector& i,
                                    const Vector& j, const Vector& f) {
  return dot(params.w_px, x) + dot(params.w_ph, h) + dot(params.w_pi, i) +
         dot(params.w_pj, j) + dot(params.w_pf, f) + params.b_p;
}

double iteration_gate(const CellParams& params, const Vector& x,
                      const Vector& h, const Vector& i, const Vector& j,
                      const Vector& f) {
  return sigmoid_scalar(iteration_gate_preactivation(params, x, h, i, j, f));
}

StepResult cell_step(const CellParams& params, const IterationConfig& cfg,
                     const Vector& x, const CellState& prev) {
  cfg.validate();
  if (cfg.residual && params.d != params.n)
    throw ConfigError(
        "cell_step: residual output requires input dim == hidden units (d=" +
        std::to_string(params.d) + ", n=" + std::to_string(params.n) + ")");
  if (prev.h.size() != params.n || prev.c.size() != params.n)
    throw std::invalid_argument("cell_step: state dimension mismatch");

  StepResult out;
  out.trace.x = x;
  out.trace.c0 = prev.c;
  out.trace.h0 = prev.h;
  out.trace.consts = precompute_constants(params, x);
  out.trace.config = cfg;

  const std::size_t limit = cfg.mode == IterationMode::kFixed
                                ? cfg.fixed_iterations
                                : cfg.max_iterations;
  out.trace.iterations.reserve(limit);

  Vector h = prev.h;
  Vector c_last = prev.c;
  for (std::size_t tau = 1; tau <= limit; ++tau) {
    IterationValues v = cell_iteration(params, out.trace.consts, prev.c, h);
    IterationRecord rec;
    rec.pre_p = iteration_gate_preactivation(params, x, v.h_next, v.i, v.j, v.f);
    rec.p = sigmoid_scalar(rec.pre_p);

    rec.h.resize(params.n);
    for (std::size_t k = 0; k < params.n; ++k)
      rec.h[k] = rec.p * v.h_next[k] + (1.0 - rec.p) * h[k];

    bool halt = tau == limit;
    if (cfg.mode == IterationMode::kAdaptive && rec.p < cfg.threshold(tau))
      halt = true;
    rec.halted = halt;

    rec.pre_j = std::move(v.pre_j);
    rec.pre_i = std::move(v.pre_i);
    rec.pre_f = std::move(v.pre_f);
    rec.pre_o = std::move(v.pre_o);
    rec.j = std::move(v.j);
    rec.i = std::move(v.i);
    rec.f = std::move(v.f);
    rec.o = std::move(v.o);
    rec.c = std::move(v.c);
    rec.h_candidate = std::move(v.h_next);

    h = rec.h;
    c_last = rec.c;
    out.trace.iterations.push_back(std::move(rec));
    if (halt) break;
  }

  out.state.h = std::move(h);
  out.state.c = std::move(c_last);
  if (cfg.residual) {
    out.y.resize(params.n);
    for (std::size_t k = 0; k < params.n; ++k)
      out.y[k] = out.state.h[k] + x[k];
  } else {
    out.y = out.state.h;
  }
  return out;
}

LayerForwardResult layer_forward(const CellParams& params,
                                 const IterationConfig& cfg,
                                 const std::vector<Vector>& xs,
                                 const CellState& init,
                                 const std::vector<Vector>* dropout_masks) {
  if (dropout_masks && dropout_masks->size() != xs.size())
    throw std::invalid_argument(
        "layer_forward: dropout mask count does not match sequence length");
  LayerForwardResult out;
  out.final_state = init;
  out.ys.reserve(xs.size());
  out.traces.reserve(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Vector* xp = &xs[t];
    Vector masked;
    if (dropout_masks) {
      const Vector& mask = (*dropout_masks)[t];
      if (mask.size() != xs[t].size())
        throw std::invalid_argument("layer_forward: dropout mask dimension mismatch");
      masked.resize(mask.size());
      for (std::size_t k = 0; k < mask.size(); ++k)
        masked[k] = xs[t][k] * mask[k];
      xp = &masked;
    }
    StepResult step = cell_step(params, cfg, *xp, out.final_state);
    out.ys.push_back(std::move(step.y));
    out.traces.push_back(std::move(step.trace));
    out.final_state = std::move(step.state);
  }
  return out;
}

bool trace_matches(const CellParams& params, const IterationTrace& trace) {
  if (trace.iterations.empty()) return false;
  GateConstants consts = precompute_constants(params, trace.x);
  if (!same_bits(consts.j, trace.consts.j) ||
      !same_bits(consts.i, trace.consts.i) ||
      !same_bits(consts.f, trace.consts.f) ||
      !same_bits(consts.o, trace.consts.o))
    return false;

  const IterationConfig& cfg = trace.config;
  const std::size_t limit = cfg.mode == IterationMode::kFixed
                                ? cfg.fixed_iterations
                                : cfg.max_iterations;
  Vector h = trace.h0;
  for (std::size_t idx = 0; idx < trace.iterations.size(); ++idx) {
    const std::size_t tau = idx + 1;
    const IterationRecord& rec = trace.iterations[idx];
    IterationValues v = cell_iteration(params, consts, trace.c0, h);
    double pre_p =
        iteration_gate_preactivation(params, trace.x, v.h_next, v.i, v.j, v.f);
    double p = sigmoid_scalar(pre_p);
    if (!same_bits(v.pre_j, rec.pre_j) || !same_bits(v.pre_i, rec.pre_i) ||
        !same_bits(v.pre_f, rec.pre_f) || !same_bits(v.pre_o, rec.pre_o) ||
        !same_bits(v.j, rec.j) || !same_bits(v.i, rec.i) ||
        !same_bits(v.f, rec.f) || !same_bits(v.o, rec.o) ||
        !same_bits(v.c, rec.c) || !same_bits(v.h_next, rec.h_candidate) ||
        pre_p != rec.pre_p || p != rec.p)
      return false;
    Vector blended(params.n);
    for (std::size_t k = 0; k < params.n; ++k)
      blended[k] = p * v.h_next[k] + (1.0 - p) * h[k];
    if (!same_bits(blended, rec.h)) return false;

    bool halt = tau == limit;
    if (cfg.mode == IterationMode::kAdaptive && p < cfg.threshold(tau))
      halt = true;
    if (halt != rec.halted) return false;
    if (halt != (idx + 1 == trace.iterations.size())) return false;
    h = std::move(blended);
  }
  return true;
}

}  // namespace iterlstm
