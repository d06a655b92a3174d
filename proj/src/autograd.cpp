#include "iterlstm/autograd.hpp"

#include <cmath>

namespace iterlstm {

CellGrads::CellGrads(const CellParams& p)
    : w_rec_j(p.n, p.n),
      w_rec_i(p.n, p.n),
      w_rec_f(p.n, p.n),
      w_rec_o(p.n, p.n),
      w_in_j(p.n, p.d),
      w_in_i(p.n, p.d),
      w_in_f(p.n, p.d),
      w_in_o(p.n, p.d),
      b_j(p.n, 0.0),
      b_i(p.n, 0.0),
      b_f(p.n, 0.0),
      b_o(p.n, 0.0),
      w_px(p.d, 0.0),
      w_ph(p.n, 0.0),
      w_pi(p.n, 0.0),
      w_pj(p.n, 0.0),
      w_pf(p.n, 0.0) {}

void CellGrads::zero() {
  auto z = [](Vector& v) { std::fill(v.begin(), v.end(), 0.0); };
  z(w_rec_j.data);
  z(w_rec_i.data);
  z(w_rec_f.data);
  z(w_rec_o.data);
  z(w_in_j.data);
  z(w_in_i.data);
  z(w_in_f.data);
  z(w_in_o.data);
  z(b_j);
  z(b_i);
  z(b_f);
  z(b_o);
  z(w_px);
  z(w_ph);
  z(w_pi);
  z(w_pj);
  z(w_pf);
  b_p = 0.0;
}

std::vector<TensorView> CellGrads::tensor_views(const std::string& prefix) {
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

StepBackward cell_step_backward(const IterationTrace& trace,
                                const CellParams& params, const Vector& grad_y,
                                const CellStateGrads& grad_next,
                                CellGrads& accum, bool verify_replay) {
  if (verify_replay && !trace_matches(params, trace))
    throw TraceIntegrityError(
        "cell_step_backward: trace does not replay to the recorded values "
        "under the supplied parameters");

  const std::size_t n = params.n;
  if (grad_y.size() != n || grad_next.h.size() != n || grad_next.c.size() != n)
    throw std::invalid_argument("cell_step_backward: gradient dimension mismatch");
  const std::size_t T = trace.iterations.size();
  const bool residual = trace.config.residual;

  StepBackward out;
  out.grad_x.assign(params.d, 0.0);
  out.grad_prev = CellStateGrads(n);

  // Gradients at the four iteration-constant vectors, accumulated over all
  // iterations and pushed through W_in / b at the end.
  Vector g_cj(n, 0.0), g_ci(n, 0.0), g_cf(n, 0.0), g_co(n, 0.0);

  // h(T) receives the output gradient (plus residual split) and the carried
  // state gradient from the next timestep.
  Vector gh(n);
  for (std::size_t k = 0; k < n; ++k) gh[k] = grad_y[k] + grad_next.h[k];
  if (residual)
    for (std::size_t k = 0; k < n; ++k) out.grad_x[k] += grad_y[k];

  Vector gh_prev(n), gh_cand(n), go(n), gc(n), gi(n), gj(n), gf(n), ga(n);
  for (std::size_t idx = T; idx-- > 0;) {
    const IterationRecord& rec = trace.iterations[idx];
    const Vector& h_prev = idx == 0 ? trace.h0 : trace.iterations[idx - 1].h;
    const double p = rec.p;

    // blend h(tau) = p*h_cand + (1-p)*h(tau-1)
    double gp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      gp += gh[k] * (rec.h_candidate[k] - h_prev[k]);
      gh_cand[k] = p * gh[k];
      gh_prev[k] = (1.0 - p) * gh[k];
    }

    // gate p = sigmoid(pre_p)
    const double gpre = p * (1.0 - p) * gp;
    accum.b_p += gpre;
    for (std::size_t k = 0; k < params.d; ++k) {
      accum.w_px[k] += gpre * trace.x[k];
      out.grad_x[k] += gpre * params.w_px[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
      accum.w_ph[k] += gpre * rec.h_candidate[k];
      gh_cand[k] += gpre * params.w_ph[k];
      accum.w_pi[k] += gpre * rec.i[k];
      gi[k] = gpre * params.w_pi[k];
      accum.w_pj[k] += gpre * rec.j[k];
      gj[k] = gpre * params.w_pj[k];
      accum.w_pf[k] += gpre * rec.f[k];
      gf[k] = gpre * params.w_pf[k];
    }

    // candidate h_cand = o (*) tanh(c)
    for (std::size_t k = 0; k < n; ++k) {
      const double th = std::tanh(rec.c[k]);
      go[k] = gh_cand[k] * th;
      gc[k] = gh_cand[k] * rec.o[k] * (1.0 - th * th);
    }
    // only the last iteration's c is carried to the next timestep
    if (idx + 1 == T)
      for (std::size_t k = 0; k < n; ++k) gc[k] += grad_next.c[k];

    // o = sigmoid(pre_o)
    for (std::size_t k = 0; k < n; ++k) {
      ga[k] = go[k] * rec.o[k] * (1.0 - rec.o[k]);
      g_co[k] += ga[k];
    }
    add_outer(accum.w_rec_o, ga, h_prev);
    matvec_transpose_add(params.w_rec_o, ga, gh_prev);

    // c = f (*) c0 + i (*) j
    for (std::size_t k = 0; k < n; ++k) {
      gf[k] += gc[k] * trace.c0[k];
      out.grad_prev.c[k] += gc[k] * rec.f[k];
      gi[k] += gc[k] * rec.j[k];
      gj[k] += gc[k] * rec.i[k];
    }

    // f = sigmoid(pre_f)
    for (std::size_t k = 0; k < n; ++k) {
      ga[k] = gf[k] * rec.f[k] * (1.0 - rec.f[k]);
      g_cf[k] += ga[k];
    }
    add_outer(accum.w_rec_f, ga, h_prev);
    matvec_transpose_add(params.w_rec_f, ga, gh_prev);

    // i = sigmoid(pre_i)
    for (std::size_t k = 0; k < n; ++k) {
      ga[k] = gi[k] * rec.i[k] * (1.0 - rec.i[k]);
      g_ci[k] += ga[k];
    }
    add_outer(accum.w_rec_i, ga, h_prev);
    matvec_transpose_add(params.w_rec_i, ga, gh_prev);

    // j = tanh(pre_j)
    for (std::size_t k = 0; k < n; ++k) {
      ga[k] = gj[k] * (1.0 - rec.j[k] * rec.j[k]);
      g_cj[k] += ga[k];
    }
    add_outer(accum.w_rec_j, ga, h_prev);
    matvec_transpose_add(params.w_rec_j, ga, gh_prev);

    gh.swap(gh_prev);
  }
  out.grad_prev.h = gh;

  // constants C_phi = W_in_phi x + b_phi, shared by every iteration
  add_outer(accum.w_in_j, g_cj, trace.x);
  add_outer(accum.w_in_i, g_ci, trace.x);
  add_outer(accum.w_in_f, g_cf, trace.x);
  add_outer(accum.w_in_o, g_co, trace.x);
  for (std::size_t k = 0; k < n; ++k) {
    accum.b_j[k] += g_cj[k];
    accum.b_i[k] += g_ci[k];
    accum.b_f[k] += g_cf[k];
    accum.b_o[k] += g_co[k];
  }
  matvec_transpose_add(params.w_in_j, g_cj, out.grad_x);
  matvec_transpose_add(params.w_in_i, g_ci, out.grad_x);
  matvec_transpose_add(params.w_in_f, g_cf, out.grad_x);
  matvec_transpose_add(params.w_in_o, g_co, out.grad_x);
  return out;
}

LayerBackward layer_backward(const std::vector<IterationTrace>& traces,
                             const CellParams& params,
                             const std::vector<Vector>& grad_ys,
                             const CellStateGrads& grad_final,
                             CellGrads& accum, bool verify_replay) {
  if (traces.size() != grad_ys.size())
    throw std::invalid_argument("layer_backward: trace/gradient count mismatch");
  LayerBackward out;
  out.grad_xs.resize(traces.size());
  CellStateGrads carry = grad_final;
  if (carry.h.size() != params.n) carry = CellStateGrads(params.n);
  for (std::size_t t = traces.size(); t-- > 0;) {
    StepBackward sb = cell_step_backward(traces[t], params, grad_ys[t], carry,
                                         accum, verify_replay);
    out.grad_xs[t] = std::move(sb.grad_x);
    carry = std::move(sb.grad_prev);
  }
  out.grad_init = std::move(carry);
  return out;
}

double clip_gradients(const std::vector<TensorView>& views, double max_norm) {
  if (max_norm <= 0.0)
    throw std::invalid_argument("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const TensorView& v : views) {
    for (std::size_t i = 0; i < v.size; ++i) {
      const double x = v.data[i];
      if (!std::isfinite(x))
        throw DivergenceError("clip_gradients: non-finite gradient in " + v.name);
      sq += x * x;
    }
  }
  const double norm = std::sqrt(sq);
  // The tiny slack makes clipping idempotent: rescaling to the max norm and
  // re-measuring can land a few ulps above it.
  if (norm > max_norm * (1.0 + 1e-12)) {
    const double s = max_norm / norm;
    for (const TensorView& v : views)
      for (std::size_t i = 0; i < v.size; ++i) v.data[i] *= s;
  }
  return norm;
}

std::vector<Vector> finite_difference_gradient(
    const std::function<double()>& loss_eval,
    const std::vector<TensorView>& views, double step) {
  if (step <= 0.0)
    throw std::invalid_argument("finite_difference_gradient: step must be > 0");
  std::vector<Vector> grads;
  grads.reserve(views.size());
  for (const TensorView& v : views) {
    Vector g(v.size);
    for (std::size_t i = 0; i < v.size; ++i) {
      const double orig = v.data[i];
      v.data[i] = orig + step;
      const double up = loss_eval();
      v.data[i] = orig - step;
      const double down = loss_eval();
      v.data[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw DivergenceError(
            "finite_difference_gradient: non-finite loss while perturbing " +
            v.name);
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace iterlstm
