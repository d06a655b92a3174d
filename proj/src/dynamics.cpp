#include "iterlstm/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace iterlstm {

AutonomousMap make_map(CellParams params, Vector x, Vector c0) {
  if (c0.size() != params.n)
    throw std::invalid_argument("make_map: c0 dimension mismatch");
  AutonomousMap m;
  m.consts = precompute_constants(params, x);
  m.params = std::move(params);
  m.x = std::move(x);
  m.c0 = std::move(c0);
  return m;
}

Vector apply_map(const AutonomousMap& m, const Vector& h) {
  return cell_iteration(m.params, m.consts, m.c0, h).h_next;
}

Trajectory iterate_map(const AutonomousMap& m, const Vector& h0,
                       std::size_t tau_max, double tol) {
  if (tau_max < 1) throw std::invalid_argument("iterate_map: tau_max must be >= 1");
  if (tol <= 0.0) throw std::invalid_argument("iterate_map: tol must be > 0");
  Trajectory traj;
  traj.states.reserve(std::min<std::size_t>(tau_max + 1, 4096));
  traj.states.push_back(h0);
  for (std::size_t tau = 1; tau <= tau_max; ++tau) {
    Vector next = apply_map(m, traj.states.back());
    traj.final_residual = inf_norm_diff(next, traj.states.back());
    traj.states.push_back(std::move(next));
    if (traj.final_residual < tol) {
      traj.converged = true;
      break;
    }
  }
  return traj;
}

Matrix jacobian_g(const AutonomousMap& m, const Vector& h) {
  const CellParams& p = m.params;
  IterationValues v = cell_iteration(p, m.consts, m.c0, h);
  Matrix jac(p.n, p.n);
  for (std::size_t r = 0; r < p.n; ++r) {
    const double th = std::tanh(v.c[r]);
    const double dth = 1.0 - th * th;
    const double so = v.o[r] * (1.0 - v.o[r]);
    const double sf = v.f[r] * (1.0 - v.f[r]);
    const double si = v.i[r] * (1.0 - v.i[r]);
    const double dj = 1.0 - v.j[r] * v.j[r];
    const double a_o = th * so;
    const double a_f = v.o[r] * dth * m.c0[r] * sf;
    const double a_i = v.o[r] * dth * v.j[r] * si;
    const double a_j = v.o[r] * dth * v.i[r] * dj;
    const double* wo = p.w_rec_o.row(r);
    const double* wf = p.w_rec_f.row(r);
    const double* wi = p.w_rec_i.row(r);
    const double* wj = p.w_rec_j.row(r);
    double* out = jac.row(r);
    for (std::size_t s = 0; s < p.n; ++s)
      out[s] = a_o * wo[s] + a_f * wf[s] + a_i * wi[s] + a_j * wj[s];
  }
  return jac;
}

LyapunovEstimate lyapunov_direct(const AutonomousMap& m, const Vector& h0,
                                 double delta0, std::size_t tau, Rng& rng) {
  if (delta0 <= 0.0)
    throw std::invalid_argument("lyapunov_direct: delta0 must be > 0");
  if (tau < 1) throw std::invalid_argument("lyapunov_direct: tau must be >= 1");

  const std::size_t n = h0.size();
  Vector dir;
  double norm = 0.0;
  do {
    dir = uniform_vector(n, -1.0, 1.0, rng);
    norm = l2_norm(dir);
  } while (norm < 1e-12);

  Vector a = h0;
  Vector b = h0;
  for (std::size_t k = 0; k < n; ++k) b[k] += delta0 * dir[k] / norm;

  double log_sum = 0.0;
  Vector diff(n);
  for (std::size_t step = 0; step < tau; ++step) {
    a = apply_map(m, a);
    b = apply_map(m, b);
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      diff[k] = b[k] - a[k];
      d += diff[k] * diff[k];
    }
    d = std::sqrt(d);
    if (d == 0.0) return {true, 0.0};
    log_sum += std::log(d / delta0);
    const double scale = delta0 / d;
    for (std::size_t k = 0; k < n; ++k) b[k] = a[k] + scale * diff[k];
  }
  return {false, log_sum / static_cast<double>(tau)};
}

namespace {

// Column-major basis held as vectors; modified Gram-Schmidt on the columns
// of J*Q. A zero column means the expansion along that direction hit an
// exact zero; the direction is marked collapsed and replaced by a
// deterministic completion so the remaining exponents stay meaningful.
struct QrState {
  std::vector<Vector> q;  // orthonormal columns
  std::vector<double> sums;
  std::vector<bool> collapsed;
};

void orthogonalize_against(const std::vector<Vector>& q, std::size_t count,
                           Vector& v) {
  for (std::size_t l = 0; l < count; ++l) {
    double r = dot(q[l], v);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= r * q[l][k];
  }
}

Vector completion_direction(const std::vector<Vector>& q, std::size_t count,
                            std::size_t n) {
  for (std::size_t b = 0; b < n; ++b) {
    Vector v(n, 0.0);
    v[b] = 1.0;
    orthogonalize_against(q, count, v);
    double norm = l2_norm(v);
    if (norm > 1e-8) {
      for (double& x : v) x /= norm;
      return v;
    }
  }
  throw std::logic_error("lyapunov_spectrum: basis completion failed");
}

}  // namespace

std::vector<LyapunovEstimate> lyapunov_spectrum(const AutonomousMap& m,
                                                const Vector& h0,
                                                std::size_t tau) {
  if (tau < 1) throw std::invalid_argument("lyapunov_spectrum: tau must be >= 1");
  const std::size_t n = h0.size();

  QrState st;
  st.q.resize(n);
  st.sums.assign(n, 0.0);
  st.collapsed.assign(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    st.q[k].assign(n, 0.0);
    st.q[k][k] = 1.0;
  }

  Vector h = h0;
  Vector col(n);
  for (std::size_t step = 0; step < tau; ++step) {
    Matrix jac = jacobian_g(m, h);
    std::vector<Vector> mapped(n);
    for (std::size_t k = 0; k < n; ++k) mapped[k] = matvec(jac, st.q[k]);
    for (std::size_t k = 0; k < n; ++k) {
      col = std::move(mapped[k]);
      orthogonalize_against(st.q, k, col);
      double rkk = l2_norm(col);
      if (rkk == 0.0) {
        st.collapsed[k] = true;
        st.q[k] = completion_direction(st.q, k, n);
      } else {
        if (!st.collapsed[k]) st.sums[k] += std::log(rkk);
        for (double& x : col) x /= rkk;
        st.q[k] = std::move(col);
        col.resize(n);
      }
    }
    h = apply_map(m, h);
  }

  std::vector<LyapunovEstimate> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (st.collapsed[k])
      out[k] = {true, 0.0};
    else
      out[k] = {false, st.sums[k] / static_cast<double>(tau)};
  }
  std::sort(out.begin(), out.end(),
            [](const LyapunovEstimate& a, const LyapunovEstimate& b) {
              if (a.exact_convergence != b.exact_convergence)
                return !a.exact_convergence;  // finite values first
              return a.value > b.value;
            });
  return out;
}

ConditionReport check_condition(const CellParams& params, double tol) {
  ConditionReport rep;
  rep.sigma_j = principal_singular_value(params.w_rec_j, tol);
  rep.sigma_i = principal_singular_value(params.w_rec_i, tol);
  rep.sigma_f = principal_singular_value(params.w_rec_f, tol);
  rep.sigma_o = principal_singular_value(params.w_rec_o, tol);
  rep.margin = 1.0 - (rep.sigma_j +
                      0.25 * (rep.sigma_i + rep.sigma_f + rep.sigma_o));
  rep.holds = rep.margin > 0.0;
  return rep;
}

CellParams spectral_rescale(const CellParams& params, double target_margin) {
  if (!(target_margin < 1.0))
    throw std::invalid_argument("spectral_rescale: target_margin must be < 1");
  ConditionReport rep = check_condition(params);
  const double sum = rep.sigma_j +
                     0.25 * (rep.sigma_i + rep.sigma_f + rep.sigma_o);
  if (sum <= 0.0)
    throw std::invalid_argument(
        "spectral_rescale: recurrent weights are all zero, nothing to rescale");
  const double s = (1.0 - target_margin) / sum;
  CellParams out = params;
  out.w_rec_j.scale(s);
  out.w_rec_i.scale(s);
  out.w_rec_f.scale(s);
  out.w_rec_o.scale(s);
  return out;
}

MapDraw run_map_draw(const CellParams& params, std::uint64_t seed,
                     const DrawOptions& opts) {
  Rng rng(seed);
  const std::size_t n = params.n;
  Vector x = uniform_vector(params.d, -1.0, 1.0, rng);
  Vector c0 = uniform_vector(n, -1.0, 1.0, rng);
  Vector h0 = uniform_vector(n, -1.0, 1.0, rng);

  MapDraw d;
  d.seed = seed;
  d.units = n;
  d.margin = check_condition(params).margin;

  AutonomousMap map = make_map(params, std::move(x), std::move(c0));
  Trajectory traj = iterate_map(map, h0, opts.max_steps, opts.tol);
  d.converged = traj.converged;
  d.steps = traj.steps();
  d.lambda_direct = lyapunov_direct(map, h0, opts.delta0, opts.tau, rng);
  std::vector<LyapunovEstimate> spec = lyapunov_spectrum(map, h0, opts.tau);
  d.lambda_qr_max = spec.front();
  for (const LyapunovEstimate& e : spec) {
    if (e.exact_convergence || d.spectrum_head.size() >= 4) break;
    d.spectrum_head.push_back(e.value);
  }
  return d;
}

MapDraw run_condition_draw(std::uint64_t seed, double target_margin,
                           const DrawOptions& opts) {
  Rng rng(Rng::derive(seed, 0));
  const std::size_t span = opts.max_units - opts.min_units + 1;
  const std::size_t n = opts.min_units + rng.uniform_index(span);

  // Regime mixture. Isotropic draws rescaled to a strongly negative margin
  // saturate every gate and stay dissipative, so half the draws randomize
  // the per-gate recurrent scales and a quarter additionally open the input
  // and output gates (closed forget gate keeps c inside tanh's active
  // band). The rescale pins the condition sum either way, so the margin
  // side of each draw is unaffected.
  const double regime = rng.uniform(0.0, 1.0);
  double si = 1.0, sf = 1.0, so = 1.0;
  double mu_i = 0.0, mu_f = 0.0, mu_o = 0.0;
  if (regime >= 0.5) {
    si = std::pow(10.0, rng.uniform(-2.0, 0.0));
    sf = std::pow(10.0, rng.uniform(-2.0, 0.0));
    so = std::pow(10.0, rng.uniform(-2.0, 0.0));
  }
  if (regime >= 0.75) {
    mu_i = 3.0;
    mu_o = 3.0;
    mu_f = -3.0;
  }

  CellParams params(n, n);
  const double r = opts.init_range;
  params.w_rec_j = uniform_init(n, n, -r, r, rng);
  params.w_rec_i = uniform_init(n, n, -r * si, r * si, rng);
  params.w_rec_f = uniform_init(n, n, -r * sf, r * sf, rng);
  params.w_rec_o = uniform_init(n, n, -r * so, r * so, rng);
  params.w_in_j = uniform_init(n, n, -r, r, rng);
  params.w_in_i = uniform_init(n, n, -r, r, rng);
  params.w_in_f = uniform_init(n, n, -r, r, rng);
  params.w_in_o = uniform_init(n, n, -r, r, rng);
  params.b_j = uniform_vector(n, -r, r, rng);
  params.b_i = uniform_vector(n, mu_i - r, mu_i + r, rng);
  params.b_f = uniform_vector(n, mu_f - r, mu_f + r, rng);
  params.b_o = uniform_vector(n, mu_o - r, mu_o + r, rng);
  params = spectral_rescale(params, target_margin);
  MapDraw d = run_map_draw(params, Rng::derive(seed, 1), opts);
  d.seed = seed;  // records the draw seed, not the internal sub-stream
  return d;
}

std::string draw_record_json(const MapDraw& d) {
  nlohmann::ordered_json j;
  j["seed"] = d.seed;
  j["units"] = d.units;
  j["margin"] = d.margin;
  j["converged"] = d.converged;
  j["steps"] = d.steps;
  if (d.lambda_direct.exact_convergence)
    j["lambda_max"] = nullptr;
  else
    j["lambda_max"] = d.lambda_direct.value;
  if (d.lambda_qr_max.exact_convergence)
    j["lambda_qr_max"] = nullptr;
  else
    j["lambda_qr_max"] = d.lambda_qr_max.value;
  j["spectrum_head"] = d.spectrum_head;
  return j.dump();
}

}  // namespace iterlstm
