#include "iterlstm/gradcheck.hpp"

#include <cmath>
#include <map>

namespace iterlstm {

namespace {

struct SequenceCase {
  CellParams params;
  IterationConfig cfg;
  std::vector<Vector> xs;
  CellState init;
  std::vector<Vector> loss_y;
  Vector loss_h, loss_c;
};

double case_loss(const SequenceCase& c) {
  LayerForwardResult fwd = layer_forward(c.params, c.cfg, c.xs, c.init);
  double loss = 0.0;
  for (std::size_t t = 0; t < fwd.ys.size(); ++t)
    loss += dot(c.loss_y[t], fwd.ys[t]);
  loss += dot(c.loss_h, fwd.final_state.h);
  loss += dot(c.loss_c, fwd.final_state.c);
  return loss;
}

CellParams draw_params(std::size_t n, Rng& rng) {
  CellParams p(n, n);
  for (auto& view : p.tensor_views())
    for (std::size_t k = 0; k < view.size; ++k)
      view.data[k] = rng.uniform(-0.5, 0.5);
  return p;
}

SequenceCase draw_case(std::size_t combo, const GradCheckOptions& opts,
                       std::uint64_t seed) {
  Rng rng(seed);
  SequenceCase c;
  const std::size_t n = 2 + rng.uniform_index(opts.max_units - 1);
  c.params = draw_params(n, rng);

  c.cfg.mode = (combo & 1u) ? IterationMode::kAdaptive : IterationMode::kFixed;
  c.cfg.residual = (combo & 2u) == 0;
  if (c.cfg.mode == IterationMode::kFixed) {
    c.cfg.fixed_iterations = 1 + rng.uniform_index(opts.max_iterations);
    c.cfg.max_iterations = c.cfg.fixed_iterations;
  } else {
    c.cfg.max_iterations = 1 + rng.uniform_index(opts.max_iterations);
  }

  const std::size_t steps = 1 + rng.uniform_index(opts.max_timesteps);
  for (std::size_t t = 0; t < steps; ++t) {
    c.xs.push_back(uniform_vector(n, -1.0, 1.0, rng));
    c.loss_y.push_back(uniform_vector(n, -1.0, 1.0, rng));
  }
  c.init.h = uniform_vector(n, -1.0, 1.0, rng);
  c.init.c = uniform_vector(n, -1.0, 1.0, rng);
  c.loss_h = uniform_vector(n, -1.0, 1.0, rng);
  c.loss_c = uniform_vector(n, -1.0, 1.0, rng);
  return c;
}

// The finite-difference sweep must not flip any halting decision, so reject
// draws whose gate values graze a threshold.
bool halting_is_robust(const SequenceCase& c, double slack) {
  if (c.cfg.mode == IterationMode::kFixed) return true;
  LayerForwardResult fwd = layer_forward(c.params, c.cfg, c.xs, c.init);
  for (const auto& trace : fwd.traces)
    for (std::size_t k = 0; k < trace.iterations.size(); ++k) {
      const double theta = c.cfg.threshold(k + 1);
      if (std::abs(trace.iterations[k].p - theta) < slack) return false;
    }
  return true;
}

std::string coord_name(const TensorView& view, std::size_t k) {
  if (view.shape.size() == 2)
    return view.name + "[" + std::to_string(k / view.shape[1]) + "," +
           std::to_string(k % view.shape[1]) + "]";
  return view.name + "[" + std::to_string(k) + "]";
}

}  // namespace

GradCheckReport run_gradient_checks(const GradCheckOptions& opts) {
  GradCheckReport report;
  std::map<std::string, GradCheckGroup> groups;

  for (std::size_t model = 0; model < opts.models; ++model) {
    SequenceCase c;
    std::size_t attempt = 0;
    for (;; ++attempt) {
      c = draw_case(model % 4, opts,
                    Rng::derive(opts.seed, model * 1000 + attempt));
      if (halting_is_robust(c, 1e-3)) break;
      if (attempt > 200)
        throw ConvergenceError("no halting-robust draw found", 0.0);
    }

    LayerForwardResult fwd = layer_forward(c.params, c.cfg, c.xs, c.init);
    CellGrads analytic(c.params);
    CellStateGrads grad_final(c.params.n);
    grad_final.h = c.loss_h;
    grad_final.c = c.loss_c;
    layer_backward(fwd.traces, c.params, c.loss_y, grad_final, analytic,
                   /*verify_replay=*/true);

    auto analytic_views = analytic.tensor_views();
    if (!opts.corrupt_buffer.empty())
      for (auto& view : analytic_views)
        if (view.name == opts.corrupt_buffer) view.data[0] += 1e-2;

    auto param_views = c.params.tensor_views();
    std::vector<Vector> fd = finite_difference_gradient(
        [&c]() { return case_loss(c); }, param_views, opts.fd_step);

    for (std::size_t v = 0; v < param_views.size(); ++v) {
      GradCheckGroup& group = groups[param_views[v].name];
      group.name = param_views[v].name;
      for (std::size_t k = 0; k < param_views[v].size; ++k) {
        const double a = analytic_views[v].data[k];
        const double f = fd[v][k];
        const double diff = std::abs(a - f);
        const double rel =
            diff < opts.abs_floor
                ? 0.0
                : diff / std::max(std::abs(a), std::abs(f));
        if (rel > group.max_rel_err) {
          group.max_rel_err = rel;
          group.worst_coord =
              "model " + std::to_string(model) + " " + coord_name(param_views[v], k);
        }
        if (rel > report.worst_rel_err) {
          report.worst_rel_err = rel;
          report.worst_coord = group.worst_coord;
        }
      }
    }
  }

  for (auto& [name, group] : groups) report.groups.push_back(group);
  report.pass = report.worst_rel_err < opts.tolerance;
  return report;
}

}  // namespace iterlstm
