#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iterlstm/cell.hpp"
#include "iterlstm/core_math.hpp"

namespace iterlstm {

// Raised when a trace does not replay to the recorded intermediates under
// the supplied parameters.
struct TraceIntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gradient buffers mirroring CellParams shape for shape.
struct CellGrads {
  Matrix w_rec_j, w_rec_i, w_rec_f, w_rec_o;
  Matrix w_in_j, w_in_i, w_in_f, w_in_o;
  Vector b_j, b_i, b_f, b_o;
  Vector w_px;
  Vector w_ph, w_pi, w_pj, w_pf;
  double b_p = 0.0;

  CellGrads() = default;
  explicit CellGrads(const CellParams& p);
  void zero();
  std::vector<TensorView> tensor_views(const std::string& prefix = "");
};

struct CellStateGrads {
  Vector h, c;
  CellStateGrads() = default;
  explicit CellStateGrads(std::size_t n) : h(n, 0.0), c(n, 0.0) {}
};

// How the unrolled computation is differentiated. The halting comparison is
// discrete structure fixed by the forward pass; gradients flow through the
// gate value p and the blend, never through the threshold comparison.
enum class BlendDifferentiation { kFull };

struct BackpropPlan {
  std::size_t unroll_length = 1;
  BlendDifferentiation blend = BlendDifferentiation::kFull;
};

struct StepBackward {
  Vector grad_x;
  CellStateGrads grad_prev;
};

// Exact reverse pass through one recorded timestep: every executed
// iteration, the blend, the gate, the residual connection and the
// constant-c0 fan-out. grad_y is the loss gradient at the step output y;
// grad_next carries gradients arriving at (next.h, next.c) from the
// following timestep. Parameter gradients accumulate into `accum`.
// With verify_replay the trace is first replayed against params bit-exactly.
StepBackward cell_step_backward(const IterationTrace& trace,
                                const CellParams& params, const Vector& grad_y,
                                const CellStateGrads& grad_next,
                                CellGrads& accum, bool verify_replay = true);

struct LayerBackward {
  std::vector<Vector> grad_xs;  // gradients at the (post-mask) step inputs
  CellStateGrads grad_init;
};

// Reverse fold over a recorded sequence, threading state gradients.
LayerBackward layer_backward(const std::vector<IterationTrace>& traces,
                             const CellParams& params,
                             const std::vector<Vector>& grad_ys,
                             const CellStateGrads& grad_final,
                             CellGrads& accum, bool verify_replay = false);

// Global-norm clipping over all buffers concatenated. Scales in place when
// the L2 norm exceeds max_norm and returns the pre-clip norm. Non-finite
// entries raise DivergenceError.
double clip_gradients(const std::vector<TensorView>& views,
                      double max_norm = 5.0);

// Central differences (L(t+d) - L(t-d)) / (2d) for every coordinate of every
// view. loss_eval must be deterministic; buffers are restored bit-exactly.
std::vector<Vector> finite_difference_gradient(
    const std::function<double()>& loss_eval,
    const std::vector<TensorView>& views, double step);

}  // namespace iterlstm
