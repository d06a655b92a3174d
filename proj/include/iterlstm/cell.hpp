#pragma once

#include <cstddef>
#include <vector>

#include "iterlstm/core_math.hpp"

namespace iterlstm {

// All weights of one iterative LSTM layer: per gate a recurrent matrix, an
// input matrix and a bias, plus the scalar iteration-activation gate's
// weight vectors over input, candidate state and the internal gate values.
struct CellParams {
  std::size_t n = 0;  // hidden units
  std::size_t d = 0;  // input dimension

  Matrix w_rec_j, w_rec_i, w_rec_f, w_rec_o;  // n x n
  Matrix w_in_j, w_in_i, w_in_f, w_in_o;      // n x d
  Vector b_j, b_i, b_f, b_o;                  // n

  Vector w_px;                    // d
  Vector w_ph, w_pi, w_pj, w_pf;  // n
  double b_p = 0.0;

  CellParams() = default;
  CellParams(std::size_t n_units, std::size_t in_dim);

  void validate() const;
  std::size_t parameter_count() const;

  // Stable enumeration of all buffers, names prefixed (e.g. "layer0.").
  std::vector<TensorView> tensor_views(const std::string& prefix = "");
};

// Per-layer carried state. h is a product of sigma- and tanh-bounded
// factors, so |h_k| < 1 after any step.
struct CellState {
  Vector h, c;
  CellState() = default;
  explicit CellState(std::size_t n) : h(n, 0.0), c(n, 0.0) {}
};

enum class IterationMode { kFixed, kAdaptive };

struct IterationConfig {
  IterationMode mode = IterationMode::kAdaptive;
  std::size_t fixed_iterations = 1;
  std::size_t max_iterations = 8;
  double threshold_base = 0.5;  // theta_0
  double threshold_step = 0.1;  // added per iteration
  double threshold_cap = 0.95;
  bool residual = true;

  void validate() const;
  // Halting threshold for 1-based iteration tau:
  // min(threshold_base + (tau-1)*threshold_step, threshold_cap).
  double threshold(std::size_t tau) const;
};

// The four input-dependent constants C_phi = W_in_phi * x + b_phi, fixed
// across every iteration of a timestep.
struct GateConstants {
  Vector j, i, f, o;
};

// Values produced by one raw hidden-state update (no gate, no blend).
struct IterationValues {
  Vector pre_j, pre_i, pre_f, pre_o;  // pre-activations
  Vector j, i, f, c, o;
  Vector h_next;  // o (*) tanh(c)
};

// Everything recorded about one executed iteration, sufficient to replay it.
struct IterationRecord {
  Vector pre_j, pre_i, pre_f, pre_o;
  Vector j, i, f, c, o;
  Vector h_candidate;
  double pre_p = 0.0;
  double p = 0.0;
  Vector h;             // blended state after this iteration
  bool halted = false;  // whether the loop stopped after this iteration
};

struct IterationTrace {
  Vector x, c0, h0;
  GateConstants consts;
  IterationConfig config;
  std::vector<IterationRecord> iterations;

  std::size_t executed() const { return iterations.size(); }
};

GateConstants precompute_constants(const CellParams& params, const Vector& x);

// One full gate cascade evaluated in the printed order j, i, f, c, o with
// h_next = o (*) tanh(c). c0 is the frozen previous cell state.
IterationValues cell_iteration(const CellParams& params,
                               const GateConstants& consts, const Vector& c0,
                               const Vector& h);

double iteration_gate_preactivation(const CellParams& params, const Vector& x,
                                    const Vector& h, const Vector& i,
                                    const Vector& j, const Vector& f);

// p = sigma(w_px.x + w_ph.h + w_pi.i + w_pj.j + w_pf.f + b_p), scalar in (0,1).
double iteration_gate(const CellParams& params, const Vector& x,
                      const Vector& h, const Vector& i, const Vector& j,
                      const Vector& f);

struct StepResult {
  Vector y;
  CellState state;
  IterationTrace trace;
};

// One timestep: precompute constants, iterate the update with constant x and
// c0, blend each candidate through the iteration gate, halt per config, and
// emit the residual output y = h(T) + x (when enabled).
StepResult cell_step(const CellParams& params, const IterationConfig& cfg,
                     const Vector& x, const CellState& prev);

struct LayerForwardResult {
  std::vector<Vector> ys;
  CellState final_state;
  std::vector<IterationTrace> traces;
};

// Left-to-right fold of cell_step over a sequence. When dropout_masks is
// given it must have one mask per input; masks multiply the inputs
// elementwise before each step.
LayerForwardResult layer_forward(const CellParams& params,
                                 const IterationConfig& cfg,
                                 const std::vector<Vector>& xs,
                                 const CellState& init,
                                 const std::vector<Vector>* dropout_masks = nullptr);

// Replays the forward pass from the trace's recorded inputs and compares
// every recorded intermediate bit-exactly.
bool trace_matches(const CellParams& params, const IterationTrace& trace);

}  // namespace iterlstm
