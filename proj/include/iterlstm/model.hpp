#pragma once

#include <cstddef>
#include <vector>

#include "iterlstm/autograd.hpp"
#include "iterlstm/cell.hpp"
#include "iterlstm/core_math.hpp"
#include "iterlstm/corpus.hpp"

namespace iterlstm {

// Embedding -> stacked iterative cells -> softmax. Embedding dimension equals
// the unit count, so every cell runs n -> n and the residual path is valid.
struct LmModel {
  std::size_t vocab_size = 0;
  std::size_t units = 0;
  std::size_t num_layers = 0;
  Matrix embedding;              // vocab_size x units
  std::vector<CellParams> cells;
  Matrix softmax_w;              // vocab_size x units
  Vector softmax_b;              // vocab_size
  IterationConfig iteration;

  void validate() const;
  std::size_t parameter_count() const;
  std::vector<TensorView> tensor_views();
};

LmModel init_model(std::size_t vocab_size, std::size_t units,
                   std::size_t num_layers, const IterationConfig& iteration,
                   double init_range, Rng& rng);

struct ModelGrads {
  Matrix embedding;
  std::vector<CellGrads> cells;
  Matrix softmax_w;
  Vector softmax_b;

  explicit ModelGrads(const LmModel& model);
  void zero();
  std::vector<TensorView> tensor_views();
};

// Inverted dropout: entries are 1/keep_prob with probability keep_prob, else
// 0. keep_prob = 1 returns the identity mask without consuming rng draws.
Vector dropout_mask(std::size_t dim, double keep_prob, Rng& rng);

enum class RunMode { kTrain, kEval };

struct WindowStats {
  double sum_nll = 0.0;  // natural log
  std::size_t tokens = 0;
  std::size_t iterations = 0;  // executed cell iterations
  std::size_t cell_steps = 0;  // timestep x layer pairs

  double mean_nll() const { return tokens == 0 ? 0.0 : sum_nll / double(tokens); }
  double mean_iterations() const {
    return cell_steps == 0 ? 0.0 : double(iterations) / double(cell_steps);
  }
};

// states[lane][layer]; values carry across windows, gradients do not.
using LaneStates = std::vector<std::vector<CellState>>;

LaneStates zero_states(const LmModel& model, std::size_t batch_size);

// Mean NLL over the window's batch_size x unroll targets. Train mode draws
// dropout masks lane-major, then timestep, then boundary (input side of each
// layer plus the softmax input); masks are resampled every timestep and
// never touch the recurrent path. Eval mode ignores keep_prob and the rng.
WindowStats forward_loss(const LmModel& model, const BatchedCorpus& corpus,
                         std::size_t window, std::size_t unroll, RunMode mode,
                         double keep_prob, Rng* dropout_rng,
                         LaneStates& states);

// forward_loss in train mode plus backprop through the window; accumulates
// into grads. Consumes the same dropout rng sequence as forward_loss.
WindowStats train_window(const LmModel& model, const BatchedCorpus& corpus,
                         std::size_t window, std::size_t unroll,
                         double keep_prob, Rng& dropout_rng, LaneStates& states,
                         ModelGrads& grads);

// exp(mean NLL) over all full windows of the stream; remainder dropped.
double evaluate_perplexity(const LmModel& model,
                           const std::vector<std::size_t>& stream,
                           std::size_t batch_size, std::size_t unroll);

}  // namespace iterlstm
