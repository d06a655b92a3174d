#include "iterlstm/model.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace iterlstm {

void LmModel::validate() const {
  if (vocab_size == 0 || units == 0 || num_layers == 0)
    throw ConfigError("model dimensions must be positive");
  if (cells.size() != num_layers)
    throw ConfigError("cell count does not match num_layers");
  for (const auto& cell : cells) {
    if (cell.n != units || cell.d != units)
      throw ConfigError("every cell must be units -> units");
    cell.validate();
  }
  if (embedding.rows != vocab_size || embedding.cols != units)
    throw ConfigError("embedding shape mismatch");
  if (softmax_w.rows != vocab_size || softmax_w.cols != units ||
      softmax_b.size() != vocab_size)
    throw ConfigError("softmax shape mismatch");
  iteration.validate();
}

std::size_t LmModel::parameter_count() const {
  std::size_t total = embedding.size() + softmax_w.size() + softmax_b.size();
  for (const auto& cell : cells) total += cell.parameter_count();
  return total;
}

std::vector<TensorView> LmModel::tensor_views() {
  std::vector<TensorView> views;
  views.push_back(
      {"embedding", embedding.data.data(), embedding.size(), {vocab_size, units}});
  for (std::size_t l = 0; l < cells.size(); ++l) {
    auto cell_views = cells[l].tensor_views("layer" + std::to_string(l) + ".");
    views.insert(views.end(), cell_views.begin(), cell_views.end());
  }
  views.push_back(
      {"softmax.w", softmax_w.data.data(), softmax_w.size(), {vocab_size, units}});
  views.push_back({"softmax.b", softmax_b.data(), softmax_b.size(), {vocab_size}});
  return views;
}

LmModel init_model(std::size_t vocab_size, std::size_t units,
                   std::size_t num_layers, const IterationConfig& iteration,
                   double init_range, Rng& rng) {
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
  LmModel m;
  m.vocab_size = vocab_size;
  m.units = units;
  m.num_layers = num_layers;
  m.iteration = iteration;
  m.embedding = Matrix(vocab_size, units);
  m.softmax_w = Matrix(vocab_size, units);
  m.softmax_b.assign(vocab_size, 0.0);
  m.cells.reserve(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) m.cells.emplace_back(units, units);
  // Buffers are filled in tensor-view order, so the draw sequence is fixed
  // by the layout and independent of how this function is refactored.
  for (auto& view : m.tensor_views())
    for (std::size_t k = 0; k < view.size; ++k)
      view.data[k] = rng.uniform(-init_range, init_range);
  m.validate();
  return m;
}

ModelGrads::ModelGrads(const LmModel& model)
    : embedding(model.vocab_size, model.units),
      softmax_w(model.vocab_size, model.units),
      softmax_b(model.vocab_size, 0.0) {
  cells.reserve(model.cells.size());
  for (const auto& cell : model.cells) cells.emplace_back(cell);
}

void ModelGrads::zero() {
  std::fill(embedding.data.begin(), embedding.data.end(), 0.0);
  for (auto& cell : cells) cell.zero();
  std::fill(softmax_w.data.begin(), softmax_w.data.end(), 0.0);
  std::fill(softmax_b.begin(), softmax_b.end(), 0.0);
}

std::vector<TensorView> ModelGrads::tensor_views() {
  std::vector<TensorView> views;
  views.push_back({"embedding", embedding.data.data(), embedding.size(),
                   {embedding.rows, embedding.cols}});
  for (std::size_t l = 0; l < cells.size(); ++l) {
    auto cell_views = cells[l].tensor_views("layer" + std::to_string(l) + ".");
    views.insert(views.end(), cell_views.begin(), cell_views.end());
  }
  views.push_back({"softmax.w", softmax_w.data.data(), softmax_w.size(),
                   {softmax_w.rows, softmax_w.cols}});
  views.push_back({"softmax.b", softmax_b.data(), softmax_b.size(),
                   {softmax_b.size()}});
  return views;
}

Vector dropout_mask(std::size_t dim, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw ConfigError("keep_prob must lie in (0, 1]");
  Vector mask(dim, 1.0);
  if (keep_prob == 1.0) return mask;
  const double scale = 1.0 / keep_prob;
  for (auto& mk : mask) mk = rng.uniform(0.0, 1.0) < keep_prob ? scale : 0.0;
  return mask;
}

LaneStates zero_states(const LmModel& model, std::size_t batch_size) {
  return LaneStates(batch_size,
                    std::vector<CellState>(model.num_layers, CellState(model.units)));
}

namespace {

struct LaneCache {
  std::vector<std::vector<Vector>> masks;           // [t][num_layers + 1]
  std::vector<std::vector<IterationTrace>> traces;  // [layer][t]
  std::vector<Vector> probs;                        // [t], vocab_size
  std::vector<Vector> softmax_in;                   // [t]
  std::vector<std::size_t> x_ids, y_ids;
};

void apply_mask(Vector& v, const Vector& mask) {
  for (std::size_t k = 0; k < v.size(); ++k) v[k] *= mask[k];
}

// Returns the NLL (natural log) of `target` under softmax(W*top + b) and
// optionally the full probability vector for the backward pass.
double softmax_nll(const LmModel& model, const Vector& top, std::size_t target,
                   Vector* probs_out) {
  Vector logits = matvec(model.softmax_w, top);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += model.softmax_b[k];
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  if (probs_out) {
    probs_out->resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
      (*probs_out)[k] = std::exp(logits[k] - lse);
  }
  return lse - logits[target];
}

// One lane over one window. `masked` selects dropout; masks are drawn per
// timestep in boundary order 0..num_layers.
double lane_forward(const LmModel& model, const BatchedCorpus& corpus,
                    std::size_t start, std::size_t unroll, std::size_t lane,
                    bool masked, double keep_prob, Rng* rng,
                    std::vector<CellState>& states, LaneCache* cache,
                    WindowStats& stats) {
  const std::size_t boundaries = model.num_layers + 1;
  double sum_nll = 0.0;
  if (cache) cache->traces.resize(model.num_layers);
  for (std::size_t t = 0; t < unroll; ++t) {
    const std::size_t x_id = corpus.id(lane, start + t);
    const std::size_t y_id = corpus.id(lane, start + t + 1);

    std::vector<Vector> masks;
    if (masked) {
      masks.reserve(boundaries);
      for (std::size_t b = 0; b < boundaries; ++b)
        masks.push_back(dropout_mask(model.units, keep_prob, *rng));
    }

    const double* emb = model.embedding.row(x_id);
    Vector input(emb, emb + model.units);
    if (masked) apply_mask(input, masks[0]);

    for (std::size_t l = 0; l < model.num_layers; ++l) {
      StepResult step = cell_step(model.cells[l], model.iteration, input, states[l]);
      stats.iterations += step.trace.executed();
      stats.cell_steps += 1;
      states[l] = std::move(step.state);
      input = std::move(step.y);
      if (masked) apply_mask(input, masks[l + 1]);
      if (cache) cache->traces[l].push_back(std::move(step.trace));
    }

    Vector* probs = nullptr;
    if (cache) {
      cache->probs.emplace_back();
      probs = &cache->probs.back();
    }
    sum_nll += softmax_nll(model, input, y_id, probs);

    if (cache) {
      cache->softmax_in.push_back(std::move(input));
      cache->masks.push_back(std::move(masks));
      cache->x_ids.push_back(x_id);
      cache->y_ids.push_back(y_id);
    }
    stats.tokens += 1;
  }
  return sum_nll;
}

void lane_backward(const LmModel& model, const LaneCache& cache,
                   std::size_t unroll, double inv_tokens, ModelGrads& grads) {
  const std::size_t num_layers = model.num_layers;

  std::vector<Vector> grad_ys(unroll);
  for (std::size_t t = 0; t < unroll; ++t) {
    Vector dlogits = cache.probs[t];
    dlogits[cache.y_ids[t]] -= 1.0;
    for (auto& g : dlogits) g *= inv_tokens;
    for (std::size_t k = 0; k < model.vocab_size; ++k)
      grads.softmax_b[k] += dlogits[k];
    add_outer(grads.softmax_w, dlogits, cache.softmax_in[t]);
    Vector g_top = matvec_transpose(model.softmax_w, dlogits);
    if (!cache.masks[t].empty()) apply_mask(g_top, cache.masks[t][num_layers]);
    grad_ys[t] = std::move(g_top);
  }

  // Truncated BPTT: state gradients at the window boundary are zero.
  for (std::size_t l = num_layers; l-- > 0;) {
    CellStateGrads zero_final(model.units);
    LayerBackward lb = layer_backward(cache.traces[l], model.cells[l], grad_ys,
                                      zero_final, grads.cells[l]);
    if (l > 0) {
      for (std::size_t t = 0; t < unroll; ++t) {
        if (!cache.masks[t].empty()) apply_mask(lb.grad_xs[t], cache.masks[t][l]);
        grad_ys[t] = std::move(lb.grad_xs[t]);
      }
    } else {
      for (std::size_t t = 0; t < unroll; ++t) {
        if (!cache.masks[t].empty()) apply_mask(lb.grad_xs[t], cache.masks[t][0]);
        double* erow = grads.embedding.row(cache.x_ids[t]);
        for (std::size_t k = 0; k < model.units; ++k)
          erow[k] += lb.grad_xs[t][k];
      }
    }
  }
}

void check_window(const BatchedCorpus& corpus, std::size_t window,
                  std::size_t unroll, const LmModel& model,
                  const LaneStates& states) {
  if (unroll == 0) throw ConfigError("unroll must be positive");
  if (window >= corpus.window_count(unroll))
    throw ConfigError("window index out of range");
  if (states.size() != corpus.batch_size)
    throw ConfigError("state lane count does not match batch_size");
  for (const auto& lane : states)
    if (lane.size() != model.num_layers)
      throw ConfigError("state layer count does not match model");
}

}  // namespace

WindowStats forward_loss(const LmModel& model, const BatchedCorpus& corpus,
                         std::size_t window, std::size_t unroll, RunMode mode,
                         double keep_prob, Rng* dropout_rng, LaneStates& states) {
  check_window(corpus, window, unroll, model, states);
  const bool masked = mode == RunMode::kTrain && keep_prob < 1.0;
  if (masked && dropout_rng == nullptr)
    throw ConfigError("train-mode dropout requires an rng");

  WindowStats stats;
  const std::size_t start = window * unroll;
  for (std::size_t lane = 0; lane < corpus.batch_size; ++lane)
    stats.sum_nll += lane_forward(model, corpus, start, unroll, lane, masked,
                                  keep_prob, dropout_rng, states[lane], nullptr,
                                  stats);
  return stats;
}

WindowStats train_window(const LmModel& model, const BatchedCorpus& corpus,
                         std::size_t window, std::size_t unroll,
                         double keep_prob, Rng& dropout_rng, LaneStates& states,
                         ModelGrads& grads) {
  check_window(corpus, window, unroll, model, states);
  const bool masked = keep_prob < 1.0;

  WindowStats stats;
  const std::size_t start = window * unroll;
  const double inv_tokens = 1.0 / double(corpus.batch_size * unroll);
  for (std::size_t lane = 0; lane < corpus.batch_size; ++lane) {
    LaneCache cache;
    stats.sum_nll += lane_forward(model, corpus, start, unroll, lane, masked,
                                  keep_prob, &dropout_rng, states[lane], &cache,
                                  stats);
    lane_backward(model, cache, unroll, inv_tokens, grads);
  }
  if (!std::isfinite(stats.sum_nll)) throw DivergenceError("non-finite loss");
  return stats;
}

double evaluate_perplexity(const LmModel& model,
                           const std::vector<std::size_t>& stream,
                           std::size_t batch_size, std::size_t unroll) {
  BatchedCorpus corpus = batchify(stream, batch_size, unroll);
  LaneStates states = zero_states(model, batch_size);
  WindowStats total;
  const std::size_t windows = corpus.window_count(unroll);
  for (std::size_t w = 0; w < windows; ++w) {
    WindowStats s =
        forward_loss(model, corpus, w, unroll, RunMode::kEval, 1.0, nullptr, states);
    total.sum_nll += s.sum_nll;
    total.tokens += s.tokens;
  }
  return std::exp(total.mean_nll());
}

}  // namespace iterlstm
