#include "iterlstm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

#include "iterlstm/autograd.hpp"
#include "iterlstm/checkpoint.hpp"
#include "json.hpp"

namespace iterlstm {

void TrainConfig::validate() const {
  if (layers == 0 || units == 0 || batch_size == 0 || unroll_length == 0 ||
      epochs == 0 || lr_constant_epochs == 0)
    throw ConfigError("all config counts must be positive");
  if (!(lr_base > 0.0) || !(lr_decay > 0.0))
    throw ConfigError("learning-rate values must be positive");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw ConfigError("keep_prob must lie in (0, 1]");
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (l2_recurrent < 0.0) throw ConfigError("l2_recurrent must be nonnegative");
  iteration.validate();
}

double lr_schedule(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch == 0) throw ConfigError("epoch index is 1-based");
  if (epoch <= cfg.lr_constant_epochs) return cfg.lr_base;
  return cfg.lr_base /
         std::pow(cfg.lr_decay, double(epoch - cfg.lr_constant_epochs));
}

std::string EpochRecord::json_line() const {
  nlohmann::ordered_json j{{"epoch", epoch},
                           {"lr", lr},
                           {"train_ppl", train_ppl},
                           {"valid_ppl", valid_ppl},
                           {"wall_time", wall_time},
                           {"mean_iterations", mean_iterations}};
  return j.dump();
}

TrainResult train(const TrainConfig& cfg, const CorpusSet& corpus,
                  const TrainOptions& opts) {
  cfg.validate();
  const bool artifacts = !opts.out_dir.empty();
  if (artifacts) std::filesystem::create_directories(opts.out_dir);
  const std::string last_prefix = opts.out_dir + "/last";
  const std::string best_prefix = opts.out_dir + "/best";

  LmModel model;
  Rng dropout_rng(Rng::derive(cfg.seed, 1));
  std::size_t start_epoch = 1;
  std::size_t step = 0;
  double best_valid = std::numeric_limits<double>::infinity();

  TrainResult result;
  const bool resumed = opts.resume && artifacts && checkpoint_exists(last_prefix);
  if (resumed) {
    LoadedCheckpoint ck = load_checkpoint(last_prefix);
    model = std::move(ck.model);
    dropout_rng.restore_state(ck.meta.rng_state);
    start_epoch = ck.meta.epoch + 1;
    step = ck.meta.step;
    best_valid = ck.meta.best_valid_ppl;
    if (model.vocab_size != corpus.vocab.size())
      throw ConfigError("checkpoint vocabulary size does not match corpus");
  } else {
    Rng init_rng(cfg.seed);
    model = init_model(corpus.vocab.size(), cfg.units, cfg.layers,
                       cfg.iteration, cfg.init_range, init_rng);
  }
  result.parameter_count = model.parameter_count();
  result.best_valid_ppl = best_valid;

  BatchedCorpus train_batches =
      batchify(corpus.train, cfg.batch_size, cfg.unroll_length);
  const std::size_t windows = train_batches.window_count(cfg.unroll_length);

  std::ofstream log;
  if (artifacts) {
    log.open(opts.out_dir + "/train_log.jsonl",
             resumed ? std::ios::app : std::ios::trunc);
    if (!log) throw ConfigError("cannot write training log in " + opts.out_dir);
  }

  ModelGrads grads(model);
  auto model_views = model.tensor_views();
  auto grad_views = grads.tensor_views();

  for (std::size_t epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(cfg, epoch);
    LaneStates states = zero_states(model, cfg.batch_size);
    WindowStats epoch_stats;

    for (std::size_t w = 0; w < windows; ++w) {
      grads.zero();
      WindowStats s = train_window(model, train_batches, w, cfg.unroll_length,
                                   cfg.keep_prob, dropout_rng, states, grads);
      epoch_stats.sum_nll += s.sum_nll;
      epoch_stats.tokens += s.tokens;
      epoch_stats.iterations += s.iterations;
      epoch_stats.cell_steps += s.cell_steps;

      if (cfg.l2_recurrent > 0.0) {
        for (std::size_t l = 0; l < model.cells.size(); ++l) {
          auto axpy = [&](Matrix& g, const Matrix& p) {
            for (std::size_t k = 0; k < p.data.size(); ++k)
              g.data[k] += cfg.l2_recurrent * p.data[k];
          };
          axpy(grads.cells[l].w_rec_j, model.cells[l].w_rec_j);
          axpy(grads.cells[l].w_rec_i, model.cells[l].w_rec_i);
          axpy(grads.cells[l].w_rec_f, model.cells[l].w_rec_f);
          axpy(grads.cells[l].w_rec_o, model.cells[l].w_rec_o);
        }
      }

      clip_gradients(grad_views, cfg.clip_norm);
      for (std::size_t vi = 0; vi < model_views.size(); ++vi) {
        double* pd = model_views[vi].data;
        const double* gd = grad_views[vi].data;
        for (std::size_t k = 0; k < model_views[vi].size; ++k)
          pd[k] -= lr * gd[k];
      }
      ++step;
    }

    const double train_ppl = std::exp(epoch_stats.mean_nll());
    const double valid_ppl = evaluate_perplexity(model, corpus.valid,
                                                 cfg.batch_size,
                                                 cfg.unroll_length);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_ppl = train_ppl;
    rec.valid_ppl = valid_ppl;
    rec.wall_time = wall;
    rec.mean_iterations = epoch_stats.mean_iterations();
    result.records.push_back(rec);
    result.final_valid_ppl = valid_ppl;
    if (artifacts) {
      log << rec.json_line() << "\n";
      log.flush();
    }
    if (opts.echo) *opts.echo << rec.json_line() << std::endl;

    const bool improved = valid_ppl < best_valid;
    if (improved) {
      best_valid = valid_ppl;
      result.best_epoch = epoch;
    }
    result.best_valid_ppl = best_valid;

    if (artifacts) {
      CheckpointMeta meta;
      meta.config = cfg;
      meta.vocab_size = model.vocab_size;
      meta.epoch = epoch;
      meta.step = step;
      meta.best_valid_ppl = best_valid;
      meta.rng_state = dropout_rng.state_string();
      save_checkpoint(last_prefix, meta, model);
      if (improved) save_checkpoint(best_prefix, meta, model);
    }
  }
  return result;
}

}  // namespace iterlstm
