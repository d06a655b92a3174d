#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "iterlstm/corpus.hpp"
#include "iterlstm/model.hpp"

namespace iterlstm {

struct TrainConfig {
  std::size_t layers = 2;
  std::size_t units = 650;  // embedding dim equals units
  std::size_t batch_size = 20;
  std::size_t unroll_length = 35;
  std::size_t epochs = 39;
  double lr_base = 1.0;
  std::size_t lr_constant_epochs = 6;
  double lr_decay = 1.2;
  double keep_prob = 0.5;
  double init_range = 0.5;  // the printed interval; 0.05 is the common alternative
  double clip_norm = 5.0;
  double l2_recurrent = 0.0;
  std::uint64_t seed = 1;
  TokenMode token_mode = TokenMode::kWord;
  IterationConfig iteration;

  void validate() const;
};

// Constant for the first lr_constant_epochs, then divided by lr_decay once
// per further epoch. epoch is 1-based.
double lr_schedule(const TrainConfig& cfg, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_ppl = 0.0;
  double valid_ppl = 0.0;
  double wall_time = 0.0;  // seconds; the only run-dependent field
  double mean_iterations = 0.0;

  std::string json_line() const;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  double best_valid_ppl = 0.0;
  std::size_t best_epoch = 0;
  double final_valid_ppl = 0.0;
  std::size_t parameter_count = 0;
};

struct TrainOptions {
  std::string out_dir;  // empty: no log or checkpoints written
  bool resume = false;  // continue from <out_dir>/last if present
  std::ostream* echo = nullptr;
};

// Minibatch SGD per the schedule: forward, backward, optional recurrent L2,
// global-norm clip, update. State carries across windows within an epoch and
// resets between epochs. Writes train_log.jsonl plus `last` / `best`
// checkpoints into out_dir. Non-finite loss raises DivergenceError; already
// written checkpoints are retained.
TrainResult train(const TrainConfig& cfg, const CorpusSet& corpus,
                  const TrainOptions& opts);

}  // namespace iterlstm
