#pragma once

#include <stdexcept>
#include <string>

#include "iterlstm/model.hpp"
#include "iterlstm/trainer.hpp"

namespace iterlstm {

// Raised when a checkpoint file exists but fails validation (bad version,
// tensor table mismatch, truncated buffer).
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  int format_version = 1;
  TrainConfig config;
  std::size_t vocab_size = 0;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // cumulative window updates
  double best_valid_ppl = 0.0;  // +inf when no validation pass has run
  std::string rng_state;        // dropout stream, resumes bit-exactly
};

// A checkpoint is <prefix>.manifest.json plus <prefix>.params.bin, the
// latter a single little-endian float64 buffer laid out per the manifest's
// tensor directory. Round-trips byte-exactly.
void save_checkpoint(const std::string& prefix, const CheckpointMeta& meta,
                     LmModel& model);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  LmModel model;
};

LoadedCheckpoint load_checkpoint(const std::string& prefix);

bool checkpoint_exists(const std::string& prefix);

}  // namespace iterlstm
