#pragma once

#include <string>

#include "iterlstm/trainer.hpp"

namespace iterlstm {

// Line-based `key = value` file over the TrainConfig and IterationConfig
// fields. Blank lines and '#' comments are skipped; unknown or duplicate
// keys are rejected; parsing is order-independent.
TrainConfig parse_run_config_text(const std::string& text);
TrainConfig parse_run_config(const std::string& path);

}  // namespace iterlstm
