#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iterlstm/autograd.hpp"
#include "iterlstm/cell.hpp"

namespace iterlstm {

struct GradCheckOptions {
  std::size_t models = 20;
  std::size_t max_units = 8;
  std::size_t max_timesteps = 3;
  std::size_t max_iterations = 3;
  double fd_step = 1e-5;
  double tolerance = 1e-5;  // relative
  double abs_floor = 1e-8;  // differences below this always pass
  std::uint64_t seed = 1;
  std::string corrupt_buffer;  // harness self-test: damage this analytic buffer
};

struct GradCheckGroup {
  std::string name;  // buffer name, e.g. "w_rec_j"
  double max_rel_err = 0.0;
  std::string worst_coord;  // e.g. "model 3 w_rec_j[1,2]"
};

struct GradCheckReport {
  bool pass = false;
  double worst_rel_err = 0.0;
  std::string worst_coord;
  std::vector<GradCheckGroup> groups;
};

// Random small sequences (cycling fixed/adaptive x residual on/off), loss a
// fixed random linear functional of the outputs and final state; analytic
// BPTT vs central finite differences on every parameter coordinate.
// Adaptive draws are rejected while any gate value sits within 1e-3 of its
// halting threshold, so the discrete halting pattern is locally constant.
GradCheckReport run_gradient_checks(const GradCheckOptions& opts);

}  // namespace iterlstm
