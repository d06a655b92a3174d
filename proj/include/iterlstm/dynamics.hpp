#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iterlstm/cell.hpp"
#include "iterlstm/core_math.hpp"

namespace iterlstm {

// One timestep's hidden-state update viewed as an autonomous map of h: input
// x and cell state c0 are frozen, the gate constants are precomputed once.
// The iteration gate, blending and residual output are deliberately absent;
// the analyzed system is the pure update h -> o (*) tanh(f (*) c0 + i (*) j).
struct AutonomousMap {
  CellParams params;
  Vector x;
  Vector c0;
  GateConstants consts;
};

AutonomousMap make_map(CellParams params, Vector x, Vector c0);

Vector apply_map(const AutonomousMap& m, const Vector& h);

struct Trajectory {
  std::vector<Vector> states;  // h(0) .. h(tau_end)
  bool converged = false;
  double final_residual = 0.0;  // |h(end) - h(end-1)|_inf

  std::size_t steps() const { return states.size() - 1; }
};

// Iterates until the sup-norm step falls below tol or tau_max is reached.
Trajectory iterate_map(const AutonomousMap& m, const Vector& h0,
                       std::size_t tau_max, double tol);

// Exact Jacobian of apply_map at h: the four-term assembly
//   diag(tanh(c) o') W_rec_o
// + diag(o tanh'(c) c0 f') W_rec_f
// + diag(o tanh'(c) j i') W_rec_i
// + diag(o tanh'(c) i j') W_rec_j
// with o', f', i' the sigmoid derivative diagonals and j' the tanh one.
Matrix jacobian_g(const AutonomousMap& m, const Vector& h);

// A Liapunov exponent estimate. Constant maps annihilate perturbations in a
// single step; that outcome is tagged instead of reported as -inf.
struct LyapunovEstimate {
  bool exact_convergence = false;
  double value = 0.0;  // meaningful only when !exact_convergence

  bool negative() const { return exact_convergence || value < 0.0; }
};

// Largest-exponent estimate from two trajectories separated by delta0 along
// a random unit direction, renormalized every step.
LyapunovEstimate lyapunov_direct(const AutonomousMap& m, const Vector& h0,
                                 double delta0, std::size_t tau, Rng& rng);

// Full spectrum by accumulating per-step QR factors of the Jacobian cocycle.
// Sorted descending; exact-convergence entries sort last.
std::vector<LyapunovEstimate> lyapunov_spectrum(const AutonomousMap& m,
                                                const Vector& h0,
                                                std::size_t tau);

// Principal singular values of the four recurrent matrices and the spectral
// condition margin 1 - (sigma_j + sigma_i/4 + sigma_f/4 + sigma_o/4).
struct ConditionReport {
  double sigma_j = 0.0, sigma_i = 0.0, sigma_f = 0.0, sigma_o = 0.0;
  double margin = 0.0;
  bool holds = false;
};

ConditionReport check_condition(const CellParams& params, double tol = 1e-12);

// Scales the four recurrent matrices by the common factor that brings the
// condition sum to 1 - target_margin. Any target_margin < 1 is accepted;
// negative targets deliberately push the system outside the convergent
// regime. Rejects all-zero recurrent weights.
CellParams spectral_rescale(const CellParams& params, double target_margin);

struct DrawOptions {
  std::size_t min_units = 4;
  std::size_t max_units = 12;
  double init_range = 0.5;     // weights drawn uniform in +-init_range
  std::size_t max_steps = 1000;  // iterate_map cap
  double tol = 1e-9;
  std::size_t tau = 200;  // exponent-estimate steps
  double delta0 = 1e-8;
};

// One Monte Carlo draw record; serializes to a single JSON line.
struct MapDraw {
  std::uint64_t seed = 0;
  std::size_t units = 0;
  double margin = 0.0;
  bool converged = false;
  std::size_t steps = 0;
  LyapunovEstimate lambda_direct;
  LyapunovEstimate lambda_qr_max;
  std::vector<double> spectrum_head;  // leading finite exponents, up to 4
};

// Freezes random x, c0, h0 (components in (-1,1)) for the given parameters
// and runs the trajectory plus both exponent estimators.
MapDraw run_map_draw(const CellParams& params, std::uint64_t seed,
                     const DrawOptions& opts);

// Full draw: random parameters rescaled to target_margin, then run_map_draw.
MapDraw run_condition_draw(std::uint64_t seed, double target_margin,
                           const DrawOptions& opts);

std::string draw_record_json(const MapDraw& d);

}  // namespace iterlstm
