#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "iterlstm/cell.hpp"
#include "iterlstm/core_math.hpp"
#include "oracles.hpp"

namespace testutil {

using iterlstm::CellParams;
using iterlstm::Matrix;
using iterlstm::Rng;
using iterlstm::Vector;

inline CellParams rand_cell(std::size_t n, std::size_t d, Rng& rng,
                            double scale = 0.5) {
  CellParams p(n, d);
  for (auto& view : p.tensor_views())
    for (std::size_t k = 0; k < view.size; ++k)
      view.data[k] = rng.uniform(-scale, scale);
  return p;
}

// b_p = 1e9 with zero gate weights drives p to exactly 1.0, so the blend
// passes the candidate through bit-for-bit.
inline void force_gate_open(CellParams& p) {
  std::fill(p.w_px.begin(), p.w_px.end(), 0.0);
  std::fill(p.w_ph.begin(), p.w_ph.end(), 0.0);
  std::fill(p.w_pi.begin(), p.w_pi.end(), 0.0);
  std::fill(p.w_pj.begin(), p.w_pj.end(), 0.0);
  std::fill(p.w_pf.begin(), p.w_pf.end(), 0.0);
  p.b_p = 1e9;
}

inline oracles::VanillaWeights to_vanilla(const CellParams& p) {
  oracles::VanillaWeights w;
  w.n = p.n;
  w.d = p.d;
  w.rj = p.w_rec_j;
  w.ri = p.w_rec_i;
  w.rf = p.w_rec_f;
  w.ro = p.w_rec_o;
  w.uj = p.w_in_j;
  w.ui = p.w_in_i;
  w.uf = p.w_in_f;
  w.uo = p.w_in_o;
  w.bj = p.b_j;
  w.bi = p.b_i;
  w.bf = p.b_f;
  w.bo = p.b_o;
  return w;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k)
    m = std::max(m, std::abs(a.data[k] - b.data[k]));
  return m;
}

}  // namespace testutil
