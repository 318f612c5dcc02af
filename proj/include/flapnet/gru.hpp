// SPDX-License-Identifier: Apache-2.0
//
// Gated recurrent unit, gate order (reset, update, candidate):
//   r  = σ(W_r x + U_r h + b_r)
//   z  = σ(W_z x + U_z h + b_z)
//   n  = tanh(W_n x + r ∘ (U_n h) + b_n)
//   h' = (1 − z) ∘ n + z ∘ h
// W is stored [in × 3H], U [H × 3H], b [3H].
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "flapnet/layers.hpp"

namespace flapnet {

struct GruCell {
  std::size_t in = 0;
  std::size_t hidden = 0;
  ParamId w_input = 0;
  ParamId w_hidden = 0;
  ParamId bias = 0;

  static GruCell create(ModelState& state, const std::string& name, std::size_t in,
                        std::size_t hidden);

  std::size_t param_count() const { return 3 * hidden * (in + hidden + 1); }

  // Everything backward needs from one step.
  struct Step {
    std::vector<double> r, z, n, uh_n;
  };

  // One step from precomputed input projection gx = W x + b (3H values).
  void step_projected(const ModelState& state, const double* gx, const double* h,
                      double* h_out, Step* cache) const;
  // Backward of step_projected. Accumulates dL/dgx (3H) into dgx, dL/dh into
  // dh_prev, and U's gradient via duh (3H, overwritten) for the caller.
  void step_projected_backward(const ModelState& state, const Step& cache, const double* h,
                               const double* dh_out, double* dgx, double* duh,
                               double* dh_prev) const;

  // Single-step convenience: h' = cell(x, h).
  Tensor forward(const ModelState& state, const Tensor& x, const Tensor& h) const;
  // dL/dx and dL/dh for upstream dh'; accumulates parameter gradients.
  void backward(const ModelState& state, const Tensor& x, const Tensor& h, const Tensor& dh_out,
                Gradients& grads, Tensor& dx, Tensor& dh) const;
};

// A GRU run over a whole sequence, optionally in reverse time order.
struct GruSequence {
  struct Cache {
    Tensor input;                // [T × in]
    Tensor states;               // [T+1 × H], row 0 = initial state (in processing order)
    std::vector<GruCell::Step> steps;
    bool reverse = false;
  };

  // Returns outputs [T × H] indexed by original time (output t is the state
  // after consuming x_t).
  static Tensor forward(const GruCell& cell, const ModelState& state, const Tensor& x,
                        bool reverse, Cache* cache);
  // d_outputs [T × H], d_final (state after the last processed step, may be
  // empty). Returns dL/dx [T × in].
  static Tensor backward(const GruCell& cell, const ModelState& state, const Cache& cache,
                         const Tensor& d_outputs, const std::vector<double>& d_final,
                         Gradients& grads);
};

}  // namespace flapnet
