// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "flapnet/seq2seq.hpp"

namespace flapnet {

// A configured network plus its parameters. Eval-mode calls are const and
// reentrant; training-mode calls need a caller-owned Trace and Rng.
class Model {
 public:
  struct Trace {
    std::variant<Seq2Seq::Cache, LinearBaseline::Cache, NLinearBaseline::Cache> cache;
  };

  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }
  std::size_t param_count() const { return state_.total_size(); }

  void init(std::uint64_t seed);

  Tensor forward(const Tensor& window, Mode mode, Rng& rng, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& dy, Gradients& grads) const;
  Tensor predict(const Tensor& window) const;

  // Eval-mode forward over many windows: serial reference and an OpenMP
  // version that must agree bitwise (each window is independent).
  std::vector<Tensor> predict_batch_serial(const std::vector<Tensor>& windows) const;
  std::vector<Tensor> predict_batch(const std::vector<Tensor>& windows) const;

  const Seq2Seq* seq2seq() const { return std::get_if<Seq2Seq>(&net_); }

 private:
  ModelConfig cfg_;
  ModelState state_;
  std::variant<Seq2Seq, LinearBaseline, NLinearBaseline> net_;
};

// Exact parameter count for a configuration.
std::size_t count_params(const ModelConfig& cfg);

}  // namespace flapnet
