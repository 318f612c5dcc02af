// SPDX-License-Identifier: Apache-2.0
//
// L1 training with Adam, global-norm clipping and patience-based early
// stopping.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flapnet/data.hpp"
#include "flapnet/model.hpp"

namespace flapnet {

struct TrainConfig {
  std::size_t batch_size = 512;
  std::size_t n_epochs = 30;
  std::size_t patience = 10;
  double patience_tolerance = 0.005;
  double learning_rate = 1e-3;
  std::uint64_t seed = 3407;
  double regularization_factor = 0.0;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables
  // Each batch is cut into this many contiguous chunks whose gradients are
  // summed in chunk order, so results do not depend on the thread count.
  std::size_t grad_chunks = 4;
  bool parallel = true;

  void validate() const;
};

// mean |pred - target|
double l1_loss(const Tensor& pred, const Tensor& target);
// sign(pred - target) / n, with sign(0) = 0.
Tensor l1_loss_grad(const Tensor& pred, const Tensor& target);
// lambda * sum |p| over every parameter.
double l1_penalty(const ModelState& state, double lambda);
void add_l1_penalty_grad(const ModelState& state, double lambda, Gradients& grads);

class Adam {
 public:
  Adam(const std::vector<Shape>& shapes, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(ModelState& state, const Gradients& grads);
  std::size_t steps() const { return t_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Gradients m_, v_;
};

// Scales grads so their global norm is at most max_norm. Returns the norm
// before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

// Windows addressed by reference into already-normalized events.
struct WindowSet {
  std::vector<Event> events;
  std::vector<WindowRef> refs;
  WindowSpec spec;

  static WindowSet build(std::vector<Event> events, const WindowSpec& spec);
  std::size_t size() const { return refs.size(); }
  Tensor x(std::size_t i) const { return feature_window(events[refs[i].event], refs[i].start, spec); }
  Tensor y(std::size_t i) const { return target_window(events[refs[i].event], refs[i].start, spec); }
};

// Mean L1 over every window in eval mode (no penalty term).
double evaluate_loss(const Model& model, const WindowSet& data, bool parallel = true);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  double initial_train_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::string stop_reason;  // "patience" or "max_epochs"
  std::size_t optimizer_steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains model in place and leaves it holding the parameters of the epoch
// with the lowest validation loss.
TrainReport train(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Window order for an epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Early-stopping bookkeeping, separated out so the rule can be tested alone.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double tolerance) : patience_(patience), tol_(tolerance) {}
  // Returns true when training should stop after this epoch.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  std::size_t stale_epochs() const { return stale_; }

 private:
  std::size_t patience_;
  double tol_;
  double reference_ = 0.0;
  bool has_reference_ = false;
  bool improved_ = false;
  std::size_t stale_ = 0;
};

}  // namespace flapnet
