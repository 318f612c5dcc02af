// SPDX-License-Identifier: Apache-2.0
#include "flapnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "flapnet/errors.hpp"
#include "flapnet/rng.hpp"

namespace flapnet {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566666c65ULL;
constexpr std::uint64_t kDropoutStream = 0x64726f706f7574ULL;

void check_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("l1_loss: prediction " + shape_string(a.shape()) + " vs target " +
                         shape_string(b.shape()));
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (n_epochs == 0) throw ConfigError("n_epochs must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(patience_tolerance >= 0.0)) throw ConfigError("patience_tolerance must be >= 0");
  if (!(regularization_factor >= 0.0)) throw ConfigError("regularization_factor must be >= 0");
  if (grad_chunks == 0) throw ConfigError("grad_chunks must be positive");
}

double l1_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  if (pred.size() == 0) throw DimensionError("l1_loss: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

Tensor l1_loss_grad(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  Tensor g(pred.shape());
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    g[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  return g;
}

double l1_penalty(const ModelState& state, double lambda) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (ParamId id = 0; id < state.count(); ++id) {
    for (double v : state.value(id).values()) s += std::abs(v);
  }
  return lambda * s;
}

void add_l1_penalty_grad(const ModelState& state, double lambda, Gradients& grads) {
  if (lambda == 0.0) return;
  for (ParamId id = 0; id < state.count(); ++id) {
    const auto& p = state.value(id).values();
    auto& g = grads[id].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      g[j] += p[j] > 0.0 ? lambda : (p[j] < 0.0 ? -lambda : 0.0);
    }
  }
}

Adam::Adam(const std::vector<Shape>& shapes, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(shapes), v_(shapes) {}

void Adam::step(ModelState& state, const Gradients& grads) {
  if (grads.count() != state.count()) throw DimensionError("Adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (ParamId id = 0; id < state.count(); ++id) {
    auto& p = state.value(id).values();
    const auto& g = grads[id].values();
    auto& m = m_[id].values();
    auto& v = v_[id].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double n = grads.norm();
  if (max_norm > 0.0 && n > max_norm) grads.scale(max_norm / n);
  return n;
}

WindowSet WindowSet::build(std::vector<Event> events, const WindowSpec& spec) {
  WindowSet s;
  s.spec = spec;
  s.refs = window_refs(events, spec);
  s.events = std::move(events);
  return s;
}

double evaluate_loss(const Model& model, const WindowSet& data, bool parallel) {
  if (data.size() == 0) throw DataError("evaluate_loss: no windows");
  std::vector<double> losses(data.size());
  const auto n = static_cast<std::int64_t>(data.size());
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    losses[k] = l1_loss(model.predict(data.x(k)), data.y(k));
  }
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed ^ kShuffleStream, epoch);
  rng.shuffle(order);
  return order;
}

bool EarlyStopping::update(double val_loss) {
  if (!has_reference_ || val_loss < reference_ - tol_) {
    reference_ = val_loss;
    has_reference_ = true;
    improved_ = true;
    stale_ = 0;
    return false;
  }
  improved_ = false;
  ++stale_;
  return stale_ >= patience_;
}

TrainReport train(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("training set has no windows");
  if (val_set.size() == 0) throw DataError("validation set has no windows");

  TrainReport report;
  report.initial_train_loss = evaluate_loss(model, train_set, cfg.parallel);

  Adam adam(model.state().shapes(), cfg.learning_rate);
  EarlyStopping stopper(cfg.patience, cfg.patience_tolerance);
  std::vector<double> best = model.state().flatten();
  report.best_val_loss = std::numeric_limits<double>::infinity();
  report.stop_reason = "max_epochs";

  const std::size_t n = train_set.size();
  for (std::size_t epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    double loss_sum = 0.0;

    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      const std::size_t batch = hi - lo;
      const std::size_t chunks = std::min(cfg.grad_chunks, batch);
      std::vector<Gradients> parts(chunks, model.state().zero_gradients());
      std::vector<double> chunk_loss(chunks, 0.0);
      const double inv_batch = 1.0 / static_cast<double>(batch);
      const auto nchunks = static_cast<std::int64_t>(chunks);

#pragma omp parallel for schedule(static, 1) if (cfg.parallel)
      for (std::int64_t c = 0; c < nchunks; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        const std::size_t a = lo + batch * cu / chunks;
        const std::size_t b = lo + batch * (cu + 1) / chunks;
        for (std::size_t pos = a; pos < b; ++pos) {
          const std::size_t w = order[pos];
          Rng rng = Rng::derive(cfg.seed ^ kDropoutStream, epoch, pos);
          Model::Trace trace;
          const Tensor y = model.forward(train_set.x(w), Mode::kTrain, rng, &trace);
          const Tensor target = train_set.y(w);
          chunk_loss[cu] += l1_loss(y, target);
          Tensor dy = l1_loss_grad(y, target);
          for (double& v : dy.values()) v *= inv_batch;
          model.backward(trace, dy, parts[cu]);
        }
      }

      Gradients& grads = parts[0];
      for (std::size_t c = 1; c < chunks; ++c) grads.add(parts[c]);
      double batch_loss = 0.0;
      for (double l : chunk_loss) batch_loss += l;
      loss_sum += batch_loss;
      batch_loss = batch_loss * inv_batch + l1_penalty(model.state(), cfg.regularization_factor);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch starting at " + std::to_string(lo));
      }
      add_l1_penalty_grad(model.state(), cfg.regularization_factor, grads);
      const double gnorm = clip_global_norm(grads, cfg.grad_clip);
      if (!std::isfinite(gnorm)) {
        throw NumericError("non-finite gradient norm at epoch " + std::to_string(epoch));
      }
      adam.step(model.state(), grads);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = evaluate_loss(model, val_set, cfg.parallel);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    rec.seconds = seconds_since(t0);
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < report.best_val_loss) {
      report.best_val_loss = rec.val_loss;
      report.best_epoch = epoch;
      best = model.state().flatten();
    }
    if (stopper.update(rec.val_loss)) {
      report.stop_reason = "patience";
      break;
    }
  }
  report.optimizer_steps = adam.steps();
  model.state().unflatten(best);
  return report;
}

}  // namespace flapnet
