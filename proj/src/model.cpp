// SPDX-License-Identifier: Apache-2.0
#include "flapnet/model.hpp"

#include <cstdint>

namespace flapnet {

namespace {

std::variant<Seq2Seq, LinearBaseline, NLinearBaseline> build(ModelState& state,
                                                             const ModelConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case ModelKind::kLinear: return LinearBaseline(state, cfg);
    case ModelKind::kNLinear: return NLinearBaseline(state, cfg);
    case ModelKind::kSeq2Seq: break;
  }
  return Seq2Seq(state, cfg);
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg), net_(build(state_, cfg)) {}

void Model::init(std::uint64_t seed) {
  Rng rng(seed);
  state_.init(rng);
}

Tensor Model::forward(const Tensor& window, Mode mode, Rng& rng, Trace* trace) const {
  switch (net_.index()) {
    case 0: {
      Seq2Seq::Cache* c = nullptr;
      if (trace) c = &trace->cache.emplace<Seq2Seq::Cache>();
      return std::get<0>(net_).forward(state_, window, mode, rng, c);
    }
    case 1: {
      LinearBaseline::Cache* c = nullptr;
      if (trace) c = &trace->cache.emplace<LinearBaseline::Cache>();
      return std::get<1>(net_).forward(state_, window, c);
    }
    default: {
      NLinearBaseline::Cache* c = nullptr;
      if (trace) c = &trace->cache.emplace<NLinearBaseline::Cache>();
      return std::get<2>(net_).forward(state_, window, c);
    }
  }
}

Tensor Model::backward(const Trace& trace, const Tensor& dy, Gradients& grads) const {
  switch (net_.index()) {
    case 0:
      return std::get<0>(net_).backward(state_, std::get<Seq2Seq::Cache>(trace.cache), dy, grads);
    case 1:
      return std::get<1>(net_).backward(state_, std::get<LinearBaseline::Cache>(trace.cache), dy,
                                        grads);
    default:
      return std::get<2>(net_).backward(state_, std::get<NLinearBaseline::Cache>(trace.cache), dy,
                                        grads);
  }
}

Tensor Model::predict(const Tensor& window) const {
  Rng unused(0);
  return forward(window, Mode::kEval, unused, nullptr);
}

std::vector<Tensor> Model::predict_batch_serial(const std::vector<Tensor>& windows) const {
  std::vector<Tensor> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(predict(w));
  return out;
}

std::vector<Tensor> Model::predict_batch(const std::vector<Tensor>& windows) const {
  std::vector<Tensor> out(windows.size());
  const auto n = static_cast<std::int64_t>(windows.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = predict(windows[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::size_t count_params(const ModelConfig& cfg) {
  ModelState state;
  build(state, cfg);
  return state.total_size();
}

}  // namespace flapnet
