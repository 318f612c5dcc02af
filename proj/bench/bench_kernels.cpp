// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <vector>

#include "flapnet/kernels.hpp"
#include "flapnet/model.hpp"
#include "flapnet/rng.hpp"

namespace {

using flapnet::Rng;
using flapnet::Tensor;

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_vector(n * n, rng), b = random_vector(n * n, rng);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    if constexpr (Parallel) {
      flapnet::kernels::gemm_parallel(a.data(), b.data(), c.data(), n, n, n);
    } else {
      flapnet::kernels::gemm(a.data(), b.data(), c.data(), n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

flapnet::Model bench_model() {
  flapnet::ModelConfig cfg;
  cfg.input_channels = 4;
  cfg.feature_win = 128;
  cfg.enc_hidden_size = cfg.dec_hidden_size = cfg.asl.hidden_size = 32;
  cfg.asl.sample_rate = 500.0;
  cfg.asl.freq_threshold = 100.0;
  flapnet::Model m(cfg);
  m.init(3407);
  return m;
}

template <bool Parallel>
void BM_PredictBatch(benchmark::State& state) {
  static const flapnet::Model model = bench_model();
  Rng rng(2);
  std::vector<Tensor> windows;
  for (int i = 0; i < state.range(0); ++i) {
    Tensor w({128, 4});
    for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
    windows.push_back(std::move(w));
  }
  for (auto _ : state) {
    auto out = Parallel ? model.predict_batch(windows) : model.predict_batch_serial(windows);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_PredictBatch<false>)->Name("predict_batch/serial")->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictBatch<true>)->Name("predict_batch/parallel")->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
