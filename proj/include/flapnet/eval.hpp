// SPDX-License-Identifier: Apache-2.0
//
// Per-event MAE, aggregation, paired Wilcoxon signed-rank test and
// single-window latency measurement.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flapnet/model.hpp"
#include "flapnet/pipeline.hpp"

namespace flapnet {

// Mean over rows of the mean over channels of |pred - truth|.
double event_mae(const Tensor& pred, const Tensor& truth);
std::vector<double> channel_mae(const Tensor& pred, const Tensor& truth);

enum class Aggregate { kMean, kMedian };
std::string to_string(Aggregate a);
double aggregate(const std::vector<double>& values, Aggregate mode);

enum class WilcoxonMethod { kAuto, kExact, kNormal };

struct WilcoxonResult {
  std::size_t n = 0;          // non-zero differences used
  double w_plus = 0.0;        // rank sum of positive a - b
  double w_minus = 0.0;
  double p_greater = 1.0;     // H1: a tends to exceed b
  double p_less = 1.0;        // H1: a tends to be below b
  double p_two_sided = 1.0;
  bool exact = false;
  bool degenerate = false;    // every difference was zero
};

// exact for n <= 12 under kAuto; the normal path uses tie and continuity
// corrections.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMethod method = WilcoxonMethod::kAuto);

struct EventResult {
  std::string id;
  std::size_t windows = 0;
  double mae = 0.0;
  std::array<double, 3> angle_mae{};
  Tensor pred;   // [windows·target_win × 3], target units
  Tensor truth;
};

// Predicts every window of a raw event and compares in target units.
EventResult evaluate_event(const Model& model, const Normalization& norm, const Event& raw,
                           const WindowSpec& spec);

struct EvalReport {
  std::vector<EventResult> events;
  double mean = 0.0;
  double median = 0.0;
  std::array<double, 3> angle_mean{};
  std::optional<WilcoxonResult> comparison;

  std::vector<double> maes() const;
};

EvalReport evaluate_events(const Model& model, const Normalization& norm,
                           const std::vector<Event>& events, const WindowSpec& spec,
                           bool parallel = true);

// Delimited text: a per-event table followed by aggregate rows.
void write_eval_report(const EvalReport& report, const std::filesystem::path& path,
                       const std::string& label_other = {});

struct LatencyStats {
  std::size_t reps = 0;
  double median_ms = 0.0;
  double mad_ms = 0.0;  // median absolute deviation
  double min_ms = 0.0;
  double mean_ms = 0.0;
};

LatencyStats summarize_latency(const std::vector<double>& samples_ms);

// Wall-clock of single-window eval-mode forward passes on one thread.
LatencyStats bench_latency(const Model& model, std::size_t reps, std::size_t warmup = 20,
                           std::uint64_t seed = 3407);

struct SweepRow {
  std::size_t enc_hidden_size = 0;
  std::size_t params = 0;
  LatencyStats latency;
};

// One row per hidden size, widening the encoder and decoder together
// (the ASL hidden width follows when it tracks the encoder).
std::vector<SweepRow> param_sweep(const ModelConfig& base, const std::vector<std::size_t>& hidden_sizes,
                                  std::size_t reps, std::size_t warmup = 20, std::uint64_t seed = 3407);

void write_sweep_table(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace flapnet
