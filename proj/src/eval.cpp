// SPDX-License-Identifier: Apache-2.0
#include "flapnet/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "flapnet/errors.hpp"
#include "flapnet/rng.hpp"
#include "json.hpp"

namespace flapnet {

namespace {

void check_pair(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError("event_mae: prediction " + shape_string(pred.shape()) + " vs truth " +
                         shape_string(truth.shape()));
  }
  if (pred.rank() != 2 || pred.size() == 0) throw DimensionError("event_mae: expected a non-empty [T x C] tensor");
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string num(double v) { return nlohmann::json(v).dump(); }

}  // namespace

double event_mae(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth);
  const std::size_t t_len = pred.rows(), c = pred.cols();
  double total = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    double row = 0.0;
    for (std::size_t j = 0; j < c; ++j) row += std::abs(pred(t, j) - truth(t, j));
    total += row / static_cast<double>(c);
  }
  return total / static_cast<double>(t_len);
}

std::vector<double> channel_mae(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth);
  std::vector<double> out(pred.cols(), 0.0);
  for (std::size_t t = 0; t < pred.rows(); ++t) {
    for (std::size_t j = 0; j < pred.cols(); ++j) out[j] += std::abs(pred(t, j) - truth(t, j));
  }
  for (double& v : out) v /= static_cast<double>(pred.rows());
  return out;
}

std::string to_string(Aggregate a) { return a == Aggregate::kMean ? "mean" : "median"; }

double aggregate(const std::vector<double>& values, Aggregate mode) {
  if (values.empty()) throw DataError("aggregate: no values");
  if (mode == Aggregate::kMedian) return median_of(values);
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMethod method) {
  if (a.size() != b.size()) {
    throw DimensionError("wilcoxon: samples have " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " entries");
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    if (!std::isfinite(x)) throw NumericError("wilcoxon: non-finite difference");
    if (x != 0.0) d.push_back(x);
  }
  WilcoxonResult r;
  r.n = d.size();
  if (d.empty()) {
    r.degenerate = true;
    return r;
  }

  // Midranks of |d|, doubled so ties stay integral.
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<std::size_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::size_t w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0.0) w2 += rank2[i];
  }
  r.w_plus = static_cast<double>(w2) / 2.0;
  r.w_minus = static_cast<double>(total2 - w2) / 2.0;

  const bool exact = method == WilcoxonMethod::kExact || (method == WilcoxonMethod::kAuto && n <= 12);
  if (exact) {
    // Distribution of the doubled positive rank sum over all 2^n sign patterns.
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = reach + 1; s-- > 0;) {
        if (count[s] != 0.0) count[s + rank2[i]] += count[s];
      }
      reach += rank2[i];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double ge = 0.0, le = 0.0;
    for (std::size_t s = 0; s <= total2; ++s) {
      if (s >= w2) ge += count[s];
      if (s <= w2) le += count[s];
    }
    r.exact = true;
    r.p_greater = ge / all;
    r.p_less = le / all;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) {
      r.degenerate = true;
      return r;
    }
    const double sd = std::sqrt(var);
    const double zg = (r.w_plus - mean - 0.5) / sd;
    const double zl = (r.w_plus - mean + 0.5) / sd;
    r.p_greater = 0.5 * std::erfc(zg / std::sqrt(2.0));
    r.p_less = 0.5 * std::erfc(-zl / std::sqrt(2.0));
  }
  r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_greater, r.p_less));
  return r;
}

EventResult evaluate_event(const Model& model, const Normalization& norm, const Event& raw,
                           const WindowSpec& spec) {
  const Event e = norm.apply(raw);
  const std::size_t count = window_count(e.length(), spec);
  if (count == 0) {
    throw DataError("event " + raw.id + " has " + std::to_string(raw.length()) +
                    " samples, fewer than the window span " + std::to_string(spec.span()));
  }
  const std::size_t tw = spec.target_win;
  const std::size_t k = raw.kinematics.cols();
  EventResult r;
  r.id = raw.id;
  r.windows = count;
  r.pred = Tensor({count * tw, k});
  r.truth = Tensor({count * tw, k});
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * spec.stride;
    const Tensor y = norm.invert_targets(model.predict(feature_window(e, start, spec)));
    const Tensor t = target_window(raw, start, spec);
    std::copy_n(y.data(), tw * k, r.pred.row(w * tw));
    std::copy_n(t.data(), tw * k, r.truth.row(w * tw));
  }
  r.mae = event_mae(r.pred, r.truth);
  const auto per = channel_mae(r.pred, r.truth);
  for (std::size_t j = 0; j < 3 && j < per.size(); ++j) r.angle_mae[j] = per[j];
  return r;
}

std::vector<double> EvalReport::maes() const {
  std::vector<double> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.mae);
  return out;
}

EvalReport evaluate_events(const Model& model, const Normalization& norm,
                           const std::vector<Event>& events, const WindowSpec& spec, bool parallel) {
  if (events.empty()) throw DataError("evaluate: no events");
  EvalReport rep;
  rep.events.resize(events.size());
  std::vector<std::string> errors(events.size());
  const auto n = static_cast<std::int64_t>(events.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      rep.events[k] = evaluate_event(model, norm, events[k], spec);
    } catch (const std::exception& ex) {
      errors[k] = ex.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw DataError(err);
  }
  const auto m = rep.maes();
  rep.mean = aggregate(m, Aggregate::kMean);
  rep.median = aggregate(m, Aggregate::kMedian);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (const auto& e : rep.events) s += e.angle_mae[j];
    rep.angle_mean[j] = s / static_cast<double>(rep.events.size());
  }
  return rep;
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& path,
                       const std::string& label_other) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report " + path.string());
  out << "event,windows,mae,mae_phi,mae_theta,mae_psi\n";
  for (const auto& e : report.events) {
    out << e.id << ',' << e.windows << ',' << num(e.mae) << ',' << num(e.angle_mae[0]) << ','
        << num(e.angle_mae[1]) << ',' << num(e.angle_mae[2]) << '\n';
  }
  out << "#mean,," << num(report.mean) << ',' << num(report.angle_mean[0]) << ','
      << num(report.angle_mean[1]) << ',' << num(report.angle_mean[2]) << '\n';
  out << "#median,," << num(report.median) << ",,,\n";
  if (report.comparison) {
    const auto& w = *report.comparison;
    out << "#wilcoxon" << (label_other.empty() ? "" : " vs " + label_other) << ",n=" << w.n
        << ",w_plus=" << num(w.w_plus) << ",p_less=" << num(w.p_less)
        << ",p_greater=" << num(w.p_greater) << ",p_two_sided=" << num(w.p_two_sided)
        << (w.degenerate ? ",degenerate" : (w.exact ? ",exact" : ",normal")) << '\n';
  }
}

LatencyStats summarize_latency(const std::vector<double>& samples_ms) {
  if (samples_ms.empty()) throw DataError("latency: no samples");
  LatencyStats s;
  s.reps = samples_ms.size();
  s.median_ms = median_of(samples_ms);
  std::vector<double> dev;
  dev.reserve(samples_ms.size());
  for (double v : samples_ms) dev.push_back(std::abs(v - s.median_ms));
  s.mad_ms = median_of(dev);
  s.min_ms = *std::min_element(samples_ms.begin(), samples_ms.end());
  s.mean_ms =
      std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(samples_ms.size());
  return s;
}

LatencyStats bench_latency(const Model& model, std::size_t reps, std::size_t warmup, std::uint64_t seed) {
  if (reps == 0) throw ConfigError("bench: reps must be positive");
  const ModelConfig& cfg = model.config();
  Rng rng(seed);
  Tensor window({cfg.feature_win, cfg.input_channels});
  for (double& v : window.values()) v = rng.normal();

  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  double sink = 0.0;
  for (std::size_t i = 0; i < warmup; ++i) sink += model.predict(window)[0];
  std::vector<double> samples;
  samples.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor y = model.predict(window);
    const auto t1 = std::chrono::steady_clock::now();
    sink += y[0];
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  omp_set_num_threads(threads);
  if (!std::isfinite(sink)) throw NumericError("bench: non-finite model output");
  return summarize_latency(samples);
}

std::vector<SweepRow> param_sweep(const ModelConfig& base, const std::vector<std::size_t>& hidden_sizes,
                                  std::size_t reps, std::size_t warmup, std::uint64_t seed) {
  std::vector<SweepRow> rows;
  for (std::size_t h : hidden_sizes) {
    ModelConfig c = base;
    const bool asl_tracks = base.asl.hidden_size == base.enc_hidden_size;
    c.enc_hidden_size = h;
    c.dec_hidden_size = h;
    if (asl_tracks) c.asl.hidden_size = h;
    Model m(c);
    m.init(seed);
    SweepRow r;
    r.enc_hidden_size = h;
    r.params = m.param_count();
    r.latency = bench_latency(m, reps, warmup, seed);
    rows.push_back(r);
  }
  return rows;
}

void write_sweep_table(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write sweep table " + path.string());
  out << "enc_hidden_size,params,reps,median_ms,mad_ms,min_ms,mean_ms\n";
  for (const auto& r : rows) {
    out << r.enc_hidden_size << ',' << r.params << ',' << r.latency.reps << ','
        << num(r.latency.median_ms) << ',' << num(r.latency.mad_ms) << ',' << num(r.latency.min_ms)
        << ',' << num(r.latency.mean_ms) << '\n';
  }
}

}  // namespace flapnet
