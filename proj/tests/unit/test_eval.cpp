// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "flapnet/errors.hpp"
#include "flapnet/eval.hpp"
#include "flapnet/synth.hpp"
#include "oracles.hpp"

using namespace flapnet;
namespace fs = std::filesystem;

namespace {

// Brute-force distribution of the positive rank sum: every one of the 2^n
// sign patterns on the given ranks, counted directly.
struct Enumerated {
  double p_greater, p_less;
};

Enumerated enumerate_signs(const std::vector<double>& ranks, double w_obs) {
  const std::size_t n = ranks.size();
  const std::size_t total = std::size_t{1} << n;
  std::size_t ge = 0, le = 0;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) w += ranks[i];
    }
    if (w >= w_obs - 1e-9) ++ge;
    if (w <= w_obs + 1e-9) ++le;
  }
  return {static_cast<double>(ge) / total, static_cast<double>(le) / total};
}

// Midranks of |d| by direct counting.
std::vector<double> midranks(const std::vector<double>& d) {
  std::vector<double> r(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double below = 0.0, equal = 0.0;
    for (double x : d) {
      if (std::abs(x) < std::abs(d[i])) below += 1.0;
      if (std::abs(x) == std::abs(d[i])) equal += 1.0;
    }
    r[i] = below + (equal + 1.0) / 2.0;
  }
  return r;
}

Normalization identity_norm(std::size_t m_f) {
  Normalization n;
  n.features_global = true;
  n.feature_method = NormMethod::kIdentity;
  n.features = Normalizer(NormMethod::kIdentity, std::vector<double>(m_f, 0.0), std::vector<double>(m_f, 1.0));
  n.targets = Normalizer(NormMethod::kIdentity, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
  return n;
}

}  // namespace

TEST_CASE("event MAE examples") {
  flapnet::Rng rng(1);
  const Tensor truth = oracle::random_tensor({40, 3}, rng);
  CHECK(event_mae(truth, truth) == 0.0);
  Tensor shifted = truth;
  for (double& v : shifted.values()) v += 0.1;
  CHECK(event_mae(shifted, truth) == doctest::Approx(0.1).epsilon(1e-12));
  const Tensor pred = oracle::random_tensor({40, 3}, rng);
  double flat = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) flat += std::abs(pred[i] - truth[i]);
  CHECK(event_mae(pred, truth) == doctest::Approx(flat / 120.0).epsilon(1e-13));
  CHECK_THROWS_AS(event_mae(pred, Tensor({39, 3})), DimensionError);
}

TEST_CASE("event MAE detects a translation exactly") {
  flapnet::Rng rng(2);
  for (double delta : {-0.3, 0.05, 1.7}) {
    const Tensor truth = oracle::random_tensor({17, 3}, rng);
    Tensor pred = truth;
    for (double& v : pred.values()) v += delta;
    CHECK(event_mae(pred, truth) == doctest::Approx(std::abs(delta)).epsilon(1e-12));
  }
}

TEST_CASE("aggregation") {
  CHECK(aggregate({1, 2, 3}, Aggregate::kMean) == 2.0);
  CHECK(aggregate({1, 2, 3}, Aggregate::kMedian) == 2.0);
  CHECK(aggregate({1, 2, 3, 100}, Aggregate::kMedian) == 2.5);
  CHECK(aggregate({0.7}, Aggregate::kMedian) == 0.7);
  CHECK(aggregate({0.7}, Aggregate::kMean) == 0.7);
  CHECK_THROWS_AS(aggregate({}, Aggregate::kMean), DataError);
  flapnet::Rng rng(5);
  std::vector<double> v(31);
  for (double& x : v) x = rng.uniform();
  const double m = aggregate(v, Aggregate::kMedian);
  for (int k = 0; k < 20; ++k) {
    rng.shuffle(v);
    CHECK(aggregate(v, Aggregate::kMedian) == m);
  }
}

TEST_CASE("Wilcoxon: all positive, n = 3") {
  const auto r = wilcoxon_signed_rank({1.0, 2.0, 3.0}, {0.0, 0.5, 1.0});
  CHECK(r.exact);
  CHECK(r.n == 3);
  CHECK(r.w_plus == 6.0);
  CHECK(r.p_greater == 0.125);
  CHECK(r.p_less == 1.0);
  CHECK(r.p_two_sided == 0.25);
}

TEST_CASE("Wilcoxon: identical samples are degenerate") {
  const std::vector<double> a{0.1, 0.2, 0.3, 0.4};
  const auto r = wilcoxon_signed_rank(a, a);
  CHECK(r.degenerate);
  CHECK(r.p_two_sided == 1.0);
  CHECK(r.p_greater == 1.0);
  CHECK(r.p_less == 1.0);
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, {1.0}), DimensionError);
}

TEST_CASE("Wilcoxon exact p matches sign enumeration for n <= 10") {
  flapnet::Rng rng(77);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse grid so ties and zero differences occur.
        a[i] = std::round(rng.uniform(-4.0, 4.0));
        b[i] = std::round(rng.uniform(-4.0, 4.0)) + (trial % 2 ? 0.5 * rng.uniform() : 0.0);
      }
      std::vector<double> d;
      for (std::size_t i = 0; i < n; ++i) {
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
      }
      const auto r = wilcoxon_signed_rank(a, b, WilcoxonMethod::kExact);
      if (d.empty()) {
        CHECK(r.degenerate);
        continue;
      }
      const auto ranks = midranks(d);
      double w = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > 0.0) w += ranks[i];
      }
      const Enumerated e = enumerate_signs(ranks, w);
      CHECK(r.w_plus == doctest::Approx(w));
      CHECK(r.p_greater == doctest::Approx(e.p_greater).epsilon(1e-12));
      CHECK(r.p_less == doctest::Approx(e.p_less).epsilon(1e-12));
    }
  }
}

TEST_CASE("Wilcoxon normal approximation tracks the exact path at n = 20") {
  flapnet::Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> a(20), b(20);
    const double shift = rng.uniform(-0.6, 0.6);
    for (std::size_t i = 0; i < 20; ++i) {
      a[i] = rng.normal() + shift;
      b[i] = rng.normal();
    }
    const auto ex = wilcoxon_signed_rank(a, b, WilcoxonMethod::kExact);
    const auto ap = wilcoxon_signed_rank(a, b, WilcoxonMethod::kNormal);
    const auto au = wilcoxon_signed_rank(a, b);
    CHECK(!au.exact);
    CHECK(au.p_greater == ap.p_greater);
    CHECK(std::abs(ex.p_greater - ap.p_greater) < 0.02);
    CHECK(std::abs(ex.p_less - ap.p_less) < 0.02);
    CHECK(std::abs(ex.p_two_sided - ap.p_two_sided) < 0.02);
  }
}

TEST_CASE("Wilcoxon p-values are complementary") {
  flapnet::Rng rng(12);
  std::vector<double> a(9), b(9);
  for (std::size_t i = 0; i < 9; ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform();
  }
  const auto r = wilcoxon_signed_rank(a, b);
  // Without ties P(W >= w) + P(W <= w) = 1 + P(W = w).
  CHECK(r.p_greater + r.p_less >= 1.0);
  const auto flipped = wilcoxon_signed_rank(b, a);
  CHECK(flipped.p_greater == doctest::Approx(r.p_less));
  CHECK(flipped.w_plus == r.w_minus);
}

TEST_CASE("evaluate_event with a constant model") {
  ModelConfig cfg;
  cfg.kind = ModelKind::kLinear;
  cfg.input_channels = 4;
  cfg.feature_win = 16;
  Model m(cfg);
  for (ParamId id = 0; id < m.state().count(); ++id) m.state().value(id).fill(0.0);
  Event e;
  e.id = "e";
  e.sample_rate = 100.0;
  e.forces = Tensor({40, 4}, 1.0);
  e.kinematics = Tensor({40, 3}, 0.25);
  WindowSpec spec;
  spec.feature_win = 16;
  spec.stride = 5;
  const EventResult r = evaluate_event(m, identity_norm(4), e, spec);
  CHECK(r.windows == window_count(40, spec));
  CHECK(r.mae == doctest::Approx(0.25));
  for (double a : r.angle_mae) CHECK(a == doctest::Approx(0.25));
  e.forces = Tensor({10, 4});
  e.kinematics = Tensor({10, 3});
  CHECK_THROWS_AS(evaluate_event(m, identity_norm(4), e, spec), DataError);
}

TEST_CASE("evaluation report aggregates recompute from the table") {
  ModelConfig cfg;
  cfg.kind = ModelKind::kNLinear;
  cfg.input_channels = 4;
  cfg.feature_win = 16;
  Model m(cfg);
  m.init(4);
  SynthRanges r;
  r.duration_lo = r.duration_hi = 0.1;
  const Dataset d = generate_dataset(5, r, QsParams{}, 3);
  WindowSpec spec;
  spec.feature_win = 16;
  spec.stride = 4;
  const EvalReport rep = evaluate_events(m, identity_norm(4), d.events, spec);
  const EvalReport serial = evaluate_events(m, identity_norm(4), d.events, spec, false);
  REQUIRE(rep.events.size() == 5);
  CHECK(rep.mean == serial.mean);
  CHECK(rep.mean == doctest::Approx(aggregate(rep.maes(), Aggregate::kMean)));
  CHECK(rep.median == aggregate(rep.maes(), Aggregate::kMedian));

  const fs::path path = fs::temp_directory_path() / ("flapnet_eval_" + std::to_string(::getpid()) + ".csv");
  EvalReport with = rep;
  with.comparison = wilcoxon_signed_rank(rep.maes(), rep.maes());
  write_eval_report(with, path, "self");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "event,windows,mae,mae_phi,mae_theta,mae_psi");
  std::vector<double> col;
  double printed_mean = NAN, printed_median = NAN;
  bool saw_wilcoxon = false;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells[0] == "#mean") printed_mean = std::stod(cells[2]);
    else if (cells[0] == "#median") printed_median = std::stod(cells[2]);
    else if (cells[0].rfind("#wilcoxon", 0) == 0) saw_wilcoxon = line.find("degenerate") != std::string::npos;
    else col.push_back(std::stod(cells[2]));
  }
  fs::remove(path);
  REQUIRE(col.size() == 5);
  CHECK(aggregate(col, Aggregate::kMean) == doctest::Approx(printed_mean).epsilon(1e-15));
  CHECK(aggregate(col, Aggregate::kMedian) == printed_median);
  CHECK(saw_wilcoxon);
}

TEST_CASE("latency summary statistics") {
  const auto one = summarize_latency({3.5});
  CHECK(one.reps == 1);
  CHECK(one.median_ms == 3.5);
  CHECK(one.mad_ms == 0.0);
  CHECK(one.min_ms == 3.5);
  const auto s = summarize_latency({1.0, 2.0, 3.0, 4.0, 100.0});
  CHECK(s.median_ms == 3.0);
  CHECK(s.mad_ms == 1.0);
  CHECK(s.mean_ms == 22.0);
  CHECK_THROWS_AS(summarize_latency({}), DataError);
}

TEST_CASE("latency benchmark and parameter sweep") {
  ModelConfig cfg;
  cfg.input_channels = 4;
  cfg.feature_win = 32;
  cfg.enc_embedding_size = 4;
  cfg.dec_embedding_size = 4;
  cfg.enc_hidden_size = 8;
  cfg.dec_hidden_size = 8;
  cfg.asl.hidden_size = 8;
  cfg.asl.sample_rate = 500.0;
  cfg.asl.freq_threshold = 100.0;
  Model m(cfg);
  m.init(1);
  const auto single = bench_latency(m, 1, 3);
  CHECK(single.reps == 1);
  CHECK(single.median_ms == single.min_ms);
  CHECK(single.median_ms > 0.0);
  ModelConfig wider = cfg;
  wider.feature_win = 128;
  wider.enc_hidden_size = wider.dec_hidden_size = wider.asl.hidden_size = 32;
  Model mw(wider);
  mw.init(2);
  const auto a = bench_latency(mw, 60, 5);
  const auto b = bench_latency(mw, 60, 5);
  CHECK(a.median_ms > 0.0);
  // Repeat-run jitter allowance.
  CHECK(std::max(a.median_ms, b.median_ms) <= 1.5 * std::min(a.median_ms, b.median_ms));

  const auto rows = param_sweep(cfg, {4, 8, 16, 32}, 5, 2);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].params > rows[i - 1].params);
  for (const auto& r : rows) CHECK(r.params == count_params([&] {
                                     ModelConfig c = cfg;
                                     c.enc_hidden_size = c.dec_hidden_size = c.asl.hidden_size = r.enc_hidden_size;
                                     return c;
                                   }()));
}
