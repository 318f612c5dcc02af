// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "flapnet/data.hpp"
#include "flapnet/errors.hpp"
#include "oracles.hpp"

using namespace flapnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("flapnet_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string event_csv(std::size_t rows, std::size_t m_f, double rate, double bias = 0.0) {
  std::string s = "t";
  for (std::size_t j = 0; j < m_f; ++j) s += ",F" + std::to_string(j + 1);
  s += ",phi,theta,psi\n";
  for (std::size_t i = 0; i < rows; ++i) {
    s += std::to_string(static_cast<double>(i) / rate);
    for (std::size_t j = 0; j < m_f; ++j) s += "," + std::to_string(bias + i * 0.5 + j);
    s += "," + std::to_string(0.1 * i) + ",0.2,-0.3\n";
  }
  return s;
}

void write_manifest(const fs::path& dir, double rate, const std::vector<std::string>& files) {
  std::string s = "{\"sample_rate\": " + std::to_string(rate) + ", \"events\": [";
  for (std::size_t i = 0; i < files.size(); ++i) s += (i ? ",\"" : "\"") + files[i] + "\"";
  write_file(dir / "manifest.json", s + "]}");
}

Event ramp_event(std::size_t t_len, std::size_t m_f) {
  Event e;
  e.id = "ramp";
  e.sample_rate = 100.0;
  e.forces = Tensor({t_len, m_f});
  e.kinematics = Tensor({t_len, 3});
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t j = 0; j < m_f; ++j) e.forces(i, j) = static_cast<double>(i * 10 + j);
    for (std::size_t j = 0; j < 3; ++j) e.kinematics(i, j) = static_cast<double>(i) + 0.1 * j;
  }
  return e;
}

Tensor step(std::size_t t_len, std::size_t at, double height, std::size_t cols = 1) {
  Tensor s({t_len, cols});
  for (std::size_t i = at; i < t_len; ++i) {
    for (std::size_t j = 0; j < cols; ++j) s(i, j) = height;
  }
  return s;
}

}  // namespace

TEST_CASE("load_events: well-formed two-event fixture") {
  TempDir dir("load2");
  write_file(dir.path / "a.csv", event_csv(20, 4, 500.0));
  write_file(dir.path / "b.csv", event_csv(30, 4, 500.0, 1.0));
  write_manifest(dir.path, 500.0, {"b.csv", "a.csv"});
  const Dataset d = load_events(dir.path);
  REQUIRE(d.events.size() == 2);
  CHECK(d.force_dim() == 4);
  CHECK(d.kinematics_dim() == 3);
  CHECK(d.sample_rate == 500.0);
  CHECK(d.events[0].id == "a");
  CHECK(d.events[1].id == "b");
  CHECK(d.events[0].forces.shape() == Shape{20, 4});
  CHECK(d.events[1].kinematics.shape() == Shape{30, 3});
  CHECK(d.events[1].forces(3, 2) == doctest::Approx(1.0 + 1.5 + 2.0));
  CHECK(d.events[0].kinematics(5, 0) == doctest::Approx(0.5));
}

TEST_CASE("load_events: five force/torque columns give M_F = 5") {
  TempDir dir("load5");
  write_file(dir.path / "e0.csv", event_csv(16, 5, 250.0));
  write_manifest(dir.path, 250.0, {"e0.csv"});
  const Dataset d = load_events(dir.path);
  CHECK(d.force_dim() == 5);
  CHECK(d.events[0].forces.cols() == 5);
}

TEST_CASE("load_events: no manifest falls back to *.csv with the rate from t") {
  TempDir dir("nomani");
  write_file(dir.path / "z.csv", event_csv(10, 4, 200.0));
  write_file(dir.path / "y.csv", event_csv(12, 4, 200.0));
  const Dataset d = load_events(dir.path);
  REQUIRE(d.events.size() == 2);
  CHECK(d.events[0].id == "y");
  CHECK(d.sample_rate == doctest::Approx(200.0).epsilon(1e-6));
}

TEST_CASE("load_events: errors name the file and line") {
  TempDir dir("bad");
  auto expect_error = [&](const std::string& text, const std::string& needle) {
    write_file(dir.path / "e.csv", text);
    write_manifest(dir.path, 100.0, {"e.csv"});
    try {
      (void)load_events(dir.path);
      FAIL("expected DataError");
    } catch (const DataError& ex) {
      const std::string msg = ex.what();
      CHECK_MESSAGE(msg.find("e.csv") != std::string::npos, msg);
      CHECK_MESSAGE(msg.find(needle) != std::string::npos, msg);
    }
  };
  SUBCASE("NaN force") {
    expect_error("t,F1,phi,theta,psi\n0,1,0,0,0\n0.01,nan,0,0,0\n0.02,1,0,0,0\n", ":3");
  }
  SUBCASE("ragged row") {
    expect_error("t,F1,phi,theta,psi\n0,1,0,0,0\n0.01,1,0,0\n", ":3");
  }
  SUBCASE("missing kinematic column") {
    expect_error("t,F1,phi,theta\n0,1,0,0\n0.01,1,0,0\n", "psi");
  }
  SUBCASE("unparsable cell") {
    expect_error("t,F1,phi,theta,psi\n0,1,0,0,0\n0.01,abc,0,0,0\n", "abc");
  }
  SUBCASE("non-increasing time") {
    expect_error("t,F1,phi,theta,psi\n0,1,0,0,0\n0.01,1,0,0,0\n0.01,1,0,0,0\n", ":4");
  }
  SUBCASE("time step disagrees with the manifest rate") {
    expect_error("t,F1,phi,theta,psi\n0,1,0,0,0\n0.02,1,0,0,0\n0.04,1,0,0,0\n", "time step");
  }
}

TEST_CASE("load_events: inconsistent force channels across events") {
  TempDir dir("mixed");
  write_file(dir.path / "a.csv", event_csv(10, 4, 100.0));
  write_file(dir.path / "b.csv", event_csv(10, 5, 100.0));
  write_manifest(dir.path, 100.0, {"a.csv", "b.csv"});
  CHECK_THROWS_AS(load_events(dir.path), DataError);
  CHECK_THROWS_AS(load_events(dir.path / "missing"), DataError);
}

TEST_CASE("write_events then load_events reproduces the dataset exactly") {
  TempDir dir("rt");
  Dataset d;
  d.sample_rate = 500.0;
  d.force_channels = {"F1", "F2", "F3", "F4"};
  flapnet::Rng rng(5);
  for (int k = 0; k < 3; ++k) {
    Event e;
    e.id = "event_" + std::to_string(k);
    e.sample_rate = 500.0;
    e.forces = oracle::random_tensor({static_cast<std::size_t>(40 + k), 4}, rng, -3.0, 3.0);
    e.kinematics = oracle::random_tensor({static_cast<std::size_t>(40 + k), 3}, rng);
    d.events.push_back(std::move(e));
  }
  write_events(d, dir.path);
  const Dataset back = load_events(dir.path);
  REQUIRE(back.events.size() == 3);
  CHECK(back.force_channels == d.force_channels);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.events[k].id == d.events[k].id);
    CHECK(back.events[k].forces == d.events[k].forces);
    CHECK(back.events[k].kinematics == d.events[k].kinematics);
  }
}

TEST_CASE("normalizer examples") {
  SUBCASE("zscore of a constant channel is all zeros") {
    const Tensor x({5, 1}, 7.25);
    const Normalizer n = Normalizer::fit(x, NormMethod::kZscore);
    const Tensor y = n.apply(x);
    for (double v : y.values()) CHECK(v == 0.0);
  }
  SUBCASE("minmax of [1, 3]") {
    const Tensor x({2, 1}, std::vector<double>{1.0, 3.0});
    const Tensor y = Normalizer::fit(x, NormMethod::kMinmax).apply(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 1.0);
  }
  SUBCASE("identity leaves data untouched") {
    flapnet::Rng rng(2);
    const Tensor x = oracle::random_tensor({6, 3}, rng);
    CHECK(Normalizer::fit(x, NormMethod::kIdentity).apply(x) == x);
  }
}

TEST_CASE("normalizer statistics match a direct computation") {
  flapnet::Rng rng(8);
  const Tensor a = oracle::random_tensor({30, 2}, rng, -5.0, 9.0);
  const Tensor b = oracle::random_tensor({17, 2}, rng, -1.0, 2.0);
  const Normalizer n = Normalizer::fit({&a, &b}, NormMethod::kZscore);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, ss = 0.0;
    for (const Tensor* t : {&a, &b}) {
      for (std::size_t i = 0; i < t->rows(); ++i) s += (*t)(i, c);
    }
    const double mu = s / 47.0;
    for (const Tensor* t : {&a, &b}) {
      for (std::size_t i = 0; i < t->rows(); ++i) ss += ((*t)(i, c) - mu) * ((*t)(i, c) - mu);
    }
    CHECK(n.offset()[c] == doctest::Approx(mu).epsilon(1e-12));
    CHECK(n.scale()[c] == doctest::Approx(std::sqrt(ss / 47.0)).epsilon(1e-12));
  }
}

TEST_CASE("normalizer round trips within 1e-10") {
  flapnet::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = oracle::random_tensor({50, 4}, rng, -100.0, 100.0);
    for (NormMethod m : {NormMethod::kZscore, NormMethod::kMinmax}) {
      const Normalizer n = Normalizer::fit(x, m);
      CHECK(max_abs_diff(n.invert(n.apply(x)), x) < 1e-10);
      const Tensor z = oracle::random_tensor({9, 4}, rng);
      CHECK(max_abs_diff(n.apply(n.invert(z)), z) < 1e-10);
    }
  }
}

TEST_CASE("normalizer method names and channel checks") {
  CHECK(norm_method_from_string("zscore") == NormMethod::kZscore);
  CHECK(norm_method_from_string("minmax") == NormMethod::kMinmax);
  CHECK(norm_method_from_string("identity") == NormMethod::kIdentity);
  CHECK_THROWS_AS(norm_method_from_string("robust"), ConfigError);
  const Normalizer n = Normalizer::fit(Tensor({3, 2}, 1.0), NormMethod::kZscore);
  CHECK_THROWS_AS(n.apply(Tensor({3, 3})), DimensionError);
}

TEST_CASE("window counts") {
  WindowSpec spec;  // 512 / 1 / 1
  CHECK(window_count(550, spec) == 39);
  CHECK(window_count(512, spec) == 1);
  CHECK(window_count(511, spec) == 0);
  flapnet::Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    WindowSpec s;
    s.feature_win = 1 + rng.below(64);
    s.stride = 1 + rng.below(7);
    const std::size_t t_len = s.feature_win + rng.below(200);
    CHECK(window_count(t_len, s) == (t_len - s.feature_win) / s.stride + 1);
  }
}

TEST_CASE("make_windows slices features and the leading-edge target") {
  const Event e = ramp_event(40, 2);
  WindowSpec spec;
  spec.feature_win = 8;
  spec.target_win = 1;
  spec.intersect = 1;
  spec.stride = 3;
  const auto w = make_windows(e, spec);
  REQUIRE(w.size() == (40 - 8) / 3 + 1);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const std::size_t s = 3 * k;
    CHECK(w[k].t_target == s + 7);
    CHECK(w[k].x.shape() == Shape{8, 2});
    CHECK(w[k].y.shape() == Shape{1, 3});
    CHECK(w[k].x(0, 1) == e.forces(s, 1));
    CHECK(w[k].x(7, 0) == e.forces(s + 7, 0));
    CHECK(w[k].y(0, 2) == e.kinematics(s + 7, 2));
  }

  spec.target_win = 4;
  spec.intersect = 2;
  spec.stride = 1;
  const auto v = make_windows(e, spec);
  // span = max(8, 6 + 4) = 10
  REQUIRE(v.size() == 31);
  CHECK(v[5].t_target == 11);
  for (std::size_t r = 0; r < 4; ++r) CHECK(v[5].y(r, 0) == e.kinematics(11 + r, 0));
}

TEST_CASE("window specs are validated and short events are skipped") {
  WindowSpec spec;
  spec.feature_win = 8;
  spec.intersect = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.intersect = 9;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.intersect = 1;
  spec.stride = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.stride = 1;
  std::vector<Event> events{ramp_event(5, 2), ramp_event(10, 2)};
  const auto refs = window_refs(events, spec);
  CHECK(refs.size() == 3);
  for (const auto& r : refs) CHECK(r.event == 1);
  CHECK(make_windows(events[0], spec).empty());
}

TEST_CASE("split sizes follow floor arithmetic") {
  const Split a = split_events(153, 0.75, 0.10, 3407);
  CHECK(a.train.size() == 114);
  CHECK(a.val.size() == 15);
  CHECK(a.test.size() == 24);
  const Split b = split_events(548, 0.75, 0.10, 3407);
  CHECK(b.train.size() == 411);
  CHECK(b.val.size() == 54);
  CHECK(b.test.size() == 83);
}

TEST_CASE("split is a deterministic partition") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3407ULL}) {
    const Split a = split_events(100, 0.75, 0.10, seed);
    const Split b = split_events(100, 0.75, 0.10, seed);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    std::set<std::size_t> all;
    for (const auto* part : {&a.train, &a.val, &a.test}) {
      for (std::size_t i : *part) CHECK(all.insert(i).second);
    }
    CHECK(all.size() == 100);
    CHECK(*all.rbegin() == 99);
  }
  CHECK(split_events(100, 0.75, 0.10, 1).train != split_events(100, 0.75, 0.10, 2).train);
}

TEST_CASE("split rejects empty partitions and bad fractions") {
  CHECK_THROWS_AS(split_events(5, 0.75, 0.10, 1), ConfigError);
  CHECK_THROWS_AS(split_events(100, 0.95, 0.10, 1), ConfigError);
  CHECK_THROWS_AS(split_events(100, -0.1, 0.10, 1), ConfigError);
}

TEST_CASE("moving average matches a direct window mean") {
  flapnet::Rng rng(6);
  const Tensor x = oracle::random_tensor({25, 2}, rng);
  for (std::size_t w : {1u, 4u, 11u}) {
    const Tensor m = moving_average(x, w);
    for (std::size_t t = 0; t < 25; ++t) {
      const long lo = std::max<long>(0, static_cast<long>(t) - static_cast<long>(w / 2));
      const long hi = std::min<long>(24, static_cast<long>(t + w - 1 - w / 2));
      double s = 0.0;
      for (long i = lo; i <= hi; ++i) s += x(static_cast<std::size_t>(i), 1);
      CHECK(m(t, 1) == doctest::Approx(s / static_cast<double>(hi - lo + 1)).epsilon(1e-13));
    }
  }
  CHECK(moving_average(x, 1) == x);
}

TEST_CASE("alignment of identical steps has zero shift") {
  const Tensor f = step(300, 100, 1.0, 4);
  const Tensor k = step(300, 100, 1.0, 3);
  const AlignResult r = align(f, k, AlignConfig{}, 500.0, "s");
  CHECK(r.shift == 0);
  CHECK(r.force_onset == r.motion_onset);
  CHECK(r.event.length() == 300);
  CHECK(r.event.id == "s");
}

TEST_CASE("alignment recovers step shifts exactly") {
  SUBCASE("motion lags force by 30") {
    const AlignResult r = align(step(300, 100, 1.0), step(300, 130, 1.0, 3), AlignConfig{});
    CHECK(r.shift == 30);
    CHECK(r.event.length() == 270);
    CHECK(r.event.forces(99, 0) == 0.0);
    CHECK(r.event.forces(100, 0) == 1.0);
    CHECK(r.event.kinematics(99, 0) == 0.0);
    CHECK(r.event.kinematics(100, 0) == 1.0);
  }
  SUBCASE("every shift within bounds") {
    for (std::size_t a : {20u, 60u, 150u}) {
      for (std::size_t b : {20u, 45u, 150u, 210u}) {
        const AlignResult r = align(step(260, a, 1.0, 2), step(260, b, 1.0, 3), AlignConfig{});
        CHECK(r.shift == static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(a));
        const std::size_t onset = std::min(a, b);
        CHECK(r.event.forces(onset - 1, 0) == 0.0);
        CHECK(r.event.forces(onset, 0) == 1.0);
        CHECK(r.event.kinematics(onset - 1, 2) == 0.0);
        CHECK(r.event.kinematics(onset, 2) == 1.0);
      }
    }
  }
}

TEST_CASE("alignment errors") {
  CHECK_THROWS_AS(align(Tensor({200, 4}, 3.0), step(200, 50, 1.0, 3), AlignConfig{}), DataError);
  CHECK_THROWS_AS(align(step(200, 50, 1.0), Tensor({200, 3}, 0.2), AlignConfig{}), DataError);
}

TEST_CASE("event and dataset validation") {
  Event e = ramp_event(10, 4);
  CHECK_NOTHROW(e.validate());
  e.kinematics = Tensor({9, 3});
  CHECK_THROWS_AS(e.validate(), DataError);
  e = ramp_event(10, 4);
  e.forces(2, 1) = std::nan("");
  CHECK_THROWS_AS(e.validate(), DataError);

  Dataset d;
  d.force_channels = {"F1", "F2", "F3", "F4"};
  d.events = {ramp_event(10, 4), ramp_event(10, 5)};
  CHECK_THROWS_AS(d.validate(), DataError);
}
