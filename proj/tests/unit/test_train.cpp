// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "flapnet/errors.hpp"
#include "flapnet/pipeline.hpp"
#include "flapnet/synth.hpp"
#include "flapnet/train.hpp"
#include "oracles.hpp"

using namespace flapnet;
namespace fs = std::filesystem;

namespace {

// Small, fast setup on synthetic events.
RunConfig tiny_run() {
  RunConfig c;
  c.feature_win = 32;
  c.enc_embedding_size = 4;
  c.enc_hidden_size = 8;
  c.dec_embedding_size = 4;
  c.dec_hidden_size = 8;
  c.freq_threshold = 100.0;
  c.batch_size = 16;
  c.stride = 8;
  c.eval_stride = 8;
  c.n_epochs = 3;
  c.learning_rate = 3e-3;
  c.synth_duration_min = 0.2;
  c.synth_duration_max = 0.2;
  c.seed = 17;
  return c;
}

Dataset tiny_data(const RunConfig& c, std::size_t n = 20) {
  return generate_dataset(n, c.synth_ranges(), QsParams{}, c.seed);
}

}  // namespace

TEST_CASE("l1 loss examples") {
  const Tensor a = Tensor::vector({1.0, 2.0});
  CHECK(l1_loss(a, a) == 0.0);
  CHECK(l1_loss(a, Tensor::vector({0.0, 0.0})) == 1.5);
  CHECK_THROWS_AS(l1_loss(a, Tensor::vector({0.0, 0.0, 0.0})), DimensionError);
}

TEST_CASE("l1 gradient agrees with finite differences away from ties") {
  flapnet::Rng rng(3);
  const Tensor target = oracle::random_tensor({5, 3}, rng);
  Tensor pred = oracle::random_tensor({5, 3}, rng);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(pred[i] - target[i]) < 1e-3) pred[i] += 0.01;
  }
  const Tensor g = l1_loss_grad(pred, target);
  auto f = [&](std::span<const double> p) {
    return l1_loss(Tensor(pred.shape(), std::vector<double>(p.begin(), p.end())), target);
  };
  CHECK(grad_check(f, pred.span(), g.span()) < 1e-6);
  CHECK(l1_loss_grad(target, target) == Tensor(target.shape()));
}

TEST_CASE("l1 penalty and its gradient") {
  ModelState st;
  const ParamId w = st.add("w", {2, 2});
  const ParamId b = st.add("b", {2});
  st.value(w) = Tensor::matrix(2, 2, {1.0, -2.0, 0.0, 0.5});
  st.value(b) = Tensor::vector({-0.25, 3.0});
  CHECK(l1_penalty(st, 0.0) == 0.0);
  CHECK(l1_penalty(st, 0.1) == doctest::Approx(0.1 * 6.75));
  Gradients g = st.zero_gradients();
  add_l1_penalty_grad(st, 0.1, g);
  CHECK(g[w] == Tensor::matrix(2, 2, {0.1, -0.1, 0.0, 0.1}));
  CHECK(g[b] == Tensor::vector({-0.1, 0.1}));
}

TEST_CASE("Adam first step moves each coordinate by about lr") {
  ModelState st;
  const ParamId p = st.add("p", {3});
  st.value(p) = Tensor::vector({1.0, 1.0, 1.0});
  Adam adam(st.shapes(), 0.01);
  Gradients g = st.zero_gradients();
  g[p] = Tensor::vector({0.5, -3.0, 1e-3});
  adam.step(st, g);
  CHECK(adam.steps() == 1);
  const double gs[3] = {0.5, -3.0, 1e-3};
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = 0.01 * std::abs(gs[i]) / (std::abs(gs[i]) + 1e-8);
    CHECK(std::abs(st.value(p)[i] - 1.0) == doctest::Approx(expected).epsilon(1e-9));
    CHECK((st.value(p)[i] < 1.0) == (gs[i] > 0.0));
  }
}

TEST_CASE("Adam with zero gradient keeps parameters and decays moments") {
  ModelState st;
  const ParamId p = st.add("p", {2});
  st.value(p) = Tensor::vector({0.3, -0.7});
  Adam adam(st.shapes(), 0.1);
  Gradients g = st.zero_gradients();
  g[p] = Tensor::vector({1.0, -2.0});
  adam.step(st, g);
  const Tensor after_one = st.value(p);
  const double m0 = adam.first_moment()[p][0];
  const double v0 = adam.second_moment()[p][1];
  g.zero();

  ModelState frozen;
  frozen.add("p", {2});
  frozen.value(0) = Tensor::vector({0.3, -0.7});
  Adam still(frozen.shapes(), 0.1);
  still.step(frozen, frozen.zero_gradients());
  CHECK(frozen.value(0) == Tensor::vector({0.3, -0.7}));

  adam.step(st, g);
  CHECK(adam.first_moment()[p][0] == doctest::Approx(0.9 * m0));
  CHECK(adam.second_moment()[p][1] == doctest::Approx(0.999 * v0));
  CHECK(!(st.value(p) == after_one));  // momentum still carries it
}

TEST_CASE("Adam converges on x^2") {
  ModelState st;
  const ParamId x = st.add("x", {1});
  st.value(x)[0] = 5.0;
  Adam adam(st.shapes(), 0.1);
  Gradients g = st.zero_gradients();
  for (int i = 0; i < 100; ++i) {
    g[x][0] = 2.0 * st.value(x)[0];
    adam.step(st, g);
  }
  CHECK(std::abs(st.value(x)[0]) < 0.5);
}

TEST_CASE("global norm clipping") {
  Gradients g({{2}, {1}});
  g[0] = Tensor::vector({3.0, 0.0});
  g[1] = Tensor::vector({4.0});
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(1.0));
  CHECK(g[1][0] == doctest::Approx(0.8));
  Gradients h(std::vector<Shape>{Shape{1}});
  h[0][0] = 100.0;
  clip_global_norm(h, 0.0);
  CHECK(h[0][0] == 100.0);
}

TEST_CASE("early stopping fires at the earliest qualifying epoch") {
  SUBCASE("patience 1, constant loss stops after epoch 2") {
    EarlyStopping s(1, 0.005);
    CHECK(!s.update(0.3));
    CHECK(s.update(0.3));
  }
  SUBCASE("improvements within tolerance do not reset patience") {
    EarlyStopping s(3, 0.01);
    CHECK(!s.update(1.0));
    CHECK(!s.update(0.995));
    CHECK(!s.update(0.992));
    CHECK(s.update(0.991));
  }
  SUBCASE("a real improvement resets the counter") {
    EarlyStopping s(2, 0.005);
    CHECK(!s.update(1.0));
    CHECK(!s.update(1.0));
    CHECK(!s.update(0.9));
    CHECK(s.improved());
    CHECK(!s.update(0.9));
    CHECK(s.update(0.95));
  }
  SUBCASE("earliest epoch over random trajectories") {
    flapnet::Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t patience = 1 + rng.below(4);
      const double tol = 0.01 * rng.uniform();
      EarlyStopping s(patience, tol);
      double best = INFINITY;
      std::size_t stale = 0;
      for (int epoch = 0; epoch < 30; ++epoch) {
        const double v = rng.uniform();
        bool expect = false;
        if (v < best - tol) {
          best = v;
          stale = 0;
        } else if (++stale >= patience) {
          expect = true;
        }
        const bool got = s.update(v);
        CHECK(got == expect);
        if (got) break;
      }
    }
  }
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3407, 1);
  CHECK(a == epoch_order(50, 3407, 1));
  CHECK(a != epoch_order(50, 3407, 2));
  CHECK(a != epoch_order(50, 3408, 1));
  std::set<std::size_t> s(a.begin(), a.end());
  CHECK(s.size() == 50);
  CHECK(*s.rbegin() == 49);
}

TEST_CASE("training with a frozen learning rate and patience 1 stops after epoch 2") {
  RunConfig c = tiny_run();
  c.model_class_name = "Linear";
  c.learning_rate = 1e-12;
  c.patience = 1;
  c.n_epochs = 10;
  const TrainedRun run = run_training(tiny_data(c), c);
  CHECK(run.report.epochs.size() == 2);
  CHECK(run.report.stop_reason == "patience");
}

TEST_CASE("training reduces the loss and returns the best epoch's state") {
  RunConfig c = tiny_run();
  c.n_epochs = 4;
  c.val_percent = 0.125;  // 8 events: 6 / 1 / 1
  const Dataset d = tiny_data(c, 8);
  const PreparedData prep = prepare_data(d, c);
  const TrainedRun run = run_training(d, c, prep);
  REQUIRE(!run.report.epochs.empty());
  CHECK(run.report.epochs.back().train_loss < run.report.initial_train_loss);
  double lowest = INFINITY;
  for (const auto& e : run.report.epochs) lowest = std::min(lowest, e.val_loss);
  CHECK(run.report.best_val_loss == lowest);
  CHECK(run.report.epochs[run.report.best_epoch - 1].val_loss == lowest);
  CHECK(evaluate_loss(run.model, prep.val) == lowest);
  CHECK(run.report.optimizer_steps > 0);
}

TEST_CASE("fixed seed gives a bitwise-identical loss trajectory") {
  RunConfig c = tiny_run();
  const Dataset d = tiny_data(c);
  const TrainedRun a = run_training(d, c);
  const TrainedRun b = run_training(d, c);
  REQUIRE(a.report.epochs.size() == b.report.epochs.size());
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
    CHECK(a.report.epochs[i].train_loss == b.report.epochs[i].train_loss);
    CHECK(a.report.epochs[i].val_loss == b.report.epochs[i].val_loss);
  }
  CHECK(a.model.state().flatten() == b.model.state().flatten());

  // The chunked reduction makes the serial path agree bitwise as well.
  const PreparedData prep = prepare_data(d, c);
  Model m(c.model_config(d.force_dim(), d.sample_rate));
  m.init(c.seed);
  TrainConfig serial = c.train_config();
  serial.parallel = false;
  const TrainReport r = train(m, prep.train, prep.val, serial);
  for (std::size_t i = 0; i < r.epochs.size(); ++i) {
    CHECK(r.epochs[i].train_loss == a.report.epochs[i].train_loss);
  }
}

TEST_CASE("non-finite loss aborts with a numeric error") {
  RunConfig c = tiny_run();
  c.model_class_name = "Linear";
  const Dataset d = tiny_data(c);
  const PreparedData prep = prepare_data(d, c);
  Model m(c.model_config(d.force_dim(), d.sample_rate));
  m.init(c.seed);
  m.state().value(0)[0] = NAN;
  TrainConfig t = c.train_config();
  CHECK_THROWS_AS(train(m, prep.train, prep.val, t), NumericError);
}

TEST_CASE("regularization changes the trained parameters") {
  RunConfig c = tiny_run();
  c.model_class_name = "Linear";
  c.n_epochs = 1;
  const Dataset d = tiny_data(c);
  const TrainedRun plain = run_training(d, c);
  c.regularization_factor = 1e-3;
  const TrainedRun reg = run_training(d, c);
  CHECK(!(plain.model.state().flatten() == reg.model.state().flatten()));
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.learning_rate = -1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  TrainConfig d;
  CHECK(d.batch_size == 512);
  CHECK(d.n_epochs == 30);
  CHECK(d.patience == 10);
  CHECK(d.patience_tolerance == 0.005);
  CHECK(d.seed == 3407);
  CHECK(d.regularization_factor == 0.0);
}

TEST_CASE("grid points enumerate the Cartesian product") {
  const GridSpace space{{"batch_size", {8, 16}}, {"model_args_use_asl", {true, false}}, {"seed", {1, 2, 3}}};
  const auto all = grid_points(space, 0, 1);
  REQUIRE(all.size() == 12);
  CHECK(all[0] == nlohmann::json({{"batch_size", 8}, {"model_args_use_asl", true}, {"seed", 1}}));
  CHECK(all[1]["seed"] == 2);
  CHECK(all[11] == nlohmann::json({{"batch_size", 16}, {"model_args_use_asl", false}, {"seed", 3}}));
  const auto some = grid_points(space, 5, 42);
  CHECK(some.size() == 5);
  CHECK(some == grid_points(space, 5, 42));
  std::set<std::string> seen;
  for (const auto& p : some) CHECK(seen.insert(p.dump()).second);
  CHECK(grid_points(space, 50, 1).size() == 12);
}

TEST_CASE("grid search runs, ranks and persists trials") {
  RunConfig c = tiny_run();
  c.model_class_name = "Linear";
  c.n_epochs = 2;
  const Dataset d = tiny_data(c);

  SUBCASE("single point") {
    const auto trials = grid_search(c, {{"batch_size", {16}}}, d);
    REQUIRE(trials.size() == 1);
    CHECK(trials[0].index == 0);
  }
  SUBCASE("2 x 2 space") {
    const auto trials = grid_search(c, {{"batch_size", {8, 16}}, {"learning_rate", {1e-3, 1e-2}}}, d);
    REQUIRE(trials.size() == 4);
    std::set<std::size_t> idx;
    for (std::size_t i = 0; i < 4; ++i) {
      idx.insert(trials[i].index);
      if (i > 0) CHECK(trials[i - 1].best_val_loss <= trials[i].best_val_loss);
      const TrainedRun again = run_training(d, trials[i].config);
      CHECK(again.report.best_val_loss == trials[i].best_val_loss);
    }
    CHECK(idx.size() == 4);
    const fs::path ledger = fs::temp_directory_path() / ("flapnet_grid_" + std::to_string(::getpid()) + ".csv");
    write_grid_ledger(trials, ledger);
    std::ifstream in(ledger);
    std::string header, line;
    std::getline(in, header);
    CHECK(header.rfind("rank,index,train_percent", 0) == 0);
    CHECK(header.find("best_val_loss,best_epoch,seconds") != std::string::npos);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
    fs::remove(ledger);
  }
  SUBCASE("unknown key names the key") {
    try {
      (void)grid_search(c, {{"hidden_size", {4}}}, d);
      FAIL("expected ConfigError");
    } catch (const ConfigError& ex) {
      CHECK(std::string(ex.what()).find("hidden_size") != std::string::npos);
    }
  }
}

TEST_CASE("ASL ablation space yields one arm per setting") {
  RunConfig c = tiny_run();
  c.n_epochs = 1;
  const Dataset d = tiny_data(c, 10);
  const auto trials = grid_search(c, {{"model_args_use_asl", {true, false}}}, d);
  REQUIRE(trials.size() == 2);
  std::set<bool> arms;
  for (const auto& t : trials) {
    arms.insert(t.config.use_asl);
    CHECK(std::isfinite(t.best_val_loss));
    const Model m(t.config.model_config(d.force_dim(), d.sample_rate));
    bool has_asl = false;
    for (ParamId id = 0; id < m.state().count(); ++id) {
      if (m.state().name(id).rfind("asl.", 0) == 0) has_asl = true;
    }
    CHECK(has_asl == t.config.use_asl);
  }
  CHECK(arms.size() == 2);
}
