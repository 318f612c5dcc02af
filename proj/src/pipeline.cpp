// SPDX-License-Identifier: Apache-2.0
#include "flapnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include "flapnet/errors.hpp"
#include "flapnet/rng.hpp"

namespace flapnet {

using nlohmann::json;

namespace {

constexpr std::uint64_t kGridStream = 0x67726964ULL;

std::string cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Normalization Normalization::fit(const std::vector<Event>& train_events, const RunConfig& cfg) {
  if (train_events.empty()) throw DataError("normalization: no training events");
  Normalization n;
  n.features_global = cfg.features_global_normalizer;
  n.feature_method = norm_method_from_string(cfg.features_norm_method);
  std::vector<const Tensor*> forces, kin;
  for (const auto& e : train_events) {
    forces.push_back(&e.forces);
    kin.push_back(&e.kinematics);
  }
  n.features = Normalizer::fit(forces, n.feature_method);
  n.targets = Normalizer::fit(kin, norm_method_from_string(cfg.targets_norm_method));
  return n;
}

Tensor Normalization::apply_features(const Tensor& forces) const {
  if (features_global) return features.apply(forces);
  return Normalizer::fit(forces, feature_method).apply(forces);
}

Event Normalization::apply(const Event& raw) const {
  Event e;
  e.id = raw.id;
  e.sample_rate = raw.sample_rate;
  e.forces = apply_features(raw.forces);
  e.kinematics = targets.apply(raw.kinematics);
  return e;
}

Tensor Normalization::invert_targets(const Tensor& y) const { return targets.invert(y); }

std::vector<Event> select_events(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<Event> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.events.at(i));
  return out;
}

PreparedData prepare_data(const Dataset& data, const RunConfig& cfg) {
  cfg.validate();
  data.validate();
  PreparedData p;
  p.split = split_events(data.events.size(), cfg.train_percent, cfg.val_percent, cfg.seed);
  const std::vector<Event> train_raw = select_events(data, p.split.train);
  p.norm = Normalization::fit(train_raw, cfg);
  auto normalized = [&](const std::vector<std::size_t>& idx) {
    std::vector<Event> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(p.norm.apply(data.events[i]));
    return out;
  };
  p.train = WindowSet::build(normalized(p.split.train), cfg.window_spec());
  p.val = WindowSet::build(normalized(p.split.val), cfg.eval_window_spec());
  p.test_events = select_events(data, p.split.test);
  if (p.train.size() == 0) throw DataError("no training windows: events are shorter than the window span");
  if (p.val.size() == 0) throw DataError("no validation windows: events are shorter than the window span");
  return p;
}

TrainedRun run_training(const Dataset& data, const RunConfig& cfg, const EpochCallback& on_epoch) {
  return run_training(data, cfg, prepare_data(data, cfg), on_epoch);
}

TrainedRun run_training(const Dataset& data, const RunConfig& cfg_in, const PreparedData& prepared,
                        const EpochCallback& on_epoch) {
  RunConfig cfg = cfg_in;
  cfg.input_dim = {cfg.batch_size, cfg.feature_win, data.force_dim()};
  TrainedRun run{cfg, Model(cfg.model_config(data.force_dim(), data.sample_rate)), prepared.norm, {},
                 prepared.split};
  run.model.init(cfg.seed);
  run.report = train(run.model, prepared.train, prepared.val, cfg.train_config(), on_epoch);
  return run;
}

std::vector<json> grid_points(const GridSpace& space, std::size_t budget, std::uint64_t seed) {
  std::size_t total = 1;
  for (const auto& [key, values] : space) {
    if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
    total *= values.size();
  }
  std::vector<json> points;
  points.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    json p = json::object();
    std::size_t rest = i;
    // Last key varies fastest.
    for (std::size_t k = space.size(); k-- > 0;) {
      const auto& values = space[k].second;
      p[space[k].first] = values[rest % values.size()];
      rest /= values.size();
    }
    points.push_back(std::move(p));
  }
  if (budget == 0 || budget >= total) return points;
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng::derive(seed ^ kGridStream, total);
  rng.shuffle(idx);
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  std::vector<json> kept;
  for (std::size_t i : idx) kept.push_back(points[i]);
  return kept;
}

std::vector<GridTrial> grid_search(const RunConfig& base, const GridSpace& space, const Dataset& data,
                                   std::size_t budget) {
  const auto& known = RunConfig::keys();
  for (const auto& [key, values] : space) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown grid key '" + key + "'");
    }
  }
  auto index_of = [&](const json& p) {
    std::size_t idx = 0;
    for (const auto& [key, values] : space) {
      const auto it = std::find(values.begin(), values.end(), p.at(key));
      idx = idx * values.size() + static_cast<std::size_t>(it - values.begin());
    }
    return idx;
  };
  std::vector<GridTrial> trials;
  for (const json& p : grid_points(space, budget, base.seed)) {
    GridTrial t;
    t.index = index_of(p);
    t.assignment = p;
    t.config = base;
    for (const auto& [k, v] : p.items()) t.config.set(k, v);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainedRun run = run_training(data, t.config);
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    t.best_val_loss = run.report.best_val_loss;
    t.best_epoch = run.report.best_epoch;
    trials.push_back(std::move(t));
  }
  std::stable_sort(trials.begin(), trials.end(), [](const GridTrial& a, const GridTrial& b) {
    return a.best_val_loss < b.best_val_loss;
  });
  return trials;
}

void write_grid_ledger(const std::vector<GridTrial>& trials, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write grid ledger " + path.string());
  out << "rank,index";
  for (const auto& k : RunConfig::keys()) out << ',' << k;
  out << ",best_val_loss,best_epoch,seconds\n";
  for (std::size_t r = 0; r < trials.size(); ++r) {
    const GridTrial& t = trials[r];
    out << r + 1 << ',' << t.index;
    const json j = t.config.to_json();
    for (const auto& k : RunConfig::keys()) out << ',' << csv_escape(cell(j.at(k)));
    out << ',' << json(t.best_val_loss).dump() << ',' << t.best_epoch << ',' << json(t.seconds).dump()
        << '\n';
  }
}

}  // namespace flapnet
