// SPDX-License-Identifier: Apache-2.0
//
// Split -> normalize -> window -> train, and grid search over RunConfig keys.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flapnet/config.hpp"
#include "flapnet/data.hpp"
#include "flapnet/model.hpp"
#include "flapnet/train.hpp"

namespace flapnet {

// Feature and target normalization as used by a trained model. Global
// statistics come from the training events only. With per-event features
// each event is scaled by its own force statistics.
struct Normalization {
  bool features_global = true;
  NormMethod feature_method = NormMethod::kZscore;
  Normalizer features;  // global statistics; unused when !features_global
  Normalizer targets;

  static Normalization fit(const std::vector<Event>& train_events, const RunConfig& cfg);

  Tensor apply_features(const Tensor& forces) const;
  Event apply(const Event& raw) const;
  Tensor invert_targets(const Tensor& y) const;
};

std::vector<Event> select_events(const Dataset& data, const std::vector<std::size_t>& idx);

struct PreparedData {
  Split split;
  Normalization norm;
  WindowSet train;
  WindowSet val;
  std::vector<Event> test_events;  // un-normalized
};

PreparedData prepare_data(const Dataset& data, const RunConfig& cfg);

struct TrainedRun {
  RunConfig config;
  Model model;
  Normalization norm;
  TrainReport report;
  Split split;
};

// Full training run. The model is initialized from cfg.seed.
TrainedRun run_training(const Dataset& data, const RunConfig& cfg, const EpochCallback& on_epoch = {});
TrainedRun run_training(const Dataset& data, const RunConfig& cfg, const PreparedData& prepared,
                        const EpochCallback& on_epoch = {});

// Ordered key -> candidate values; values use the RunConfig JSON types.
using GridSpace = std::vector<std::pair<std::string, std::vector<nlohmann::json>>>;

struct GridTrial {
  std::size_t index = 0;  // position in the Cartesian enumeration
  RunConfig config;
  nlohmann::json assignment;  // just the varied keys
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

// Cartesian product of the space. When budget > 0 and smaller than the
// product, a seeded sample of `budget` points is kept (in enumeration order).
std::vector<nlohmann::json> grid_points(const GridSpace& space, std::size_t budget, std::uint64_t seed);

// Trains every point and returns trials ranked by best validation loss
// (ties keep enumeration order).
std::vector<GridTrial> grid_search(const RunConfig& base, const GridSpace& space, const Dataset& data,
                                   std::size_t budget = 0);

// One row per trial: rank, index, every RunConfig key, best_val_loss,
// best_epoch, seconds.
void write_grid_ledger(const std::vector<GridTrial>& trials, const std::filesystem::path& path);

}  // namespace flapnet
