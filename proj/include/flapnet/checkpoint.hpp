// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (all integers little-endian):
//
//   "ASLCKPT\n"                 8 bytes
//   header_len                  u64
//   header                      header_len bytes of UTF-8 JSON
//   payload                     f32 values, parameters in manifest order
//   payload_len                 u64, bytes of payload (= 4 * sum of extents)
//   crc32                       u32, zlib CRC-32 of payload
//
// The header holds the format version, the RunConfig, channel count and
// sample rate, normalizer statistics, the parameter manifest (names and
// shapes) and free-form metadata.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "flapnet/config.hpp"
#include "flapnet/model.hpp"
#include "flapnet/pipeline.hpp"
#include "json.hpp"

namespace flapnet {

inline constexpr char kCheckpointMagic[9] = "ASLCKPT\n";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::size_t input_channels = 0;
  double sample_rate = 0.0;
  Normalization norm;
  Model model;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const Model& model,
                     const Normalization& norm, const nlohmann::json& metadata = nlohmann::json::object());

// Throws DataError on a bad magic, truncated file, manifest mismatch or CRC failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json normalizer_to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);

std::uint32_t crc32_bytes(const void* data, std::size_t size);

}  // namespace flapnet
