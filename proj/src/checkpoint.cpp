// SPDX-License-Identifier: Apache-2.0
#include "flapnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "flapnet/errors.hpp"

namespace flapnet {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint truncated while reading " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::uint32_t crc32_bytes(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json normalizer_to_json(const Normalizer& n) {
  return {{"method", to_string(n.method())}, {"offset", n.offset()}, {"scale", n.scale()}};
}

Normalizer normalizer_from_json(const json& j) {
  try {
    return Normalizer(norm_method_from_string(j.at("method").get<std::string>()),
                      j.at("offset").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>());
  } catch (const json::exception& ex) {
    throw DataError(std::string("checkpoint: bad normalizer block: ") + ex.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const Model& model,
                     const Normalization& norm, const json& metadata) {
  const ModelState& st = model.state();
  json manifest = json::array();
  std::size_t values = 0;
  for (ParamId id = 0; id < st.count(); ++id) {
    manifest.push_back({{"name", st.name(id)}, {"shape", st.value(id).shape()}});
    values += st.value(id).size();
  }
  json header = {
      {"format", "flapnet-checkpoint"},
      {"version", kCheckpointVersion},
      {"config", config.to_json()},
      {"input_channels", model.config().input_channels},
      {"sample_rate", model.config().asl.sample_rate},
      {"normalization",
       {{"features_global", norm.features_global},
        {"feature_method", to_string(norm.feature_method)},
        {"features", normalizer_to_json(norm.features)},
        {"targets", normalizer_to_json(norm.targets)}}},
      {"parameters", manifest},
      {"metadata", metadata},
  };
  const std::string head = header.dump(1);

  std::string payload;
  payload.reserve(values * 4);
  for (ParamId id = 0; id < st.count(); ++id) {
    for (double v : st.value(id).values()) put(payload, static_cast<float>(v));
  }

  std::string out(kCheckpointMagic, 8);
  put<std::uint64_t>(out, head.size());
  out += head;
  out += payload;
  put<std::uint64_t>(out, payload.size());
  put<std::uint32_t>(out, crc32_bytes(payload.data(), payload.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string();
  if (in.size() < 8 || in.compare(0, 8, kCheckpointMagic, 8) != 0) {
    throw DataError(where + ": not a checkpoint (bad magic)");
  }
  std::size_t pos = 8;
  const auto head_len = take<std::uint64_t>(in, pos, "header length");
  if (head_len > in.size() - pos) throw DataError(where + ": header length exceeds file size");
  const json header = json::parse(in.substr(pos, head_len), nullptr, false);
  pos += head_len;
  if (header.is_discarded() || !header.is_object()) throw DataError(where + ": malformed header");

  try {
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw DataError(where + ": unsupported version " + header.at("version").dump());
    }
    RunConfig cfg = RunConfig::from_json(header.at("config"));
    const auto channels = header.at("input_channels").get<std::size_t>();
    const auto rate = header.at("sample_rate").get<double>();
    const json& nj = header.at("normalization");
    Normalization norm;
    norm.features_global = nj.at("features_global").get<bool>();
    norm.feature_method = norm_method_from_string(nj.at("feature_method").get<std::string>());
    norm.features = normalizer_from_json(nj.at("features"));
    norm.targets = normalizer_from_json(nj.at("targets"));

    Checkpoint ck{cfg, channels, rate, norm, Model(cfg.model_config(channels, rate)),
                  header.value("metadata", json::object())};
    ModelState& st = ck.model.state();
    const json& manifest = header.at("parameters");
    if (manifest.size() != st.count()) {
      throw DataError(where + ": manifest lists " + std::to_string(manifest.size()) +
                      " parameters, the configured model has " + std::to_string(st.count()));
    }
    std::size_t values = 0;
    for (ParamId id = 0; id < st.count(); ++id) {
      const auto name = manifest[id].at("name").get<std::string>();
      const auto shape = manifest[id].at("shape").get<Shape>();
      if (name != st.name(id) || shape != st.value(id).shape()) {
        throw DataError(where + ": manifest entry " + std::to_string(id) + " (" + name + " " +
                        shape_string(shape) + ") does not match the model (" + st.name(id) + " " +
                        shape_string(st.value(id).shape()) + ")");
      }
      values += st.value(id).size();
    }
    const std::size_t payload_len = values * 4;
    if (in.size() < pos + payload_len + 12) throw DataError(where + ": truncated payload");
    const char* payload = in.data() + pos;
    std::size_t tail = pos + payload_len;
    const auto stored_len = take<std::uint64_t>(in, tail, "payload length");
    const auto stored_crc = take<std::uint32_t>(in, tail, "CRC");
    if (stored_len != payload_len) {
      throw DataError(where + ": payload length " + std::to_string(stored_len) + " != expected " +
                      std::to_string(payload_len));
    }
    if (tail != in.size()) throw DataError(where + ": trailing bytes after CRC");
    if (crc32_bytes(payload, payload_len) != stored_crc) throw DataError(where + ": CRC mismatch");
    std::size_t off = 0;
    for (ParamId id = 0; id < st.count(); ++id) {
      for (double& v : st.value(id).values()) {
        float x;
        std::memcpy(&x, payload + off, 4);
        off += 4;
        v = static_cast<double>(x);
      }
    }
    return ck;
  } catch (const json::exception& ex) {
    throw DataError(where + ": bad header field: " + ex.what());
  } catch (const ConfigError& ex) {
    throw DataError(where + ": stored configuration is invalid: " + ex.what());
  }
}

}  // namespace flapnet
