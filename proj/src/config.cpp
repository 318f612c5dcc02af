// SPDX-License-Identifier: Apache-2.0
#include "flapnet/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include "flapnet/errors.hpp"

namespace flapnet {

using nlohmann::json;

namespace {

[[noreturn]] void bad_value(const std::string& key, const json& v, const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got " + v.dump());
}

template <typename T>
T convert(const std::string& key, const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad_value(key, v, "true or false");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad_value(key, v, "a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) bad_value(key, v, "a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad_value(key, v, "a finite number");
    return d;
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (!v.is_array()) bad_value(key, v, "a list of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) out.push_back(convert<std::size_t>(key, e));
    return out;
  } else {
    static_assert(std::is_unsigned_v<T>);
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<T>(v.get<std::int64_t>());
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<T>(d);
    }
    bad_value(key, v, "a non-negative integer");
  }
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T>
Field field(std::string key, T RunConfig::*member) {
  Field f;
  f.key = key;
  f.set = [key, member](RunConfig& c, const json& v) { c.*member = convert<T>(key, v); };
  f.get = [member](const RunConfig& c) { return json(c.*member); };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using R = RunConfig;
    std::vector<Field> t;
    t.push_back(field("train_percent", &R::train_percent));
    t.push_back(field("val_percent", &R::val_percent));
    t.push_back(field("feature_win", &R::feature_win));
    t.push_back(field("target_win", &R::target_win));
    t.push_back(field("intersect", &R::intersect));
    t.push_back(field("model_class_name", &R::model_class_name));
    t.push_back(field("optimizer_name", &R::optimizer_name));
    t.push_back(field("criterion_name", &R::criterion_name));
    t.push_back(field("patience", &R::patience));
    t.push_back(field("patience_tolerance", &R::patience_tolerance));
    t.push_back(field("n_epochs", &R::n_epochs));
    t.push_back(field("seed", &R::seed));
    t.push_back(field("features_norm_method", &R::features_norm_method));
    t.push_back(field("targets_norm_method", &R::targets_norm_method));
    t.push_back(field("features_global_normalizer", &R::features_global_normalizer));
    t.push_back(field("targets_global_normalizer", &R::targets_global_normalizer));
    t.push_back(field("regularization_factor", &R::regularization_factor));
    t.push_back(field("batch_size", &R::batch_size));
    t.push_back(field("model_args_enc_embedding_size", &R::enc_embedding_size));
    t.push_back(field("model_args_enc_hidden_size", &R::enc_hidden_size));
    t.push_back(field("model_args_enc_num_layers", &R::enc_num_layers));
    t.push_back(field("model_args_enc_bidirectional", &R::enc_bidirectional));
    t.push_back(field("model_args_dec_output_size", &R::dec_output_size));
    t.push_back(field("model_args_use_asl", &R::use_asl));
    t.push_back(field("model_args_concat_asl", &R::concat_asl));
    t.push_back(field("model_args_complexify", &R::complexify));
    t.push_back(field("model_args_gate", &R::gate));
    t.push_back(field("model_args_multidim_fft", &R::multidim_fft));
    t.push_back(field("model_args_dropout", &R::dropout));
    t.push_back(field("model_args_freq_threshold", &R::freq_threshold));
    t.push_back(field("model_args_per_freq_layer", &R::per_freq_layer));
    t.push_back(field("model_args_cross_spectrum_density", &R::cross_spectrum_density));
    t.push_back(field("model_args_dec_hidden_size", &R::dec_hidden_size));
    t.push_back(field("model_args_dec_embedding_size", &R::dec_embedding_size));
    t.push_back(field("model_args_input_dim", &R::input_dim));
    t.push_back(field("model_args_attn_heads", &R::attn_heads));
    t.push_back(field("model_args_asl_hidden_size", &R::asl_hidden_size));
    t.push_back(field("model_args_use_freqs", &R::use_freqs));
    t.push_back(field("model_args_phase_encoding", &R::phase_encoding));
    t.push_back(field("model_args_asl_skip", &R::asl_skip));
    t.push_back(field("learning_rate", &R::learning_rate));
    t.push_back(field("stride", &R::stride));
    t.push_back(field("eval_stride", &R::eval_stride));
    t.push_back(field("grad_clip", &R::grad_clip));
    t.push_back(field("grad_chunks", &R::grad_chunks));
    t.push_back(field("synth_n_events", &R::synth_n_events));
    t.push_back(field("synth_freq_min", &R::synth_freq_min));
    t.push_back(field("synth_freq_max", &R::synth_freq_max));
    t.push_back(field("synth_amp_min", &R::synth_amp_min));
    t.push_back(field("synth_amp_max", &R::synth_amp_max));
    t.push_back(field("synth_shape_min", &R::synth_shape_min));
    t.push_back(field("synth_shape_max", &R::synth_shape_max));
    t.push_back(field("synth_duration_min", &R::synth_duration_min));
    t.push_back(field("synth_duration_max", &R::synth_duration_max));
    t.push_back(field("synth_sample_rate", &R::synth_sample_rate));
    t.push_back(field("synth_noise_std", &R::synth_noise_std));
    t.push_back(field("synth_pitch_lag", &R::synth_pitch_lag));
    t.push_back(field("synth_pitch_amp", &R::synth_pitch_amp));
    t.push_back(field("synth_pitch_gain", &R::synth_pitch_gain));
    t.push_back(field("synth_elev_amp", &R::synth_elev_amp));
    t.push_back(field("data_dir", &R::data_dir));
    t.push_back(field("output_dir", &R::output_dir));
    return t;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::open_source_defaults() {
  RunConfig c;
  c.feature_win = 256;
  c.enc_embedding_size = 30;
  c.enc_hidden_size = 100;
  c.dec_embedding_size = 30;
  c.dec_hidden_size = 100;
  c.freq_threshold = 200.0;
  c.per_freq_layer = false;
  c.input_dim = {512, 256, 5};
  return c;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const json& value) { find_field(key).set(*this, value); }

void RunConfig::set_text(const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  const std::string v = trim(value);
  json parsed = json::parse(v, nullptr, false);
  if (parsed.is_discarded()) parsed = v;
  // A bare word like `zscore` stays a string; a number typed for a string
  // key (e.g. data_dir=2024) is taken literally.
  if (f.get(*this).is_string() && !parsed.is_string()) parsed = v;
  f.set(*this, parsed);
}

json RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

void RunConfig::load_text(const std::string& text) {
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '{') {
    json j = json::parse(t, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config: malformed JSON object");
    for (const auto& [k, v] : j.items()) set(k, v);
    return;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set_text(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str());
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& f : fields()) j[f.key] = f.get(*this);
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  for (const auto& [k, v] : j.items()) c.set(k, v);
  return c;
}

void RunConfig::validate() const {
  if (!(train_percent > 0.0 && val_percent > 0.0 && train_percent + val_percent < 1.0)) {
    throw ConfigError("train_percent and val_percent must be positive with a sum below 1");
  }
  if (model_class_name != "Seq2Seq" && model_class_name != "Linear" && model_class_name != "NLinear") {
    throw ConfigError("model_class_name must be Seq2Seq, Linear or NLinear, got '" +
                      model_class_name + "'");
  }
  if (optimizer_name != "Adam") {
    throw ConfigError("optimizer_name: only \"Adam\" is supported, got '" + optimizer_name + "'");
  }
  if (criterion_name != "L1Loss") {
    throw ConfigError("criterion_name: only \"L1Loss\" is supported, got '" + criterion_name + "'");
  }
  (void)norm_method_from_string(features_norm_method);
  const NormMethod tm = norm_method_from_string(targets_norm_method);
  if (!targets_global_normalizer && tm != NormMethod::kIdentity) {
    throw ConfigError(
        "targets_global_normalizer=false needs each test event's own target statistics to "
        "invert predictions; use targets_norm_method=identity or a global normalizer");
  }
  if (multidim_fft) throw ConfigError("model_args_multidim_fft=true is not supported");
  if (concat_asl && asl_skip != "add" && asl_skip != "concat") {
    throw ConfigError("model_args_concat_asl=true conflicts with model_args_asl_skip=" + asl_skip);
  }
  (void)skip_mode_from_string(asl_skip);
  (void)phase_encoding_from_string(phase_encoding);
  if (input_dim.size() != 3) {
    throw ConfigError("model_args_input_dim must have three entries [batch, feature_win, channels]");
  }
  if (dec_output_size != 3) {
    throw ConfigError("model_args_dec_output_size must be 3 (phi, theta, psi)");
  }
  if (synth_n_events == 0) throw ConfigError("synth_n_events must be positive");
  if (eval_stride == 0) throw ConfigError("eval_stride must be positive");
  for (const auto& [key, k] : {std::pair{"synth_shape_min", synth_shape_min}, {"synth_shape_max", synth_shape_max}}) {
    if (!(k >= 0.0 && k <= kMaxShape)) {
      throw ConfigError(std::string(key) + " = " + json(k).dump() + ": shape K must lie in [0, " +
                        json(kMaxShape).dump() + "]");
    }
  }
  window_spec().validate();
  train_config().validate();
  synth_ranges().validate();
}

ModelConfig RunConfig::model_config(std::size_t input_channels, double sample_rate) const {
  ModelConfig m;
  m.kind = model_kind_from_string(model_class_name);
  m.input_channels = input_channels;
  m.feature_win = feature_win;
  m.target_win = target_win;
  m.enc_embedding_size = enc_embedding_size;
  m.enc_hidden_size = enc_hidden_size;
  m.enc_num_layers = enc_num_layers;
  m.enc_bidirectional = enc_bidirectional;
  m.dec_embedding_size = dec_embedding_size;
  m.dec_hidden_size = dec_hidden_size;
  m.dec_output_size = dec_output_size;
  m.attn_heads = attn_heads;
  m.use_asl = use_asl;
  m.asl.hidden_size = asl_hidden_size == 0 ? enc_hidden_size : asl_hidden_size;
  m.asl.dropout = dropout;
  m.asl.freq_threshold = freq_threshold;
  m.asl.sample_rate = sample_rate;
  m.asl.gate = gate;
  m.asl.complexify = complexify;
  m.asl.per_freq_layer = per_freq_layer;
  m.asl.cross_spectrum_density = cross_spectrum_density;
  m.asl.use_freqs = use_freqs;
  m.asl.multidim_fft = multidim_fft;
  m.asl.skip_mode = concat_asl ? SkipMode::kConcat : skip_mode_from_string(asl_skip);
  m.asl.phase_encoding = phase_encoding_from_string(phase_encoding);
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.n_epochs = n_epochs;
  t.patience = patience;
  t.patience_tolerance = patience_tolerance;
  t.learning_rate = learning_rate;
  t.seed = seed;
  t.regularization_factor = regularization_factor;
  t.grad_clip = grad_clip;
  t.grad_chunks = grad_chunks;
  return t;
}

WindowSpec RunConfig::window_spec() const {
  WindowSpec w;
  w.feature_win = feature_win;
  w.target_win = target_win;
  w.intersect = intersect;
  w.stride = stride;
  return w;
}

WindowSpec RunConfig::eval_window_spec() const {
  WindowSpec w = window_spec();
  w.stride = eval_stride;
  return w;
}

SynthRanges RunConfig::synth_ranges() const {
  SynthRanges r;
  r.freq_lo = synth_freq_min;
  r.freq_hi = synth_freq_max;
  r.amp_lo = synth_amp_min;
  r.amp_hi = synth_amp_max;
  r.shape_lo = synth_shape_min;
  r.shape_hi = synth_shape_max;
  r.duration_lo = synth_duration_min;
  r.duration_hi = synth_duration_max;
  r.sample_rate = synth_sample_rate;
  r.noise_std = synth_noise_std;
  r.pitch_lag = synth_pitch_lag;
  r.pitch_amp = synth_pitch_amp;
  r.pitch_gain = synth_pitch_gain;
  r.elev_amp = synth_elev_amp;
  return r;
}

}  // namespace flapnet
