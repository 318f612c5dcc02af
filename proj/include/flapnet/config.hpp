// SPDX-License-Identifier: Apache-2.0
//
// Run configuration keyed by the published hyperparameter names, plus a
// few extras (learning rate, stride, synthesis ranges, paths).
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flapnet/data.hpp"
#include "flapnet/seq2seq.hpp"
#include "flapnet/synth.hpp"
#include "flapnet/train.hpp"
#include "json.hpp"

namespace flapnet {

struct RunConfig {
  // Training and data.
  double train_percent = 0.75;
  double val_percent = 0.1;
  std::size_t feature_win = 512;
  std::size_t target_win = 1;
  std::size_t intersect = 1;
  std::string model_class_name = "Seq2Seq";
  std::string optimizer_name = "Adam";
  std::string criterion_name = "L1Loss";
  std::size_t patience = 10;
  double patience_tolerance = 0.005;
  std::size_t n_epochs = 30;
  std::uint64_t seed = 3407;
  std::string features_norm_method = "zscore";
  std::string targets_norm_method = "identity";
  bool features_global_normalizer = true;
  bool targets_global_normalizer = true;
  double regularization_factor = 0.0;
  std::size_t batch_size = 512;

  // model_args_*
  std::size_t enc_embedding_size = 10;
  std::size_t enc_hidden_size = 110;
  std::size_t enc_num_layers = 1;
  bool enc_bidirectional = false;
  std::size_t dec_output_size = 3;
  bool use_asl = true;
  bool concat_asl = false;
  bool complexify = false;
  bool gate = true;
  bool multidim_fft = false;
  double dropout = 0.1;
  double freq_threshold = 210.0;
  bool per_freq_layer = true;
  bool cross_spectrum_density = false;
  std::size_t dec_hidden_size = 110;
  std::size_t dec_embedding_size = 10;
  // batch, feature_win, M_F. Informational: training rewrites it from the
  // data and the window settings before a checkpoint is saved.
  std::vector<std::size_t> input_dim{512, 512, 4};
  std::size_t attn_heads = 1;
  std::size_t asl_hidden_size = 0;  // 0: same as enc_hidden_size
  bool use_freqs = false;
  std::string phase_encoding = "sincos";
  std::string asl_skip = "add";  // concat_asl = true implies "concat"

  // Optimization extras.
  double learning_rate = 1e-3;
  std::size_t stride = 1;
  std::size_t eval_stride = 1;
  double grad_clip = 5.0;
  std::size_t grad_chunks = 4;

  // Synthetic data.
  std::size_t synth_n_events = 64;
  double synth_freq_min = 0.0, synth_freq_max = 20.0;
  double synth_amp_min = 0.5235987755982988, synth_amp_max = 1.0471975511965976;
  double synth_shape_min = 0.0, synth_shape_max = kMaxShape;
  double synth_duration_min = 0.5, synth_duration_max = 0.5;
  double synth_sample_rate = 500.0;
  double synth_noise_std = 0.0;
  double synth_pitch_lag = 0.0;
  double synth_pitch_amp = 0.785398;
  double synth_pitch_gain = 0.1;
  double synth_elev_amp = 0.15;

  // Paths.
  std::string data_dir;
  std::string output_dir;

  static RunConfig measured_defaults() { return {}; }
  static RunConfig open_source_defaults();

  // Every accepted key, in canonical order.
  static const std::vector<std::string>& keys();

  // Unknown keys and badly typed values raise ConfigError naming the key.
  void set(const std::string& key, const nlohmann::json& value);
  // Text form: JSON literal when it parses (true, 0.5, [1,2]), else a bare string.
  void set_text(const std::string& key, const std::string& value);
  nlohmann::json get(const std::string& key) const;

  // A JSON object, or key=value lines with '#' comments.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text);

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  void validate() const;

  // Derived component configs. The model needs the data's channel count and
  // sample rate.
  ModelConfig model_config(std::size_t input_channels, double sample_rate) const;
  TrainConfig train_config() const;
  WindowSpec window_spec() const;
  WindowSpec eval_window_spec() const;
  SynthRanges synth_ranges() const;
};

}  // namespace flapnet
