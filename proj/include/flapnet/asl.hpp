// SPDX-License-Identifier: Apache-2.0
//
// Adaptive Spectrum Layer: per-channel real FFT, low-pass truncation,
// learned per-bin gate weights computed from magnitude/phase features, and
// reconstruction through the inverse FFT with a skip connection.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "flapnet/fft.hpp"
#include "flapnet/layers.hpp"

namespace flapnet {

enum class SkipMode { kAdd, kConcat, kOff };
enum class PhaseEncoding { kSinCos, kAngle };

struct AslConfig {
  std::size_t hidden_size = 110;
  double dropout = 0.1;
  double freq_threshold = 210.0;  // Hz
  double sample_rate = 5000.0;    // Hz
  bool gate = true;
  bool complexify = false;
  bool per_freq_layer = false;
  bool cross_spectrum_density = false;
  bool use_freqs = false;
  bool multidim_fft = false;
  SkipMode skip_mode = SkipMode::kAdd;
  PhaseEncoding phase_encoding = PhaseEncoding::kSinCos;

  void validate() const;
};

std::string to_string(SkipMode m);
SkipMode skip_mode_from_string(const std::string& s);
std::string to_string(PhaseEncoding p);
PhaseEncoding phase_encoding_from_string(const std::string& s);

// Number of rfft bins k in 0..H/2 with k*fs/H <= f_max.
std::size_t retained_bins(std::size_t window, double sample_rate, double freq_threshold);

// Bin-major complex matrix [bins × channels].
struct SpectrumMatrix {
  std::size_t bins = 0;
  std::size_t channels = 0;
  std::vector<Complex> values;

  Complex& at(std::size_t k, std::size_t c) { return values[k * channels + c]; }
  const Complex& at(std::size_t k, std::size_t c) const { return values[k * channels + c]; }
};

// rfft of every column of x[H × F].
SpectrumMatrix channel_rfft(const Tensor& x);

// Per bin and channel: (|X|, cos∠X, sin∠X), or (|X|, ∠X) for kAngle.
// A zero-magnitude bin has phase 0. Output is [bins × 3F] (or 2F).
Tensor stack_spectrum(const SpectrumMatrix& spectrum, PhaseEncoding encoding = PhaseEncoding::kSinCos);

// C[i][j] = mean over the H/2+1 rfft bins of Re(conj(X_i) X_j), i.e. the
// bin-averaged FFT of the circular cross-correlation of channels i and j.
Tensor cross_spectral_density(const Tensor& x);

class AdaptiveSpectrumLayer {
 public:
  struct Cache {
    Tensor input;
    SpectrumMatrix spectrum;     // full H/2+1 bins
    SpectrumMatrix reweighted;   // Z before gating (complexify output or X)
    Tensor features;             // [N_f × D]
    Tensor hidden_pre;           // FC1 output before ReLU
    Tensor hidden;               // after ReLU and dropout
    std::vector<double> dropout_mask;
    Tensor logits;               // [N_f]
    Tensor weights;              // [N_f]
    Tensor magnitude, phase;     // complexify outputs [N_f × F]
  };

  AdaptiveSpectrumLayer() = default;
  AdaptiveSpectrumLayer(ModelState& state, const AslConfig& cfg, std::size_t window,
                        std::size_t channels, const std::string& prefix = "asl");

  // x: [H × F] -> [H × F] (or [H × 2F] with kConcat). cache may be null.
  Tensor forward(const ModelState& state, const Tensor& x, Mode mode, Rng& rng,
                 Cache* cache = nullptr) const;
  // Returns dL/dx and accumulates parameter gradients.
  Tensor backward(const ModelState& state, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;

  const AslConfig& config() const { return cfg_; }
  std::size_t window() const { return window_; }
  std::size_t channels() const { return channels_; }
  std::size_t bins() const { return retained_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t output_channels() const;

  const Linear& fc_hidden() const { return fc1_; }
  const Linear& fc_gate() const { return fc2_; }

 private:
  std::size_t fc_rows() const { return cfg_.per_freq_layer ? 1 : retained_; }

  AslConfig cfg_;
  std::size_t window_ = 0;
  std::size_t channels_ = 0;
  std::size_t retained_ = 0;
  std::size_t feature_dim_ = 0;  // per bin
  Linear fc1_, fc2_, fc_mag_, fc_phase_;
};

}  // namespace flapnet
