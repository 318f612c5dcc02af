// SPDX-License-Identifier: Apache-2.0
#include "flapnet/asl.hpp"

#include <algorithm>
#include <cmath>

#include "flapnet/errors.hpp"

namespace flapnet {

void AslConfig::validate() const {
  if (hidden_size == 0) throw ConfigError("asl hidden_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("asl dropout must be in [0, 1), got " + std::to_string(dropout));
  }
  if (!(freq_threshold >= 0.0)) throw ConfigError("freq_threshold must be >= 0");
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be > 0");
  if (multidim_fft) {
    throw ConfigError("multidim_fft=true is not supported; the FFT runs per channel");
  }
}

std::string to_string(SkipMode m) {
  switch (m) {
    case SkipMode::kAdd: return "add";
    case SkipMode::kConcat: return "concat";
    case SkipMode::kOff: return "off";
  }
  return "add";
}

SkipMode skip_mode_from_string(const std::string& s) {
  if (s == "add") return SkipMode::kAdd;
  if (s == "concat") return SkipMode::kConcat;
  if (s == "off") return SkipMode::kOff;
  throw ConfigError("unknown skip mode '" + s + "' (expected add|concat|off)");
}

std::string to_string(PhaseEncoding p) {
  return p == PhaseEncoding::kSinCos ? "sincos" : "angle";
}

PhaseEncoding phase_encoding_from_string(const std::string& s) {
  if (s == "sincos") return PhaseEncoding::kSinCos;
  if (s == "angle") return PhaseEncoding::kAngle;
  throw ConfigError("unknown phase encoding '" + s + "' (expected sincos|angle)");
}

std::size_t retained_bins(std::size_t window, double sample_rate, double freq_threshold) {
  check_fft_length(window);
  const double h = static_cast<double>(window);
  std::size_t n = 0;
  for (std::size_t k = 0; k <= window / 2; ++k) {
    const double freq = static_cast<double>(k) * sample_rate / h;
    if (freq <= freq_threshold * (1.0 + 1e-12)) ++n;
  }
  return n;
}

SpectrumMatrix channel_rfft(const Tensor& x) {
  const std::size_t h = x.rows();
  const std::size_t f = x.cols();
  check_fft_length(h);
  SpectrumMatrix s;
  s.bins = h / 2 + 1;
  s.channels = f;
  s.values.resize(s.bins * f);
  std::vector<double> column(h);
  for (std::size_t c = 0; c < f; ++c) {
    for (std::size_t t = 0; t < h; ++t) column[t] = x(t, c);
    const Spectrum spec = rfft(column);
    for (std::size_t k = 0; k < s.bins; ++k) s.at(k, c) = spec[k];
  }
  return s;
}

namespace {

std::size_t phase_width(PhaseEncoding e) { return e == PhaseEncoding::kSinCos ? 3 : 2; }

void write_bin_features(const Complex& z, PhaseEncoding enc, double* out) {
  const double r = std::abs(z);
  if (enc == PhaseEncoding::kSinCos) {
    out[0] = r;
    out[1] = r > 0.0 ? z.real() / r : 1.0;
    out[2] = r > 0.0 ? z.imag() / r : 0.0;
  } else {
    out[0] = r;
    out[1] = r > 0.0 ? std::atan2(z.imag(), z.real()) : 0.0;
  }
}

// Adds d(features)/d(Re z, Im z) · g into dz.
void bin_features_backward(const Complex& z, PhaseEncoding enc, const double* g, Complex& dz) {
  const double a = z.real();
  const double b = z.imag();
  const double r = std::abs(z);
  if (!(r > 1e-300)) return;
  double da = g[0] * a / r;
  double db = g[0] * b / r;
  if (enc == PhaseEncoding::kSinCos) {
    const double r3 = r * r * r;
    da += g[1] * (b * b / r3) - g[2] * (a * b / r3);
    db += -g[1] * (a * b / r3) + g[2] * (a * a / r3);
  } else {
    const double r2 = r * r;
    da += -g[1] * b / r2;
    db += g[1] * a / r2;
  }
  dz += Complex(da, db);
}

double dsilu(double u) {
  const double s = sigmoid(u);
  return s * (1.0 + u * (1.0 - s));
}

}  // namespace

Tensor stack_spectrum(const SpectrumMatrix& spectrum, PhaseEncoding encoding) {
  const std::size_t w = phase_width(encoding);
  Tensor out({spectrum.bins, w * spectrum.channels});
  for (std::size_t k = 0; k < spectrum.bins; ++k) {
    for (std::size_t c = 0; c < spectrum.channels; ++c) {
      write_bin_features(spectrum.at(k, c), encoding, out.row(k) + w * c);
    }
  }
  return out;
}

namespace {

Tensor csd_from_spectrum(const SpectrumMatrix& s) {
  const std::size_t f = s.channels;
  Tensor out({f, f});
  const double inv = 1.0 / static_cast<double>(s.bins);
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.bins; ++k) {
        acc += (std::conj(s.at(k, i)) * s.at(k, j)).real();
      }
      out(i, j) = acc * inv;
    }
  }
  return out;
}

}  // namespace

Tensor cross_spectral_density(const Tensor& x) { return csd_from_spectrum(channel_rfft(x)); }

AdaptiveSpectrumLayer::AdaptiveSpectrumLayer(ModelState& state, const AslConfig& cfg,
                                             std::size_t window, std::size_t channels,
                                             const std::string& prefix)
    : cfg_(cfg), window_(window), channels_(channels) {
  cfg_.validate();
  if (channels == 0) throw ConfigError("asl needs at least one channel");
  retained_ = retained_bins(window, cfg.sample_rate, cfg.freq_threshold);
  feature_dim_ = phase_width(cfg.phase_encoding) * channels + (cfg.use_freqs ? 1 : 0) +
                 (cfg.cross_spectrum_density ? channels * channels : 0);
  const std::size_t per_row_in = cfg.per_freq_layer ? retained_ * feature_dim_ : feature_dim_;
  const std::size_t per_row_bins = cfg.per_freq_layer ? retained_ : 1;
  fc1_ = Linear::create(state, prefix + ".fc_hidden", per_row_in, cfg.hidden_size);
  fc2_ = Linear::create(state, prefix + ".fc_gate", cfg.hidden_size, per_row_bins);
  if (cfg.complexify) {
    fc_mag_ = Linear::create(state, prefix + ".fc_magnitude", cfg.hidden_size, per_row_bins * channels);
    fc_phase_ = Linear::create(state, prefix + ".fc_phase", cfg.hidden_size, per_row_bins * channels);
  }
}

std::size_t AdaptiveSpectrumLayer::output_channels() const {
  return cfg_.skip_mode == SkipMode::kConcat ? 2 * channels_ : channels_;
}

Tensor AdaptiveSpectrumLayer::forward(const ModelState& state, const Tensor& x, Mode mode,
                                      Rng& rng, Cache* cache) const {
  if (x.rank() != 2 || x.rows() != window_ || x.cols() != channels_) {
    throw DimensionError("asl: expected input [" + std::to_string(window_) + "x" +
                         std::to_string(channels_) + "], got " + shape_string(x.shape()));
  }
  const std::size_t f = channels_;
  const std::size_t nf = retained_;
  const std::size_t rows = fc_rows();

  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = x;
  c.spectrum = channel_rfft(x);

  // Stacked representation [N_f × D].
  c.features = Tensor({nf, feature_dim_});
  const std::size_t pw = phase_width(cfg_.phase_encoding);
  Tensor csd;
  if (cfg_.cross_spectrum_density) csd = csd_from_spectrum(c.spectrum);
  for (std::size_t k = 0; k < nf; ++k) {
    double* row = c.features.row(k);
    for (std::size_t ch = 0; ch < f; ++ch) {
      write_bin_features(c.spectrum.at(k, ch), cfg_.phase_encoding, row + pw * ch);
    }
    std::size_t col = pw * f;
    if (cfg_.use_freqs) {
      row[col++] = static_cast<double>(k) * cfg_.sample_rate / static_cast<double>(window_);
    }
    if (cfg_.cross_spectrum_density) {
      std::copy(csd.values().begin(), csd.values().end(), row + col);
    }
  }

  // Gating network.
  c.hidden_pre = Tensor({rows, cfg_.hidden_size});
  fc1_.forward(state, c.features.data(), rows, c.hidden_pre.data());
  c.hidden = c.hidden_pre;
  for (double& v : c.hidden.values()) v = v > 0.0 ? v : 0.0;
  dropout_inplace(c.hidden.span(), cfg_.dropout, mode, rng, c.dropout_mask);
  c.logits = Tensor({nf});
  fc2_.forward(state, c.hidden.data(), rows, c.logits.data());
  c.weights = c.logits;
  if (cfg_.gate) {
    for (double& v : c.weights.values()) v = sigmoid(silu(v));
  }

  c.reweighted.bins = nf;
  c.reweighted.channels = f;
  c.reweighted.values.resize(nf * f);
  if (cfg_.complexify) {
    c.magnitude = Tensor({nf, f});
    c.phase = Tensor({nf, f});
    fc_mag_.forward(state, c.hidden.data(), rows, c.magnitude.data());
    fc_phase_.forward(state, c.hidden.data(), rows, c.phase.data());
    for (std::size_t i = 0; i < nf * f; ++i) {
      c.reweighted.values[i] = std::polar(1.0, c.phase[i]) * c.magnitude[i];
    }
  } else {
    for (std::size_t k = 0; k < nf; ++k) {
      for (std::size_t ch = 0; ch < f; ++ch) c.reweighted.at(k, ch) = c.spectrum.at(k, ch);
    }
  }

  // Reweight, zero-pad to H/2+1 bins, invert.
  const std::size_t out_f = output_channels();
  Tensor y({window_, out_f});
  const std::size_t asl_col = cfg_.skip_mode == SkipMode::kConcat ? f : 0;
  Spectrum padded(window_ / 2 + 1);
  for (std::size_t ch = 0; ch < f; ++ch) {
    std::fill(padded.begin(), padded.end(), Complex(0.0, 0.0));
    for (std::size_t k = 0; k < nf; ++k) padded[k] = c.weights[k] * c.reweighted.at(k, ch);
    const std::vector<double> rec = irfft(padded, window_);
    for (std::size_t t = 0; t < window_; ++t) {
      double v = rec[t];
      if (cfg_.skip_mode == SkipMode::kAdd) v += x(t, ch);
      y(t, asl_col + ch) = v;
      if (cfg_.skip_mode == SkipMode::kConcat) y(t, ch) = x(t, ch);
    }
  }
  return y;
}

Tensor AdaptiveSpectrumLayer::backward(const ModelState& state, const Cache& c, const Tensor& dy,
                                       Gradients& grads) const {
  const std::size_t f = channels_;
  const std::size_t nf = retained_;
  const std::size_t rows = fc_rows();
  const std::size_t bins = window_ / 2 + 1;
  if (dy.rows() != window_ || dy.cols() != output_channels()) {
    throw DimensionError("asl backward: upstream shape " + shape_string(dy.shape()));
  }

  Tensor dx({window_, f});
  const std::size_t asl_col = cfg_.skip_mode == SkipMode::kConcat ? f : 0;
  if (cfg_.skip_mode != SkipMode::kOff) {
    // The passthrough copy occupies columns [0, F) in both add and concat.
    for (std::size_t t = 0; t < window_; ++t) {
      for (std::size_t ch = 0; ch < f; ++ch) dx(t, ch) = dy(t, ch);
    }
  }

  // Through irfft: gradient w.r.t. the padded, reweighted spectrum.
  SpectrumMatrix dspec;  // gradient w.r.t. the full rfft output X
  dspec.bins = bins;
  dspec.channels = f;
  dspec.values.assign(bins * f, Complex(0.0, 0.0));
  Tensor dweights({nf});
  std::vector<Complex> dz(nf * f);
  std::vector<double> column(window_);
  for (std::size_t ch = 0; ch < f; ++ch) {
    for (std::size_t t = 0; t < window_; ++t) column[t] = dy(t, asl_col + ch);
    const Spectrum dpad = irfft_backward(column);
    for (std::size_t k = 0; k < nf; ++k) {
      const Complex z = c.reweighted.at(k, ch);
      dweights[k] += dpad[k].real() * z.real() + dpad[k].imag() * z.imag();
      dz[k * f + ch] = c.weights[k] * dpad[k];
    }
  }

  Tensor dhidden({rows, cfg_.hidden_size});
  if (cfg_.complexify) {
    Tensor dmag({nf, f});
    Tensor dphase({nf, f});
    for (std::size_t i = 0; i < nf * f; ++i) {
      const double m = c.magnitude[i];
      const double p = c.phase[i];
      const double cp = std::cos(p);
      const double sp = std::sin(p);
      dmag[i] = dz[i].real() * cp + dz[i].imag() * sp;
      dphase[i] = -dz[i].real() * m * sp + dz[i].imag() * m * cp;
    }
    fc_mag_.backward(state, c.hidden.data(), dmag.data(), rows, grads, dhidden.data());
    fc_phase_.backward(state, c.hidden.data(), dphase.data(), rows, grads, dhidden.data());
  } else {
    for (std::size_t k = 0; k < nf; ++k) {
      for (std::size_t ch = 0; ch < f; ++ch) dspec.at(k, ch) += dz[k * f + ch];
    }
  }

  Tensor dlogits = dweights;
  if (cfg_.gate) {
    for (std::size_t k = 0; k < nf; ++k) {
      const double w = c.weights[k];
      dlogits[k] = dweights[k] * w * (1.0 - w) * dsilu(c.logits[k]);
    }
  }
  fc2_.backward(state, c.hidden.data(), dlogits.data(), rows, grads, dhidden.data());
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    dhidden[i] *= c.dropout_mask[i];
    if (!(c.hidden_pre[i] > 0.0)) dhidden[i] = 0.0;
  }
  Tensor dfeatures({nf, feature_dim_});
  fc1_.backward(state, c.features.data(), dhidden.data(), rows, grads, dfeatures.data());

  // Feature extraction backward.
  const std::size_t pw = phase_width(cfg_.phase_encoding);
  Tensor dcsd;
  if (cfg_.cross_spectrum_density) dcsd = Tensor({f, f});
  for (std::size_t k = 0; k < nf; ++k) {
    const double* g = dfeatures.row(k);
    for (std::size_t ch = 0; ch < f; ++ch) {
      bin_features_backward(c.spectrum.at(k, ch), cfg_.phase_encoding, g + pw * ch, dspec.at(k, ch));
    }
    if (cfg_.cross_spectrum_density) {
      const double* gc = g + pw * f + (cfg_.use_freqs ? 1 : 0);
      for (std::size_t i = 0; i < f * f; ++i) dcsd[i] += gc[i];
    }
  }
  if (cfg_.cross_spectrum_density) {
    const double inv = 1.0 / static_cast<double>(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      for (std::size_t i = 0; i < f; ++i) {
        Complex acc(0.0, 0.0);
        for (std::size_t j = 0; j < f; ++j) {
          acc += (dcsd(i, j) + dcsd(j, i)) * c.spectrum.at(k, j);
        }
        dspec.at(k, i) += acc * inv;
      }
    }
  }

  // Through rfft.
  Spectrum col_grad(bins);
  for (std::size_t ch = 0; ch < f; ++ch) {
    for (std::size_t k = 0; k < bins; ++k) col_grad[k] = dspec.at(k, ch);
    const std::vector<double> g = rfft_backward(col_grad, window_);
    for (std::size_t t = 0; t < window_; ++t) dx(t, ch) += g[t];
  }
  return dx;
}

}  // namespace flapnet
