// SPDX-License-Identifier: Apache-2.0
#include "flapnet/fft.hpp"

#include <bit>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_map>

#include "flapnet/errors.hpp"

namespace flapnet {

void check_fft_length(std::size_t h) {
  if (h < 2 || h % 2 != 0) {
    throw UnsupportedLengthError("FFT length " + std::to_string(h) +
                                 " is unsupported (must be even and >= 2)");
  }
  if (!std::has_single_bit(h)) {
    throw NonPowerOfTwoError("FFT length " + std::to_string(h) +
                             " is not a power of two (radix-2 only)");
  }
}

FftPlan::FftPlan(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
  const int bits = std::countr_zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (int b = 0; b < bits; ++b) {
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    }
    bitrev_[i] = r;
  }
  for (std::size_t j = 0; j < n / 2; ++j) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    twiddle_[j] = Complex(std::cos(a), std::sin(a));
  }
}

void FftPlan::transform(std::span<Complex> data, int sign) const {
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        Complex w = twiddle_[j * step];
        if (sign > 0) w = std::conj(w);
        const Complex u = data[start + j];
        const Complex v = data[start + j + half] * w;
        data[start + j] = u + v;
        data[start + j + half] = u - v;
      }
    }
  }
}

const FftPlan& fft_plan(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<FftPlan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

Spectrum rfft(std::span<const double> x) {
  const std::size_t h = x.size();
  check_fft_length(h);
  std::vector<Complex> buf(x.begin(), x.end());
  fft_plan(h).transform(buf, -1);
  Spectrum out(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(h / 2 + 1));
  out.front().imag(0.0);
  out.back().imag(0.0);
  return out;
}

std::vector<double> irfft(std::span<const Complex> spectrum, std::size_t h) {
  check_fft_length(h);
  const std::size_t bins = h / 2 + 1;
  if (spectrum.size() != bins) {
    throw DimensionError("irfft: expected " + std::to_string(bins) + " bins for H=" +
                         std::to_string(h) + ", got " + std::to_string(spectrum.size()));
  }
  std::vector<Complex> buf(h);
  buf[0] = Complex(spectrum[0].real(), 0.0);
  buf[h / 2] = Complex(spectrum[h / 2].real(), 0.0);
  for (std::size_t k = 1; k < h / 2; ++k) {
    buf[k] = spectrum[k];
    buf[h - k] = std::conj(spectrum[k]);
  }
  fft_plan(h).transform(buf, +1);
  std::vector<double> out(h);
  const double scale = 1.0 / static_cast<double>(h);
  for (std::size_t n = 0; n < h; ++n) out[n] = buf[n].real() * scale;
  return out;
}

// dL/dx[n] = Re( sum_k g_k e^{+2 pi i k n / H} ), which is H * irfft of g
// with the interior bins halved (irfft counts them twice).
std::vector<double> rfft_backward(std::span<const Complex> grad_spectrum, std::size_t h) {
  check_fft_length(h);
  if (grad_spectrum.size() != h / 2 + 1) {
    throw DimensionError("rfft_backward: bin count mismatch");
  }
  Spectrum g(grad_spectrum.begin(), grad_spectrum.end());
  for (std::size_t k = 1; k < h / 2; ++k) g[k] *= 0.5;
  std::vector<double> out = irfft(g, h);
  const double hh = static_cast<double>(h);
  for (double& v : out) v *= hh;
  return out;
}

// Interior bins appear twice in the Hermitian expansion, hence the factor 2.
Spectrum irfft_backward(std::span<const double> grad_signal) {
  const std::size_t h = grad_signal.size();
  Spectrum g = rfft(grad_signal);
  const double inv = 1.0 / static_cast<double>(h);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const bool edge = (k == 0 || k == h / 2);
    g[k] *= edge ? inv : 2.0 * inv;
  }
  g.front().imag(0.0);
  g.back().imag(0.0);
  return g;
}

}  // namespace flapnet
