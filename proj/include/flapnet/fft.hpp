// SPDX-License-Identifier: Apache-2.0
//
// Radix-2 real FFT. Forward transform is unnormalized,
//   X[k] = sum_n x[n] exp(-2*pi*i*k*n/H),  k = 0..H/2,
// and the inverse carries the 1/H factor so irfft(rfft(x)) == x.
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace flapnet {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

// Throws UnsupportedLengthError for odd or zero H and NonPowerOfTwoError for
// even lengths that are not powers of two.
void check_fft_length(std::size_t h);

class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  std::size_t size() const { return n_; }
  // In-place complex transform. sign = -1 forward, +1 inverse (unscaled).
  void transform(std::span<Complex> data, int sign) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<Complex> twiddle_;  // exp(-2*pi*i*j/n), j < n/2
};

// Plans are cached per thread.
const FftPlan& fft_plan(std::size_t n);

// DC and Nyquist imaginary parts are zero on output.
Spectrum rfft(std::span<const double> x);
// Takes h/2+1 bins; imaginary parts of DC and Nyquist are ignored (zeroed).
std::vector<double> irfft(std::span<const Complex> spectrum, std::size_t h);

// Adjoints used by layer backward passes. Complex gradients pack
// (dL/dRe, dL/dIm) as re + i*im.
std::vector<double> rfft_backward(std::span<const Complex> grad_spectrum, std::size_t h);
Spectrum irfft_backward(std::span<const double> grad_signal);

}  // namespace flapnet
