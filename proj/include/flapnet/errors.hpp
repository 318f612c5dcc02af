// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace flapnet {

/// Shape or extent mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, series).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate marker geometry.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// FFT length the transform cannot handle (odd lengths).
class UnsupportedLengthError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

/// Even FFT length that is not a power of two (radix-2 only).
class NonPowerOfTwoError : public UnsupportedLengthError {
 public:
  using UnsupportedLengthError::UnsupportedLengthError;
};

}  // namespace flapnet
