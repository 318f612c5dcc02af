// SPDX-License-Identifier: Apache-2.0
//
// Events on disk, normalization, windowing, event-level splits and
// force/motion onset alignment.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flapnet/tensor.hpp"

namespace flapnet {

struct Event {
  std::string id;
  double sample_rate = 0.0;
  Tensor forces;      // [T × M_F]
  Tensor kinematics;  // [T × 3], (phi, theta, psi) in radians

  std::size_t length() const { return forces.rows(); }
  void validate() const;
};

struct Dataset {
  std::vector<Event> events;
  std::vector<std::string> force_channels;
  std::vector<std::string> kinematics_channels{"phi", "theta", "psi"};
  double sample_rate = 0.0;

  std::size_t force_dim() const { return force_channels.size(); }
  std::size_t kinematics_dim() const { return kinematics_channels.size(); }
  void validate() const;
};

// Directory layout: manifest.json plus one CSV per event, header
// `t,<force channels...>,phi,theta,psi`. Without a manifest every *.csv is
// loaded and the rate is taken from the time column. Events come back in
// path-sorted order.
Dataset load_events(const std::filesystem::path& dir);
Event read_event_csv(const std::filesystem::path& file, double sample_rate,
                     std::vector<std::string>* force_channels = nullptr);
void write_events(const Dataset& data, const std::filesystem::path& dir);

enum class NormMethod { kZscore, kMinmax, kIdentity };

std::string to_string(NormMethod m);
NormMethod norm_method_from_string(const std::string& s);

// Per-channel affine map x' = (x - offset) / scale.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(NormMethod method, std::vector<double> offset, std::vector<double> scale);

  // Statistics over the rows of every tensor (all must share a width).
  static Normalizer fit(const std::vector<const Tensor*>& data, NormMethod method);
  static Normalizer fit(const Tensor& data, NormMethod method);

  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& x) const;

  NormMethod method() const { return method_; }
  const std::vector<double>& offset() const { return offset_; }
  const std::vector<double>& scale() const { return scale_; }
  std::size_t channels() const { return offset_.size(); }

 private:
  NormMethod method_ = NormMethod::kIdentity;
  std::vector<double> offset_;
  std::vector<double> scale_;
};

struct WindowSpec {
  std::size_t feature_win = 512;
  std::size_t target_win = 1;
  std::size_t intersect = 1;
  std::size_t stride = 1;

  void validate() const;
  // Offset of the first target row relative to the window start.
  std::size_t target_offset() const { return feature_win - intersect; }
  // Samples an event needs past a window start.
  std::size_t span() const;
};

// Windows of one event: floor((T - span)/stride) + 1, or 0 when too short.
std::size_t window_count(std::size_t length, const WindowSpec& spec);

struct Window {
  Tensor x;               // [feature_win × M_F]
  Tensor y;               // [target_win × M_K]
  std::size_t t_target;   // index of y's first row in the event
};

struct WindowRef {
  std::size_t event = 0;
  std::size_t start = 0;
};

std::vector<Window> make_windows(const Event& event, const WindowSpec& spec);
// Index form over many events; events shorter than the span are skipped
// with a warning on stderr.
std::vector<WindowRef> window_refs(const std::vector<Event>& events, const WindowSpec& spec);
Tensor feature_window(const Event& event, std::size_t start, const WindowSpec& spec);
Tensor target_window(const Event& event, std::size_t start, const WindowSpec& spec);

struct Split {
  std::vector<std::size_t> train, val, test;  // event indices
};

// Seeded shuffle, then floor(train·N) / floor(val·N) / remainder.
Split split_events(std::size_t n, double train_percent, double val_percent, std::uint64_t seed);

struct AlignConfig {
  std::size_t smooth_window = 11;
  double force_onset_thresh = 0.05;
  double motion_onset_thresh = 0.05;
};

struct AlignResult {
  Event event;
  std::size_t force_onset = 0;
  std::size_t motion_onset = 0;
  std::ptrdiff_t shift = 0;  // motion_onset - force_onset
};

// Centered moving average per column; the window shrinks at the edges.
Tensor moving_average(const Tensor& x, std::size_t width);
// First i with max_c |s(i) - s(i-1)| > thresh.
std::size_t force_onset(const Tensor& smoothed, double thresh);
// First i with max_c |s(i) - s(0)| > thresh.
std::size_t motion_onset(const Tensor& smoothed, double thresh);

// Shifts the series so the onsets coincide and trims to the common support.
AlignResult align(const Tensor& forces, const Tensor& kinematics, const AlignConfig& cfg,
                  double sample_rate = 0.0, std::string id = {});

}  // namespace flapnet
