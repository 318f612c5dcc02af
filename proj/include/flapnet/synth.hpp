// SPDX-License-Identifier: Apache-2.0
//
// Synthetic flapping-wing events: parameterized stroke profiles, surrogate
// passive pitch and elevation, a quasi-steady force oracle split across four
// virtual sensors, and marker <-> Euler angle geometry.
//
// This is a learnable benchmark with a physical flavor. The sin(2psi) lift
// law and the surrogate passive angles are not aerodynamic models of any
// real wing.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "flapnet/data.hpp"

namespace flapnet {

struct KinematicsSpec {
  double frequency = 10.0;      // f, Hz
  double amplitude = 1.0;       // Phi, peak-to-peak stroke, rad
  double shape = 0.5;           // K in [0, 0.99]
  double duration = 0.5;        // s
  double sample_rate = 500.0;   // Hz
  double pitch_lag = 0.0;       // s
  double pitch_amp = 0.785398;  // rad
  double pitch_gain = 0.1;      // c, s/rad
  double elev_amp = 0.15;       // rad

  std::size_t samples() const;
  void validate() const;
};

constexpr double kMaxShape = 0.99;

// phi(t) = (Phi/2) asin(K sin(2 pi f t)) / asin(K); the K -> 0 limit below 1e-6.
double stroke_profile(double t, double frequency, double amplitude, double shape);
std::vector<double> stroke_series(const KinematicsSpec& spec);

// Central-difference derivative, one-sided at the ends.
std::vector<double> derivative(const std::vector<double>& x, double sample_rate);

struct PassiveAngles {
  std::vector<double> theta;
  std::vector<double> psi;
};

// psi(t) = pitch_amp tanh(c phi'(t - lag)), theta(t) = elev_amp sin(4 pi f t).
PassiveAngles passive_angles(const std::vector<double>& phi, const KinematicsSpec& spec);

// [T × 3] columns (phi, theta, psi).
Tensor kinematics_series(const KinematicsSpec& spec);

struct QsParams {
  double density = 1.225;       // kg/m^3
  double area = 0.0015;         // m^2
  double radius = 0.04;         // second-moment arm, m
  double lift_coeff = 1.8;      // C_max
  double cp_radius = 0.04;      // center-of-pressure distance from the hinge, m
  double sensor_offset = 0.02;  // d: sensors at (+d,0), (-d,0), (0,+d), (0,-d), m

  void validate() const;
  std::array<std::array<double, 2>, 4> sensors() const;
};

// Total vertical force F(t) = 1/2 rho A r^2 C_max sin(2 psi) phi'^2.
std::vector<double> qs_total_force(const Tensor& kinematics, const QsParams& p, double sample_rate);
// Per-sensor share by static moment balance about the cross:
// F_i = F (1/4 + p_cp . s_i / (2 d^2)), p_cp = r_cp (-sin phi cos theta, cos phi cos theta).
Tensor qs_forces(const Tensor& kinematics, const QsParams& p, double sample_rate);

struct SynthRanges {
  double freq_lo = 0.0, freq_hi = 20.0;
  double amp_lo = 0.5235987755982988, amp_hi = 1.0471975511965976;  // pi/6..pi/3 peak-to-peak
  double shape_lo = 0.0, shape_hi = kMaxShape;
  double duration_lo = 0.5, duration_hi = 0.5;
  double sample_rate = 500.0;
  double pitch_lag = 0.0;
  double pitch_amp = 0.785398;
  double pitch_gain = 0.1;
  double elev_amp = 0.15;
  double noise_std = 0.0;  // Gaussian sensor noise, N

  void validate() const;
};

// Event i uses its own stream Rng::derive(seed, i).
Dataset generate_dataset(std::size_t n_events, const SynthRanges& ranges, const QsParams& qs,
                         std::uint64_t seed);

using Vec3 = std::array<double, 3>;

// Marker positions in the wing frame: two on the leading edge (root, tip)
// along +y, one on the trailing edge at -x. The hinge is the origin.
struct WingGeometry {
  Vec3 root{0.0, 0.01, 0.0};
  Vec3 tip{0.0, 0.07, 0.0};
  Vec3 trailing{-0.03, 0.04, 0.0};
};

struct EulerAngles {
  double phi = 0.0;    // stroke, about lab z
  double theta = 0.0;  // elevation, about the rotated x
  double psi = 0.0;    // pitch, about the span (body y)
};

// Intrinsic z-x-y: R = Rz(phi) Rx(theta) Ry(psi).
std::array<Vec3, 3> rotation_matrix(const EulerAngles& a);
std::array<Vec3, 3> euler_to_markers(const EulerAngles& a, const WingGeometry& g = {});
// Throws GeometryError for coincident or collinear markers.
EulerAngles markers_to_euler(const Vec3& root, const Vec3& tip, const Vec3& trailing,
                             const WingGeometry& g = {});

}  // namespace flapnet
