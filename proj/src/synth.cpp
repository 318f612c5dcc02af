// SPDX-License-Identifier: Apache-2.0
#include "flapnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "flapnet/errors.hpp"
#include "flapnet/rng.hpp"

namespace flapnet {

namespace {

constexpr double kPi = std::numbers::pi;

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ConfigError(std::string(name) + " must be finite");
}

void check_shape(double k) {
  if (!(k >= 0.0 && k <= kMaxShape)) {
    throw ConfigError("shape K must lie in [0, " + std::to_string(kMaxShape) + "], got " +
                      std::to_string(k));
  }
}

}  // namespace

std::size_t KinematicsSpec::samples() const {
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

void KinematicsSpec::validate() const {
  for (double v : {frequency, amplitude, shape, duration, sample_rate, pitch_lag, pitch_amp,
                   pitch_gain, elev_amp}) {
    require_finite(v, "kinematics parameter");
  }
  if (frequency < 0.0) throw ConfigError("frequency must be >= 0");
  if (amplitude < 0.0) throw ConfigError("amplitude must be >= 0");
  check_shape(shape);
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be > 0");
  if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
  if (pitch_lag < 0.0) throw ConfigError("pitch_lag must be >= 0");
}

double stroke_profile(double t, double frequency, double amplitude, double shape) {
  check_shape(shape);
  const double s = std::sin(2.0 * kPi * frequency * t);
  if (shape < 1e-6) return 0.5 * amplitude * s;
  return 0.5 * amplitude * std::asin(shape * s) / std::asin(shape);
}

std::vector<double> stroke_series(const KinematicsSpec& spec) {
  spec.validate();
  std::vector<double> phi(spec.samples());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    phi[i] = stroke_profile(t, spec.frequency, spec.amplitude, spec.shape);
  }
  return phi;
}

std::vector<double> derivative(const std::vector<double>& x, double sample_rate) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  d[0] = (x[1] - x[0]) * sample_rate;
  d[n - 1] = (x[n - 1] - x[n - 2]) * sample_rate;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) * 0.5 * sample_rate;
  return d;
}

PassiveAngles passive_angles(const std::vector<double>& phi, const KinematicsSpec& spec) {
  const std::vector<double> rate = derivative(phi, spec.sample_rate);
  const auto lag = static_cast<std::size_t>(std::llround(spec.pitch_lag * spec.sample_rate));
  PassiveAngles out;
  out.theta.resize(phi.size());
  out.psi.resize(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    const double lagged = rate[i >= lag ? i - lag : 0];
    out.psi[i] = spec.pitch_amp * std::tanh(spec.pitch_gain * lagged);
    out.theta[i] = spec.elev_amp * std::sin(4.0 * kPi * spec.frequency * t);
  }
  return out;
}

Tensor kinematics_series(const KinematicsSpec& spec) {
  const std::vector<double> phi = stroke_series(spec);
  const PassiveAngles pa = passive_angles(phi, spec);
  Tensor k({phi.size(), 3});
  for (std::size_t i = 0; i < phi.size(); ++i) {
    k(i, 0) = phi[i];
    k(i, 1) = pa.theta[i];
    k(i, 2) = pa.psi[i];
  }
  return k;
}

void QsParams::validate() const {
  for (double v : {density, area, radius, lift_coeff, cp_radius, sensor_offset}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("QS parameters must be positive and finite");
  }
}

std::array<std::array<double, 2>, 4> QsParams::sensors() const {
  const double d = sensor_offset;
  return {{{d, 0.0}, {-d, 0.0}, {0.0, d}, {0.0, -d}}};
}

std::vector<double> qs_total_force(const Tensor& kinematics, const QsParams& p,
                                   double sample_rate) {
  p.validate();
  if (kinematics.cols() != 3) throw DimensionError("qs_forces: kinematics must be [T x 3]");
  const std::size_t n = kinematics.rows();
  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) phi[i] = kinematics(i, 0);
  const std::vector<double> rate = derivative(phi, sample_rate);
  const double k = 0.5 * p.density * p.area * p.radius * p.radius * p.lift_coeff;
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = k * std::sin(2.0 * kinematics(i, 2)) * rate[i] * rate[i];
  }
  return f;
}

Tensor qs_forces(const Tensor& kinematics, const QsParams& p, double sample_rate) {
  const std::vector<double> total = qs_total_force(kinematics, p, sample_rate);
  const auto sensors = p.sensors();
  const double inv = 1.0 / (2.0 * p.sensor_offset * p.sensor_offset);
  Tensor out({total.size(), 4});
  for (std::size_t i = 0; i < total.size(); ++i) {
    const double phi = kinematics(i, 0);
    const double ct = std::cos(kinematics(i, 1));
    const double px = -p.cp_radius * std::sin(phi) * ct;
    const double py = p.cp_radius * std::cos(phi) * ct;
    for (std::size_t s = 0; s < 4; ++s) {
      const double share = 0.25 + (px * sensors[s][0] + py * sensors[s][1]) * inv;
      out(i, s) = total[i] * share;
    }
  }
  return out;
}

void SynthRanges::validate() const {
  if (!(freq_lo >= 0.0 && freq_lo <= freq_hi)) throw ConfigError("synth frequency range is invalid");
  if (!(amp_lo >= 0.0 && amp_lo <= amp_hi)) throw ConfigError("synth amplitude range is invalid");
  if (!(shape_lo >= 0.0 && shape_lo <= shape_hi)) throw ConfigError("synth shape range is invalid");
  check_shape(shape_lo);
  check_shape(shape_hi);
  if (!(duration_lo > 0.0 && duration_lo <= duration_hi)) {
    throw ConfigError("synth duration range is invalid");
  }
  if (!(sample_rate > 0.0)) throw ConfigError("synth sample_rate must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("synth noise_std must be >= 0");
}

Dataset generate_dataset(std::size_t n_events, const SynthRanges& r, const QsParams& qs,
                         std::uint64_t seed) {
  if (n_events == 0) throw ConfigError("n_events must be at least 1");
  r.validate();
  qs.validate();
  Dataset data;
  data.sample_rate = r.sample_rate;
  data.force_channels = {"F1", "F2", "F3", "F4"};
  data.events.resize(n_events);
  const auto n = static_cast<std::int64_t>(n_events);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    Rng rng = Rng::derive(seed, idx);
    KinematicsSpec spec;
    spec.frequency = rng.uniform(r.freq_lo, r.freq_hi);
    spec.amplitude = rng.uniform(r.amp_lo, r.amp_hi);
    spec.shape = rng.uniform(r.shape_lo, r.shape_hi);
    spec.duration = rng.uniform(r.duration_lo, r.duration_hi);
    spec.sample_rate = r.sample_rate;
    spec.pitch_lag = r.pitch_lag;
    spec.pitch_amp = r.pitch_amp;
    spec.pitch_gain = r.pitch_gain;
    spec.elev_amp = r.elev_amp;
    Event& e = data.events[idx];
    char name[32];
    std::snprintf(name, sizeof name, "event_%04llu", static_cast<unsigned long long>(idx));
    e.id = name;
    e.sample_rate = r.sample_rate;
    e.kinematics = kinematics_series(spec);
    e.forces = qs_forces(e.kinematics, qs, r.sample_rate);
    if (r.noise_std > 0.0) {
      for (double& v : e.forces.values()) v += r.noise_std * rng.normal();
    }
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// Geometry

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

// Orthonormal frame (columns u, v, w) of a marker triangle: v along
// root->tip, u the in-plane component of root->trailing orthogonal to v.
std::array<Vec3, 3> triangle_frame(const Vec3& root, const Vec3& tip, const Vec3& trailing) {
  const Vec3 span = sub(tip, root);
  const double ls = std::sqrt(dot(span, span));
  const Vec3 chord = sub(trailing, root);
  const double lc = std::sqrt(dot(chord, chord));
  const double scale = std::max(ls, lc);
  if (!(ls > 1e-12 * std::max(scale, 1.0)) || !(lc > 0.0)) {
    throw GeometryError("markers coincide");
  }
  const Vec3 v = scaled(span, 1.0 / ls);
  const Vec3 perp = sub(chord, scaled(v, dot(chord, v)));
  const double lp = std::sqrt(dot(perp, perp));
  if (!(lp > 1e-9 * scale)) throw GeometryError("markers are collinear");
  const Vec3 u = scaled(perp, 1.0 / lp);
  return {u, v, cross(u, v)};
}

}  // namespace

std::array<Vec3, 3> rotation_matrix(const EulerAngles& a) {
  const double cf = std::cos(a.phi), sf = std::sin(a.phi);
  const double ct = std::cos(a.theta), st = std::sin(a.theta);
  const double cp = std::cos(a.psi), sp = std::sin(a.psi);
  return {{{cf * cp - sf * st * sp, -sf * ct, cf * sp + sf * st * cp},
           {sf * cp + cf * st * sp, cf * ct, sf * sp - cf * st * cp},
           {-ct * sp, st, ct * cp}}};
}

std::array<Vec3, 3> euler_to_markers(const EulerAngles& a, const WingGeometry& g) {
  const auto r = rotation_matrix(a);
  auto apply = [&](const Vec3& p) {
    return Vec3{dot(r[0], p), dot(r[1], p), dot(r[2], p)};
  };
  return {apply(g.root), apply(g.tip), apply(g.trailing)};
}

EulerAngles markers_to_euler(const Vec3& root, const Vec3& tip, const Vec3& trailing,
                             const WingGeometry& g) {
  // R maps the body triangle frame onto the lab triangle frame.
  const auto lab = triangle_frame(root, tip, trailing);
  const auto body = triangle_frame(g.root, g.tip, g.trailing);
  std::array<Vec3, 3> r{};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += lab[k][i] * body[k][j];
      r[i][j] = s;
    }
  }
  EulerAngles a;
  a.theta = std::asin(std::clamp(r[2][1], -1.0, 1.0));
  a.phi = std::atan2(-r[0][1], r[1][1]);
  a.psi = std::atan2(-r[2][0], r[2][2]);
  return a;
}

}  // namespace flapnet
