// SPDX-License-Identifier: Apache-2.0
#include "flapnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "flapnet/errors.hpp"
#include "flapnet/rng.hpp"
#include "json.hpp"

namespace flapnet {

namespace fs = std::filesystem;
using nlohmann::json;

void Event::validate() const {
  if (forces.rank() != 2 || kinematics.rank() != 2) {
    throw DataError("event " + id + ": forces and kinematics must be 2-D");
  }
  if (forces.rows() != kinematics.rows()) {
    throw DataError("event " + id + ": forces have " + std::to_string(forces.rows()) +
                    " rows, kinematics " + std::to_string(kinematics.rows()));
  }
  if (!forces.all_finite() || !kinematics.all_finite()) {
    throw DataError("event " + id + ": non-finite values");
  }
}

void Dataset::validate() const {
  for (const auto& e : events) {
    e.validate();
    if (e.forces.cols() != force_dim()) {
      throw DataError("event " + e.id + " has " + std::to_string(e.forces.cols()) +
                      " force channels, dataset declares " + std::to_string(force_dim()));
    }
    if (e.kinematics.cols() != kinematics_dim()) {
      throw DataError("event " + e.id + " has " + std::to_string(e.kinematics.cols()) +
                      " kinematic channels, expected " + std::to_string(kinematics_dim()));
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    std::string_view cell = line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

double parse_number(std::string_view cell, const fs::path& file, std::size_t line) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(where(file, line) + ": cannot parse '" + std::string(cell) + "' as a number");
  }
  if (!std::isfinite(v)) {
    throw DataError(where(file, line) + ": non-finite value '" + std::string(cell) + "'");
  }
  return v;
}

const std::vector<std::string> kKinematicNames{"phi", "theta", "psi"};

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Event read_event_csv(const fs::path& file, double sample_rate,
                     std::vector<std::string>* force_channels) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open event file " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(file.string() + ": empty file");
  const auto header = split_commas(line);
  if (header.size() < 5 || header.front() != "t") {
    throw DataError(where(file, 1) + ": header must be t,<force channels>,phi,theta,psi");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (header[header.size() - 3 + i] != kKinematicNames[i]) {
      throw DataError(where(file, 1) + ": missing column '" + kKinematicNames[i] +
                      "' (last three columns must be phi,theta,psi)");
    }
  }
  const std::size_t m_f = header.size() - 4;
  if (force_channels) {
    force_channels->clear();
    for (std::size_t i = 1; i <= m_f; ++i) force_channels->emplace_back(header[i]);
  }

  std::vector<double> times, forces, kin;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw DataError(where(file, lineno) + ": expected " + std::to_string(header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    times.push_back(parse_number(cells[0], file, lineno));
    for (std::size_t i = 1; i <= m_f; ++i) forces.push_back(parse_number(cells[i], file, lineno));
    for (std::size_t i = m_f + 1; i < cells.size(); ++i) {
      kin.push_back(parse_number(cells[i], file, lineno));
    }
  }
  const std::size_t t_len = times.size();
  if (t_len < 2) throw DataError(file.string() + ": fewer than two samples");

  const double dt_first = times[1] - times[0];
  if (sample_rate <= 0.0) {
    if (!(dt_first > 0.0)) throw DataError(where(file, 3) + ": time column is not increasing");
    sample_rate = static_cast<double>(t_len - 1) / (times.back() - times.front());
  }
  const double dt = 1.0 / sample_rate;
  for (std::size_t i = 1; i < t_len; ++i) {
    const double step = times[i] - times[i - 1];
    if (!(step > 0.0)) {
      throw DataError(where(file, i + 2) + ": time column is not strictly increasing");
    }
    if (std::abs(step - dt) > 1e-3 * dt) {
      throw DataError(where(file, i + 2) + ": time step " + format_double(step) +
                      " s differs from 1/sample_rate = " + format_double(dt) + " s");
    }
  }

  Event e;
  e.id = file.stem().string();
  e.sample_rate = sample_rate;
  e.forces = Tensor({t_len, m_f}, std::move(forces));
  e.kinematics = Tensor({t_len, 3}, std::move(kin));
  return e;
}

Dataset load_events(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  Dataset data;
  std::vector<fs::path> files;
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    json m;
    try {
      m = json::parse(in);
    } catch (const json::exception& ex) {
      throw DataError(manifest.string() + ": " + ex.what());
    }
    if (!m.contains("sample_rate") || !m["sample_rate"].is_number()) {
      throw DataError(manifest.string() + ": missing numeric 'sample_rate'");
    }
    data.sample_rate = m["sample_rate"].get<double>();
    if (!(data.sample_rate > 0.0)) throw DataError(manifest.string() + ": sample_rate must be > 0");
    if (!m.contains("events") || !m["events"].is_array()) {
      throw DataError(manifest.string() + ": missing 'events' list");
    }
    for (const auto& ev : m["events"]) {
      const std::string name = ev.is_string() ? ev.get<std::string>() : ev.value("file", "");
      if (name.empty()) throw DataError(manifest.string() + ": event entry without a file name");
      files.push_back(dir / name);
    }
    if (m.contains("force_channels")) {
      data.force_channels = m["force_channels"].get<std::vector<std::string>>();
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no event files in " + dir.string());

  const auto n = static_cast<std::int64_t>(files.size());
  std::vector<Event> events(files.size());
  std::vector<std::vector<std::string>> headers(files.size());
  std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      events[k] = read_event_csv(files[k], data.sample_rate, &headers[k]);
    } catch (const std::exception& ex) {
      errors[k] = ex.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw DataError(err);
  }
  if (data.force_channels.empty()) data.force_channels = headers.front();
  if (data.sample_rate <= 0.0) data.sample_rate = events.front().sample_rate;
  for (std::size_t k = 0; k < files.size(); ++k) {
    if (headers[k] != data.force_channels) {
      throw DataError(files[k].string() + ": force columns differ from the dataset's (" +
                      std::to_string(headers[k].size()) + " vs " +
                      std::to_string(data.force_channels.size()) + ")");
    }
    if (std::abs(events[k].sample_rate - data.sample_rate) > 1e-6 * data.sample_rate) {
      throw DataError(files[k].string() + ": sample rate differs from the dataset's");
    }
  }
  data.events = std::move(events);
  data.validate();
  return data;
}

void write_events(const Dataset& data, const fs::path& dir) {
  data.validate();
  fs::create_directories(dir);
  json m;
  m["format"] = "flapnet-events";
  m["version"] = 1;
  m["sample_rate"] = data.sample_rate;
  m["force_channels"] = data.force_channels;
  m["kinematics_channels"] = data.kinematics_channels;
  json files = json::array();
  for (const auto& e : data.events) {
    const std::string name = e.id + ".csv";
    files.push_back(name);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << 't';
    for (const auto& c : data.force_channels) out << ',' << c;
    for (const auto& c : data.kinematics_channels) out << ',' << c;
    out << '\n';
    for (std::size_t t = 0; t < e.length(); ++t) {
      out << format_double(static_cast<double>(t) / e.sample_rate);
      for (std::size_t c = 0; c < e.forces.cols(); ++c) out << ',' << format_double(e.forces(t, c));
      for (std::size_t c = 0; c < e.kinematics.cols(); ++c) {
        out << ',' << format_double(e.kinematics(t, c));
      }
      out << '\n';
    }
  }
  m["events"] = files;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Normalization

std::string to_string(NormMethod m) {
  switch (m) {
    case NormMethod::kZscore: return "zscore";
    case NormMethod::kMinmax: return "minmax";
    case NormMethod::kIdentity: return "identity";
  }
  return "identity";
}

NormMethod norm_method_from_string(const std::string& s) {
  if (s == "zscore") return NormMethod::kZscore;
  if (s == "minmax") return NormMethod::kMinmax;
  if (s == "identity" || s == "none") return NormMethod::kIdentity;
  throw ConfigError("unknown normalization method '" + s + "' (expected zscore|minmax|identity)");
}

Normalizer::Normalizer(NormMethod method, std::vector<double> offset, std::vector<double> scale)
    : method_(method), offset_(std::move(offset)), scale_(std::move(scale)) {
  if (offset_.size() != scale_.size()) throw DimensionError("normalizer offset/scale mismatch");
}

Normalizer Normalizer::fit(const Tensor& data, NormMethod method) {
  return fit(std::vector<const Tensor*>{&data}, method);
}

Normalizer Normalizer::fit(const std::vector<const Tensor*>& data, NormMethod method) {
  if (data.empty()) throw DataError("normalizer: nothing to fit");
  const std::size_t c = data.front()->cols();
  std::vector<double> offset(c, 0.0), scale(c, 1.0);
  if (method == NormMethod::kIdentity) return Normalizer(method, offset, scale);

  std::vector<double> lo(c, std::numeric_limits<double>::infinity());
  std::vector<double> hi(c, -std::numeric_limits<double>::infinity());
  std::vector<double> sum(c, 0.0);
  std::size_t n = 0;
  for (const Tensor* t : data) {
    if (t->cols() != c) throw DimensionError("normalizer: inconsistent channel counts");
    for (std::size_t r = 0; r < t->rows(); ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double v = (*t)(r, j);
        lo[j] = std::min(lo[j], v);
        hi[j] = std::max(hi[j], v);
        sum[j] += v;
      }
    }
    n += t->rows();
  }
  if (n == 0) throw DataError("normalizer: no samples");
  if (method == NormMethod::kMinmax) {
    for (std::size_t j = 0; j < c; ++j) {
      offset[j] = lo[j];
      scale[j] = std::max(hi[j] - lo[j], 1e-8);
    }
    return Normalizer(method, offset, scale);
  }
  std::vector<double> var(c, 0.0);
  for (std::size_t j = 0; j < c; ++j) offset[j] = sum[j] / static_cast<double>(n);
  for (const Tensor* t : data) {
    for (std::size_t r = 0; r < t->rows(); ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double d = (*t)(r, j) - offset[j];
        var[j] += d * d;
      }
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    scale[j] = std::max(std::sqrt(var[j] / static_cast<double>(n)), 1e-8);
  }
  return Normalizer(method, offset, scale);
}

Tensor Normalizer::apply(const Tensor& x) const {
  if (x.cols() != channels()) {
    throw DimensionError("normalizer fitted on " + std::to_string(channels()) +
                         " channels, got " + std::to_string(x.cols()));
  }
  Tensor y = x;
  if (method_ == NormMethod::kIdentity) return y;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double* row = y.row(r);
    for (std::size_t j = 0; j < channels(); ++j) row[j] = (row[j] - offset_[j]) / scale_[j];
  }
  return y;
}

Tensor Normalizer::invert(const Tensor& x) const {
  if (x.cols() != channels()) {
    throw DimensionError("normalizer fitted on " + std::to_string(channels()) +
                         " channels, got " + std::to_string(x.cols()));
  }
  Tensor y = x;
  if (method_ == NormMethod::kIdentity) return y;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double* row = y.row(r);
    for (std::size_t j = 0; j < channels(); ++j) row[j] = row[j] * scale_[j] + offset_[j];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Windows

void WindowSpec::validate() const {
  if (feature_win == 0) throw ConfigError("feature_win must be positive");
  if (target_win == 0) throw ConfigError("target_win must be positive");
  if (stride == 0) throw ConfigError("stride must be positive");
  if (intersect < 1 || intersect > feature_win) {
    throw ConfigError("intersect must be in [1, feature_win], got " + std::to_string(intersect));
  }
}

std::size_t WindowSpec::span() const {
  return std::max(feature_win, target_offset() + target_win);
}

std::size_t window_count(std::size_t length, const WindowSpec& spec) {
  spec.validate();
  const std::size_t need = spec.span();
  if (length < need) return 0;
  return (length - need) / spec.stride + 1;
}

Tensor feature_window(const Event& event, std::size_t start, const WindowSpec& spec) {
  const std::size_t f = event.forces.cols();
  Tensor x({spec.feature_win, f});
  std::copy_n(event.forces.row(start), spec.feature_win * f, x.data());
  return x;
}

Tensor target_window(const Event& event, std::size_t start, const WindowSpec& spec) {
  const std::size_t k = event.kinematics.cols();
  Tensor y({spec.target_win, k});
  std::copy_n(event.kinematics.row(start + spec.target_offset()), spec.target_win * k, y.data());
  return y;
}

std::vector<Window> make_windows(const Event& event, const WindowSpec& spec) {
  const std::size_t n = window_count(event.length(), spec);
  std::vector<Window> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = i * spec.stride;
    out.push_back({feature_window(event, s, spec), target_window(event, s, spec),
                   s + spec.target_offset()});
  }
  return out;
}

std::vector<WindowRef> window_refs(const std::vector<Event>& events, const WindowSpec& spec) {
  std::vector<WindowRef> refs;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const std::size_t n = window_count(events[e].length(), spec);
    if (n == 0) {
      std::cerr << "warning: event " << events[e].id << " has " << events[e].length()
                << " samples, fewer than the " << spec.span() << " a window needs; skipped\n";
    }
    for (std::size_t i = 0; i < n; ++i) refs.push_back({e, i * spec.stride});
  }
  return refs;
}

// ---------------------------------------------------------------------------
// Split

namespace {
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
}  // namespace

Split split_events(std::size_t n, double train_percent, double val_percent, std::uint64_t seed) {
  if (!(train_percent >= 0.0 && val_percent >= 0.0 && train_percent + val_percent <= 1.0 + 1e-12)) {
    throw ConfigError("train_percent + val_percent must lie in [0, 1]");
  }
  const double dn = static_cast<double>(n);
  const auto n_train = static_cast<std::size_t>(std::floor(train_percent * dn + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(val_percent * dn + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ConfigError("split of " + std::to_string(n) + " events leaves an empty partition (" +
                      std::to_string(n_train) + "/" + std::to_string(n_val) + "/" +
                      std::to_string(n - std::min(n, n_train + n_val)) + ")");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, kSplitStream);
  rng.shuffle(order);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

// ---------------------------------------------------------------------------
// Alignment

Tensor moving_average(const Tensor& x, std::size_t width) {
  if (width == 0) throw ConfigError("smooth_window must be positive");
  const std::size_t t_len = x.rows();
  const std::size_t c = x.cols();
  const std::size_t half = width / 2;
  Tensor out({t_len, c});
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(t_len - 1, t + (width - 1 - half));
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t i = lo; i <= hi; ++i) s += x(i, j);
      out(t, j) = s / static_cast<double>(hi - lo + 1);
    }
  }
  return out;
}

std::size_t force_onset(const Tensor& s, double thresh) {
  for (std::size_t t = 1; t < s.rows(); ++t) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (std::abs(s(t, j) - s(t - 1, j)) > thresh) return t;
    }
  }
  throw DataError("alignment: no force onset (|dF| never exceeds " + std::to_string(thresh) + ")");
}

std::size_t motion_onset(const Tensor& s, double thresh) {
  for (std::size_t t = 0; t < s.rows(); ++t) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (std::abs(s(t, j) - s(0, j)) > thresh) return t;
    }
  }
  throw DataError("alignment: no motion onset (displacement never exceeds " +
                  std::to_string(thresh) + ")");
}

AlignResult align(const Tensor& forces, const Tensor& kinematics, const AlignConfig& cfg,
                  double sample_rate, std::string id) {
  AlignResult r;
  r.force_onset = force_onset(moving_average(forces, cfg.smooth_window), cfg.force_onset_thresh);
  r.motion_onset =
      motion_onset(moving_average(kinematics, cfg.smooth_window), cfg.motion_onset_thresh);
  r.shift = static_cast<std::ptrdiff_t>(r.motion_onset) - static_cast<std::ptrdiff_t>(r.force_onset);
  const std::size_t f0 = r.shift < 0 ? static_cast<std::size_t>(-r.shift) : 0;
  const std::size_t k0 = r.shift > 0 ? static_cast<std::size_t>(r.shift) : 0;
  if (f0 >= forces.rows() || k0 >= kinematics.rows()) {
    throw DataError("alignment: onset shift " + std::to_string(r.shift) +
                    " leaves no common support");
  }
  const std::size_t len = std::min(forces.rows() - f0, kinematics.rows() - k0);
  r.event.id = std::move(id);
  r.event.sample_rate = sample_rate;
  r.event.forces = Tensor({len, forces.cols()});
  r.event.kinematics = Tensor({len, kinematics.cols()});
  std::copy_n(forces.row(f0), len * forces.cols(), r.event.forces.data());
  std::copy_n(kinematics.row(k0), len * kinematics.cols(), r.event.kinematics.data());
  return r;
}

}  // namespace flapnet
