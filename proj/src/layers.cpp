// SPDX-License-Identifier: Apache-2.0
#include "flapnet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "flapnet/errors.hpp"
#include "flapnet/kernels.hpp"

namespace flapnet {

Gradients::Gradients(const std::vector<Shape>& shapes) {
  grads_.reserve(shapes.size());
  for (const auto& s : shapes) grads_.emplace_back(s);
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto& dst = grads_[i].values();
    const auto& src = other.grads_[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_) {
    for (double& v : g.values()) v *= s;
  }
}

double Gradients::norm() const {
  double acc = 0.0;
  for (const auto& g : grads_) {
    for (double v : g.values()) acc += v * v;
  }
  return std::sqrt(acc);
}

ParamId ModelState::add(std::string name, Shape shape) {
  names_.push_back(std::move(name));
  values_.emplace_back(std::move(shape));
  return values_.size() - 1;
}

std::size_t ModelState::total_size() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<Shape> ModelState::shapes() const {
  std::vector<Shape> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(v.shape());
  return out;
}

void ModelState::init(Rng& rng) {
  for (std::size_t id = 0; id < values_.size(); ++id) {
    Tensor& t = values_[id];
    const bool vec_uniform =
        std::find(uniform_vectors_.begin(), uniform_vectors_.end(), id) != uniform_vectors_.end();
    if (t.rank() >= 2 || vec_uniform) {
      const double fan_in = static_cast<double>(t.rank() >= 2 ? t.dim(0) : t.size());
      const double bound = 1.0 / std::sqrt(std::max(1.0, fan_in));
      for (double& v : t.values()) v = rng.uniform(-bound, bound);
    } else {
      t.fill(0.0);
    }
  }
}

std::vector<double> ModelState::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& v : values_) flat.insert(flat.end(), v.values().begin(), v.values().end());
  return flat;
}

void ModelState::unflatten(std::span<const double> flat) {
  if (flat.size() != total_size()) {
    throw DimensionError("unflatten: expected " + std::to_string(total_size()) +
                         " values, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& v : values_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.values().begin());
    off += v.size();
  }
}

Linear Linear::create(ModelState& state, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = with_bias;
  l.weight = state.add(name + ".weight", {in, out});
  if (with_bias) l.bias = state.add(name + ".bias", {out});
  return l;
}

Tensor Linear::forward(const ModelState& state, const Tensor& x) const {
  if (x.cols() != in) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) +
                         " != " + std::to_string(in));
  }
  Shape out_shape = x.shape().empty() ? Shape{out} : x.shape();
  out_shape.back() = out;
  Tensor y(out_shape);
  forward(state, x.data(), x.rows(), y.data());
  return y;
}

void Linear::forward(const ModelState& state, const double* x, std::size_t rows,
                     double* y) const {
  const double* b = has_bias ? state.value(bias).data() : nullptr;
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y + r * out;
    if (b) {
      std::copy_n(b, out, yr);
    } else {
      std::fill_n(yr, out, 0.0);
    }
  }
  kernels::gemm(x, state.value(weight).data(), y, rows, in, out);
}

Tensor Linear::backward(const ModelState& state, const Tensor& x, const Tensor& dy,
                        Gradients& grads) const {
  if (x.cols() != in || dy.cols() != out || x.rows() != dy.rows()) {
    throw DimensionError("linear backward: shape mismatch " + shape_string(x.shape()) +
                         " / " + shape_string(dy.shape()));
  }
  Tensor dx(x.shape());
  backward(state, x.data(), dy.data(), x.rows(), grads, dx.data());
  return dx;
}

void Linear::backward(const ModelState& state, const double* x, const double* dy,
                      std::size_t rows, Gradients& grads, double* dx) const {
  kernels::gemm_tn(x, dy, grads[weight].data(), rows, in, out);
  if (has_bias) {
    double* db = grads[bias].data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dyr = dy + r * out;
      for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
    }
  }
  if (dx) kernels::gemm_nt(dy, state.value(weight).data(), dx, rows, out, in);
}

void dropout_inplace(std::span<double> x, double p, Mode mode, Rng& rng,
                     std::vector<double>& mask) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(p));
  }
  mask.assign(x.size(), 1.0);
  if (mode == Mode::kEval || p == 0.0) return;
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    x[i] *= mask[i];
  }
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  Tensor y = x;
  std::vector<double> mask;
  dropout_inplace(y.span(), p, mode, rng, mask);
  return y;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> point, std::span<const double> analytic,
                  double h) {
  if (point.size() != analytic.size()) {
    throw DimensionError("grad_check: point/gradient length mismatch");
  }
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

double grad_check_params(ModelState& state, const std::function<double()>& loss,
                         const Gradients& analytic, double h) {
  double worst = 0.0;
  for (ParamId id = 0; id < state.count(); ++id) {
    auto& vals = state.value(id).values();
    const auto& g = analytic[id].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = loss();
      vals[i] = orig - h;
      const double fm = loss();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max(1e-8, std::abs(g[i]) + std::abs(numeric));
      worst = std::max(worst, std::abs(g[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace flapnet
