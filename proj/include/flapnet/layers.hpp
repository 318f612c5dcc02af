// SPDX-License-Identifier: Apache-2.0
//
// Parameter storage and the fully connected / dropout building blocks.
// Layers are stateless descriptors: forward reads parameter values from a
// ModelState, backward accumulates into a Gradients buffer of the same
// layout. Anything backward needs from forward is returned to the caller.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flapnet/rng.hpp"
#include "flapnet/tensor.hpp"

namespace flapnet {

using ParamId = std::size_t;

enum class Mode { kTrain, kEval };

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const std::vector<Shape>& shapes);

  Tensor& operator[](ParamId id) { return grads_[id]; }
  const Tensor& operator[](ParamId id) const { return grads_[id]; }
  std::size_t count() const { return grads_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(double s);
  double norm() const;

 private:
  std::vector<Tensor> grads_;
};

// Ordered, named parameter list. The id returned by add() is the position.
class ModelState {
 public:
  ParamId add(std::string name, Shape shape);

  const Tensor& value(ParamId id) const { return values_[id]; }
  Tensor& value(ParamId id) { return values_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  std::size_t count() const { return values_.size(); }
  std::size_t total_size() const;
  std::vector<Shape> shapes() const;
  Gradients zero_gradients() const { return Gradients(shapes()); }

  // Uniform ±1/sqrt(fan_in) for rank-2 weights (fan_in = rows), zero for
  // rank-1 biases. Vectors registered via mark_uniform_vector() also get
  // the uniform draw with fan_in = their length.
  void init(Rng& rng);
  void mark_uniform_vector(ParamId id) { uniform_vectors_.push_back(id); }

  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<ParamId> uniform_vectors_;
};

// y = x·W + b, with W stored [in × out].
struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  ParamId weight = 0;
  ParamId bias = 0;
  bool has_bias = true;

  static Linear create(ModelState& state, const std::string& name, std::size_t in,
                       std::size_t out, bool with_bias = true);

  // x: rows×in (any rank, last axis = in). Output shape replaces last axis.
  Tensor forward(const ModelState& state, const Tensor& x) const;
  // Raw form; y is overwritten.
  void forward(const ModelState& state, const double* x, std::size_t rows,
               double* y) const;
  // Accumulates parameter gradients; returns dL/dx.
  Tensor backward(const ModelState& state, const Tensor& x, const Tensor& dy,
                  Gradients& grads) const;
  // Raw form; dx may be null, otherwise accumulated into.
  void backward(const ModelState& state, const double* x, const double* dy,
                std::size_t rows, Gradients& grads, double* dx) const;

  std::size_t param_count() const { return in * out + (has_bias ? out : 0); }
};

// Inverted dropout. mask receives the per-element scale (0 or 1/(1-p)) so
// backward is an elementwise product. Eval mode or p == 0 is the identity.
void dropout_inplace(std::span<double> x, double p, Mode mode, Rng& rng,
                     std::vector<double>& mask);
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

// Central-difference check of an analytic gradient. Returns
// max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|).
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> point, std::span<const double> analytic,
                  double h = 1e-5);

// Same check over every parameter element of a ModelState. loss() is
// evaluated after each in-place perturbation.
double grad_check_params(ModelState& state, const std::function<double()>& loss,
                         const Gradients& analytic, double h = 1e-5);

}  // namespace flapnet
