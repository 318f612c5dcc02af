// SPDX-License-Identifier: Apache-2.0
#include "flapnet/gru.hpp"

#include <algorithm>
#include <cmath>

#include "flapnet/errors.hpp"
#include "flapnet/kernels.hpp"

namespace flapnet {

GruCell GruCell::create(ModelState& state, const std::string& name, std::size_t in,
                        std::size_t hidden) {
  GruCell c;
  c.in = in;
  c.hidden = hidden;
  c.w_input = state.add(name + ".w_input", {in, 3 * hidden});
  c.w_hidden = state.add(name + ".w_hidden", {hidden, 3 * hidden});
  c.bias = state.add(name + ".bias", {3 * hidden});
  return c;
}

void GruCell::step_projected(const ModelState& state, const double* gx, const double* h,
                             double* h_out, Step* cache) const {
  const std::size_t hs = hidden;
  thread_local std::vector<double> uh;
  uh.assign(3 * hs, 0.0);
  kernels::gemv_row(h, state.value(w_hidden).data(), uh.data(), hs, 3 * hs);
  thread_local Step scratch;
  Step& s = cache ? *cache : scratch;
  s.r.resize(hs);
  s.z.resize(hs);
  s.n.resize(hs);
  s.uh_n.resize(hs);
  for (std::size_t j = 0; j < hs; ++j) {
    const double r = sigmoid(gx[j] + uh[j]);
    const double z = sigmoid(gx[hs + j] + uh[hs + j]);
    const double n = std::tanh(gx[2 * hs + j] + r * uh[2 * hs + j]);
    s.r[j] = r;
    s.z[j] = z;
    s.n[j] = n;
    s.uh_n[j] = uh[2 * hs + j];
    h_out[j] = (1.0 - z) * n + z * h[j];
  }
}

void GruCell::step_projected_backward(const ModelState& state, const Step& s, const double* h,
                                      const double* dh_out, double* dgx, double* duh,
                                      double* dh_prev) const {
  const std::size_t hs = hidden;
  for (std::size_t j = 0; j < hs; ++j) {
    const double dh = dh_out[j];
    const double z = s.z[j];
    const double n = s.n[j];
    const double r = s.r[j];
    const double dn_pre = dh * (1.0 - z) * (1.0 - n * n);
    const double dz_pre = dh * (h[j] - n) * z * (1.0 - z);
    const double dr_pre = dn_pre * s.uh_n[j] * r * (1.0 - r);
    dgx[j] += dr_pre;
    dgx[hs + j] += dz_pre;
    dgx[2 * hs + j] += dn_pre;
    duh[j] = dr_pre;
    duh[hs + j] = dz_pre;
    duh[2 * hs + j] = dn_pre * r;
    dh_prev[j] += dh * z;
  }
  kernels::gemv_col(state.value(w_hidden).data(), duh, dh_prev, hs, 3 * hs);
}

Tensor GruCell::forward(const ModelState& state, const Tensor& x, const Tensor& h) const {
  if (x.size() != in || h.size() != hidden) {
    throw DimensionError("gru_cell: expected x[" + std::to_string(in) + "], h[" +
                         std::to_string(hidden) + "], got " + shape_string(x.shape()) + ", " +
                         shape_string(h.shape()));
  }
  std::vector<double> gx(state.value(bias).values());
  kernels::gemv_row(x.data(), state.value(w_input).data(), gx.data(), in, 3 * hidden);
  Tensor out({hidden});
  step_projected(state, gx.data(), h.data(), out.data(), nullptr);
  return out;
}

void GruCell::backward(const ModelState& state, const Tensor& x, const Tensor& h,
                       const Tensor& dh_out, Gradients& grads, Tensor& dx, Tensor& dh) const {
  std::vector<double> gx(state.value(bias).values());
  kernels::gemv_row(x.data(), state.value(w_input).data(), gx.data(), in, 3 * hidden);
  Step s;
  std::vector<double> hout(hidden);
  step_projected(state, gx.data(), h.data(), hout.data(), &s);
  std::vector<double> dgx(3 * hidden, 0.0);
  std::vector<double> duh(3 * hidden, 0.0);
  dh = Tensor({hidden});
  step_projected_backward(state, s, h.data(), dh_out.data(), dgx.data(), duh.data(), dh.data());
  kernels::outer_acc(h.data(), duh.data(), grads[w_hidden].data(), hidden, 3 * hidden);
  kernels::outer_acc(x.data(), dgx.data(), grads[w_input].data(), in, 3 * hidden);
  double* db = grads[bias].data();
  for (std::size_t j = 0; j < 3 * hidden; ++j) db[j] += dgx[j];
  dx = Tensor({in});
  kernels::gemv_col(state.value(w_input).data(), dgx.data(), dx.data(), in, 3 * hidden);
}

Tensor GruSequence::forward(const GruCell& cell, const ModelState& state, const Tensor& x,
                            bool reverse, Cache* cache) {
  const std::size_t t_len = x.rows();
  const std::size_t hs = cell.hidden;
  if (x.cols() != cell.in) {
    throw DimensionError("gru: input width " + std::to_string(x.cols()) + " != " +
                         std::to_string(cell.in));
  }
  // Input projections for all steps at once.
  Tensor gx({t_len, 3 * hs});
  const auto& b = state.value(cell.bias).values();
  for (std::size_t t = 0; t < t_len; ++t) std::copy(b.begin(), b.end(), gx.row(t));
  kernels::gemm(x.data(), state.value(cell.w_input).data(), gx.data(), t_len, cell.in, 3 * hs);

  Tensor outputs({t_len, hs});
  Tensor states({t_len + 1, hs});
  if (cache) {
    cache->input = x;
    cache->reverse = reverse;
    cache->steps.resize(t_len);
  }
  for (std::size_t i = 0; i < t_len; ++i) {
    const std::size_t t = reverse ? t_len - 1 - i : i;
    cell.step_projected(state, gx.row(t), states.row(i), states.row(i + 1),
                        cache ? &cache->steps[i] : nullptr);
    std::copy_n(states.row(i + 1), hs, outputs.row(t));
  }
  if (cache) cache->states = std::move(states);
  return outputs;
}

Tensor GruSequence::backward(const GruCell& cell, const ModelState& state, const Cache& cache,
                             const Tensor& d_outputs, const std::vector<double>& d_final,
                             Gradients& grads) {
  const std::size_t t_len = cache.input.rows();
  const std::size_t hs = cell.hidden;
  Tensor dgx({t_len, 3 * hs});
  Tensor duh_all({t_len, 3 * hs});
  std::vector<double> dh(hs, 0.0);
  if (!d_final.empty()) dh = d_final;
  std::vector<double> dh_prev(hs);
  for (std::size_t i = t_len; i-- > 0;) {
    const std::size_t t = cache.reverse ? t_len - 1 - i : i;
    const double* dout = d_outputs.row(t);
    for (std::size_t j = 0; j < hs; ++j) dh[j] += dout[j];
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    cell.step_projected_backward(state, cache.steps[i], cache.states.row(i), dh.data(),
                                 dgx.row(t), duh_all.row(i), dh_prev.data());
    dh.swap(dh_prev);
  }
  // U gradient: states[0..T-1]ᵀ · duh (processing order).
  kernels::gemm_tn(cache.states.data(), duh_all.data(), grads[cell.w_hidden].data(), t_len, hs,
                   3 * hs);
  kernels::gemm_tn(cache.input.data(), dgx.data(), grads[cell.w_input].data(), t_len, cell.in,
                   3 * hs);
  double* db = grads[cell.bias].data();
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* g = dgx.row(t);
    for (std::size_t j = 0; j < 3 * hs; ++j) db[j] += g[j];
  }
  Tensor dx({t_len, cell.in});
  kernels::gemm_nt(dgx.data(), state.value(cell.w_input).data(), dx.data(), t_len, 3 * hs,
                   cell.in);
  return dx;
}

}  // namespace flapnet
