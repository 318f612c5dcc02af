// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flapnet/errors.hpp"
#include "flapnet/fft.hpp"
#include "flapnet/kernels.hpp"
#include "flapnet/layers.hpp"
#include "flapnet/tensor.hpp"
#include "oracles.hpp"

using namespace flapnet;

TEST_CASE("matmul identity and scalar") {
  Rng rng(1);
  Tensor a = oracle::random_tensor({3, 4}, rng);
  CHECK(max_abs_diff(matmul(Tensor::identity(3), a), a) == 0.0);
  Tensor s = matmul(Tensor::matrix(1, 1, {2.0}), Tensor::matrix(1, 1, {3.0}));
  CHECK(s[0] == 6.0);
}

TEST_CASE("matmul matches triple loop") {
  Rng rng(2);
  Tensor a = oracle::random_tensor({7, 5}, rng);
  Tensor b = oracle::random_tensor({5, 4}, rng);
  CHECK(max_abs_diff(matmul(a, b), oracle::triple_loop(a, b)) < 1e-12);
}

TEST_CASE("matmul shape mismatch throws") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("parallel matmul agrees with serial") {
  Rng rng(3);
  Tensor a = oracle::random_tensor({96, 80}, rng);
  Tensor b = oracle::random_tensor({80, 70}, rng);
  CHECK(max_abs_diff(matmul(a, b), matmul_parallel(a, b)) <= 1e-12);
}

TEST_CASE("transposed kernels match explicit transposes") {
  Rng rng(4);
  Tensor a = oracle::random_tensor({6, 4}, rng);
  Tensor b = oracle::random_tensor({6, 5}, rng);
  Tensor at({4, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  Tensor c({4, 5});
  kernels::gemm_tn(a.data(), b.data(), c.data(), 6, 4, 5);
  CHECK(max_abs_diff(c, oracle::triple_loop(at, b)) < 1e-12);

  Tensor d = oracle::random_tensor({3, 5}, rng);
  Tensor bt({5, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) bt(j, i) = b(i, j);
  Tensor e({3, 6});
  kernels::gemm_nt(d.data(), b.data(), e.data(), 3, 5, 6);
  CHECK(max_abs_diff(e, oracle::triple_loop(d, bt)) < 1e-12);
}

TEST_CASE("rfft trivial cases") {
  std::vector<double> ones{1, 1, 1, 1};
  Spectrum x = rfft(ones);
  REQUIRE(x.size() == 3);
  CHECK(std::abs(x[0] - Complex(4, 0)) < 1e-15);
  CHECK(std::abs(x[1]) < 1e-15);
  CHECK(std::abs(x[2]) < 1e-15);

  std::vector<double> tone(16);
  for (std::size_t n = 0; n < 16; ++n) tone[n] = std::cos(2.0 * std::numbers::pi * 3.0 * n / 16.0);
  Spectrum t = rfft(tone);
  for (std::size_t k = 0; k < t.size(); ++k) {
    CHECK(std::abs(t[k] - Complex(k == 3 ? 8.0 : 0.0, 0.0)) < 1e-12);
  }
}

TEST_CASE("rfft matches naive DFT") {
  Rng rng(5);
  for (std::size_t h : {8u, 64u, 512u}) {
    std::vector<double> x(h);
    for (auto& v : x) v = rng.uniform(-1, 1);
    Spectrum fast = rfft(x);
    auto slow = oracle::naive_dft(x);
    double scale = 0.0, err = 0.0;
    for (std::size_t k = 0; k < slow.size(); ++k) {
      scale = std::max(scale, std::abs(slow[k]));
      err = std::max(err, std::abs(fast[k] - slow[k]));
    }
    CHECK(err / scale < 1e-9);
  }
}

TEST_CASE("rfft rejects unsupported lengths") {
  CHECK_THROWS_AS(rfft(std::vector<double>(7)), UnsupportedLengthError);
  CHECK_THROWS_AS(rfft(std::vector<double>(12)), NonPowerOfTwoError);
  CHECK_THROWS_AS(rfft(std::vector<double>()), UnsupportedLengthError);
}

TEST_CASE("irfft trivial and defining cases") {
  std::vector<Complex> zeros(33);
  for (double v : irfft(zeros, 64)) CHECK(v == 0.0);
  std::vector<Complex> dc(33);
  dc[0] = 64.0;
  for (double v : irfft(dc, 64)) CHECK(std::abs(v - 1.0) < 1e-14);
  CHECK_THROWS_AS(irfft(zeros, 32), DimensionError);
}

TEST_CASE("irfft matches naive inverse") {
  Rng rng(6);
  std::vector<Complex> bins(17);
  for (auto& b : bins) b = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  bins[0].imag(0.0);
  bins[16].imag(0.0);
  auto fast = irfft(bins, 32);
  auto slow = oracle::naive_idft(bins, 32);
  for (std::size_t i = 0; i < 32; ++i) CHECK(std::abs(fast[i] - slow[i]) < 1e-12);
}

TEST_CASE("round trip and Parseval over powers of two") {
  Rng rng(7);
  for (std::size_t h = 8; h <= 4096; h *= 2) {
    std::vector<double> x(h);
    double peak = 0.0, energy = 0.0;
    for (auto& v : x) {
      v = rng.uniform(-3, 3);
      peak = std::max(peak, std::abs(v));
      energy += v * v;
    }
    Spectrum s = rfft(x);
    auto y = irfft(s, h);
    double err = 0.0;
    for (std::size_t i = 0; i < h; ++i) err = std::max(err, std::abs(x[i] - y[i]));
    CHECK(err < 1e-10 * peak);
    double spec = std::norm(s[0]) + std::norm(s[h / 2]);
    for (std::size_t k = 1; k < h / 2; ++k) spec += 2.0 * std::norm(s[k]);
    spec /= static_cast<double>(h);
    CHECK(std::abs(spec - energy) / energy < 1e-9);
  }
}

TEST_CASE("fft adjoints satisfy the inner-product identity") {
  // <rfft(x), g>_R == <x, rfft_backward(g)>, same for irfft.
  Rng rng(8);
  const std::size_t h = 32;
  std::vector<double> x(h), y(h);
  std::vector<Complex> g(h / 2 + 1), s(h / 2 + 1);
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : y) v = rng.uniform(-1, 1);
  for (auto& v : g) v = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  for (auto& v : s) v = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  s[0].imag(0.0);
  s[h / 2].imag(0.0);

  Spectrum fx = rfft(x);
  double lhs = 0.0;
  for (std::size_t k = 0; k < fx.size(); ++k) lhs += fx[k].real() * g[k].real() + fx[k].imag() * g[k].imag();
  auto bx = rfft_backward(g, h);
  double rhs = 0.0;
  for (std::size_t i = 0; i < h; ++i) rhs += x[i] * bx[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  auto is = irfft(s, h);
  double lhs2 = 0.0;
  for (std::size_t i = 0; i < h; ++i) lhs2 += is[i] * y[i];
  Spectrum by = irfft_backward(y);
  double rhs2 = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) rhs2 += s[k].real() * by[k].real() + s[k].imag() * by[k].imag();
  CHECK(lhs2 == doctest::Approx(rhs2).epsilon(1e-12));
}

TEST_CASE("activations") {
  Tensor x = Tensor::vector({-3.0, 0.0, 3.0});
  Tensor s = activate(x, Activation::kSigmoid);
  CHECK(s[1] == 0.5);
  Tensor r = activate(x, Activation::kRelu);
  CHECK(r[0] == 0.0);
  CHECK(r[2] == 3.0);
  Tensor si = activate(x, Activation::kSilu);
  CHECK(si[1] == 0.0);
  CHECK(si[2] == doctest::Approx(3.0 / (1.0 + std::exp(-3.0))));
  CHECK(activate(x, Activation::kTanh)[2] == doctest::Approx(std::tanh(3.0)));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("dropout") {
  Rng rng(9);
  Tensor x({1000}, 1.0);
  CHECK(dropout(x, 0.0, Mode::kTrain, rng) == x);
  CHECK(dropout(x, 0.0, Mode::kEval, rng) == x);
  CHECK(dropout(x, 0.1, Mode::kEval, rng) == x);
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::kTrain, rng), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, Mode::kTrain, rng), ConfigError);

  Tensor big({1000000}, 1.0);
  Tensor d = dropout(big, 0.1, Mode::kTrain, rng);
  double sum = 0.0;
  std::size_t bad = 0;
  for (double v : d.values()) {
    if (!(v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-15)) ++bad;
    sum += v;
  }
  CHECK(bad == 0);
  CHECK(std::abs(sum / 1e6 - 1.0) < 0.01);
}

TEST_CASE("dropout masks are seed-deterministic") {
  Rng a(42), b(42);
  Tensor x({500}, 1.0);
  CHECK(dropout(x, 0.3, Mode::kTrain, a) == dropout(x, 0.3, Mode::kTrain, b));
}

TEST_CASE("initialization is seed-deterministic and within bounds") {
  auto build = [](ModelState& s) {
    Linear::create(s, "fc", 9, 4);
  };
  ModelState s1, s2;
  build(s1);
  build(s2);
  Rng r1(11), r2(11);
  s1.init(r1);
  s2.init(r2);
  CHECK(s1.flatten() == s2.flatten());
  for (double v : s1.value(0).values()) CHECK(std::abs(v) <= 1.0 / 3.0);
  for (double v : s1.value(1).values()) CHECK(v == 0.0);
}

TEST_CASE("linear layer") {
  ModelState st;
  Linear fc = Linear::create(st, "fc", 3, 3);
  st.value(fc.weight) = Tensor::identity(3);
  Rng rng(12);
  Tensor x = oracle::random_tensor({2, 3}, rng);
  CHECK(max_abs_diff(fc.forward(st, x), x) == 0.0);

  Gradients g = st.zero_gradients();
  Tensor dx = fc.backward(st, x, Tensor({2, 3}), g);
  CHECK(max_abs(dx) == 0.0);
  CHECK(g.norm() == 0.0);
  CHECK_THROWS_AS(fc.forward(st, Tensor({2, 4})), DimensionError);
}

TEST_CASE("linear backward gives gW^T and passes grad_check") {
  ModelState st;
  Linear fc = Linear::create(st, "fc", 4, 3);
  Rng rng(13);
  st.init(rng);
  for (auto& v : st.value(fc.bias).values()) v = rng.uniform(-1, 1);
  Tensor x = oracle::random_tensor({3, 4}, rng);
  Tensor up = oracle::random_tensor({3, 3}, rng);

  Gradients g = st.zero_gradients();
  Tensor dx = fc.backward(st, x, up, g);
  const Tensor& w = st.value(fc.weight);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 4; ++i) {
      double ref = 0.0;
      for (std::size_t j = 0; j < 3; ++j) ref += up(r, j) * w(i, j);
      CHECK(dx(r, i) == doctest::Approx(ref).epsilon(1e-14));
    }

  auto loss = [&]() {
    Tensor y = fc.forward(st, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * up[i];
    return s;
  };
  CHECK(grad_check_params(st, loss, g) < 1e-6);
  auto loss_x = [&](std::span<const double> p) {
    Tensor xx({3, 4}, std::vector<double>(p.begin(), p.end()));
    Tensor y = fc.forward(st, xx);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * up[i];
    return s;
  };
  CHECK(grad_check(loss_x, x.span(), dx.span()) < 1e-6);
}

TEST_CASE("grad_check on x^2") {
  auto f = [](std::span<const double> p) { return p[0] * p[0]; };
  std::vector<double> pt{3.0}, g{6.0};
  CHECK(grad_check(f, pt, g) < 1e-8);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t({2, 3}, 1.0);
  CHECK(t.size() == shape_size(t.shape()));
  CHECK(t.all_finite());
  t[4] = std::nan("");
  CHECK_FALSE(t.all_finite());
}
