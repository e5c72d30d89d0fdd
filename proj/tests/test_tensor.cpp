#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "han/errors.hpp"
#include "han/ops.hpp"

using namespace han;
using han::testing::grad_check;
using han::testing::random_tensor;
using han::testing::weighted_sum;

namespace {

void check_values(const Tensor& t, const std::vector<Real>& expected, Real tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(t.at(i) == doctest::Approx(expected[i]).epsilon(tol));
  }
}

// Direct sliding-window cross-correlation, written independently of im2col.
std::vector<Real> naive_conv(const Tensor& x, const Tensor& k, std::size_t stride,
                             std::size_t pad) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<Real> out(n * co * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          Real s = 0;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                s += x.at(((b * ci + c) * h + iy) * w + ix) * k.at(((o * ci + c) * kh + i) * kw + j);
              }
          out[((b * co + o) * oh + y) * ow + xx] = s;
        }
  return out;
}

Real inner(const Tensor& a, const Tensor& b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i) * b.at(i);
  return s;
}

}  // namespace

TEST_CASE("elementwise arithmetic") {
  auto a = Tensor::from_data({2}, {1, 2});
  auto b = Tensor::from_data({2}, {3, 4});
  check_values(a + b, {4, 6});
  check_values(a - b, {-2, -2});
  check_values(a * b, {3, 8});
  check_values(-a, {-1, -2});
}

TEST_CASE("multiplying by one is the identity with an all-ones gradient") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({3, 4}, rng);
  auto y = mul(x, Tensor::full({3, 4}, 1.0));
  check_values(y, std::vector<Real>(x.data().begin(), x.data().end()));
  sum(y).backward();
  for (Real g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("broadcast gradients reduce back to the parameter shape") {
  std::mt19937_64 rng(2);
  auto row = Tensor::from_data({2}, {1, 2}, true);
  auto m = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  auto y = add(m, row);
  check_values(y, {2, 4, 4, 6, 6, 8});
  sum(y).backward();
  REQUIRE(row.grad().size() == 2);
  CHECK(row.grad()[0] == 3.0);
  CHECK(row.grad()[1] == 3.0);

  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({3, 2}, rng), random_tensor({2}, rng)};
    auto r = grad_check([&](auto& v) { return weighted_sum(mul(v[0], v[1]), 7); }, in);
    CHECK(r.worst < 1e-4);
    CHECK(in[1].grad().size() == 2);
    r = grad_check([&](auto& v) { return weighted_sum(sub(v[1], v[0]), 8); }, in);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("incompatible shapes name both operands") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({4});
  try {
    (void)add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("matmul") {
  auto id = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  check_values(matmul(id, m), {5, 6, 7, 8});
  check_values(matmul(Tensor::from_data({2, 2}, {1, 2, 3, 4}), Tensor::from_data({2, 1}, {1, 1})),
               {3, 7});
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    auto r = grad_check([](auto& v) { return weighted_sum(matmul(v[0], v[1]), 11); }, in);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("activations") {
  check_values(sigmoid(Tensor::from_data({3}, {0, 1, 40})), {0.5, 0.7310585786300049, 1.0});
  CHECK(sigmoid(Tensor::scalar(-800)).item() >= 0.0);
  CHECK(std::isfinite(sigmoid(Tensor::scalar(-800)).item()));
  CHECK(relu(Tensor::scalar(-3)).item() == 0.0);
  CHECK(elu(Tensor::scalar(0)).item() == 0.0);
  CHECK(elu(Tensor::scalar(-1)).item() == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
  CHECK(elu(Tensor::scalar(-1)).item() == doctest::Approx(-0.63212).epsilon(1e-5));

  auto kink = Tensor::scalar(0.0, true);
  relu(kink).backward();
  CHECK(kink.grad()[0] == 0.0);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({4, 5}, rng, -3, 3)};
    CHECK(grad_check([](auto& v) { return weighted_sum(sigmoid(v[0]), 1); }, in).worst < 1e-3);
    CHECK(grad_check([](auto& v) { return weighted_sum(elu(v[0]), 2); }, in).worst < 1e-3);
    CHECK(grad_check([](auto& v) { return weighted_sum(relu(v[0]), 3); }, in).worst < 1e-3);
  }
}

TEST_CASE("reductions, log, clamp, upsample") {
  CHECK(mean(Tensor::from_data({2}, {2, 4})).item() == 3.0);
  CHECK(sum(Tensor::from_data({3}, {1, 2, 3})).item() == 6.0);
  check_values(upsample_nearest(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}), 2),
               {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  check_values(clamp(Tensor::from_data({3}, {-1, 0.5, 2}), 0, 1), {0, 0.5, 1});
  CHECK_THROWS_AS(log(Tensor::from_data({2}, {1, 0})), std::domain_error);
  CHECK_THROWS_AS(log(Tensor::from_data({1}, {std::nan("")})), NumericalError);
  CHECK_THROWS(clamp(Tensor::scalar(0), 1, 0));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({2, 3, 2, 2}, rng, 0.1, 2.0)};
    CHECK(grad_check([](auto& v) { return weighted_sum(log(v[0]), 4); }, in).worst < 1e-5);
    CHECK(grad_check([](auto& v) { return weighted_sum(mean_spatial(v[0]), 5); }, in).worst < 1e-4);
    CHECK(grad_check([](auto& v) { return weighted_sum(upsample_nearest(v[0], 2), 6); }, in).worst < 1e-4);
    CHECK(grad_check([](auto& v) { return weighted_sum(clamp(v[0], 0.5, 1.5), 7); }, in).worst < 1e-3);
    CHECK(grad_check([](auto& v) { return mean(v[0]); }, in).worst < 1e-4);
  }
}

TEST_CASE("concat_channels") {
  std::mt19937_64 rng(6);
  auto a = random_tensor({1, 2, 4, 4}, rng);
  auto b = random_tensor({1, 3, 4, 4}, rng);
  CHECK(concat_channels(a, Tensor()).impl() == a.impl());
  auto c = concat_channels(a, b);
  CHECK(c.shape() == Shape{1, 5, 4, 4});
  CHECK_THROWS_AS(concat_channels(a, random_tensor({1, 3, 2, 4}, rng)), ShapeError);

  weighted_sum(c, 9).backward();
  std::mt19937_64 wrng(9);
  auto w = random_tensor(c.shape(), wrng, -1, 1, false);
  // Upstream slice [0:2) lands on a, [2:5) on b.
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.grad()[i] == w.at(i));
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(b.grad()[i] == w.at(a.numel() + i));

  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng)};
    CHECK(grad_check([](auto& v) { return weighted_sum(concat_channels(v[0], v[1]), 10); }, in)
              .worst < 1e-4);
  }
}

TEST_CASE("conv2d") {
  std::mt19937_64 rng(7);
  auto x = random_tensor({2, 3, 5, 5}, rng);
  Tensor unit = Tensor::zeros({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) unit.mutable_data()[c * 3 + c] = 1.0;
  check_values(conv2d(x, unit, 1, 0), std::vector<Real>(x.data().begin(), x.data().end()));

  auto seven = Tensor::full({1, 1, 6, 6}, 7.0);
  auto ones = Tensor::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(seven, ones, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 6, 6});
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 1; c < 5; ++c) CHECK(y.at(r * 6 + c) == 63.0);
  CHECK(y.at(0) == 28.0);

  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    auto xi = random_tensor({2, 2, 7, 6}, rng);
    auto ki = random_tensor({3, 2, 3, 3}, rng);
    check_values(conv2d(xi, ki, stride, pad), naive_conv(xi, ki, stride, pad), 1e-12);
  }

  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), 1, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), 1, 0), ShapeError);

  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({1, 2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
                           random_tensor({3}, rng)};
    auto r = grad_check(
        [](auto& v) { return weighted_sum(conv2d(v[0], v[1], v[2], {2, 1}), 12); }, in);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("conv2d_transpose is the adjoint of conv2d") {
  std::mt19937_64 rng(8);
  auto x = random_tensor({1, 2, 3, 3}, rng);
  Tensor unit = Tensor::zeros({2, 2, 1, 1});
  unit.mutable_data()[0] = 1.0;
  unit.mutable_data()[3] = 1.0;
  check_values(conv2d_transpose(x, unit, 1, 0), std::vector<Real>(x.data().begin(), x.data().end()));
  CHECK(conv2d_transpose(random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng), 2, 1)
            .shape() == Shape{1, 3, 8, 8});
  CHECK_THROWS_AS(conv2d_transpose(Tensor::zeros({1, 1, 1, 1}), Tensor::zeros({1, 1, 2, 2}), 1, 1),
                  ShapeError);

  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t stride = 1 + trial % 2, pad = trial % 3 == 0 ? 0 : 1;
    auto k = random_tensor({3, 2, 3, 3}, rng);
    auto xi = random_tensor({2, 2, 7, 7}, rng);
    auto cx = conv2d(xi, k, stride, pad);
    auto yi = random_tensor(cx.shape(), rng);
    auto ty = conv2d_transpose(yi, k, stride, pad);
    if (ty.shape() != xi.shape()) continue;  // floor geometry drops a row
    CHECK(std::abs(inner(cx, yi) - inner(xi, ty)) < 1e-6);
  }

  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> in{random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 4, 4}, rng),
                           random_tensor({2}, rng)};
    auto r = grad_check(
        [](auto& v) { return weighted_sum(conv2d_transpose(v[0], v[1], v[2], {2, 1}), 13); }, in);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("batchnorm2d") {
  Tensor gamma = Tensor::full({2}, 1.0, true);
  Tensor beta = Tensor::from_data({2}, {0.25, -0.5}, true);
  Tensor rm = Tensor::zeros({2});
  Tensor rv = Tensor::full({2}, 1.0);

  std::vector<Real> v(2 * 2 * 3 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ((i / 9) % 2 == 0) ? 3.0 : -2.0;
  auto constant = Tensor::from_data({2, 2, 3, 3}, v);
  auto out = batchnorm2d(constant, gamma, beta, rm, rv, Mode::Train);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    CHECK(out.at(i) == doctest::Approx((i / 9) % 2 == 0 ? 0.25 : -0.5).epsilon(1e-12));
  }
  CHECK(rm.at(0) == doctest::Approx(0.3));
  CHECK(rm.at(1) == doctest::Approx(-0.2));

  std::mt19937_64 rng(9);
  auto x = random_tensor({4, 3, 5, 5}, rng, -2, 5);
  Tensor g1 = Tensor::full({3}, 1.0), b0 = Tensor::zeros({3});
  Tensor m3 = Tensor::zeros({3}), v3 = Tensor::full({3}, 1.0);
  auto y = batchnorm2d(x, g1, b0, m3, v3, Mode::Train);
  for (std::size_t k = 0; k < 3; ++k) {
    Real s = 0, ss = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t j = 0; j < 25; ++j) s += y.at((b * 3 + k) * 25 + j);
    const Real mu = s / 100;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t j = 0; j < 25; ++j) ss += std::pow(y.at((b * 3 + k) * 25 + j) - mu, 2);
    CHECK(std::abs(mu) < 1e-12);
    CHECK(ss / 100 == doctest::Approx(1.0).epsilon(1e-4));
  }

  Tensor one_m = Tensor::zeros({1}), one_v = Tensor::full({1}, 1.0);
  CHECK_THROWS_AS(batchnorm2d(Tensor::zeros({1, 1, 1, 1}), Tensor::full({1}, 1.0), Tensor::zeros({1}),
                              one_m, one_v, Mode::Train),
                  ShapeError);

  for (int trial = 0; trial < 5; ++trial) {
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      Tensor m = random_tensor({3}, rng, -0.5, 0.5, false);
      Tensor var = random_tensor({3}, rng, 0.5, 1.5, false);
      std::vector<Tensor> in{random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5, 1.5),
                             random_tensor({3}, rng)};
      auto r = grad_check(
          [&](auto& t) { return weighted_sum(batchnorm2d(t[0], t[1], t[2], m, var, mode), 14); }, in);
      CHECK(r.worst < 1e-3);
    }
  }
}

TEST_CASE("backward reaches exactly the tensors on the path") {
  auto a = Tensor::scalar(2.0, true);
  auto b = Tensor::scalar(3.0, true);
  auto unused = Tensor::scalar(5.0, true);
  auto frozen = Tensor::scalar(7.0);
  auto loss = add(mul(a, b), frozen);
  auto side = mul(unused, a);
  loss.backward();
  CHECK(a.grad()[0] == 3.0);
  CHECK(b.grad()[0] == 2.0);
  CHECK_FALSE(unused.has_grad());
  CHECK_FALSE(frozen.has_grad());
  CHECK(side.requires_grad());

  // Diamond: each node runs once, gradient accumulates over both paths.
  auto x = Tensor::scalar(1.5, true);
  auto s = sigmoid(x);
  auto d = add(mul(s, s), s);
  d.backward();
  const Real sv = 1 / (1 + std::exp(-1.5));
  CHECK(x.grad()[0] == doctest::Approx((2 * sv + 1) * sv * (1 - sv)));
  CHECK(detail::last_backward_node_count() == 3);

  {
    NoGradGuard guard;
    auto z = mul(a, b);
    CHECK_FALSE(z.requires_grad());
  }
  CHECK(grad_enabled());
  CHECK_THROWS(Tensor::zeros({2}, true).backward());
}
