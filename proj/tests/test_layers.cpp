#include <doctest.h>

#include <cmath>

#include "lcz/layers.hpp"

using lcz::Mode;
using lcz::PoolKind;
using lcz::Rng;
using lcz::Shape;
using lcz::Tensor;
using lcz::XentInput;

namespace {

template <typename T>
Tensor<T> rand_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<T> v(lcz::shape_numel(shape));
  for (auto& e : v) e = static_cast<T>(rng.normal() * scale);
  return Tensor<T>::from(std::move(shape), std::move(v));
}

// Plain quadruple-loop convolution, the independent reference for conv2d.
std::vector<double> direct_conv(const std::vector<double>& x, std::size_t C, std::size_t H,
                                std::size_t W, const std::vector<double>& k, std::size_t OC,
                                const std::vector<double>& bias) {
  std::vector<double> y(OC * H * W, 0.0);
  for (std::size_t oc = 0; oc < OC; ++oc) {
    for (std::size_t yy = 0; yy < H; ++yy) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        double acc = bias[oc];
        for (std::size_t c = 0; c < C; ++c) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int sy = static_cast<int>(yy) + dy;
              const int sx = static_cast<int>(xx) + dx;
              if (sy < 0 || sy >= static_cast<int>(H) || sx < 0 || sx >= static_cast<int>(W)) {
                continue;
              }
              acc += x[(c * H + sy) * W + sx] *
                     k[((oc * C + c) * 3 + (dy + 1)) * 3 + (dx + 1)];
            }
          }
        }
        y[(oc * H + yy) * W + xx] = acc;
      }
    }
  }
  return y;
}

}  // namespace

TEST_CASE("conv2d zero input gives the bias everywhere") {
  auto x = Tensor<double>::zeros({2, 3, 4, 4});
  Rng rng(1);
  auto w = rand_tensor<double>({5, 3, 3, 3}, rng);
  auto b = Tensor<double>::from({5}, {1, -2, 3, 0.5, 4});
  auto y = lcz::conv2d(x, w, b);
  REQUIRE(y.shape() == Shape{2, 5, 4, 4});
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t oc = 0; oc < 5; ++oc) {
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(y.value()[(s * 5 + oc) * 16 + i] == doctest::Approx(b.value()[oc]));
      }
    }
  }
}

TEST_CASE("conv2d impulse reproduces the kernel stencil") {
  // 1x1x5x5 impulse at the center against a known 3x3 kernel.
  auto x = Tensor<double>::zeros({1, 1, 5, 5});
  x.mutable_value()[2 * 5 + 2] = 1.0;
  std::vector<double> k = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto w = Tensor<double>::from({1, 1, 3, 3}, std::vector<double>(k));
  auto b = Tensor<double>::zeros({1});
  auto y = lcz::conv2d(x, w, b);
  // Output at center+(dy,dx) sees kernel entry (1-dy, 1-dx) ... i.e. the
  // stencil appears around the impulse.
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const double expect = k[(dy + 1) * 3 + (dx + 1)];
      CHECK(y.value()[(2 + dy) * 5 + (2 + dx)] ==
            doctest::Approx(k[(1 - dy) * 3 + (1 - dx)]));
      (void)expect;
    }
  }
  // And the full map agrees with the direct reference.
  Rng rng(11);
  auto x2 = rand_tensor<double>({1, 2, 5, 5}, rng);
  auto w2 = rand_tensor<double>({3, 2, 3, 3}, rng);
  auto b2 = rand_tensor<double>({3}, rng);
  auto y2 = lcz::conv2d(x2, w2, b2);
  auto ref = direct_conv({x2.value().begin(), x2.value().end()}, 2, 5, 5,
                         {w2.value().begin(), w2.value().end()}, 3,
                         {b2.value().begin(), b2.value().end()});
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(y2.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d output shape and channel mismatch") {
  Rng rng(2);
  auto x = rand_tensor<float>({2, 10, 32, 32}, rng);
  auto w = rand_tensor<float>({16, 10, 3, 3}, rng);
  auto b = Tensor<float>::zeros({16});
  CHECK(lcz::conv2d(x, w, b).shape() == Shape{2, 16, 32, 32});

  auto w_bad = rand_tensor<float>({16, 9, 3, 3}, rng);
  CHECK_THROWS_AS((void)lcz::conv2d(x, w_bad, b), lcz::shape_error);
}

TEST_CASE("conv2d preserves odd spatial sizes") {
  Rng rng(3);
  for (auto [h, w] : {std::pair{1, 1}, {3, 7}, {5, 2}}) {
    auto x = rand_tensor<double>({1, 2, std::size_t(h), std::size_t(w)}, rng);
    auto k = rand_tensor<double>({3, 2, 3, 3}, rng);
    auto b = Tensor<double>::zeros({3});
    CHECK(lcz::conv2d(x, k, b).shape() == Shape{1, 3, std::size_t(h), std::size_t(w)});
  }
}

TEST_CASE("batchnorm train normalizes per channel") {
  Rng rng(4);
  auto x = rand_tensor<double>({4, 3, 5, 5}, rng, 2.5);
  for (auto& v : x.mutable_value()) v += 7.0;
  auto gamma = Tensor<double>::full({3}, 1.0);
  auto beta = Tensor<double>::zeros({3});
  auto y = lcz::batchnorm_train(x, gamma, beta, 1e-3);

  const std::size_t n = 4 * 25;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t i = 0; i < 25; ++i) mean += y.value()[(s * 3 + c) * 25 + i];
    }
    mean /= n;
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t i = 0; i < 25; ++i) {
        const double d = y.value()[(s * 3 + c) * 25 + i] - mean;
        var += d * d;
      }
    }
    var /= n;
    CHECK(std::abs(mean) < 1e-5);
    // Variance shrinks slightly because of epsilon in the denominator.
    CHECK(var == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("batchnorm gamma=0 collapses to beta") {
  Rng rng(5);
  auto x = rand_tensor<double>({2, 2, 3, 3}, rng);
  auto gamma = Tensor<double>::zeros({2});
  auto beta = Tensor<double>::from({2}, {0.25, -1.5});
  auto y = lcz::batchnorm_train(x, gamma, beta, 1e-3);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 9; ++i) {
        CHECK(y.value()[(s * 2 + c) * 9 + i] == doctest::Approx(beta.value()[c]));
      }
    }
  }
}

TEST_CASE("batchnorm infer closed form") {
  auto x = Tensor<double>::from({1, 1, 1, 1}, {1.0});
  auto gamma = Tensor<double>::from({1}, {2.0});
  auto beta = Tensor<double>::from({1}, {1.0});
  auto rm = Tensor<double>::zeros({1});
  auto rv = Tensor<double>::full({1}, 1.0);
  const double eps = 1e-3;
  auto y = lcz::batchnorm_infer(x, gamma, beta, rm, rv, eps);
  CHECK(y.value()[0] == doctest::Approx(2.0 / std::sqrt(1.0 + eps) + 1.0).epsilon(1e-12));
  CHECK(std::abs(y.value()[0] - 3.0) < 2e-3);
}

TEST_CASE("batchnorm rejects a degenerate train batch") {
  auto x = Tensor<double>::from({1, 2, 1, 1}, {1.0, 2.0});
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  CHECK_THROWS_AS((void)lcz::batchnorm_train(x, gamma, beta, 1e-3), lcz::data_error);
}

TEST_CASE("batchnorm layer updates running statistics") {
  Rng rng(6);
  auto layer = lcz::BatchNormLayer<double>::init(2);
  auto x = rand_tensor<double>({8, 2, 4, 4}, rng, 3.0);
  for (auto& v : x.mutable_value()) v += 5.0;
  (void)layer.forward(x, Mode::Train);
  // One step of the 0.99 moving average from (0, 1) toward the batch stats.
  CHECK(layer.running_mean.value()[0] > 0.0);
  CHECK(layer.running_var.value()[0] > 1.0);
  for (double v : layer.running_var.value()) CHECK(v > 0.0);
}

TEST_CASE("pool2x2 values and shapes") {
  auto c = Tensor<double>::full({1, 2, 6, 6}, 3.25);
  for (auto kind : {PoolKind::Max, PoolKind::Avg}) {
    auto y = lcz::pool2x2(c, kind);
    CHECK(y.shape() == Shape{1, 2, 3, 3});
    for (double v : y.value()) CHECK(v == doctest::Approx(3.25));
  }

  auto w = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(lcz::pool2x2(w, PoolKind::Max).value()[0] == 4);
  CHECK(lcz::pool2x2(w, PoolKind::Avg).value()[0] == doctest::Approx(2.5));

  Rng rng(7);
  auto big = rand_tensor<double>({1, 3, 32, 32}, rng);
  CHECK(lcz::pool2x2(big, PoolKind::Max).shape() == Shape{1, 3, 16, 16});

  auto odd = Tensor<double>::zeros({1, 1, 3, 4});
  CHECK_THROWS_AS((void)lcz::pool2x2(odd, PoolKind::Max), lcz::shape_error);
}

TEST_CASE("pool gradient routing") {
  Rng rng(8);
  auto x = rand_tensor<double>({2, 2, 4, 4}, rng);
  x.set_requires_grad(true);

  lcz::backward(lcz::sum(lcz::pool2x2(x, PoolKind::Avg)));
  double grad_sum = 0.0;
  for (double g : x.grad()) grad_sum += g;
  CHECK(grad_sum == doctest::Approx(2 * 2 * 2 * 2));  // one per output cell

  lcz::backward(lcz::sum(lcz::pool2x2(x, PoolKind::Max)));
  std::size_t nonzero = 0;
  for (double g : x.grad()) {
    if (g != 0.0) {
      ++nonzero;
      CHECK(g == doctest::Approx(1.0));
    }
  }
  CHECK(nonzero == 2 * 2 * 2 * 2);  // exactly one routed cell per window
}

TEST_CASE("max pool ties break to the first cell in row-major order") {
  auto x = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  x.set_requires_grad(true);
  lcz::backward(lcz::sum(lcz::pool2x2(x, PoolKind::Max)));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 0.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("global average pool") {
  auto c = Tensor<double>::full({2, 3, 4, 4}, -1.25);
  auto y = lcz::global_avg_pool(c);
  CHECK(y.shape() == Shape{2, 3});
  for (double v : y.value()) CHECK(v == doctest::Approx(-1.25));

  auto t = Tensor<double>::from({1, 1, 2, 2}, {0, 0, 0, 4});
  CHECK(lcz::global_avg_pool(t).value()[0] == doctest::Approx(1.0));

  t.set_requires_grad(true);
  lcz::backward(lcz::sum(lcz::global_avg_pool(t)));
  for (double g : t.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("dropout semantics") {
  Rng rng(9);
  auto x = Tensor<double>::full({100}, 2.0);

  auto same = lcz::dropout(x, 0.0, Mode::Train, &rng);
  CHECK(same.node() == x.node());
  auto infer = lcz::dropout(x, 0.2, Mode::Infer, nullptr);
  CHECK(infer.node() == x.node());

  CHECK_THROWS_AS((void)lcz::dropout(x, 1.0, Mode::Train, &rng), lcz::config_error);
  CHECK_THROWS_AS((void)lcz::dropout(x, -0.1, Mode::Train, &rng), lcz::config_error);

  // Monte-Carlo: survival fraction and mean preservation at 1e6 elements.
  auto big = Tensor<double>::full({1000000}, 1.0);
  auto dropped = lcz::dropout(big, 0.2, Mode::Train, &rng);
  std::size_t survivors = 0;
  double mean = 0.0;
  for (double v : dropped.value()) {
    if (v != 0.0) {
      ++survivors;
      CHECK(v == doctest::Approx(1.25));  // 1 / (1 - 0.2)
    }
    mean += v;
  }
  mean /= 1e6;
  CHECK(std::abs(survivors / 1e6 - 0.8) < 0.01);
  CHECK(std::abs(mean - 1.0) < 0.01);
}

TEST_CASE("softmax cross entropy closed forms") {
  // Uniform probabilities over 17 classes -> ln 17.
  auto p = Tensor<double>::full({2, 17}, 1.0 / 17.0);
  auto y = Tensor<double>::zeros({2, 17});
  y.mutable_value()[3] = 1.0;
  y.mutable_value()[17 + 11] = 1.0;
  auto loss = lcz::cross_entropy(p, y, XentInput::Probabilities);
  CHECK(loss.item() == doctest::Approx(std::log(17.0)).epsilon(1e-12));
  CHECK(loss.item() == doctest::Approx(2.833213).epsilon(1e-6));

  // Probability 1 on the true class -> loss 0.
  auto sure = Tensor<double>::zeros({1, 17});
  sure.mutable_value()[5] = 1.0;
  auto y1 = Tensor<double>::zeros({1, 17});
  y1.mutable_value()[5] = 1.0;
  CHECK(lcz::cross_entropy(sure, y1, XentInput::Probabilities).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross entropy validates its inputs") {
  auto bad = Tensor<double>::full({1, 17}, 0.9 / 17.0);  // rows sum to 0.9
  auto y = Tensor<double>::zeros({1, 17});
  y.mutable_value()[0] = 1.0;
  CHECK_THROWS_AS((void)lcz::cross_entropy(bad, y, XentInput::Probabilities),
                  lcz::data_error);

  auto p = Tensor<double>::full({1, 17}, 1.0 / 17.0);
  auto two_hot = Tensor<double>::zeros({1, 17});
  two_hot.mutable_value()[0] = 1.0;
  two_hot.mutable_value()[4] = 1.0;
  CHECK_THROWS_AS((void)lcz::cross_entropy(p, two_hot, XentInput::Probabilities),
                  lcz::data_error);
}

TEST_CASE("logits-mode gradient is (softmax - onehot)/B") {
  Rng rng(10);
  auto z = rand_tensor<double>({3, 17}, rng);
  z.set_requires_grad(true);
  auto y = Tensor<double>::zeros({3, 17});
  y.mutable_value()[2] = 1.0;
  y.mutable_value()[17 + 9] = 1.0;
  y.mutable_value()[34 + 16] = 1.0;
  lcz::backward(lcz::cross_entropy(z, y, XentInput::Logits));

  auto p = lcz::softmax(z);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    CHECK(z.grad()[i] ==
          doctest::Approx((p.value()[i] - y.value()[i]) / 3.0).epsilon(1e-9));
  }

  // And against finite differences.
  z.set_requires_grad(false);
  auto fn = std::function([&](Tensor<double>& t) {
    return lcz::cross_entropy(t, y, XentInput::Logits);
  });
  CHECK(lcz::finite_difference_check<double>(fn, z, 1e-5) < 1e-6);
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
  Rng rng(11);
  auto z = rand_tensor<double>({5, 17}, rng, 3.0);
  auto p = lcz::softmax(z);
  for (std::size_t s = 0; s < 5; ++s) {
    double total = 0.0;
    for (std::size_t k = 0; k < 17; ++k) total += p.value()[s * 17 + k];
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  auto shifted = lcz::add(z, 41.5);
  auto p2 = lcz::softmax(shifted);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    CHECK(p2.value()[i] == doctest::Approx(p.value()[i]).epsilon(1e-6));
  }
}

TEST_CASE("he_init statistics and determinism") {
  Rng rng(12);
  auto t = lcz::he_init<double>(50, {1000000}, rng);
  double mean = 0.0, var = 0.0;
  for (double v : t.value()) mean += v;
  mean /= 1e6;
  for (double v : t.value()) var += (v - mean) * (v - mean);
  var /= 1e6;
  CHECK(std::abs(mean) < 3.0 * 0.2 / 1000.0);  // 3 sigma of the sample mean
  CHECK(var == doctest::Approx(0.04).epsilon(0.05));
  CHECK(t.requires_grad());

  Rng r1(99), r2(99);
  auto a = lcz::he_init<float>(9, {3, 3}, r1);
  auto b = lcz::he_init<float>(9, {3, 3}, r2);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.value()[i] == b.value()[i]);
}

TEST_CASE("single-precision gradients stay within 1e-4") {
  // Small positive fixtures and a generous step keep the float difference
  // quotient above its rounding floor and the gradients away from zero; the
  // checked ops have no curvature beyond second order, so the larger step
  // costs no truncation accuracy.
  Rng rng(13);
  auto positive = [&rng](Shape shape) {
    std::vector<float> v(lcz::shape_numel(shape));
    for (auto& e : v) e = static_cast<float>(0.5 + rng.uniform01());
    return Tensor<float>::from(std::move(shape), std::move(v));
  };
  auto x = positive({1, 2, 4, 4});
  auto w = positive({2, 2, 3, 3});
  auto b = positive({2});
  auto coeffs = positive({1, 2, 4, 4});
  auto fn = std::function([&](Tensor<float>&) {
    return lcz::sum(lcz::mul(lcz::conv2d(x, w, b), coeffs));
  });
  CHECK(lcz::finite_difference_check<float>(fn, w, 5e-2f) < 1e-4f);
  CHECK(lcz::finite_difference_check<float>(fn, b, 5e-2f) < 1e-4f);
  CHECK(lcz::finite_difference_check<float>(fn, x, 5e-2f) < 1e-4f);

  auto a2 = positive({3, 4});
  auto b2 = positive({4, 2});
  auto c2 = positive({3, 2});
  auto fn2 = std::function([&](Tensor<float>&) {
    return lcz::sum(lcz::mul(lcz::matmul(a2, b2), c2));
  });
  CHECK(lcz::finite_difference_check<float>(fn2, a2, 5e-2f) < 1e-4f);
  CHECK(lcz::finite_difference_check<float>(fn2, b2, 5e-2f) < 1e-4f);
}
