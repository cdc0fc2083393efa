#include "lcz/gradcheck.hpp"

#include "lcz/model.hpp"
#include "lcz/rng.hpp"

namespace lcz {

namespace {

constexpr double kEps = 1e-5;
constexpr double kLayerTol = 1e-6;
constexpr double kModelTol = 1e-4;

using DTensor = Tensor<double>;
using Fn = std::function<DTensor(DTensor&)>;

DTensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& e : v) e = rng.normal() * scale;
  return DTensor::from(std::move(shape), std::move(v));
}

// Random values bounded away from zero, for kinked activations.
DTensor random_offzero(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& e : v) {
    const double mag = 0.05 + 0.95 * rng.uniform01();
    e = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return DTensor::from(std::move(shape), std::move(v));
}

DTensor onehot_rows(std::size_t B, std::size_t K, Rng& rng) {
  DTensor t = DTensor::zeros({B, K});
  auto v = t.mutable_value();
  for (std::size_t s = 0; s < B; ++s) v[s * K + rng.below(K)] = 1.0;
  return t;
}

// Scalar head for vector-valued layers: a fixed random projection.
DTensor project(const DTensor& y, const DTensor& coeffs) { return sum(mul(y, coeffs)); }

double check_many(const Fn& fn, std::vector<DTensor> wrt) {
  double worst = 0.0;
  for (auto& t : wrt) {
    worst = std::max(worst, finite_difference_check<double>(fn, t, kEps));
  }
  return worst;
}

// Whole-model check over every trainable parameter. Two departures from the
// plain per-op harness, both for degeneracies the rel-err formula cannot
// express: coordinates whose analytic and central-difference values are both
// below 1e-6 count as agreeing (conv biases are exactly cancelled by the
// following batch norm, so their true gradient is zero and the difference
// quotient is pure rounding noise), and coordinates that fail at the primary
// step size are re-probed at smaller steps, which separates a genuine
// backward defect (wrong at every step size) from a ReLU or max-pool kink
// falling inside the probed interval.
GradCheckLine check_model(Rng& rng) {
  ModelConfig config;
  config.f = 4;
  config.n = 1;
  config.fusion = true;
  config.dropout_rate = 0.0;  // the stochastic mask is checked separately
  Rng init(mix_seed(77, 0));
  Model<double> model = build<double>(config, &init);

  DTensor x = random_tensor({2, 10, 32, 32}, rng);
  DTensor labels = onehot_rows(2, 17, rng);
  auto loss_fn = [&]() {
    auto fwd = model.forward(x, Mode::Train, nullptr);
    return fused_loss(fwd.head_probs, labels).item();
  };

  constexpr double kZeroFloor = 1e-6;
  double worst = 0.0;
  for (const auto& e : model.registry()) {
    if (!e.trainable) continue;
    DTensor param = e.tensor;

    auto fwd = model.forward(x, Mode::Train, nullptr);
    backward(fused_loss(fwd.head_probs, labels));
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());

    for (const auto& other : model.registry()) {
      DTensor t = other.tensor;
      t.set_requires_grad(false);
    }
    auto values = param.mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      double err = 0.0;
      for (const double eps : {kEps, 3e-6, 1e-6}) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double fp = loss_fn();
        values[i] = saved - eps;
        const double fm = loss_fn();
        values[i] = saved;
        const double cd = (fp - fm) / (2.0 * eps);
        if (std::max(std::abs(analytic[i]), std::abs(cd)) <= kZeroFloor) {
          err = 0.0;
          break;
        }
        const double denom = std::max({std::abs(analytic[i]), std::abs(cd), 1e-12});
        err = std::abs(analytic[i] - cd) / denom;
        if (err < kModelTol) break;
      }
      worst = std::max(worst, err);
    }
    for (const auto& other : model.registry()) {
      DTensor t = other.tensor;
      t.set_requires_grad(other.trainable);
    }
  }
  return {"model_f4n1_fusion", worst, kModelTol};
}

}  // namespace

GradCheckReport run_gradcheck() {
  GradCheckReport report;
  Rng rng(314159);

  {
    DTensor x = random_tensor({2, 3, 5, 4}, rng);
    DTensor w = random_tensor({4, 3, 3, 3}, rng, 0.5);
    DTensor b = random_tensor({4}, rng, 0.5);
    DTensor coeffs = random_tensor({2, 4, 5, 4}, rng);
    Fn fn = [&](DTensor&) { return project(conv2d(x, w, b), coeffs); };
    report.lines.push_back({"conv2d", check_many(fn, {x, w, b}), kLayerTol});
  }
  {
    DTensor x = random_tensor({3, 4, 2, 2}, rng);
    DTensor gamma = random_tensor({4}, rng, 0.3);
    for (auto& v : gamma.mutable_value()) v += 1.0;
    DTensor beta = random_tensor({4}, rng, 0.3);
    DTensor coeffs = random_tensor({3, 4, 2, 2}, rng);
    Fn fn = [&](DTensor&) { return project(batchnorm_train(x, gamma, beta, 1e-3), coeffs); };
    report.lines.push_back({"batchnorm", check_many(fn, {x, gamma, beta}), kLayerTol});
  }
  {
    DTensor x = random_tensor({2, 3, 4, 4}, rng);
    DTensor coeffs = random_tensor({2, 3, 2, 2}, rng);
    Fn fn = [&](DTensor&) { return project(pool2x2(x, PoolKind::Max), coeffs); };
    report.lines.push_back({"pool2x2_max", check_many(fn, {x}), kLayerTol});
  }
  {
    DTensor x = random_tensor({2, 3, 4, 4}, rng);
    DTensor coeffs = random_tensor({2, 3, 2, 2}, rng);
    Fn fn = [&](DTensor&) { return project(pool2x2(x, PoolKind::Avg), coeffs); };
    report.lines.push_back({"pool2x2_avg", check_many(fn, {x}), kLayerTol});
  }
  {
    DTensor x = random_tensor({2, 5, 3, 3}, rng);
    DTensor coeffs = random_tensor({2, 5}, rng);
    Fn fn = [&](DTensor&) { return project(global_avg_pool(x), coeffs); };
    report.lines.push_back({"global_avg_pool", check_many(fn, {x}), kLayerTol});
  }
  {
    DTensor x = random_tensor({3, 7}, rng);
    DTensor w = random_tensor({7, 4}, rng, 0.5);
    DTensor b = random_tensor({4}, rng, 0.5);
    DTensor coeffs = random_tensor({3, 4}, rng);
    Fn fn = [&](DTensor&) { return project(dense(x, w, b), coeffs); };
    report.lines.push_back({"dense", check_many(fn, {x, w, b}), kLayerTol});
  }
  {
    DTensor a = random_tensor({3, 4}, rng);
    DTensor b = random_tensor({4, 2}, rng);
    DTensor coeffs = random_tensor({3, 2}, rng);
    Fn fn = [&](DTensor&) { return project(matmul(a, b), coeffs); };
    report.lines.push_back({"matmul", check_many(fn, {a, b}), kLayerTol});
  }
  {
    DTensor x = random_offzero({2, 9}, rng);
    DTensor coeffs = random_tensor({2, 9}, rng);
    Fn fn = [&](DTensor&) { return project(relu(x), coeffs); };
    report.lines.push_back({"relu", check_many(fn, {x}), kLayerTol});
  }
  {
    // Reseeding per evaluation freezes the mask, making the op deterministic
    // for the harness while still exercising the masked backward path.
    DTensor x = random_offzero({4, 6}, rng);
    DTensor coeffs = random_tensor({4, 6}, rng);
    Fn fn = [&](DTensor&) {
      Rng mask_rng(9001);
      return project(dropout(x, 0.3, Mode::Train, &mask_rng), coeffs);
    };
    report.lines.push_back({"dropout", check_many(fn, {x}), kLayerTol});
  }
  {
    DTensor x = random_tensor({2, 3, 4, 4}, rng);
    DTensor coeffs = random_tensor({2, 6, 2, 2}, rng);
    Fn fn = [&](DTensor&) { return project(double_pool(x), coeffs); };
    report.lines.push_back({"double_pool", check_many(fn, {x}), kLayerTol});
  }
  {
    DTensor z = random_tensor({4, 17}, rng);
    DTensor labels = onehot_rows(4, 17, rng);
    Fn fn = [&](DTensor&) { return cross_entropy(z, labels, XentInput::Logits); };
    report.lines.push_back({"softmax_xent_logits", check_many(fn, {z}), kLayerTol});
  }
  {
    DTensor z = random_tensor({4, 17}, rng);
    DTensor labels = onehot_rows(4, 17, rng);
    Fn fn = [&](DTensor&) {
      return cross_entropy(softmax(z), labels, XentInput::Probabilities);
    };
    report.lines.push_back({"softmax_xent_probs", check_many(fn, {z}), kLayerTol});
  }

  report.lines.push_back(check_model(rng));
  return report;
}

}  // namespace lcz
