#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lcz/checkpoint.hpp"
#include "lcz/training.hpp"

using lcz::Mode;
using lcz::ModelConfig;
using lcz::Nadam;
using lcz::PatchDataset;
using lcz::Rng;
using lcz::Tensor;
using lcz::TrainConfig;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "lcz_training_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("nadam fixed point at zero gradient") {
  auto p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f}, true);
  Nadam<float> opt({p});
  lcz::backward(lcz::scale(lcz::sum(lcz::mul(p, p)), 0.0f));  // gradient 0
  opt.step(0.02f);
  CHECK(p.value()[0] == 1.0f);
  CHECK(p.value()[1] == -2.0f);
  CHECK(p.value()[2] == 0.5f);
}

TEST_CASE("nadam with lr 0 leaves parameters unchanged") {
  auto p = Tensor<float>::from({2}, {3.0f, -1.0f}, true);
  Nadam<float> opt({p});
  lcz::backward(lcz::sum(lcz::mul(p, p)));
  opt.step(0.0f);
  CHECK(p.value()[0] == 3.0f);
  CHECK(p.value()[1] == -1.0f);
}

TEST_CASE("nadam descends on x^2/2") {
  auto x = Tensor<double>::from({1}, {1.0}, true);
  Nadam<double> opt({x});
  lcz::backward(lcz::scale(lcz::sum(lcz::mul(x, x)), 0.5));
  opt.step(0.1);
  CHECK(std::abs(x.value()[0]) < 1.0);
}

TEST_CASE("nadam solves a positive-definite quadratic") {
  // f(x) = 0.5 x^T A x with A = M^T M + 0.5 I; gradient A x in closed form.
  Rng rng(404);
  constexpr int d = 5;
  double A[d][d] = {};
  {
    double M[d][d];
    for (auto& row : M)
      for (auto& v : row) v = rng.normal();
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        for (int k = 0; k < d; ++k) A[i][j] += M[k][i] * M[k][j];
      }
      A[i][i] += 0.5;
    }
  }
  auto x = Tensor<double>::zeros({d}, true);
  for (auto& v : x.mutable_value()) v = rng.normal();

  Nadam<double> opt({x});
  double gnorm = 0.0;
  for (int step = 0; step < 200; ++step) {
    lcz::Graph<double>::trace(lcz::sum(x)).backward();  // allocate grads
    auto g = x.grad();
    gnorm = 0.0;
    for (int i = 0; i < d; ++i) {
      double gi = 0.0;
      for (int j = 0; j < d; ++j) gi += A[i][j] * x.value()[j];
      g[i] = gi;
      gnorm += gi * gi;
    }
    opt.step(0.1);
  }
  CHECK(std::sqrt(gnorm) < 1e-3);
}

TEST_CASE("nadam rejects non-finite gradients") {
  auto p = Tensor<float>::from({1}, {1.0f}, true);
  Nadam<float> opt({p});
  lcz::backward(lcz::sum(p));
  p.grad()[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(0.01f), lcz::verify_error);
}

TEST_CASE("learning rate halves every fifth epoch") {
  TrainConfig c;
  CHECK(lcz::lr_schedule(0, c) == doctest::Approx(0.02));
  CHECK(lcz::lr_schedule(4, c) == doctest::Approx(0.02));
  CHECK(lcz::lr_schedule(5, c) == doctest::Approx(0.01));
  CHECK(lcz::lr_schedule(9, c) == doctest::Approx(0.01));
  CHECK(lcz::lr_schedule(10, c) == doctest::Approx(0.005));
  CHECK_THROWS_AS((void)lcz::lr_schedule(-1, c), lcz::config_error);
}

TEST_CASE("class weights are the normalized inverse sample fraction") {
  std::array<std::int64_t, 17> uniform;
  uniform.fill(5);
  for (double w : lcz::compute_class_weights(uniform)) CHECK(w == 1.0);

  std::array<std::int64_t, 17> skew;
  skew.fill(1);
  skew[0] = 2;
  const auto w = lcz::compute_class_weights(skew);
  CHECK(w[0] == doctest::Approx(18.0 / (17.0 * 2.0)).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(18.0 / 17.0).epsilon(1e-12));

  std::array<std::int64_t, 17> withzero{};
  withzero.fill(1);
  withzero[3] = 0;
  CHECK_THROWS_AS((void)lcz::compute_class_weights(withzero), lcz::data_error);
}

TEST_CASE("uniform class weights reproduce the unweighted loss exactly") {
  Rng rng(55);
  auto probs = Tensor<float>::full({4, 17}, 1.0f / 17.0f);
  auto onehot = Tensor<float>::zeros({4, 17});
  for (int s = 0; s < 4; ++s) onehot.mutable_value()[s * 17 + s] = 1.0f;
  std::vector<Tensor<float>> heads{probs};
  const double unweighted = lcz::fused_loss(heads, onehot).item();
  std::array<std::int64_t, 17> uniform;
  uniform.fill(3);
  const auto cw = lcz::compute_class_weights(uniform);
  std::vector<float> weights(4, static_cast<float>(cw[0]));
  const double weighted =
      lcz::fused_loss(heads, onehot, lcz::LossMode::ProbabilityMean, weights).item();
  CHECK(std::abs(weighted - unweighted) < 1e-12);
}

TEST_CASE("early stopping fires after patience epochs without improvement") {
  lcz::EarlyStopTracker tracker(40);
  int epoch = 0;
  // Loss improves until epoch 3, then stays flat.
  bool stopped = false;
  for (; epoch < 200; ++epoch) {
    const double loss = epoch <= 3 ? 1.0 - 0.1 * epoch : 0.7;
    const auto d = tracker.observe(loss, 0.5);
    if (d.stop) {
      stopped = true;
      break;
    }
  }
  CHECK(stopped);
  CHECK(epoch == 3 + 40);
}

TEST_CASE("tracker snapshots on best accuracy, not best loss") {
  lcz::EarlyStopTracker tracker(10);
  CHECK(tracker.observe(1.0, 0.2).snapshot);
  CHECK_FALSE(tracker.observe(0.5, 0.1).snapshot);  // loss improved, accuracy did not
  CHECK(tracker.observe(0.9, 0.4).snapshot);
  CHECK(tracker.best_accuracy_epoch() == 2);
}

TEST_CASE("ten small steps on a fixed batch do not increase the loss") {
  ModelConfig mc;
  mc.f = 4;
  mc.n = 1;
  mc.fusion = true;
  mc.dropout_rate = 0.0;
  Rng init(1234);
  auto model = lcz::build<float>(mc, &init);

  PatchDataset data = lcz::synth_generate(7, 2, 4.0);
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), 0);
  auto x = lcz::batch_input(data, idx);
  auto y = lcz::batch_onehot(data, idx);

  Nadam<float> opt(model.trainable_params());
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 10; ++step) {
    auto fwd = model.forward(x, Mode::Train, nullptr);
    auto loss = lcz::fused_loss(fwd.head_probs, y);
    CHECK(loss.item() <= prev);
    prev = loss.item();
    model.zero_grads();
    lcz::backward(loss);
    opt.step(1e-4f);
  }
}

TEST_CASE("fixed seed reproduces the epoch losses bitwise") {
  PatchDataset train = lcz::synth_generate(3, 4, 5.0);
  PatchDataset val = lcz::synth_generate(4, 2, 5.0);
  ModelConfig mc;
  mc.f = 4;
  mc.n = 1;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 2;
  tc.seed = 99;

  auto run = [&] {
    Rng init(lcz::mix_seed(tc.seed, 0xC0FFEE));
    auto model = lcz::build<float>(mc, &init);
    return lcz::train(model, train, val, tc);
  };
  const auto r1 = run();
  const auto r2 = run();
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(r1.history.train_loss[e] == r2.history.train_loss[e]);
    CHECK(r1.history.val_loss[e] == r2.history.val_loss[e]);
  }
}

TEST_CASE("checkpoint round-trip preserves inference bitwise") {
  PatchDataset train = lcz::synth_generate(11, 3, 5.0);
  PatchDataset val = lcz::synth_generate(12, 2, 5.0);
  const auto stats = lcz::fit_band_stats(train);
  auto train_std = lcz::standardize(train, stats);
  auto val_std = lcz::standardize(val, stats);

  ModelConfig mc;
  mc.f = 4;
  mc.n = 1;
  TrainConfig tc;
  tc.batch_size = 17;
  tc.max_epochs = 2;
  Rng init(5);
  auto model = lcz::build<float>(mc, &init);
  auto result = lcz::train(model, train_std, val_std, tc);
  lcz::restore_snapshot(model, result.best);

  const auto path = (temp_dir() / "roundtrip.s2lz").string();
  lcz::save_checkpoint(path, model, stats);
  auto loaded = lcz::load_checkpoint(path);

  CHECK(loaded.config.f == 4);
  CHECK(loaded.config.n == 1);
  for (int b = 0; b < 10; ++b) {
    CHECK(loaded.stats.mean[b] == stats.mean[b]);
    CHECK(loaded.stats.stddev[b] == stats.stddev[b]);
  }
  REQUIRE(loaded.model.registry().size() == model.registry().size());
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    const auto a = model.registry()[i].tensor.value();
    const auto b = loaded.model.registry()[i].tensor.value();
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }

  std::vector<std::size_t> idx{0, 1, 2};
  auto x = lcz::batch_input(val_std, idx);
  auto before = model.forward(x, Mode::Infer).fused;
  auto after = loaded.model.forward(x, Mode::Infer).fused;
  for (std::size_t i = 0; i < before.numel(); ++i) {
    CHECK(before.value()[i] == after.value()[i]);
  }
}

TEST_CASE("corrupted checkpoints are rejected") {
  const auto path = (temp_dir() / "corrupt.s2lz").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "BOGUS stream of bytes that is clearly not a checkpoint";
  }
  CHECK_THROWS_AS((void)lcz::load_checkpoint(path), lcz::data_error);
}

TEST_CASE("non-finite data aborts training with the last finite snapshot") {
  PatchDataset train = lcz::synth_generate(21, 2, 3.0);
  // Poison one patch so the very first epoch produces a non-finite loss.
  for (auto& v : train.values) v = 1e38f;
  PatchDataset val = lcz::synth_generate(22, 1, 3.0);

  ModelConfig mc;
  mc.f = 4;
  mc.n = 1;
  TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 3;
  Rng init(6);
  auto model = lcz::build<float>(mc, &init);
  const auto before = lcz::take_snapshot(model);
  auto result = lcz::train(model, train, val, tc);
  CHECK(result.reason == lcz::StopReason::Diverged);
  // The fallback snapshot is the initial state.
  REQUIRE(result.best.size() == before.size());
  CHECK(result.best[0] == before[0]);
}

TEST_CASE("class-weighted training runs on imbalanced data") {
  // Drop most of class 1 so the weights are genuinely non-uniform.
  PatchDataset full = lcz::synth_generate(41, 6, 5.0);
  PatchDataset train;
  int kept_class1 = 0;
  for (std::size_t i = 0; i < full.count(); ++i) {
    if (full.labels[i] == 1 && kept_class1 >= 2) continue;
    if (full.labels[i] == 1) ++kept_class1;
    train.values.insert(train.values.end(), full.patch(i).begin(), full.patch(i).end());
    train.labels.push_back(full.labels[i]);
  }
  const auto weights = lcz::compute_class_weights(lcz::class_distribution(train));
  CHECK(weights[0] > weights[1]);  // rarer class weighs more

  PatchDataset val = lcz::synth_generate(41, 2, 5.0, 43);
  ModelConfig mc;
  mc.f = 4;
  mc.n = 1;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 2;
  tc.class_weighting = true;
  Rng init(44);
  auto model = lcz::build<float>(mc, &init);
  const auto result = lcz::train(model, train, val, tc);
  CHECK(result.history.size() == 2);
  for (double l : result.history.train_loss) CHECK(std::isfinite(l));
}

TEST_CASE("history CSV layout") {
  lcz::TrainHistory h;
  h.lr = {0.02, 0.02};
  h.train_loss = {1.5, 1.2};
  h.train_acc = {0.3, 0.5};
  h.val_loss = {1.6, 1.3};
  h.val_acc = {0.25, 0.45};
  h.best_epoch = 1;
  const auto path = (temp_dir() / "history.csv").string();
  lcz::write_history_csv(h, path);
  std::ifstream is(path);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "epoch,lr,train_loss,train_acc,val_loss,val_acc");
  REQUIRE(std::getline(is, line));
  CHECK(line.rfind("0,", 0) == 0);
  REQUIRE(std::getline(is, line));
  CHECK(line.rfind("1,", 0) == 0);
}

TEST_CASE("batch assembly transposes patches into channel planes") {
  PatchDataset ds = lcz::synth_generate(31, 1, 2.0);
  std::vector<std::size_t> idx{3};
  auto x = lcz::batch_input(ds, idx);
  REQUIRE(x.shape() == lcz::Shape{1, 10, 32, 32});
  // Spot-check the transpose: channel plane value equals the H,W,C layout.
  for (int y = 0; y < 4; ++y) {
    for (int b = 0; b < 10; ++b) {
      CHECK(x.value()[(b * 32 + y) * 32 + 7] == ds.at(3, y, 7, b));
    }
  }
  auto onehot = lcz::batch_onehot(ds, idx);
  CHECK(onehot.value()[ds.labels[3] - 1] == 1.0f);
}
