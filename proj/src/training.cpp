#include "lcz/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace lcz {

std::array<double, kClasses> compute_class_weights(
    const std::array<std::int64_t, kClasses>& counts) {
  std::int64_t total = 0;
  for (int k = 0; k < kClasses; ++k) {
    if (counts[k] < 1) {
      throw data_error("class weighting needs at least one sample of class " +
                       std::to_string(k + 1));
    }
    total += counts[k];
  }
  std::array<double, kClasses> w{};
  for (int k = 0; k < kClasses; ++k) {
    w[k] = static_cast<double>(total) / (static_cast<double>(kClasses) *
                                         static_cast<double>(counts[k]));
  }
  return w;
}

Snapshot take_snapshot(const Model<float>& model) {
  Snapshot snap;
  snap.reserve(model.registry().size());
  for (const auto& e : model.registry()) {
    snap.emplace_back(e.tensor.value().begin(), e.tensor.value().end());
  }
  return snap;
}

void restore_snapshot(Model<float>& model, const Snapshot& snap) {
  if (snap.size() != model.registry().size()) {
    throw shape_error("snapshot does not match the model registry");
  }
  for (std::size_t i = 0; i < snap.size(); ++i) {
    Tensor<float> t = model.registry()[i].tensor;
    if (snap[i].size() != t.numel()) {
      throw shape_error("snapshot tensor size mismatch at " + model.registry()[i].name);
    }
    std::copy(snap[i].begin(), snap[i].end(), t.mutable_value().begin());
  }
}

Tensor<float> batch_input(const PatchDataset& ds, std::span<const std::size_t> idx) {
  const std::size_t B = idx.size();
  Tensor<float> x = Tensor<float>::zeros({B, kBandCount, kPatchSize, kPatchSize});
  float* out = x.mutable_value().data();
  constexpr std::size_t plane = std::size_t(kPatchSize) * kPatchSize;
  for (std::size_t s = 0; s < B; ++s) {
    const float* p = ds.values.data() + idx[s] * kPatchValues;
    float* xs = out + s * kBandCount * plane;
    for (std::size_t px = 0; px < plane; ++px) {
      for (int b = 0; b < kBandCount; ++b) {
        xs[b * plane + px] = p[px * kBandCount + b];
      }
    }
  }
  return x;
}

Tensor<float> batch_onehot(const PatchDataset& ds, std::span<const std::size_t> idx) {
  const std::size_t B = idx.size();
  Tensor<float> y = Tensor<float>::zeros({B, kClasses});
  float* out = y.mutable_value().data();
  for (std::size_t s = 0; s < B; ++s) {
    out[s * kClasses + (ds.labels[idx[s]] - 1)] = 1.0f;
  }
  return y;
}

EvalResult evaluate_dataset(Model<float>& model, const PatchDataset& ds, int batch_size) {
  InferenceGuard<float> guard(model);
  EvalResult result;
  const std::size_t n = ds.count();
  result.predictions.reserve(n);
  double loss_acc = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor<float> x = batch_input(ds, idx);
    Tensor<float> y = batch_onehot(ds, idx);
    auto fwd = model.forward(x, Mode::Infer);
    Tensor<float> loss = fused_loss(fwd.head_probs, y, model.config.loss_mode);
    loss_acc += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
    const auto pred = labels_from_probs(fwd.fused);
    for (std::size_t s = 0; s < idx.size(); ++s) {
      result.predictions.push_back(pred[s]);
      if (pred[s] == ds.labels[idx[s]]) ++correct;
    }
  }
  result.loss = loss_acc / static_cast<double>(n);
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

TrainResult train(Model<float>& model, const PatchDataset& train_set,
                  const PatchDataset& val_set, const TrainConfig& config) {
  train_set.validate();
  val_set.validate();
  config.validate(train_set.count());

  std::array<double, kClasses> class_weights{};
  if (config.class_weighting) {
    class_weights = compute_class_weights(class_distribution(train_set));
  }

  Nadam<float> optimizer(model.trainable_params());
  EarlyStopTracker tracker(config.patience);
  TrainResult result;
  result.reason = StopReason::MaxEpochs;
  result.best = take_snapshot(model);  // fallback if the very first epoch diverges

  const std::size_t n = train_set.count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config);
    Rng shuffle_rng(mix_seed(config.seed, 0x1'000'000 + epoch));
    Rng dropout_rng(mix_seed(config.seed, 0x2'000'000 + epoch));
    shuffle_rng.shuffle(order);

    double loss_acc = 0.0;
    std::size_t correct = 0;
    bool diverged = false;

    for (std::size_t start = 0; start < n && !diverged; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor<float> x = batch_input(train_set, idx);
      Tensor<float> y = batch_onehot(train_set, idx);

      std::vector<float> weights;
      if (config.class_weighting) {
        weights.resize(idx.size());
        for (std::size_t s = 0; s < idx.size(); ++s) {
          weights[s] = static_cast<float>(class_weights[train_set.labels[idx[s]] - 1]);
        }
      }

      auto fwd = model.forward(x, Mode::Train, &dropout_rng);
      Tensor<float> loss = fused_loss(fwd.head_probs, y, model.config.loss_mode, weights);
      const double loss_v = loss.item();
      if (!std::isfinite(loss_v)) {
        diverged = true;
        break;
      }
      loss_acc += loss_v * static_cast<double>(idx.size());
      const auto pred = labels_from_probs(fwd.fused);
      for (std::size_t s = 0; s < idx.size(); ++s) {
        if (pred[s] == train_set.labels[idx[s]]) ++correct;
      }

      model.zero_grads();
      backward(loss);
      try {
        optimizer.step(static_cast<float>(lr));
      } catch (const verify_error&) {
        diverged = true;
      }
    }

    if (diverged) {
      result.reason = StopReason::Diverged;
      break;
    }

    EvalResult val = evaluate_dataset(model, val_set, config.batch_size);

    result.history.lr.push_back(lr);
    result.history.train_loss.push_back(loss_acc / static_cast<double>(n));
    result.history.train_acc.push_back(static_cast<double>(correct) / static_cast<double>(n));
    result.history.val_loss.push_back(val.loss);
    result.history.val_acc.push_back(val.accuracy);

    const auto decision = tracker.observe(val.loss, val.accuracy);
    if (decision.snapshot) result.best = take_snapshot(model);
    if (decision.stop) {
      result.reason = StopReason::EarlyStop;
      break;
    }
  }

  result.history.best_epoch = tracker.best_accuracy_epoch();
  return result;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open for writing: " + path);
  os << "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
  char line[256];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", e, history.lr[e],
                  history.train_loss[e], history.train_acc[e], history.val_loss[e],
                  history.val_acc[e]);
    os << line;
  }
}

}  // namespace lcz
