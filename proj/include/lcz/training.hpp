#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "lcz/dataio.hpp"
#include "lcz/model.hpp"

namespace lcz {

// Adam with Nesterov momentum and the warming momentum schedule, following
// the reference implementation the training protocol is defined against
// (beta1 0.9, beta2 0.999, epsilon 1e-7, schedule decay 0.004).
template <typename T>
class Nadam {
 public:
  struct Hyper {
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-7);
    double schedule_decay = 0.004;
  };

  explicit Nadam(std::vector<Tensor<T>> params, Hyper hyper = {})
      : params_(std::move(params)), h_(hyper) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].numel(), T(0));
      v_[i].assign(params_[i].numel(), T(0));
    }
  }

  long step_count() const { return t_; }

  // One update from the gradients currently stored on the parameters.
  void step(T lr) {
    if (!(lr >= T(0))) throw config_error("nadam: learning rate must be >= 0");
    const long t = t_ + 1;
    const double mu_t = h_.beta1 * (1.0 - 0.5 * std::pow(0.96, t * h_.schedule_decay));
    const double mu_next = h_.beta1 * (1.0 - 0.5 * std::pow(0.96, (t + 1) * h_.schedule_decay));
    const double msched_new = m_schedule_ * mu_t;
    const double msched_next = msched_new * mu_next;
    const double v_corr = 1.0 - std::pow(static_cast<double>(h_.beta2), t);

    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto p = params_[i].mutable_value();
      const auto g = params_[i].grad();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (!std::isfinite(static_cast<double>(g[j]))) {
          throw verify_error("nadam: non-finite gradient encountered at step " +
                             std::to_string(t));
        }
        m[j] = h_.beta1 * m[j] + (T(1) - h_.beta1) * g[j];
        v[j] = h_.beta2 * v[j] + (T(1) - h_.beta2) * g[j] * g[j];
        const T g_prime = g[j] / static_cast<T>(1.0 - msched_new);
        const T m_prime = m[j] / static_cast<T>(1.0 - msched_next);
        const T v_prime = v[j] / static_cast<T>(v_corr);
        const T m_bar = static_cast<T>(1.0 - mu_t) * g_prime + static_cast<T>(mu_next) * m_prime;
        p[j] -= lr * m_bar / (std::sqrt(v_prime) + h_.epsilon);
      }
    }
    m_schedule_ = static_cast<T>(msched_new);
    t_ = t;
  }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  Hyper h_;
  long t_ = 0;
  T m_schedule_ = T(1);
};

struct TrainConfig {
  int batch_size = 32;
  double lr0 = 2e-2;
  int lr_halving_period = 5;
  int patience = 40;
  int max_epochs = 300;
  bool class_weighting = false;
  std::uint64_t seed = 0;

  void validate(std::size_t train_count) const {
    if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
    if (static_cast<std::size_t>(batch_size) > train_count) {
      throw config_error("train: batch_size exceeds the training set size");
    }
    if (!(lr0 > 0.0)) throw config_error("train: lr0 must be positive");
    if (lr_halving_period < 1) throw config_error("train: lr_halving_period must be >= 1");
    if (patience < 1) throw config_error("train: patience must be >= 1");
    if (max_epochs < 1) throw config_error("train: max_epochs must be >= 1");
  }
};

// Step schedule: halved once per period, epochs counted from zero.
inline double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw config_error("lr_schedule: epoch must be >= 0");
  return config.lr0 * std::pow(0.5, epoch / config.lr_halving_period);
}

// Inverse sample fraction, normalized so uniform counts give all ones:
// weight_k = total / (17 * counts_k).
std::array<double, kClasses> compute_class_weights(
    const std::array<std::int64_t, kClasses>& counts);

struct TrainHistory {
  std::vector<double> lr, train_loss, train_acc, val_loss, val_acc;
  int best_epoch = -1;  // epoch with the highest validation accuracy
  std::size_t size() const { return train_loss.size(); }
};

enum class StopReason { EarlyStop, MaxEpochs, Diverged };

// Early stopping monitors validation loss (strict improvement resets the
// counter); checkpoint selection tracks the highest validation accuracy.
class EarlyStopTracker {
 public:
  explicit EarlyStopTracker(int patience) : patience_(patience) {}

  struct Decision {
    bool snapshot;  // this epoch has the best validation accuracy so far
    bool stop;      // patience exhausted
  };

  Decision observe(double val_loss, double val_acc) {
    ++epoch_;
    Decision d{false, false};
    if (val_acc > best_acc_) {
      best_acc_ = val_acc;
      best_acc_epoch_ = epoch_;
      d.snapshot = true;
    }
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      wait_ = 0;
    } else {
      ++wait_;
      if (wait_ >= patience_) d.stop = true;
    }
    return d;
  }

  int best_accuracy_epoch() const { return best_acc_epoch_; }

 private:
  int patience_;
  int wait_ = 0;
  int epoch_ = -1;
  double best_loss_ = std::numeric_limits<double>::infinity();
  double best_acc_ = -std::numeric_limits<double>::infinity();
  int best_acc_epoch_ = -1;
};

// Full copy of every registry tensor (weights and running statistics).
using Snapshot = std::vector<std::vector<float>>;
Snapshot take_snapshot(const Model<float>& model);
void restore_snapshot(Model<float>& model, const Snapshot& snap);

struct TrainResult {
  TrainHistory history;
  StopReason reason;
  Snapshot best;  // registry values at the best-validation-accuracy epoch
};

TrainResult train(Model<float>& model, const PatchDataset& train_set,
                  const PatchDataset& val_set, const TrainConfig& config);

void write_history_csv(const TrainHistory& history, const std::string& path);

// Assemble [B,10,32,32] network input / [B,17] one-hot targets from dataset
// rows (patches are stored H,W,C and transposed here).
Tensor<float> batch_input(const PatchDataset& ds, std::span<const std::size_t> idx);
Tensor<float> batch_onehot(const PatchDataset& ds, std::span<const std::size_t> idx);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

// Inference-mode pass over a whole dataset: unweighted loss and accuracy.
EvalResult evaluate_dataset(Model<float>& model, const PatchDataset& ds, int batch_size);

// Temporarily drops gradient tracking on all trainable parameters.
template <typename T>
class InferenceGuard {
 public:
  explicit InferenceGuard(Model<T>& model) : model_(model) {
    for (const auto& e : model_.registry()) {
      if (e.trainable) {
        Tensor<T> t = e.tensor;
        t.set_requires_grad(false);
      }
    }
  }
  ~InferenceGuard() {
    for (const auto& e : model_.registry()) {
      if (e.trainable) {
        Tensor<T> t = e.tensor;
        t.set_requires_grad(true);
      }
    }
  }
  InferenceGuard(const InferenceGuard&) = delete;
  InferenceGuard& operator=(const InferenceGuard&) = delete;

 private:
  Model<T>& model_;
};

}  // namespace lcz
