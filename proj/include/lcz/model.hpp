#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcz/layers.hpp"

namespace lcz {

enum class PoolingMode { Double, MaxOnly };
enum class LossMode { ProbabilityMean, PerHeadSum };

// Architecture hyperparameters. The network is four blocks of n conv+BN+ReLU
// layers with widths f, 2f, 4f, 8f, downsampled between blocks; with fusion
// enabled, auxiliary prediction heads hang off the three downsampled stages
// in addition to the final head.
struct ModelConfig {
  int f = 16;
  int n = 4;
  bool fusion = true;
  PoolingMode pooling = PoolingMode::Double;
  double dropout_rate = 0.2;
  LossMode loss_mode = LossMode::ProbabilityMean;

  int in_channels = 10;
  int height = 32;
  int width = 32;
  int classes = 17;

  int depth() const { return 4 * n + 1; }

  void validate() const {
    if (f < 1) throw config_error("model: f must be >= 1");
    if (n < 1) throw config_error("model: n must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
      throw config_error("model: dropout rate must lie in [0,1)");
    }
    if (in_channels < 1 || height < 1 || width < 1 || classes < 2) {
      throw config_error("model: invalid input geometry");
    }
    if (height % 8 != 0 || width % 8 != 0) {
      throw config_error("model: input height and width must be divisible by 8 "
                         "(three pooling stages)");
    }
  }
};

template <typename T>
struct ForwardResult {
  std::vector<Tensor<T>> head_probs;     // one per attached head, each [B,classes]
  Tensor<T> fused;                       // [B,classes], mean of the heads
  std::vector<Tensor<T>> block_outputs;  // pre-pooling output of each block
};

// Average-pool and max-pool concatenated channel-wise (average first),
// doubling the channel count while halving the spatial size.
template <typename T>
Tensor<T> double_pool(const Tensor<T>& x) {
  return concat_channels(pool2x2(x, PoolKind::Avg), pool2x2(x, PoolKind::Max));
}

template <typename T>
class Model {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable;
  };

  ModelConfig config;
  std::vector<std::vector<Conv2dLayer<T>>> convs;  // [block][layer]
  std::vector<std::vector<BatchNormLayer<T>>> bns;
  std::vector<DenseLayer<T>> heads;  // 1 (final only) or 4 (fusion)

  const std::vector<Entry>& registry() const { return registry_; }

  std::vector<Tensor<T>> trainable_params() const {
    std::vector<Tensor<T>> out;
    for (const auto& e : registry_)
      if (e.trainable) out.push_back(e.tensor);
    return out;
  }

  void zero_grads() {
    for (auto& e : registry_) {
      if (e.trainable && e.tensor.has_grad()) {
        auto g = e.tensor.grad();
        std::fill(g.begin(), g.end(), T(0));
      }
    }
  }

  // Width of block b (0-based): f * 2^b.
  int block_width(int b) const { return config.f << b; }

  // Channel count fed into each head, in head order. With double pooling the
  // three early heads see the concatenated (doubled) stage outputs.
  std::vector<int> head_input_dims() const {
    std::vector<int> dims;
    if (config.fusion) {
      for (int b = 0; b < 3; ++b) {
        const int w = block_width(b);
        dims.push_back(config.pooling == PoolingMode::Double ? 2 * w : w);
      }
    }
    dims.push_back(block_width(3));
    return dims;
  }

  ForwardResult<T> forward(const Tensor<T>& x, Mode mode, Rng* dropout_rng = nullptr) {
    if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(config.in_channels) ||
        x.dim(2) != static_cast<std::size_t>(config.height) ||
        x.dim(3) != static_cast<std::size_t>(config.width)) {
      throw shape_error("model forward: expected [B," + std::to_string(config.in_channels) +
                        "," + std::to_string(config.height) + "," + std::to_string(config.width) +
                        "], got " + shape_str(x.shape()));
    }
    ForwardResult<T> result;
    std::vector<Tensor<T>> head_inputs;  // 4D stage outputs feeding the heads
    Tensor<T> h = x;
    for (int b = 0; b < 4; ++b) {
      for (int l = 0; l < config.n; ++l) {
        h = convs[b][l].forward(h);
        h = bns[b][l].forward(h, mode);
        h = relu(h);
      }
      result.block_outputs.push_back(h);
      if (b < 3) {
        h = config.pooling == PoolingMode::Double ? double_pool(h)
                                                  : pool2x2(h, PoolKind::Max);
        // Dropout sits on the downsampled outputs of blocks 2 and 3, ahead of
        // both the next block and the matching fusion head.
        if (b >= 1) h = dropout(h, config.dropout_rate, mode, dropout_rng);
        if (config.fusion) head_inputs.push_back(h);
      } else {
        head_inputs.push_back(h);
      }
    }

    for (std::size_t i = 0; i < heads.size(); ++i) {
      Tensor<T> pooled = global_avg_pool(head_inputs[i]);
      result.head_probs.push_back(softmax(heads[i].forward(pooled)));
    }
    Tensor<T> acc = result.head_probs[0];
    for (std::size_t i = 1; i < result.head_probs.size(); ++i) {
      acc = add(acc, result.head_probs[i]);
    }
    result.fused = scale(acc, T(1) / static_cast<T>(result.head_probs.size()));
    return result;
  }

  void add_registry_entry(std::string name, Tensor<T> t, bool trainable) {
    registry_.push_back({std::move(name), std::move(t), trainable});
  }

 private:
  std::vector<Entry> registry_;
};

// Instantiates the network. Convolution and dense weights draw from `rng`
// in registry order (blocks first, then heads), so two configs that share
// block structure also share block parameters for the same seed. Passing
// nullptr leaves all weights zero, which is enough for parameter counting
// and for checkpoint loading.
template <typename T>
Model<T> build(const ModelConfig& config, Rng* rng) {
  config.validate();
  Model<T> m;
  m.config = config;
  m.convs.resize(4);
  m.bns.resize(4);

  Rng zero_rng(0);
  Rng& r = rng ? *rng : zero_rng;

  int prev_ch = config.in_channels;
  for (int b = 0; b < 4; ++b) {
    const int width = m.block_width(b);
    for (int l = 0; l < config.n; ++l) {
      const int in_ch = l == 0 ? prev_ch : width;
      Conv2dLayer<T> conv;
      if (rng) {
        conv = Conv2dLayer<T>::init(in_ch, width, r);
      } else {
        conv.weight = Tensor<T>::zeros({std::size_t(width), std::size_t(in_ch), 3, 3}, true);
        conv.bias = Tensor<T>::zeros({std::size_t(width)}, true);
      }
      auto bn = BatchNormLayer<T>::init(width);
      const std::string prefix = "block" + std::to_string(b + 1);
      const std::string li = std::to_string(l + 1);
      m.add_registry_entry(prefix + ".conv" + li + ".weight", conv.weight, true);
      m.add_registry_entry(prefix + ".conv" + li + ".bias", conv.bias, true);
      m.add_registry_entry(prefix + ".bn" + li + ".gamma", bn.gamma, true);
      m.add_registry_entry(prefix + ".bn" + li + ".beta", bn.beta, true);
      m.add_registry_entry(prefix + ".bn" + li + ".running_mean", bn.running_mean, false);
      m.add_registry_entry(prefix + ".bn" + li + ".running_var", bn.running_var, false);
      m.convs[b].push_back(std::move(conv));
      m.bns[b].push_back(std::move(bn));
    }
    // The double-pooling stage doubles the channel count entering the next
    // block; max-only keeps it, and the next block's first convolution does
    // the widening instead.
    if (b < 3) {
      prev_ch = config.pooling == PoolingMode::Double ? 2 * width : width;
    }
  }

  const auto dims = m.head_input_dims();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    DenseLayer<T> head;
    if (rng) {
      head = DenseLayer<T>::init(dims[i], config.classes, r);
    } else {
      head.weight = Tensor<T>::zeros({std::size_t(dims[i]), std::size_t(config.classes)}, true);
      head.bias = Tensor<T>::zeros({std::size_t(config.classes)}, true);
    }
    // Head numbering follows attachment order; without fusion the single
    // final head keeps its place as head4.
    const std::string name = "head" + std::to_string(config.fusion ? i + 1 : 4);
    m.add_registry_entry(name + ".weight", head.weight, true);
    m.add_registry_entry(name + ".bias", head.bias, true);
    m.heads.push_back(std::move(head));
  }
  return m;
}

struct ParamCount {
  long long trainable = 0;
  long long total = 0;
};

template <typename T>
ParamCount count_parameters(const Model<T>& model) {
  ParamCount c;
  for (const auto& e : model.registry()) {
    const long long n = static_cast<long long>(e.tensor.numel());
    c.total += n;
    if (e.trainable) c.trainable += n;
  }
  return c;
}

// Cross-entropy against the combined prediction. The default fuses the head
// distributions by arithmetic mean and scores that single distribution; the
// alternative sums one cross-entropy per head.
template <typename T>
Tensor<T> fused_loss(const std::vector<Tensor<T>>& head_probs, const Tensor<T>& onehot,
                     LossMode mode = LossMode::ProbabilityMean,
                     const std::vector<T>& sample_weights = {}) {
  if (head_probs.empty()) throw shape_error("fused_loss: need at least one head");
  if (mode == LossMode::PerHeadSum) {
    Tensor<T> total = cross_entropy(head_probs[0], onehot, XentInput::Probabilities,
                                    sample_weights);
    for (std::size_t i = 1; i < head_probs.size(); ++i) {
      total = add(total, cross_entropy(head_probs[i], onehot, XentInput::Probabilities,
                                       sample_weights));
    }
    return total;
  }
  Tensor<T> acc = head_probs[0];
  for (std::size_t i = 1; i < head_probs.size(); ++i) acc = add(acc, head_probs[i]);
  Tensor<T> mean = scale(acc, T(1) / static_cast<T>(head_probs.size()));
  return cross_entropy(mean, onehot, XentInput::Probabilities, sample_weights);
}

// Class labels 1..17 from fused probabilities; ties resolve to the lowest
// class index.
template <typename T>
std::vector<int> labels_from_probs(const Tensor<T>& fused) {
  if (fused.rank() != 2) throw shape_error("predict expects [B,K] probabilities");
  const std::size_t B = fused.dim(0), K = fused.dim(1);
  std::vector<int> labels(B);
  const T* p = fused.value().data();
  for (std::size_t s = 0; s < B; ++s) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (p[s * K + k] > p[s * K + best]) best = k;
    }
    labels[s] = static_cast<int>(best) + 1;
  }
  return labels;
}

template <typename T>
std::vector<int> predict(Model<T>& model, const Tensor<T>& x) {
  return labels_from_probs(model.forward(x, Mode::Infer).fused);
}

}  // namespace lcz
