#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "lcz/rng.hpp"
#include "lcz/tensor.hpp"

namespace lcz {

enum class Mode { Train, Infer };
enum class PoolKind { Max, Avg };

// Probability floor inside the cross-entropy, the usual framework clip.
inline constexpr double kProbFloor = 1e-7;

namespace detail {

// 3x3 / pad 1 / stride 1 patch matrix: col is [C*9][H*W], row k = (c,dy,dx).
template <typename T>
void im2col_3x3(const T* x, std::size_t C, std::size_t H, std::size_t W, T* col) {
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = x + c * hw;
    for (std::size_t dy = 0; dy < 3; ++dy) {
      for (std::size_t dx = 0; dx < 3; ++dx) {
        T* row = col + ((c * 3 + dy) * 3 + dx) * hw;
        const std::size_t xo_lo = dx == 0 ? 1 : 0;
        const std::size_t xo_hi = dx == 2 ? W - 1 : W;
        for (std::size_t yo = 0; yo < H; ++yo) {
          T* dst = row + yo * W;
          const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(yo + dy) - 1;
          if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(H)) {
            std::memset(dst, 0, W * sizeof(T));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(yi) * W;
          if (xo_lo) dst[0] = T(0);
          std::memcpy(dst + xo_lo, src + (xo_lo + dx - 1), (xo_hi - xo_lo) * sizeof(T));
          if (xo_hi < W) dst[W - 1] = T(0);
        }
      }
    }
  }
}

// The transpose layout, colT [H*W][C*9]; feeds the weight-gradient product.
template <typename T>
void im2colT_3x3(const T* x, std::size_t C, std::size_t H, std::size_t W, T* colT) {
  const std::size_t hw = H * W, K = C * 9;
  std::size_t j = 0;
  for (std::size_t yo = 0; yo < H; ++yo) {
    for (std::size_t xo = 0; xo < W; ++xo, ++j) {
      T* row = colT + j * K;
      std::size_t k = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T* plane = x + c * hw;
        for (int dy = -1; dy <= 1; ++dy) {
          const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(yo) + dy;
          const bool y_ok = yi >= 0 && yi < static_cast<std::ptrdiff_t>(H);
          for (int dx = -1; dx <= 1; ++dx, ++k) {
            const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(xo) + dx;
            row[k] = (y_ok && xi >= 0 && xi < static_cast<std::ptrdiff_t>(W))
                         ? plane[yi * W + xi]
                         : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_3x3_acc(const T* col, std::size_t C, std::size_t H, std::size_t W, T* dx_out) {
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    T* plane = dx_out + c * hw;
    for (std::size_t dy = 0; dy < 3; ++dy) {
      for (std::size_t dx = 0; dx < 3; ++dx) {
        const T* row = col + ((c * 3 + dy) * 3 + dx) * hw;
        const std::size_t xo_lo = dx == 0 ? 1 : 0;
        const std::size_t xo_hi = dx == 2 ? W - 1 : W;
        for (std::size_t yo = 0; yo < H; ++yo) {
          const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(yo + dy) - 1;
          if (yi < 0 || yi >= static_cast<std::ptrdiff_t>(H)) continue;
          const T* src = row + yo * W + xo_lo;
          T* dst = plane + static_cast<std::size_t>(yi) * W + (xo_lo + dx - 1);
          kern::axpy(xo_hi - xo_lo, T(1), src, dst);
        }
      }
    }
  }
}

inline void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) throw shape_error(std::string(op) + " expects [B,C,H,W], got " + shape_str(s));
}

}  // namespace detail

// Convolution, kernel 3x3, stride 1, zero padding 1; spatial size preserved.
// x [B,C,H,W], weight [out,in,3,3], bias [out] -> [B,out,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank4(x.shape(), "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw shape_error("conv2d weight must be [out,in,3,3], got " + shape_str(weight.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OC = weight.dim(0);
  if (weight.dim(1) != C) {
    throw shape_error("conv2d: input has " + std::to_string(C) + " channels, kernel expects " +
                      std::to_string(weight.dim(1)));
  }
  if (bias.shape() != Shape{OC}) {
    throw shape_error("conv2d bias must be [out_ch], got " + shape_str(bias.shape()));
  }
  const std::size_t hw = H * W, K = C * 9;
  auto xn = x.node(), wn = weight.node(), bn = bias.node();

  Tensor<T> out = Tensor<T>::make_op(
      {B, OC, H, W}, {xn, wn, bn}, [=](TensorNode<T>& n) {
        std::vector<T> colT;
        if (wn->requires_grad) colT.resize(hw * K);
        std::vector<T> dcol;
        if (xn->requires_grad) dcol.resize(K * hw);
        for (std::size_t s = 0; s < B; ++s) {
          const T* g = n.grad.data() + s * OC * hw;
          if (bn->requires_grad) {
            for (std::size_t oc = 0; oc < OC; ++oc) {
              bn->grad[oc] += kern::sum(hw, g + oc * hw);
            }
          }
          if (wn->requires_grad) {
            detail::im2colT_3x3(xn->value.data() + s * C * hw, C, H, W, colT.data());
            kern::gemm_acc(OC, hw, K, g, colT.data(), wn->grad.data());
          }
          if (xn->requires_grad) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            kern::gemm_atb_acc(K, OC, hw, wn->value.data(), g, dcol.data());
            detail::col2im_3x3_acc(dcol.data(), C, H, W, xn->grad.data() + s * C * hw);
          }
        }
      });

  std::vector<T> col(K * hw);
  T* y = out.mutable_value().data();
  const T* bv = bias.value().data();
  for (std::size_t s = 0; s < B; ++s) {
    detail::im2col_3x3(x.value().data() + s * C * hw, C, H, W, col.data());
    T* ys = y + s * OC * hw;
    for (std::size_t oc = 0; oc < OC; ++oc) {
      std::fill(ys + oc * hw, ys + (oc + 1) * hw, bv[oc]);
    }
    kern::gemm_acc(OC, K, hw, weight.value().data(), col.data(), ys);
  }
  return out;
}

// Batch statistics of the forward pass, for the running-average update.
template <typename T>
struct BatchStats {
  std::vector<T> mean, var;  // per channel, biased variance
};

// Train-mode batch normalization over [B,C,H,W]; per-channel statistics over
// batch and spatial positions.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps, BatchStats<T>* stats_out = nullptr) {
  detail::require_rank4(x.shape(), "batchnorm");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw shape_error("batchnorm: gamma/beta must be [C] with C=" + std::to_string(C));
  }
  const std::size_t hw = H * W, n = B * hw;
  if (n < 2) {
    throw data_error("batchnorm train mode needs at least 2 values per channel, got " +
                     std::to_string(n));
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();

  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto invstd = std::make_shared<std::vector<T>>(C);

  Tensor<T> out = Tensor<T>::make_op(
      x.shape(), {xn, gn, bn}, [=](TensorNode<T>& node) {
        for (std::size_t c = 0; c < C; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t s = 0; s < B; ++s) {
            const std::size_t off = (s * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += node.grad[off + i];
              sum_gx += static_cast<double>(node.grad[off + i]) * (*xhat)[off + i];
            }
          }
          if (gn->requires_grad) gn->grad[c] += static_cast<T>(sum_gx);
          if (bn->requires_grad) bn->grad[c] += static_cast<T>(sum_g);
          if (xn->requires_grad) {
            const T coeff = gn->value[c] * (*invstd)[c] / static_cast<T>(n);
            for (std::size_t s = 0; s < B; ++s) {
              const std::size_t off = (s * C + c) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                xn->grad[off + i] += coeff * (static_cast<T>(n) * node.grad[off + i] -
                                              static_cast<T>(sum_g) -
                                              (*xhat)[off + i] * static_cast<T>(sum_gx));
              }
            }
          }
        }
      });

  const T* xv = x.value().data();
  T* yv = out.mutable_value().data();
  std::vector<T> mean(C), var(C);
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
      acc += kern::sum(hw, xv + (s * C + c) * hw);
    }
    const double m = acc / static_cast<double>(n);
    double vacc = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
      const T* p = xv + (s * C + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = static_cast<double>(p[i]) - m;
        vacc += d * d;
      }
    }
    const double v = vacc / static_cast<double>(n);
    mean[c] = static_cast<T>(m);
    var[c] = static_cast<T>(v);
    const T is = T(1) / std::sqrt(var[c] + eps);
    (*invstd)[c] = is;
    const T g = gamma.value()[c], b = beta.value()[c];
    for (std::size_t s = 0; s < B; ++s) {
      const std::size_t off = (s * C + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (xv[off + i] - mean[c]) * is;
        (*xhat)[off + i] = xh;
        yv[off + i] = g * xh + b;
      }
    }
  }
  if (stats_out) {
    stats_out->mean = std::move(mean);
    stats_out->var = std::move(var);
  }
  return out;
}

// Inference-mode batch normalization with frozen running statistics; a pure
// per-channel affine map.
template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  detail::require_rank4(x.shape(), "batchnorm");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.shape() != Shape{C}) {
    throw shape_error("batchnorm: channel mismatch, x has " + std::to_string(C) + " channels");
  }
  const std::size_t hw = H * W;
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  auto rm = running_mean.node(), rv = running_var.node();

  Tensor<T> out = Tensor<T>::make_op(
      x.shape(), {xn, gn, bn, rm, rv}, [=](TensorNode<T>& node) {
        for (std::size_t c = 0; c < C; ++c) {
          const T is = T(1) / std::sqrt(rv->value[c] + eps);
          const T sc = gn->value[c] * is;
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t s = 0; s < B; ++s) {
            const std::size_t off = (s * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              const T g = node.grad[off + i];
              sum_g += g;
              sum_gx += static_cast<double>(g) * (xn->value[off + i] - rm->value[c]) * is;
              if (xn->requires_grad) xn->grad[off + i] += g * sc;
            }
          }
          if (gn->requires_grad) gn->grad[c] += static_cast<T>(sum_gx);
          if (bn->requires_grad) bn->grad[c] += static_cast<T>(sum_g);
        }
      });

  const T* xv = x.value().data();
  T* yv = out.mutable_value().data();
  for (std::size_t c = 0; c < C; ++c) {
    const T is = T(1) / std::sqrt(running_var.value()[c] + eps);
    const T sc = gamma.value()[c] * is;
    const T sh = beta.value()[c] - running_mean.value()[c] * sc;
    for (std::size_t s = 0; s < B; ++s) {
      const std::size_t off = (s * C + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) yv[off + i] = xv[off + i] * sc + sh;
    }
  }
  return out;
}

// Non-overlapping 2x2 pooling with stride 2. Max routes the gradient to the
// first maximal cell in row-major window order; avg spreads 1/4 to each cell.
template <typename T>
Tensor<T> pool2x2(const Tensor<T>& x, PoolKind kind) {
  detail::require_rank4(x.shape(), "pool2x2");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw shape_error("pool2x2 requires even spatial size, got " + shape_str(x.shape()));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  auto xn = x.node();
  const bool is_max = kind == PoolKind::Max;

  auto argmax = is_max ? std::make_shared<std::vector<std::uint32_t>>(B * C * Ho * Wo)
                       : nullptr;

  Tensor<T> out = Tensor<T>::make_op(
      {B, C, Ho, Wo}, {xn}, [=](TensorNode<T>& node) {
        if (is_max) {
          for (std::size_t i = 0; i < node.grad.size(); ++i) {
            xn->grad[(*argmax)[i]] += node.grad[i];
          }
        } else {
          const T q = T(0.25);
          for (std::size_t bc = 0; bc < B * C; ++bc) {
            const T* g = node.grad.data() + bc * Ho * Wo;
            T* dx = xn->grad.data() + bc * H * W;
            for (std::size_t yo = 0; yo < Ho; ++yo) {
              for (std::size_t xo = 0; xo < Wo; ++xo) {
                const T v = g[yo * Wo + xo] * q;
                T* w0 = dx + (2 * yo) * W + 2 * xo;
                w0[0] += v;
                w0[1] += v;
                w0[W] += v;
                w0[W + 1] += v;
              }
            }
          }
        }
      });

  const T* xv = x.value().data();
  T* yv = out.mutable_value().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* p = xv + bc * H * W;
    T* y = yv + bc * Ho * Wo;
    for (std::size_t yo = 0; yo < Ho; ++yo) {
      for (std::size_t xo = 0; xo < Wo; ++xo) {
        const std::size_t i00 = (2 * yo) * W + 2 * xo;
        const std::size_t idx[4] = {i00, i00 + 1, i00 + W, i00 + W + 1};
        if (is_max) {
          std::size_t best = idx[0];
          for (int k = 1; k < 4; ++k) {
            if (p[idx[k]] > p[best]) best = idx[k];
          }
          y[yo * Wo + xo] = p[best];
          (*argmax)[bc * Ho * Wo + yo * Wo + xo] =
              static_cast<std::uint32_t>(bc * H * W + best);
        } else {
          y[yo * Wo + xo] = (p[idx[0]] + p[idx[1]] + p[idx[2]] + p[idx[3]]) * T(0.25);
        }
      }
    }
  }
  return out;
}

// Spatial mean per channel: [B,C,H,W] -> [B,C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank4(x.shape(), "global_avg_pool");
  const std::size_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto xn = x.node();
  Tensor<T> out = Tensor<T>::make_op({B, C}, {xn}, [=](TensorNode<T>& node) {
    const T q = T(1) / static_cast<T>(hw);
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const T v = node.grad[bc] * q;
      T* dx = xn->grad.data() + bc * hw;
      for (std::size_t i = 0; i < hw; ++i) dx[i] += v;
    }
  });
  const T* xv = x.value().data();
  T* yv = out.mutable_value().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    yv[bc] = static_cast<T>(kern::sum(hw, xv + bc * hw) / static_cast<T>(hw));
  }
  return out;
}

// Inverted dropout: train mode zeroes elements with probability `rate` and
// scales survivors by 1/(1-rate); inference is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw config_error("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::Infer || rate == 0.0) return x;
  if (!rng) throw config_error("dropout in train mode needs a random source");

  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  for (auto& m : *mask) m = rng->uniform01() >= rate ? keep_scale : T(0);

  auto xn = x.node();
  Tensor<T> out = Tensor<T>::make_op(x.shape(), {xn}, [=](TensorNode<T>& node) {
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      xn->grad[i] += node.grad[i] * (*mask)[i];
    }
  });
  const T* xv = x.value().data();
  T* yv = out.mutable_value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) yv[i] = xv[i] * (*mask)[i];
  return out;
}

// Channel concatenation of two [B,C,H,W] tensors.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank4(a.shape(), "concat_channels");
  detail::require_rank4(b.shape(), "concat_channels");
  const std::size_t B = a.dim(0), Ca = a.dim(1), H = a.dim(2), W = a.dim(3);
  const std::size_t Cb = b.dim(1);
  if (b.dim(0) != B || b.dim(2) != H || b.dim(3) != W) {
    throw shape_error("concat_channels: incompatible shapes " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  }
  const std::size_t hw = H * W;
  auto an = a.node(), bn = b.node();
  Tensor<T> out = Tensor<T>::make_op(
      {B, Ca + Cb, H, W}, {an, bn}, [=](TensorNode<T>& node) {
        for (std::size_t s = 0; s < B; ++s) {
          const T* g = node.grad.data() + s * (Ca + Cb) * hw;
          if (an->requires_grad) {
            kern::axpy(Ca * hw, T(1), g, an->grad.data() + s * Ca * hw);
          }
          if (bn->requires_grad) {
            kern::axpy(Cb * hw, T(1), g + Ca * hw, bn->grad.data() + s * Cb * hw);
          }
        }
      });
  T* yv = out.mutable_value().data();
  for (std::size_t s = 0; s < B; ++s) {
    std::memcpy(yv + s * (Ca + Cb) * hw, a.value().data() + s * Ca * hw, Ca * hw * sizeof(T));
    std::memcpy(yv + s * (Ca + Cb) * hw + Ca * hw, b.value().data() + s * Cb * hw,
                Cb * hw * sizeof(T));
  }
  return out;
}

// Fully connected map: x [B,in] * w [in,out] + b [out].
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2) {
    throw shape_error("dense expects rank-2 input and weights");
  }
  const std::size_t B = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || b.shape() != Shape{out_dim}) {
    throw shape_error("dense: incompatible shapes x=" + shape_str(x.shape()) + " w=" +
                      shape_str(w.shape()) + " b=" + shape_str(b.shape()));
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  Tensor<T> out = Tensor<T>::make_op(
      {B, out_dim}, {xn, wn, bn}, [=](TensorNode<T>& node) {
        if (xn->requires_grad) {
          kern::gemm_abt_acc(B, out_dim, in, node.grad.data(), wn->value.data(),
                             xn->grad.data());
        }
        if (wn->requires_grad) {
          kern::gemm_atb_acc(in, B, out_dim, xn->value.data(), node.grad.data(),
                             wn->grad.data());
        }
        if (bn->requires_grad) {
          for (std::size_t s = 0; s < B; ++s) {
            kern::axpy(out_dim, T(1), node.grad.data() + s * out_dim, bn->grad.data());
          }
        }
      });
  T* yv = out.mutable_value().data();
  for (std::size_t s = 0; s < B; ++s) {
    std::memcpy(yv + s * out_dim, b.value().data(), out_dim * sizeof(T));
  }
  kern::gemm_acc(B, in, out_dim, x.value().data(), w.value().data(), yv);
  return out;
}

// Row-wise softmax of [B,K], numerically stabilized by the row maximum.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() != 2) throw shape_error("softmax expects [B,K], got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), K = x.dim(1);
  auto xn = x.node();
  Tensor<T> out = Tensor<T>::make_op({B, K}, {xn}, [=](TensorNode<T>& node) {
    for (std::size_t s = 0; s < B; ++s) {
      const T* p = node.value.data() + s * K;
      const T* g = node.grad.data() + s * K;
      T dotv = 0;
      for (std::size_t k = 0; k < K; ++k) dotv += g[k] * p[k];
      T* dx = xn->grad.data() + s * K;
      for (std::size_t k = 0; k < K; ++k) dx[k] += p[k] * (g[k] - dotv);
    }
  });
  const T* xv = x.value().data();
  T* yv = out.mutable_value().data();
  for (std::size_t s = 0; s < B; ++s) {
    const T* z = xv + s * K;
    T* p = yv + s * K;
    T m = z[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, z[k]);
    T denom = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - m);
      denom += p[k];
    }
    for (std::size_t k = 0; k < K; ++k) p[k] /= denom;
  }
  return out;
}

enum class XentInput { Logits, Probabilities };

namespace detail {

// Decode one-hot rows to class indices, validating the encoding.
template <typename T>
std::vector<std::size_t> onehot_indices(const Tensor<T>& target) {
  const std::size_t B = target.dim(0), K = target.dim(1);
  std::vector<std::size_t> idx(B);
  const T* t = target.value().data();
  for (std::size_t s = 0; s < B; ++s) {
    std::size_t hits = 0, at = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const T v = t[s * K + k];
      if (std::abs(v - T(1)) < T(1e-6)) {
        ++hits;
        at = k;
      } else if (std::abs(v) > T(1e-6)) {
        throw data_error("labels are not one-hot: row " + std::to_string(s));
      }
    }
    if (hits != 1) throw data_error("labels are not one-hot: row " + std::to_string(s));
    idx[s] = at;
  }
  return idx;
}

}  // namespace detail

// Mean over the batch of -log p(true class), optionally weighted per sample.
// Logits input runs through a max-stabilized softmax; probability input rows
// must sum to 1 within 1e-5 and are floored at kProbFloor inside the log.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& input, const Tensor<T>& target, XentInput kind,
                        const std::vector<T>& sample_weights = {}) {
  if (input.rank() != 2 || target.rank() != 2 || input.shape() != target.shape()) {
    throw shape_error("cross_entropy expects matching [B,K] input and one-hot target, got " +
                      shape_str(input.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::size_t B = input.dim(0), K = input.dim(1);
  if (!sample_weights.empty() && sample_weights.size() != B) {
    throw shape_error("cross_entropy: sample weight count does not match batch size");
  }
  const auto idx = detail::onehot_indices(target);
  auto weight_of = [&](std::size_t s) {
    return sample_weights.empty() ? T(1) : sample_weights[s];
  };
  auto xn = input.node();

  if (kind == XentInput::Logits) {
    // Save softmax rows for the backward pass.
    auto probs = std::make_shared<std::vector<T>>(B * K);
    auto wts = std::make_shared<std::vector<T>>(B);
    for (std::size_t s = 0; s < B; ++s) (*wts)[s] = weight_of(s);
    auto idxp = std::make_shared<std::vector<std::size_t>>(idx);

    Tensor<T> out = Tensor<T>::make_op({1}, {xn, target.node()}, [=](TensorNode<T>& node) {
      if (!xn->requires_grad) return;
      const T g0 = node.grad[0];
      for (std::size_t s = 0; s < B; ++s) {
        const T w = (*wts)[s] * g0 / static_cast<T>(B);
        T* dz = xn->grad.data() + s * K;
        const T* p = probs->data() + s * K;
        for (std::size_t k = 0; k < K; ++k) {
          dz[k] += w * (p[k] - (k == (*idxp)[s] ? T(1) : T(0)));
        }
      }
    });

    const T* z = input.value().data();
    double acc = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
      const T* row = z + s * K;
      T m = row[0];
      for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
      double denom = 0.0;
      for (std::size_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k] - m));
      const double lse = std::log(denom) + static_cast<double>(m);
      for (std::size_t k = 0; k < K; ++k) {
        (*probs)[s * K + k] = static_cast<T>(std::exp(static_cast<double>(row[k] - m)) / denom);
      }
      acc += weight_of(s) * (lse - static_cast<double>(row[idx[s]]));
    }
    out.mutable_value()[0] = static_cast<T>(acc / static_cast<double>(B));
    return out;
  }

  // Probability input.
  const T* p = input.value().data();
  for (std::size_t s = 0; s < B; ++s) {
    double rsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (p[s * K + k] < T(-1e-6)) {
        throw data_error("invalid probability row " + std::to_string(s) + ": negative entry");
      }
      rsum += p[s * K + k];
    }
    if (std::abs(rsum - 1.0) > 1e-5) {
      throw data_error("invalid probability row " + std::to_string(s) +
                       ": sum deviates from 1 by more than 1e-5");
    }
  }
  auto wts = std::make_shared<std::vector<T>>(B);
  for (std::size_t s = 0; s < B; ++s) (*wts)[s] = weight_of(s);
  auto idxp = std::make_shared<std::vector<std::size_t>>(idx);

  Tensor<T> out = Tensor<T>::make_op({1}, {xn, target.node()}, [=](TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    const T g0 = node.grad[0];
    for (std::size_t s = 0; s < B; ++s) {
      const T pv = xn->value[s * K + (*idxp)[s]];
      if (pv > static_cast<T>(kProbFloor)) {
        xn->grad[s * K + (*idxp)[s]] -= g0 * (*wts)[s] / (static_cast<T>(B) * pv);
      }
    }
  });
  double acc = 0.0;
  for (std::size_t s = 0; s < B; ++s) {
    const double pv = std::max(static_cast<double>(p[s * K + idx[s]]), kProbFloor);
    acc -= weight_of(s) * std::log(pv);
  }
  out.mutable_value()[0] = static_cast<T>(acc / static_cast<double>(B));
  return out;
}

// Zero-mean normal init with stddev sqrt(2 / fan_in); the usual choice for
// ReLU stacks. Result is marked trainable.
template <typename T>
Tensor<T> he_init(std::size_t fan_in, Shape shape, Rng& rng) {
  if (fan_in < 1) throw config_error("he_init: fan_in must be >= 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> v(shape_numel(shape));
  for (auto& e : v) e = static_cast<T>(rng.normal() * stddev);
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

// ---- layer parameter containers ----

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // [out,in,3,3]
  Tensor<T> bias;    // [out]

  static Conv2dLayer init(std::size_t in_ch, std::size_t out_ch, Rng& rng) {
    Conv2dLayer l;
    l.weight = he_init<T>(in_ch * 9, {out_ch, in_ch, 3, 3}, rng);
    l.bias = Tensor<T>::zeros({out_ch}, true);
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias); }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta;               // trainable
  Tensor<T> running_mean, running_var; // frozen at inference
  T momentum = T(0.99);
  T epsilon = T(1e-3);

  static BatchNormLayer init(std::size_t ch) {
    BatchNormLayer l;
    l.gamma = Tensor<T>::full({ch}, T(1));
    l.gamma.set_requires_grad(true);
    l.beta = Tensor<T>::zeros({ch}, true);
    l.running_mean = Tensor<T>::zeros({ch});
    l.running_var = Tensor<T>::full({ch}, T(1));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::Infer) {
      return batchnorm_infer(x, gamma, beta, running_mean, running_var, epsilon);
    }
    BatchStats<T> stats;
    Tensor<T> y = batchnorm_train(x, gamma, beta, epsilon, &stats);
    auto rm = running_mean.mutable_value();
    auto rv = running_var.mutable_value();
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = momentum * rm[c] + (T(1) - momentum) * stats.mean[c];
      rv[c] = momentum * rv[c] + (T(1) - momentum) * stats.var[c];
    }
    return y;
  }
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // [in,out]
  Tensor<T> bias;    // [out]

  static DenseLayer init(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    DenseLayer l;
    l.weight = he_init<T>(in_dim, {in_dim, out_dim}, rng);
    l.bias = Tensor<T>::zeros({out_dim}, true);
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return dense(x, weight, bias); }
};

}  // namespace lcz
