#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mhanet/tensor.hpp"

namespace mhanet {

/// Explicit per-side zero padding for the two spatial axes of a 2-D conv.
struct Padding {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;
};

/// Padding that preserves the extent for a kernel of `k` taps at dilation
/// `d`: left = floor((d(k-1))/2), right = ceil((d(k-1))/2). Even kernels get
/// the extra tap on the right.
Padding same_padding(std::size_t kh, std::size_t kw, std::size_t dh = 1, std::size_t dw = 1);

struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  Padding padding{};
  std::array<std::size_t, 2> dilation{1, 1};
  std::size_t groups = 1;
};

enum class Mode { Train, Eval };

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  static BatchNormStats identity(std::size_t channels) {
    return {std::vector<T>(channels, T(0)), std::vector<T>(channels, T(1))};
  }
};

// input [B,Cin,H,W], weight [Cout,Cin/groups,kh,kw], bias [Cout]
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const Conv2dOptions& opts);

// [...,m,k] x [...,k,n] with identical leading extents
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& x);

/// Numerically stable (max-subtracted) softmax along `axis`.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis);

/// Normalizes each slice along `axis` to zero mean and unit (biased)
/// variance, then applies gain/shift of extent x.dim(axis).
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, int axis, const BasicTensor<T>& gain,
                          const BasicTensor<T>& shift, T eps = T(1e-5));

/// Per-channel normalization of [B,C,H,W]. Train mode uses batch statistics
/// and updates `stats` by exponential moving average (unbiased variance);
/// eval mode reads `stats` only.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& shift, BatchNormStats<T>& stats, Mode mode,
                          T eps = T(1e-5), T momentum = T(0.1));

template <typename T>
BasicTensor<T> elu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

/// Bins use start = floor(i*H/out), end = ceil((i+1)*H/out).
template <typename T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& x, std::size_t out_h,
                                   std::size_t out_w);

// Elementwise with right-aligned broadcasting of extent-1 axes.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
std::vector<BasicTensor<T>> split(const BasicTensor<T>& x, int axis, std::size_t parts);

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, int axis);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

/// Mean over the batch of -log softmax(logits)[label]; logits [B,K].
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

/// x [B,in], weight [out,in], bias [out] -> [B,out]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

}  // namespace mhanet
