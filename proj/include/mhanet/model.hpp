#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mhanet/ops.hpp"
#include "mhanet/tensor.hpp"

namespace mhanet {

/// Runtime switches reproducing the ablation rows: each flag removes a block.
struct Ablation {
  bool no_ca = false;
  bool no_mta = false;
  bool no_mga = false;
  bool no_stc = false;

  /// Accepts "none", "ca", "mta", "mga", "stc", "mta+ca" (or "ca+mta").
  static Ablation parse(std::string_view variant);
  std::string name() const;
  bool operator==(const Ablation&) const = default;
};

/// The five ablation variants, in table order.
std::vector<Ablation> standard_ablations();

struct ModelConfig {
  std::size_t channels = 16;  // C, after CSP
  std::size_t samples = 128;  // T, samples per decision window
  std::size_t k1 = 8;         // temporal conv output channels in STC
  std::size_t dilation = 0;   // 0 selects the window-length rule

  std::size_t mga_dilation() const;
  /// Throws ErrorKind::Config when the dimensions cannot support the blocks
  /// enabled by `ablation`.
  void validate(const Ablation& ablation) const;
};

/// max(1, round(T / 32)): 1 for 0.1 s, 4 for 1 s, 8 for 2 s at 128 Hz.
std::size_t default_dilation(std::size_t samples);

inline constexpr std::array<std::size_t, 3> kMtaKernels{2, 4, 6};
inline constexpr std::array<std::size_t, 3> kMgaKernels{3, 5, 7};
inline constexpr std::size_t kPoolWidth = 5;
inline constexpr std::size_t kClasses = 2;

enum class Block { ChannelAttention, Mta, Mga, Stc, Classifier };

struct ParamInfo {
  Block block;
  bool decay;  // false for norm affines and the attention temperature
};

template <typename T>
struct MTABranch {
  std::size_t kernel = 0;
  BasicTensor<T> weight;    // [1,1,1,kernel]
  BasicTensor<T> bias;      // [1]
  BasicTensor<T> ln_gain;   // [T]
  BasicTensor<T> ln_shift;  // [T]
};

template <typename T>
struct MTAParams {
  BasicTensor<T> spatial_conv;  // [1,C,1,1]
  BasicTensor<T> up_conv;       // [3,1,1,1]
  std::array<MTABranch<T>, 3> branches;
  BasicTensor<T> recover_conv;  // [C,1,1,1]
};

template <typename T>
struct MGAParams {
  BasicTensor<T> up_conv;                      // [3,1,1,1]
  std::array<BasicTensor<T>, 3> dilated_convs;  // [1,1,k,k] for k in 3,5,7
  BasicTensor<T> down_conv;                    // [1,3,1,1]
  std::size_t dilation = 1;
};

template <typename T>
struct MHAParams {
  BasicTensor<T> ca_conv_in;   // [3C,C,1,1]
  BasicTensor<T> ca_dwconv;    // [3C,1,1,3], depthwise
  BasicTensor<T> log_t;        // [1], t = exp(log_t)
  BasicTensor<T> ca_conv_out;  // [C,C,1,1]
  MTAParams<T> mta;
  MGAParams<T> mga;

  T temperature() const;
};

template <typename T>
struct STCParams {
  BasicTensor<T> temporal_conv;  // [k1,1,1,2]
  BasicTensor<T> temporal_bias;  // [k1]
  BasicTensor<T> temporal_bn_gain;
  BasicTensor<T> temporal_bn_shift;
  BatchNormStats<T> temporal_bn_stats;
  BasicTensor<T> spatial_conv;  // [1,k1,C,1]
  BasicTensor<T> spatial_bias;  // [1]
  BasicTensor<T> spatial_bn_gain;
  BasicTensor<T> spatial_bn_shift;
  BatchNormStats<T> spatial_bn_stats;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Ablation ablation;
  MHAParams<T> mha;
  STCParams<T> stc;
  BasicTensor<T> fc_weight;  // [2,5]
  BasicTensor<T> fc_bias;    // [2]

  /// Calls f(name, tensor&, info) for every trainable tensor of every block,
  /// active or not, in a fixed order.
  template <typename F>
  void for_each_param(F&& f);
  template <typename F>
  void for_each_param(F&& f) const;

  /// Calls f(name, std::vector<T>&) for the batch-norm running statistics.
  template <typename F>
  void for_each_buffer(F&& f);
  template <typename F>
  void for_each_buffer(F&& f) const;

  /// Tensors that receive gradients under the current ablation mask.
  std::vector<BasicTensor<T>> trainable() const;

  ModelParams clone() const;

  template <typename U>
  ModelParams<U> cast() const;
};

bool block_active(Block block, const Ablation& ablation);

/// Fan-in uniform initialization (bound 1/sqrt(fan_in)), unit norm gains,
/// zero shifts, t = 1.
template <typename T>
ModelParams<T> init_model(const ModelConfig& config, const Ablation& ablation, std::uint64_t seed);

/// Exact number of trainable scalars under the ablation mask. CSP filters are
/// frozen and never counted.
template <typename T>
std::size_t count_params(const ModelParams<T>& params);

std::size_t count_params(const ModelConfig& config, const Ablation& ablation);

// ---------------------------------------------------------------------------

template <typename T>
template <typename F>
void ModelParams<T>::for_each_param(F&& f) {
  const ParamInfo ca{Block::ChannelAttention, true};
  f("mha.ca_conv_in.weight", mha.ca_conv_in, ca);
  f("mha.ca_dwconv.weight", mha.ca_dwconv, ca);
  f("mha.log_t", mha.log_t, ParamInfo{Block::ChannelAttention, false});
  f("mha.ca_conv_out.weight", mha.ca_conv_out, ca);
  const ParamInfo mta{Block::Mta, true};
  const ParamInfo mta_norm{Block::Mta, false};
  f("mha.mta.spatial_conv.weight", mha.mta.spatial_conv, mta);
  f("mha.mta.up_conv.weight", mha.mta.up_conv, mta);
  for (auto& br : mha.mta.branches) {
    const std::string prefix = "mha.mta.branch" + std::to_string(br.kernel);
    f(prefix + ".weight", br.weight, mta);
    f(prefix + ".bias", br.bias, mta);
    f(prefix + ".ln.gain", br.ln_gain, mta_norm);
    f(prefix + ".ln.shift", br.ln_shift, mta_norm);
  }
  f("mha.mta.recover_conv.weight", mha.mta.recover_conv, mta);
  const ParamInfo mga{Block::Mga, true};
  f("mha.mga.up_conv.weight", mha.mga.up_conv, mga);
  for (std::size_t i = 0; i < kMgaKernels.size(); ++i) {
    f("mha.mga.dconv" + std::to_string(kMgaKernels[i]) + ".weight", mha.mga.dilated_convs[i], mga);
  }
  f("mha.mga.down_conv.weight", mha.mga.down_conv, mga);
  const ParamInfo stc_p{Block::Stc, true};
  const ParamInfo stc_norm{Block::Stc, false};
  f("stc.temporal_conv.weight", stc.temporal_conv, stc_p);
  f("stc.temporal_conv.bias", stc.temporal_bias, stc_p);
  f("stc.temporal_bn.gain", stc.temporal_bn_gain, stc_norm);
  f("stc.temporal_bn.shift", stc.temporal_bn_shift, stc_norm);
  f("stc.spatial_conv.weight", stc.spatial_conv, stc_p);
  f("stc.spatial_conv.bias", stc.spatial_bias, stc_p);
  f("stc.spatial_bn.gain", stc.spatial_bn_gain, stc_norm);
  f("stc.spatial_bn.shift", stc.spatial_bn_shift, stc_norm);
  const ParamInfo fc{Block::Classifier, true};
  f("fc.weight", fc_weight, fc);
  f("fc.bias", fc_bias, fc);
}

template <typename T>
template <typename F>
void ModelParams<T>::for_each_param(F&& f) const {
  const_cast<ModelParams*>(this)->for_each_param(
      [&f](const std::string& name, const BasicTensor<T>& t, const ParamInfo& info) {
        f(name, t, info);
      });
}

template <typename T>
template <typename F>
void ModelParams<T>::for_each_buffer(F&& f) {
  f("stc.temporal_bn.running_mean", stc.temporal_bn_stats.running_mean);
  f("stc.temporal_bn.running_var", stc.temporal_bn_stats.running_var);
  f("stc.spatial_bn.running_mean", stc.spatial_bn_stats.running_mean);
  f("stc.spatial_bn.running_var", stc.spatial_bn_stats.running_var);
}

template <typename T>
template <typename F>
void ModelParams<T>::for_each_buffer(F&& f) const {
  const_cast<ModelParams*>(this)->for_each_buffer(
      [&f](const std::string& name, const std::vector<T>& v) { f(name, v); });
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out = init_model<U>(config, ablation, 0);
  std::vector<BasicTensor<T>> src;
  for_each_param([&](const std::string&, const BasicTensor<T>& t, const ParamInfo&) {
    src.push_back(t);
  });
  std::size_t i = 0;
  out.for_each_param([&](const std::string&, BasicTensor<U>& t, const ParamInfo&) {
    t = src[i++].template cast<U>();
  });
  std::vector<std::vector<T>> bufs;
  for_each_buffer([&](const std::string&, const std::vector<T>& v) { bufs.push_back(v); });
  i = 0;
  out.for_each_buffer([&](const std::string&, std::vector<U>& v) {
    v.assign(bufs[i].begin(), bufs[i].end());
    ++i;
  });
  return out;
}

}  // namespace mhanet
