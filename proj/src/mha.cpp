#include "mhanet/mha.hpp"

namespace mhanet {

namespace {

template <typename Fn>
auto in_block(const char* block, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Numerical) fail(ErrorKind::Numerical, block, ": ", e.what());
    throw;
  }
}

void require_window(const Shape& s, const char* block) {
  if (s.size() != 4 || s[2] != 1) {
    fail(ErrorKind::Dimension, block, ": expected input [B,C,1,T], got ", shape_str(s));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> mta_forward(const BasicTensor<T>& V, const MTAParams<T>& params,
                           AttentionProbe<T>* probe,
                           const std::optional<std::array<T, 3>>& forced_weights) {
  require_window(V.shape(), "temporal attention");
  const std::size_t B = V.dim(0), C = V.dim(1), Tn = V.dim(3);
  if (Tn < kMtaKernels.back()) {
    fail(ErrorKind::Config, "temporal attention: window has ", Tn,
         " samples but the widest temporal kernel needs ", kMtaKernels.back(),
         "; use a longer decision window");
  }
  if (params.spatial_conv.dim(1) != C) {
    fail(ErrorKind::Dimension, "temporal attention: configured for ", params.spatial_conv.dim(1),
         " channels, input has ", C);
  }
  return in_block("temporal attention", [&] {
    const auto reduced = conv2d<T>(V, params.spatial_conv, std::nullopt, {});
    const auto widened = conv2d<T>(reduced, params.up_conv, std::nullopt, {});
    const auto parts = split(widened, 1, 3);

    std::array<BasicTensor<T>, 3> weights;
    for (std::size_t i = 0; i < 3; ++i) {
      if (forced_weights) {
        weights[i] = BasicTensor<T>::full(Shape{B, 1, 1, 1}, (*forced_weights)[i]);
        continue;
      }
      const auto& br = params.branches[i];
      Conv2dOptions opts;
      opts.padding = same_padding(1, br.kernel);
      auto y = conv2d<T>(parts[i], br.weight, br.bias, opts);
      y = layer_norm(y, 3, br.ln_gain, br.ln_shift);
      y = elu(y);
      weights[i] = adaptive_avg_pool2d(y, 1, 1);
    }
    if (probe != nullptr) {
      std::vector<T> w(B * 3);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < 3; ++i) w[b * 3 + i] = weights[i].data()[b];
      probe->mta_weights = BasicTensor<T>(Shape{B, 3}, std::move(w));
    }
    auto fused = mul(weights[0], parts[0]);
    fused = add(fused, mul(weights[1], parts[1]));
    fused = add(fused, mul(weights[2], parts[2]));
    return conv2d<T>(fused, params.recover_conv, std::nullopt, {});
  });
}

template <typename T>
BasicTensor<T> channel_attention_forward(const BasicTensor<T>& E, const MHAParams<T>& params,
                                         const Ablation& ablation, AttentionProbe<T>* probe) {
  require_window(E.shape(), "channel attention");
  const std::size_t B = E.dim(0), C = E.dim(1), Tn = E.dim(3);
  if (ablation.no_ca) {
    return ablation.no_mta ? E : mta_forward(E, params.mta, probe);
  }
  if (params.ca_conv_in.dim(1) != C) {
    fail(ErrorKind::Dimension, "channel attention: configured for ", params.ca_conv_in.dim(1),
         " channels, input has ", C);
  }
  return in_block("channel attention", [&] {
    auto x = conv2d<T>(E, params.ca_conv_in, std::nullopt, {});
    Conv2dOptions dw;
    dw.padding = same_padding(1, 3);
    dw.groups = 3 * C;
    x = conv2d<T>(x, params.ca_dwconv, std::nullopt, dw);
    const auto qkv = split(x, 1, 3);
    const auto value = ablation.no_mta ? qkv[2] : mta_forward(qkv[2], params.mta, probe);

    const auto q = reshape(qkv[0], {B, C, Tn});
    const auto k = reshape(qkv[1], {B, C, Tn});
    const auto v = reshape(value, {B, C, Tn});
    const auto inv_t = exp(scale(params.log_t, T(-1)));
    const auto logits = mul(matmul(q, transpose_last2(k)), inv_t);
    const auto attention = softmax(logits, -1);
    if (probe != nullptr) probe->attention = attention;
    const auto mixed = reshape(matmul(attention, v), {B, C, 1, Tn});
    return conv2d<T>(mixed, params.ca_conv_out, std::nullopt, {});
  });
}

template <typename T>
BasicTensor<T> mga_forward(const BasicTensor<T>& H, const MGAParams<T>& params,
                           AttentionProbe<T>* probe) {
  require_window(H.shape(), "global attention");
  const std::size_t B = H.dim(0), C = H.dim(1), Tn = H.dim(3);
  if (C < 7 || Tn < 7) {
    fail(ErrorKind::Config, "global attention: needs C >= 7 and T >= 7, got C=", C, " T=", Tn);
  }
  const std::size_t d = params.dilation;
  if (d == 0) fail(ErrorKind::Config, "global attention: dilation must be >= 1");
  return in_block("global attention", [&] {
    const auto plane = reshape(H, {B, 1, C, Tn});
    const auto widened = conv2d<T>(plane, params.up_conv, std::nullopt, {});
    const auto parts = split(widened, 1, 3);
    std::array<BasicTensor<T>, 3> maps;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto k = kMgaKernels[i];
      Conv2dOptions opts;
      opts.dilation = {d, d};
      opts.padding = same_padding(k, k, d, d);
      maps[i] = mul(conv2d<T>(parts[i], params.dilated_convs[i], std::nullopt, opts), parts[i]);
    }
    if (probe != nullptr) probe->mga_maps = maps;
    const auto attention = concat<T>(maps, 1);
    const auto mixed = conv2d<T>(mul(widened, attention), params.down_conv, std::nullopt, {});
    return add(mixed, plane);
  });
}

template <typename T>
BasicTensor<T> mha_forward(const BasicTensor<T>& E, const MHAParams<T>& params,
                           const Ablation& ablation, AttentionProbe<T>* probe) {
  const auto H = channel_attention_forward(E, params, ablation, probe);
  if (ablation.no_mga) return reshape(H, {H.dim(0), 1, H.dim(1), H.dim(3)});
  return mga_forward(H, params.mga, probe);
}

#define MHANET_INSTANTIATE_MHA(T)                                                              \
  template BasicTensor<T> channel_attention_forward(const BasicTensor<T>&, const MHAParams<T>&, \
                                                    const Ablation&, AttentionProbe<T>*);      \
  template BasicTensor<T> mta_forward(const BasicTensor<T>&, const MTAParams<T>&,              \
                                      AttentionProbe<T>*,                                      \
                                      const std::optional<std::array<T, 3>>&);                 \
  template BasicTensor<T> mga_forward(const BasicTensor<T>&, const MGAParams<T>&,              \
                                      AttentionProbe<T>*);                                     \
  template BasicTensor<T> mha_forward(const BasicTensor<T>&, const MHAParams<T>&,              \
                                      const Ablation&, AttentionProbe<T>*);

MHANET_INSTANTIATE_MHA(float)
MHANET_INSTANTIATE_MHA(double)

}  // namespace mhanet
