#pragma once

#include <array>
#include <optional>

#include "mhanet/model.hpp"

namespace mhanet {

/// Optional capture of intermediate attention quantities, for inspection and
/// tests. Fields stay undefined for blocks that did not run.
template <typename T>
struct AttentionProbe {
  BasicTensor<T> attention;    // [B,C,C], rows sum to one
  BasicTensor<T> mta_weights;  // [B,3]: alpha, beta, gamma per sample
  std::array<BasicTensor<T>, 3> mga_maps;  // delta, phi, mu: [B,1,C,T]
};

/// Channel attention with embedded MTA on the value path. E, H: [B,C,1,T].
template <typename T>
BasicTensor<T> channel_attention_forward(const BasicTensor<T>& E, const MHAParams<T>& params,
                                         const Ablation& ablation,
                                         AttentionProbe<T>* probe = nullptr);

/// Multi-scale temporal attention. `forced_weights` replaces the computed
/// per-branch scalars (alpha, beta, gamma) for every sample.
template <typename T>
BasicTensor<T> mta_forward(const BasicTensor<T>& V, const MTAParams<T>& params,
                           AttentionProbe<T>* probe = nullptr,
                           const std::optional<std::array<T, 3>>& forced_weights = std::nullopt);

/// Multi-scale global attention with residual; H [B,C,1,T] -> F [B,1,C,T].
template <typename T>
BasicTensor<T> mga_forward(const BasicTensor<T>& H, const MGAParams<T>& params,
                           AttentionProbe<T>* probe = nullptr);

/// channel_attention_forward followed by mga_forward, honoring the mask.
template <typename T>
BasicTensor<T> mha_forward(const BasicTensor<T>& E, const MHAParams<T>& params,
                           const Ablation& ablation, AttentionProbe<T>* probe = nullptr);

}  // namespace mhanet
