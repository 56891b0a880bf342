#pragma once

#include "mhanet/mha.hpp"
#include "mhanet/model.hpp"

namespace mhanet {

/// Temporal conv (1x2) -> BN -> ELU -> spatial conv (Cx1) -> BN -> ELU ->
/// adaptive pool to width 5. F [B,1,C,T] -> O [B,5]. Train mode updates the
/// batch-norm running statistics held in `params`.
template <typename T>
BasicTensor<T> stc_forward(const BasicTensor<T>& F, STCParams<T>& params, Mode mode);

/// Logits [B,2] for E [B,C,1,T].
template <typename T>
BasicTensor<T> model_forward(const BasicTensor<T>& E, ModelParams<T>& params, Mode mode,
                             AttentionProbe<T>* probe = nullptr);

}  // namespace mhanet
