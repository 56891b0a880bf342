#include "mhanet/stc.hpp"

namespace mhanet {

template <typename T>
BasicTensor<T> stc_forward(const BasicTensor<T>& F, STCParams<T>& params, Mode mode) {
  if (F.rank() != 4 || F.dim(1) != 1) {
    fail(ErrorKind::Dimension, "spatiotemporal conv: expected [B,1,C,T], got ",
         shape_str(F.shape()));
  }
  const std::size_t B = F.dim(0), C = F.dim(2), Tn = F.dim(3);
  if (Tn < kPoolWidth + 1) {
    fail(ErrorKind::Config, "spatiotemporal conv: temporal conv leaves width ", Tn - 1,
         " < ", kPoolWidth, "; minimum T is ", kPoolWidth + 1);
  }
  if (params.spatial_conv.dim(2) != C) {
    fail(ErrorKind::Dimension, "spatiotemporal conv: spatial kernel height ",
         params.spatial_conv.dim(2), " must equal C=", C);
  }
  auto x = conv2d<T>(F, params.temporal_conv, params.temporal_bias, {});
  x = elu(batch_norm(x, params.temporal_bn_gain, params.temporal_bn_shift,
                     params.temporal_bn_stats, mode));
  x = conv2d<T>(x, params.spatial_conv, params.spatial_bias, {});
  x = elu(batch_norm(x, params.spatial_bn_gain, params.spatial_bn_shift, params.spatial_bn_stats,
                     mode));
  return reshape(adaptive_avg_pool2d(x, 1, kPoolWidth), {B, kPoolWidth});
}

template <typename T>
BasicTensor<T> model_forward(const BasicTensor<T>& E, ModelParams<T>& params, Mode mode,
                             AttentionProbe<T>* probe) {
  const auto& cfg = params.config;
  if (E.rank() != 4 || E.dim(1) != cfg.channels || E.dim(2) != 1 || E.dim(3) != cfg.samples) {
    fail(ErrorKind::Dimension, "model: expected input [B,", cfg.channels, ",1,", cfg.samples,
         "], got ", shape_str(E.shape()));
  }
  const auto F = mha_forward(E, params.mha, params.ablation, probe);
  BasicTensor<T> pooled;
  if (params.ablation.no_stc) {
    pooled = reshape(adaptive_avg_pool2d(F, 1, kPoolWidth), {F.dim(0), kPoolWidth});
  } else {
    pooled = stc_forward(F, params.stc, mode);
  }
  return linear(pooled, params.fc_weight, params.fc_bias);
}

template BasicTensor<float> stc_forward(const BasicTensor<float>&, STCParams<float>&, Mode);
template BasicTensor<double> stc_forward(const BasicTensor<double>&, STCParams<double>&, Mode);
template BasicTensor<float> model_forward(const BasicTensor<float>&, ModelParams<float>&, Mode,
                                          AttentionProbe<float>*);
template BasicTensor<double> model_forward(const BasicTensor<double>&, ModelParams<double>&, Mode,
                                           AttentionProbe<double>*);

}  // namespace mhanet
