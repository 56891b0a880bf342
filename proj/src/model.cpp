#include "mhanet/model.hpp"

#include <cmath>

#include "mhanet/random.hpp"

namespace mhanet {

Ablation Ablation::parse(std::string_view variant) {
  Ablation a;
  if (variant.empty() || variant == "none" || variant == "full") return a;
  std::size_t start = 0;
  while (start <= variant.size()) {
    const auto plus = variant.find('+', start);
    const auto token = variant.substr(start, plus == std::string_view::npos ? std::string_view::npos
                                                                            : plus - start);
    if (token == "ca") {
      a.no_ca = true;
    } else if (token == "mta") {
      a.no_mta = true;
    } else if (token == "mga") {
      a.no_mga = true;
    } else if (token == "stc") {
      a.no_stc = true;
    } else {
      fail(ErrorKind::Config, "unknown ablation '", token, "' (expected ca, mta, mga, stc)");
    }
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  return a;
}

std::string Ablation::name() const {
  std::string out;
  auto add = [&out](bool on, const char* token) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += token;
  };
  add(no_mta, "mta");
  add(no_ca, "ca");
  add(no_mga, "mga");
  add(no_stc, "stc");
  return out.empty() ? "full" : out;
}

std::vector<Ablation> standard_ablations() {
  return {Ablation::parse("ca"), Ablation::parse("mta"), Ablation::parse("mga"),
          Ablation::parse("mta+ca"), Ablation::parse("stc")};
}

std::size_t default_dilation(std::size_t samples) {
  const auto d = static_cast<std::size_t>(std::llround(static_cast<double>(samples) / 32.0));
  return d < 1 ? 1 : d;
}

std::size_t ModelConfig::mga_dilation() const {
  return dilation == 0 ? default_dilation(samples) : dilation;
}

void ModelConfig::validate(const Ablation& ablation) const {
  if (channels == 0 || k1 == 0) fail(ErrorKind::Config, "channels and k1 must be positive");
  if (samples < 6) {
    fail(ErrorKind::Config, "window of ", samples,
         " samples is too short: need T >= 6 (largest temporal kernel and pool width 5)");
  }
  if (!ablation.no_mga && (channels < 7 || samples < 7)) {
    fail(ErrorKind::Config, "global attention needs C >= 7 and T >= 7, got C=", channels,
         " T=", samples);
  }
}

bool block_active(Block block, const Ablation& ablation) {
  switch (block) {
    case Block::ChannelAttention:
      return !ablation.no_ca;
    case Block::Mta:
      return !ablation.no_mta;
    case Block::Mga:
      return !ablation.no_mga;
    case Block::Stc:
      return !ablation.no_stc;
    case Block::Classifier:
      return true;
  }
  return true;
}

template <typename T>
T MHAParams<T>::temperature() const {
  return std::exp(log_t.item());
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, const Ablation& ablation,
                          std::uint64_t seed) {
  config.validate(ablation);
  Rng rng(seed);
  auto uniform = [&rng](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
    return BasicTensor<T>(std::move(shape), std::move(data), true);
  };
  auto constant = [](std::size_t n, T value) {
    return BasicTensor<T>::full(Shape{n}, value, true);
  };
  const std::size_t C = config.channels;
  const std::size_t Tn = config.samples;
  const std::size_t k1 = config.k1;

  ModelParams<T> p;
  p.config = config;
  p.ablation = ablation;

  p.mha.ca_conv_in = uniform({3 * C, C, 1, 1}, C);
  p.mha.ca_dwconv = uniform({3 * C, 1, 1, 3}, 3);
  p.mha.log_t = constant(1, T(0));
  p.mha.ca_conv_out = uniform({C, C, 1, 1}, C);

  p.mha.mta.spatial_conv = uniform({1, C, 1, 1}, C);
  p.mha.mta.up_conv = uniform({3, 1, 1, 1}, 1);
  for (std::size_t i = 0; i < kMtaKernels.size(); ++i) {
    auto& br = p.mha.mta.branches[i];
    br.kernel = kMtaKernels[i];
    br.weight = uniform({1, 1, 1, br.kernel}, br.kernel);
    br.bias = uniform({1}, br.kernel);
    br.ln_gain = constant(Tn, T(1));
    br.ln_shift = constant(Tn, T(0));
  }
  p.mha.mta.recover_conv = uniform({C, 1, 1, 1}, 1);

  p.mha.mga.up_conv = uniform({3, 1, 1, 1}, 1);
  for (std::size_t i = 0; i < kMgaKernels.size(); ++i) {
    const auto k = kMgaKernels[i];
    p.mha.mga.dilated_convs[i] = uniform({1, 1, k, k}, k * k);
  }
  p.mha.mga.down_conv = uniform({1, 3, 1, 1}, 3);
  p.mha.mga.dilation = config.mga_dilation();

  p.stc.temporal_conv = uniform({k1, 1, 1, 2}, 2);
  p.stc.temporal_bias = uniform({k1}, 2);
  p.stc.temporal_bn_gain = constant(k1, T(1));
  p.stc.temporal_bn_shift = constant(k1, T(0));
  p.stc.temporal_bn_stats = BatchNormStats<T>::identity(k1);
  p.stc.spatial_conv = uniform({1, k1, C, 1}, k1 * C);
  p.stc.spatial_bias = uniform({1}, k1 * C);
  p.stc.spatial_bn_gain = constant(1, T(1));
  p.stc.spatial_bn_shift = constant(1, T(0));
  p.stc.spatial_bn_stats = BatchNormStats<T>::identity(1);

  p.fc_weight = uniform({kClasses, kPoolWidth}, kPoolWidth);
  p.fc_bias = uniform({kClasses}, kPoolWidth);
  return p;
}

template <typename T>
std::vector<BasicTensor<T>> ModelParams<T>::trainable() const {
  std::vector<BasicTensor<T>> out;
  for_each_param([&](const std::string&, const BasicTensor<T>& t, const ParamInfo& info) {
    if (block_active(info.block, ablation)) out.push_back(t);
  });
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  ModelParams copy = *this;
  copy.for_each_param([](const std::string&, BasicTensor<T>& t, const ParamInfo&) {
    const bool rg = t.requires_grad();
    t = t.detach();
    t.set_requires_grad(rg);
  });
  return copy;
}

template <typename T>
std::size_t count_params(const ModelParams<T>& params) {
  std::size_t n = 0;
  params.for_each_param([&](const std::string&, const BasicTensor<T>& t, const ParamInfo& info) {
    if (block_active(info.block, params.ablation)) n += t.numel();
  });
  return n;
}

std::size_t count_params(const ModelConfig& config, const Ablation& ablation) {
  return count_params(init_model<float>(config, ablation, 0));
}

template struct MHAParams<float>;
template struct MHAParams<double>;
template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_model<float>(const ModelConfig&, const Ablation&, std::uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, const Ablation&, std::uint64_t);
template std::size_t count_params<float>(const ModelParams<float>&);
template std::size_t count_params<double>(const ModelParams<double>&);

}  // namespace mhanet
