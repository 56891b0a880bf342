#include "mhanet/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mhanet/bytes.hpp"

namespace mhanet {

namespace {

constexpr char kMagic[4] = {'M', 'H', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxName = 4096;
constexpr std::uint32_t kMaxRank = 8;

NamedTensor vector_entry(std::string name, const std::vector<double>& values) {
  return {std::move(name), {values.size()}, std::vector<float>(values.begin(), values.end())};
}

// Seeds are 64-bit; four 16-bit limbs survive the f32 payload exactly.
std::vector<double> seed_limbs(std::uint64_t seed) {
  std::vector<double> out;
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<double>((seed >> (16 * i)) & 0xffffu));
  return out;
}

std::size_t as_count(float v, const char* what) {
  if (!(v >= 0.0f) || v != std::floor(v) || v > 16777216.0f) {
    fail(ErrorKind::Format, "checkpoint: ", what, " holds non-integral value ", v);
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors) {
  ByteWriter w;
  w.put_raw(std::string_view(kMagic, 4));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.size() > kMaxName) {
      fail(ErrorKind::Format, "checkpoint: invalid tensor name length ", t.name.size());
    }
    if (numel(t.shape) != t.data.size()) {
      fail(ErrorKind::Dimension, "checkpoint: tensor '", t.name, "' shape ", shape_str(t.shape),
           " does not match ", t.data.size(), " values");
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_raw(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put<std::uint64_t>(d);
    for (float v : t.data) w.put_f32(v);
  }
  const auto hash = fnv1a64(w.bytes());
  w.put<std::uint64_t>(hash);
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    fail(ErrorKind::Format, "checkpoint: truncated: expected at least 8 bytes, have ", bytes.size());
  }
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.subspan(bytes.size() - 8), "checkpoint");
  const auto stored = tail.get<std::uint64_t>("hash");
  const auto actual = fnv1a64(body);

  ByteReader r(body, "checkpoint");
  const auto magic = r.get_string(4, "magic");
  if (magic != std::string_view(kMagic, 4)) {
    fail(ErrorKind::Format, "checkpoint: bad magic at byte 0");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    fail(ErrorKind::Format, "checkpoint: unsupported version ", version, " at byte 4");
  }
  if (stored != actual) {
    fail(ErrorKind::Format, "checkpoint: content hash mismatch (stored ", std::hex, stored,
         ", computed ", actual, ")");
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto at = r.offset();
    const auto len = r.get<std::uint32_t>("name length");
    if (len == 0 || len > kMaxName) {
      fail(ErrorKind::Format, "checkpoint: invalid name length ", len, " at byte ", at);
    }
    t.name = r.get_string(len, "name");
    if (!seen.insert(t.name).second) {
      fail(ErrorKind::Format, "checkpoint: duplicate tensor '", t.name, "'");
    }
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > kMaxRank) {
      fail(ErrorKind::Format, "checkpoint: tensor '", t.name, "' has invalid rank ", rank);
    }
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dimension");
      if (d == 0 || d > r.remaining() / 4 + 1 || n > (r.remaining() / 4 + 1) / d) {
        fail(ErrorKind::Format, "checkpoint: tensor '", t.name, "' dimension ", d,
             " is zero or exceeds the remaining payload at byte ", r.offset() - 8);
      }
      t.shape.push_back(static_cast<std::size_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    r.need(n * 4, "tensor payload");
    t.data.resize(n);
    for (auto& v : t.data) v = r.get_f32("tensor payload");
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    fail(ErrorKind::Format, "checkpoint: ", r.remaining(), " unexpected bytes at byte ", r.offset());
  }
  return out;
}

std::vector<NamedTensor> export_bundle(const CheckpointBundle& b) {
  std::vector<NamedTensor> out;
  const auto& cfg = b.params.config;
  const auto& ab = b.params.ablation;
  out.push_back(vector_entry("meta.model", {double(cfg.channels), double(cfg.samples),
                                            double(cfg.k1), double(cfg.mga_dilation())}));
  out.push_back(vector_entry("meta.ablation", {double(ab.no_ca), double(ab.no_mta),
                                               double(ab.no_mga), double(ab.no_stc)}));
  out.push_back(vector_entry(
      "meta.windowing", {b.windowing.window_seconds, b.windowing.train_hop_seconds,
                         b.windowing.eval_hop_seconds}));
  out.push_back(vector_entry("meta.split_ratios",
                             {double(b.ratios.train), double(b.ratios.val), double(b.ratios.test)}));
  out.push_back(vector_entry("meta.split_seed", seed_limbs(b.split_seed)));
  {
    const std::string id = b.subject_id.empty() ? std::string("unknown") : b.subject_id;
    std::vector<double> codes;
    for (unsigned char ch : id) codes.push_back(ch);
    out.push_back(vector_entry("meta.subject", codes));
  }
  b.params.for_each_param([&](const std::string& name, const Tensor& t, const ParamInfo&) {
    out.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  });
  b.params.for_each_buffer([&](const std::string& name, const std::vector<float>& v) {
    out.push_back({name, {v.size()}, v});
  });
  NamedTensor filters{"csp.filters", {b.csp.c_out, b.csp.c_raw}, {}};
  for (std::size_t o = 0; o < b.csp.c_out; ++o)
    for (std::size_t c = 0; c < b.csp.c_raw; ++c)
      filters.data.push_back(static_cast<float>(
          b.csp.filters(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c))));
  out.push_back(std::move(filters));
  std::vector<double> eig = b.csp.eigenvalues;
  eig.resize(b.csp.c_out, 0.0);
  out.push_back(vector_entry("csp.eigenvalues", eig));
  return out;
}

CheckpointBundle import_bundle(std::span<const NamedTensor> tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) {
      fail(ErrorKind::Format, "checkpoint: duplicate tensor '", t.name, "'");
    }
  }
  std::set<std::string> used;
  auto take = [&](const std::string& name, const Shape& shape) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorKind::Format, "checkpoint: missing tensor '", name, "'");
    if (it->second->shape != shape) {
      fail(ErrorKind::Format, "checkpoint: tensor '", name, "' has shape ",
           shape_str(it->second->shape), ", expected ", shape_str(shape));
    }
    used.insert(name);
    return *it->second;
  };
  auto take_any = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorKind::Format, "checkpoint: missing tensor '", name, "'");
    if (it->second->shape.size() != 1) {
      fail(ErrorKind::Format, "checkpoint: tensor '", name, "' must be rank 1");
    }
    used.insert(name);
    return *it->second;
  };

  CheckpointBundle b;
  const auto& model = take("meta.model", {4}).data;
  ModelConfig cfg;
  cfg.channels = as_count(model[0], "meta.model");
  cfg.samples = as_count(model[1], "meta.model");
  cfg.k1 = as_count(model[2], "meta.model");
  cfg.dilation = as_count(model[3], "meta.model");
  const auto& flags = take("meta.ablation", {4}).data;
  Ablation ab{flags[0] != 0.0f, flags[1] != 0.0f, flags[2] != 0.0f, flags[3] != 0.0f};
  try {
    cfg.validate(ab);
  } catch (const Error& e) {
    fail(ErrorKind::Format, "checkpoint: invalid model metadata: ", e.what());
  }
  const auto& win = take("meta.windowing", {3}).data;
  b.windowing = {win[0], win[1], win[2]};
  const auto& ratios = take("meta.split_ratios", {3}).data;
  b.ratios = {as_count(ratios[0], "meta.split_ratios"), as_count(ratios[1], "meta.split_ratios"),
              as_count(ratios[2], "meta.split_ratios")};
  const auto& limbs = take("meta.split_seed", {4}).data;
  for (int i = 0; i < 4; ++i) {
    b.split_seed |= static_cast<std::uint64_t>(as_count(limbs[i], "meta.split_seed")) << (16 * i);
  }
  for (float code : take_any("meta.subject").data) {
    const auto ch = as_count(code, "meta.subject");
    if (ch > 255) fail(ErrorKind::Format, "checkpoint: meta.subject holds a non-byte value");
    b.subject_id.push_back(static_cast<char>(ch));
  }

  b.params = init_model<float>(cfg, ab, 0);
  b.params.for_each_param([&](const std::string& name, Tensor& t, const ParamInfo&) {
    const auto& src = take(name, t.shape());
    std::copy(src.data.begin(), src.data.end(), t.mutable_data().begin());
  });
  b.params.for_each_buffer([&](const std::string& name, std::vector<float>& v) {
    v = take(name, {v.size()}).data;
  });

  auto fit = by_name.find("csp.filters");
  if (fit == by_name.end()) fail(ErrorKind::Format, "checkpoint: missing tensor 'csp.filters'");
  const auto& fshape = fit->second->shape;
  if (fshape.size() != 2 || fshape[0] != cfg.channels) {
    fail(ErrorKind::Format, "checkpoint: csp.filters has shape ", shape_str(fshape), ", expected [",
         cfg.channels, ",C_raw]");
  }
  used.insert("csp.filters");
  b.csp = csp_from_filters(fshape[0], fshape[1], fit->second->data);
  const auto& eig = take("csp.eigenvalues", {cfg.channels}).data;
  b.csp.eigenvalues.assign(eig.begin(), eig.end());

  for (const auto& t : tensors) {
    if (!used.contains(t.name)) fail(ErrorKind::Format, "checkpoint: unknown tensor '", t.name, "'");
  }
  return b;
}

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  const auto tensors = export_bundle(bundle);
  write_file(path, encode_checkpoint(tensors));
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto tensors = decode_checkpoint(bytes);
  return import_bundle(tensors);
}

}  // namespace mhanet
