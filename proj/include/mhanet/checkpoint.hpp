#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mhanet/csp.hpp"
#include "mhanet/data.hpp"
#include "mhanet/model.hpp"

namespace mhanet {

/// One entry of the "MHCK" container: a named f32 array with its shape.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

/// magic "MHCK", u32 version, u32 count, then per tensor: u32 name length,
/// name bytes, u32 rank, rank x u64 dims, f32 payload; finally the 64-bit
/// FNV-1a hash of every preceding byte.
std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
/// Validates magic, version, hash, shapes and names (no duplicates).
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Everything needed to rebuild a trained subject model and its test split.
struct CheckpointBundle {
  std::string subject_id;
  ModelParams<float> params;
  CSPModel csp;
  WindowingConfig windowing;
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
};

std::vector<NamedTensor> export_bundle(const CheckpointBundle& bundle);
/// Strict: every expected tensor must be present with its exact shape and no
/// unknown names are accepted.
CheckpointBundle import_bundle(std::span<const NamedTensor> tensors);

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace mhanet
