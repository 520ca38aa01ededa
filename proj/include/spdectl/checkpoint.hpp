#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spdectl/nn.hpp"

namespace spdectl {

/// SPDM container for trained parameters.
///
/// Layout (little endian): "SPDM", u32 version, 4-byte section tag ("SURR" or
/// "PLCY"), u64 spec hash, str metadata (JSON text), u32 tensor count, then per
/// tensor: str name, u32 rank, u64 extents..., f64 values; trailer u64 FNV-1a
/// of every preceding byte.
struct Checkpoint {
  static constexpr std::uint32_t version = 1;

  std::string section;
  std::uint64_t spec_hash = 0;
  std::string metadata = "{}";
  std::vector<nn::Parameter> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into `store` by name (shapes must match).
void restore_params(nn::ParamStore& store, const Checkpoint& ckpt);

}  // namespace spdectl
