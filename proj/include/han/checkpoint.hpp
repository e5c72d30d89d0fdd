#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "han/nn.hpp"
#include "han/tensor.hpp"

namespace han {

// Binary checkpoint container. Layout (all integers little-endian):
//   magic "HANCKPT\0" | u32 version | u64 step | u64 corpus_hash
//   | str config | u32 n_counters { str name, u64 value }
//   | u32 n_tensors { str name, u32 rank, u64 dims[rank], f64 values[] }
// where str is u32 length followed by raw bytes.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::uint64_t step = 0;
  std::uint64_t corpus_hash = 0;
  std::string config;
  std::map<std::string, std::uint64_t> counters;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Snapshots `set` under `prefix.` into the checkpoint (deep copies).
void store_tensors(Checkpoint& ckpt, const std::string& prefix, const nn::ParameterSet& set);
// Copies values back into the existing tensors of `set`; throws on a missing
// name or mismatched shape.
void restore_tensors(const Checkpoint& ckpt, const std::string& prefix, nn::ParameterSet& set);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace han
