#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "memarray/model.hpp"

namespace mema {

// Checkpoint file layout (little-endian):
//   "MEMACKPT"            8-byte magic
//   u32                   format version
//   u64                   header length n
//   n bytes               JSON header: dims, stream count, vocab, frozen
//                         groups, tensor table (name, rows, cols) in payload
//                         order, metadata
//   f64 * k               tensor payload, then the unigram prior
//   u64                   FNV-1a checksum of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int stage = 1;
  int epoch = 0;  // best epoch
  std::uint64_t seed = 0;
  std::string config_hash;
  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  Model model;
  CheckpointMeta meta;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void checkpoint_save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

// Hex FNV-1a of the serialized form.
std::string checkpoint_hash(const Checkpoint& c);

std::string to_string(AttentionKind k);
AttentionKind attention_kind_from_string(const std::string& s);

}  // namespace mema
