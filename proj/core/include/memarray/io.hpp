#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memarray/datagen.hpp"
#include "memarray/types.hpp"

namespace mema {

// Binary matrix file, little-endian:
//   bytes 0..3   magic "MEMX"
//   bytes 4..7   u32 format version (1)
//   bytes 8..15  u64 rows
//   bytes 16..23 u64 cols
//   then rows*cols f64 values, row-major
inline constexpr std::uint32_t kMatrixFormatVersion = 1;

std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(const std::string& bytes, const std::string& what = "matrix");

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, const std::string& bytes);

std::string hex64(std::uint64_t v);

// A split on disk: <dir>/manifest.json plus one matrix file per
// (utterance, stream). The manifest records the transcript of each
// utterance, the stream list with corruption metadata, and free-form
// provenance (config hash, seed, producing checkpoint hash). Each matrix
// file's FNV-1a checksum is kept in the manifest and verified on read.
struct SplitManifest {
  std::string split;
  std::string kind;  // "features" or "ufe"
  std::vector<StreamSpec> streams;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string checkpoint_hash;  // ufe only
};

void write_split(const std::filesystem::path& dir, const SplitManifest& manifest,
                 const std::vector<StreamBundle>& bundles);
std::vector<StreamBundle> read_split(const std::filesystem::path& dir,
                                     SplitManifest* manifest = nullptr);
SplitManifest read_manifest(const std::filesystem::path& dir);
// FNV-1a of the manifest, which covers every file checksum.
std::string split_hash(const std::filesystem::path& dir);

}  // namespace mema
