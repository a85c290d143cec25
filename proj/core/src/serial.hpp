#pragma once

// Internal helpers shared by the on-disk formats.

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "memarray/datagen.hpp"
#include "memarray/errors.hpp"

namespace mema {

class ByteWriter {
 public:
  void raw(std::string_view s) { buf_.append(s); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(what_ + ": truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

// JSON has no infinity; an absent SNR (clean) is written as null.
inline nlohmann::json corruption_to_json(const CorruptionSpec& c) {
  nlohmann::json j = {{"smear_taps", c.smear_taps}, {"smear_decay", c.smear_decay},
                      {"gain", c.gain},             {"offset", c.offset},
                      {"nomic", c.nomic}};
  j["snr_db"] = std::isinf(c.snr_db) ? nlohmann::json(nullptr) : nlohmann::json(c.snr_db);
  return j;
}

inline CorruptionSpec corruption_from_json(const nlohmann::json& j) {
  static const char* keys[] = {"snr_db", "smear_taps", "smear_decay", "gain", "offset", "nomic"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("corruption: unknown key '" + it.key() + "'");
  }
  CorruptionSpec c;
  if (j.contains("snr_db") && !j.at("snr_db").is_null()) c.snr_db = j.at("snr_db").get<double>();
  c.smear_taps = j.value("smear_taps", c.smear_taps);
  c.smear_decay = j.value("smear_decay", c.smear_decay);
  c.gain = j.value("gain", c.gain);
  c.offset = j.value("offset", c.offset);
  c.nomic = j.value("nomic", c.nomic);
  return c;
}

inline nlohmann::json stream_spec_to_json(const StreamSpec& s) {
  return {{"id", s.id}, {"corruption", corruption_to_json(s.corruption)}};
}

inline StreamSpec stream_spec_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "id" && it.key() != "corruption") {
      throw ConfigError("stream: unknown key '" + it.key() + "'");
    }
  }
  StreamSpec s;
  s.id = j.at("id").get<std::string>();
  if (j.contains("corruption")) s.corruption = corruption_from_json(j.at("corruption"));
  return s;
}

}  // namespace mema
