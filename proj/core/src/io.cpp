#include "memarray/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "memarray/errors.hpp"
#include "memarray/rng.hpp"
#include "serial.hpp"

namespace mema {

namespace fs = std::filesystem;
using nlohmann::json;

std::string encode_matrix(const Matrix& m) {
  ByteWriter w;
  w.raw("MEMX");
  w.u32(kMatrixFormatVersion);
  w.u64(m.rows());
  w.u64(m.cols());
  for (double v : m.data()) w.f64(v);
  return w.take();
}

Matrix decode_matrix(const std::string& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.raw(4) != "MEMX") throw DataError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kMatrixFormatVersion) {
    throw DataError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  if (cols != 0 && rows > (bytes.size() / 8) / cols + 1) throw DataError(what + ": truncated");
  if (r.remaining() != rows * cols * 8) {
    throw DataError(what + ": expected " + std::to_string(rows * cols) + " values, file holds " +
                    std::to_string(r.remaining()) + " bytes");
  }
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = r.f64();
  if (!m.all_finite()) throw DataError(what + ": non-finite values");
  return m;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_matrix(const fs::path& path, const Matrix& m) { write_file(path, encode_matrix(m)); }

Matrix read_matrix(const fs::path& path) { return decode_matrix(read_file(path), path.string()); }

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace {

std::string stream_file(const std::string& utt, const std::string& stream) {
  return utt + "." + stream + ".mat";
}

json manifest_json(const SplitManifest& m) {
  json streams = json::array();
  for (const auto& s : m.streams) streams.push_back(stream_spec_to_json(s));
  return {{"format", "memarray-split"},
          {"version", 1},
          {"split", m.split},
          {"kind", m.kind},
          {"streams", streams},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"checkpoint_hash", m.checkpoint_hash}};
}

}  // namespace

void write_split(const fs::path& dir, const SplitManifest& manifest,
                 const std::vector<StreamBundle>& bundles) {
  fs::create_directories(dir);
  json j = manifest_json(manifest);
  json utts = json::array();
  for (const auto& b : bundles) {
    json files = json::object();
    json sums = json::object();
    for (const auto& s : b.streams) {
      const std::string name = stream_file(b.utt_id, s.stream_id);
      const std::string bytes = encode_matrix(s.frames);
      write_file(dir / name, bytes);
      files[s.stream_id] = name;
      sums[s.stream_id] = hex64(fnv1a64(bytes));
    }
    utts.push_back({{"utt_id", b.utt_id},
                    {"transcript", b.transcript.labels},
                    {"files", files},
                    {"checksums", sums}});
  }
  j["utterances"] = utts;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

namespace {

json load_manifest_json(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) throw DataError("missing manifest " + p.string());
  try {
    json j = json::parse(read_file(p));
    if (j.value("format", "") != "memarray-split") throw DataError(p.string() + ": not a split manifest");
    return j;
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

SplitManifest parse_manifest(const json& j) {
  SplitManifest m;
  m.split = j.at("split").get<std::string>();
  m.kind = j.at("kind").get<std::string>();
  for (const auto& s : j.at("streams")) m.streams.push_back(stream_spec_from_json(s));
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  return m;
}

}  // namespace

std::string split_hash(const fs::path& dir) {
  load_manifest_json(dir);
  return hex64(fnv1a64(read_file(dir / "manifest.json")));
}

SplitManifest read_manifest(const fs::path& dir) {
  try {
    return parse_manifest(load_manifest_json(dir));
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
}

std::vector<StreamBundle> read_split(const fs::path& dir, SplitManifest* manifest) {
  const json j = load_manifest_json(dir);
  std::vector<StreamBundle> out;
  try {
    const SplitManifest m = parse_manifest(j);
    for (const auto& u : j.at("utterances")) {
      StreamBundle b;
      b.utt_id = u.at("utt_id").get<std::string>();
      b.transcript.labels = u.at("transcript").get<std::vector<int>>();
      for (const auto& s : m.streams) {
        const auto& files = u.at("files");
        if (!files.contains(s.id)) {
          throw DataError(dir.string() + ": utterance " + b.utt_id + " lacks stream " + s.id);
        }
        const fs::path file = dir / files.at(s.id).get<std::string>();
        const std::string bytes = read_file(file);
        const std::string want = u.at("checksums").at(s.id).get<std::string>();
        if (hex64(fnv1a64(bytes)) != want) {
          throw DataError(file.string() + ": checksum mismatch (manifest expects " + want + ")");
        }
        b.streams.push_back({decode_matrix(bytes, file.string()), s.id, b.utt_id});
      }
      out.push_back(std::move(b));
    }
    if (manifest) *manifest = m;
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

}  // namespace mema
