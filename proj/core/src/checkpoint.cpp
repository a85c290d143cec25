#include "memarray/checkpoint.hpp"

#include "json.hpp"
#include "memarray/errors.hpp"
#include "memarray/io.hpp"
#include "serial.hpp"

namespace mema {

using nlohmann::json;
using Kind = CheckpointError::Kind;

std::string to_string(AttentionKind k) {
  return k == AttentionKind::kLocationAware ? "location" : "content";
}

AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "location") return AttentionKind::kLocationAware;
  if (s == "content") return AttentionKind::kContent;
  throw ConfigError("unknown attention kind '" + s + "' (expected location or content)");
}

namespace {

constexpr std::string_view kMagic = "MEMACKPT";

json dims_json(const ModelDims& d) {
  return {{"feat_dim", d.feat_dim},       {"subsampling", d.subsampling},
          {"enc_hidden", d.enc_hidden},   {"enc_layers", d.enc_layers},
          {"ufe_dim", d.ufe_dim},         {"att_dim", d.att_dim},
          {"conv_filters", d.conv_filters}, {"conv_width", d.conv_width},
          {"attention", to_string(d.attention)}, {"dec_hidden", d.dec_hidden},
          {"embed_dim", d.embed_dim},     {"han_att_dim", d.han_att_dim},
          {"vocab_size", d.vocab_size}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.feat_dim = j.at("feat_dim").get<std::size_t>();
  d.subsampling = j.at("subsampling").get<std::size_t>();
  d.enc_hidden = j.at("enc_hidden").get<std::size_t>();
  d.enc_layers = j.at("enc_layers").get<std::size_t>();
  d.ufe_dim = j.at("ufe_dim").get<std::size_t>();
  d.att_dim = j.at("att_dim").get<std::size_t>();
  d.conv_filters = j.at("conv_filters").get<std::size_t>();
  d.conv_width = j.at("conv_width").get<std::size_t>();
  d.attention = attention_kind_from_string(j.at("attention").get<std::string>());
  d.dec_hidden = j.at("dec_hidden").get<std::size_t>();
  d.embed_dim = j.at("embed_dim").get<std::size_t>();
  d.han_att_dim = j.at("han_att_dim").get<std::size_t>();
  d.vocab_size = j.at("vocab_size").get<int>();
  return d;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Model& m = const_cast<Model&>(c.model);  // groups() only hands out views
  const OutputVocab v = m.vocab();
  json tensors = json::array();
  ByteWriter payload;
  for (const auto& g : m.groups()) {
    for (const auto& t : g.tensors) {
      tensors.push_back({{"name", g.name + "/" + t.name},
                         {"rows", t.value->rows()},
                         {"cols", t.value->cols()}});
      for (double x : t.value->data()) payload.f64(x);
    }
  }
  for (double x : m.unigram) payload.f64(x);
  json frozen = json::array();
  for (const auto& f : m.frozen) frozen.push_back(f);
  const json header = {
      {"dims", dims_json(m.dims)},
      {"streams", m.num_streams()},
      {"vocab", {{"base_size", v.base_size}, {"sos", v.sos()}, {"eos", v.eos()}, {"size", v.size()}}},
      {"frozen", frozen},
      {"tensors", tensors},
      {"unigram", m.unigram.size()},
      {"meta",
       {{"stage", c.meta.stage},
        {"epoch", c.meta.epoch},
        {"seed", c.meta.seed},
        {"config_hash", c.meta.config_hash}}}};
  const std::string h = header.dump();
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(h.size());
  w.raw(h);
  w.raw(payload.bytes());
  w.u64(fnv1a64(w.bytes()));
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  json header;
  std::size_t payload_begin = 0;
  try {
    ByteReader r(bytes, "checkpoint");
    if (r.raw(kMagic.size()) != kMagic) throw CheckpointError(Kind::kCorrupt, "checkpoint: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError(Kind::kVersion, "checkpoint: format version " + std::to_string(version) +
                                                ", this build reads " +
                                                std::to_string(kCheckpointVersion));
    }
    if (bytes.size() < 8 + r.pos()) throw CheckpointError(Kind::kCorrupt, "checkpoint: truncated");
    const std::string_view body(bytes.data(), bytes.size() - 8);
    ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8), "checkpoint");
    if (fnv1a64(body) != tail.u64()) {
      throw CheckpointError(Kind::kCorrupt, "checkpoint: checksum mismatch (truncated or damaged file)");
    }
    const std::uint64_t n = r.u64();
    header = json::parse(r.raw(n));
    payload_begin = r.pos();
  } catch (const CheckpointError&) {
    throw;
  } catch (const DataError& e) {
    throw CheckpointError(Kind::kCorrupt, e.what());
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint header: ") + e.what());
  }

  Checkpoint c;
  try {
    const ModelDims dims = dims_from_json(header.at("dims"));
    const std::size_t streams = header.at("streams").get<std::size_t>();
    Rng rng(0);
    c.model = Model::create(dims, streams, rng);
    const auto& vj = header.at("vocab");
    const OutputVocab v = c.model.vocab();
    if (vj.at("sos").get<int>() != v.sos() || vj.at("eos").get<int>() != v.eos() ||
        vj.at("size").get<int>() != v.size()) {
      throw CheckpointError(Kind::kShape, "checkpoint: vocabulary ids disagree with dims");
    }
    for (const auto& f : header.at("frozen")) c.model.frozen.insert(f.get<std::string>());
    const auto& meta = header.at("meta");
    c.meta.stage = meta.at("stage").get<int>();
    c.meta.epoch = meta.at("epoch").get<int>();
    c.meta.seed = meta.at("seed").get<std::uint64_t>();
    c.meta.config_hash = meta.at("config_hash").get<std::string>();

    ByteReader r(std::string_view(bytes).substr(payload_begin, bytes.size() - 8 - payload_begin),
                 "checkpoint payload");
    const auto& table = header.at("tensors");
    std::size_t k = 0;
    for (auto& g : c.model.groups()) {
      for (auto& t : g.tensors) {
        const std::string name = g.name + "/" + t.name;
        if (k >= table.size()) throw CheckpointError(Kind::kShape, "checkpoint: missing tensor " + name);
        const auto& e = table[k++];
        if (e.at("name").get<std::string>() != name ||
            e.at("rows").get<std::size_t>() != t.value->rows() ||
            e.at("cols").get<std::size_t>() != t.value->cols()) {
          throw CheckpointError(Kind::kShape, "checkpoint: tensor " + e.at("name").get<std::string>() +
                                                  " does not match expected " + name + " " +
                                                  shape_str(*t.value));
        }
        for (auto& x : t.value->data()) x = r.f64();
      }
    }
    if (k != table.size()) throw CheckpointError(Kind::kShape, "checkpoint: extra tensors");
    if (header.at("unigram").get<std::size_t>() != c.model.unigram.size()) {
      throw CheckpointError(Kind::kShape, "checkpoint: unigram prior length mismatch");
    }
    for (auto& x : c.model.unigram) x = r.f64();
    if (r.remaining() != 0) throw CheckpointError(Kind::kCorrupt, "checkpoint: trailing payload");
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint: ") + e.what());
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint header: ") + e.what());
  }
  return c;
}

void checkpoint_save(const Checkpoint& c, const std::filesystem::path& path) {
  try {
    write_file(path, serialize_checkpoint(c));
  } catch (const std::filesystem::filesystem_error& e) {
    throw CheckpointError(Kind::kIo, e.what());
  } catch (const DataError& e) {
    throw CheckpointError(Kind::kIo, e.what());
  }
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(Kind::kIo, e.what());
  }
  return deserialize_checkpoint(bytes);
}

std::string checkpoint_hash(const Checkpoint& c) { return hex64(fnv1a64(serialize_checkpoint(c))); }

}  // namespace mema
