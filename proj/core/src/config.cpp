#include "memarray/config.hpp"

#include <algorithm>
#include <utility>
#include <set>

#include "memarray/checkpoint.hpp"
#include "memarray/errors.hpp"
#include "memarray/io.hpp"
#include "memarray/rng.hpp"
#include "serial.hpp"

namespace mema {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object; done() rejects any key that was
// never asked for.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }
  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  const json* sub(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json corpus_json(const CorpusConfig& c) {
  json streams = json::array();
  for (const auto& s : c.streams) streams.push_back(stream_spec_to_json(s));
  return {{"vocab_size", c.vocab_size},
          {"feat_dim", c.feat_dim},
          {"min_label_len", c.min_label_len},
          {"max_label_len", c.max_label_len},
          {"min_frames_per_label", c.min_frames_per_label},
          {"max_frames_per_label", c.max_frames_per_label},
          {"min_silence", c.min_silence},
          {"max_silence", c.max_silence},
          {"frame_noise", c.frame_noise},
          {"subsampling", c.subsampling},
          {"num_utterances", c.num_utterances},
          {"dev_fraction", c.dev_fraction},
          {"num_test", c.num_test},
          {"streams", streams}};
}

std::vector<StreamSpec> streams_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<StreamSpec> out;
  for (const auto& s : j) out.push_back(stream_spec_from_json(s));
  return out;
}

void corpus_from(const json& j, CorpusConfig& c) {
  Obj o(j, "corpus");
  o.get("vocab_size", c.vocab_size);
  o.get("feat_dim", c.feat_dim);
  o.get("min_label_len", c.min_label_len);
  o.get("max_label_len", c.max_label_len);
  o.get("min_frames_per_label", c.min_frames_per_label);
  o.get("max_frames_per_label", c.max_frames_per_label);
  o.get("min_silence", c.min_silence);
  o.get("max_silence", c.max_silence);
  o.get("frame_noise", c.frame_noise);
  o.get("subsampling", c.subsampling);
  o.get("num_utterances", c.num_utterances);
  o.get("dev_fraction", c.dev_fraction);
  o.get("num_test", c.num_test);
  if (const json* s = o.sub("streams")) c.streams = streams_from(*s, o.path("streams"));
  o.done();
}

json model_json(const ModelDims& d) {
  return {{"enc_hidden", d.enc_hidden},     {"enc_layers", d.enc_layers},
          {"ufe_dim", d.ufe_dim},           {"att_dim", d.att_dim},
          {"conv_filters", d.conv_filters}, {"conv_width", d.conv_width},
          {"attention", to_string(d.attention)}, {"dec_hidden", d.dec_hidden},
          {"embed_dim", d.embed_dim},       {"han_att_dim", d.han_att_dim}};
}

void model_from(const json& j, ModelDims& d) {
  Obj o(j, "model");
  o.get("enc_hidden", d.enc_hidden);
  o.get("enc_layers", d.enc_layers);
  o.get("ufe_dim", d.ufe_dim);
  o.get("att_dim", d.att_dim);
  o.get("conv_filters", d.conv_filters);
  o.get("conv_width", d.conv_width);
  std::string kind = to_string(d.attention);
  o.get("attention", kind);
  d.attention = attention_kind_from_string(kind);
  o.get("dec_hidden", d.dec_hidden);
  o.get("embed_dim", d.embed_dim);
  o.get("han_att_dim", d.han_att_dim);
  o.done();
}

std::string fill_name(MaskFill f) { return f == MaskFill::kZero ? "zero" : "mean"; }

MaskFill fill_from(const std::string& s) {
  if (s == "zero") return MaskFill::kZero;
  if (s == "mean") return MaskFill::kUtteranceMean;
  throw ConfigError("unknown mask fill '" + s + "' (expected zero or mean)");
}

json train_json(const TrainConfig& t, const std::vector<std::string>& streams) {
  const auto& m = t.stage1_mask;
  return {{"streams", streams},
          {"ctc_weight", t.ctc_weight},
          {"smoothing", t.smoothing},
          {"epochs", t.epochs},
          {"patience", t.patience},
          {"batch_size", t.batch_size},
          {"optimizer",
           {{"kind", to_string(t.optimizer.kind)},
            {"rho", t.optimizer.rho},
            {"eps", t.optimizer.eps},
            {"lr", t.optimizer.lr},
            {"grad_clip", t.optimizer.grad_clip}}},
          {"stage1_mask",
           {{"num_time_masks", m.num_time_masks},
            {"max_time", m.max_time},
            {"num_freq_masks", m.num_freq_masks},
            {"max_freq", m.max_freq},
            {"fill", fill_name(m.fill)}}},
          {"stage2_augment", to_string(t.stage2_augment)},
          {"stage2_num_masks", t.stage2_num_masks},
          {"stage2_max_len", t.stage2_max_len},
          {"dropout", t.dropout},
          {"data_fraction", t.data_fraction}};
}

void train_from(const json& j, const std::string& where, TrainConfig& t,
                std::vector<std::string>& streams) {
  Obj o(j, where);
  o.get("streams", streams);
  o.get("ctc_weight", t.ctc_weight);
  o.get("smoothing", t.smoothing);
  o.get("epochs", t.epochs);
  o.get("patience", t.patience);
  o.get("batch_size", t.batch_size);
  if (const json* opt = o.sub("optimizer")) {
    Obj p(*opt, o.path("optimizer"));
    std::string kind = to_string(t.optimizer.kind);
    p.get("kind", kind);
    t.optimizer.kind = optimizer_kind_from_string(kind);
    p.get("rho", t.optimizer.rho);
    p.get("eps", t.optimizer.eps);
    p.get("lr", t.optimizer.lr);
    p.get("grad_clip", t.optimizer.grad_clip);
    p.done();
  }
  if (const json* mask = o.sub("stage1_mask")) {
    Obj p(*mask, o.path("stage1_mask"));
    auto& m = t.stage1_mask;
    p.get("num_time_masks", m.num_time_masks);
    p.get("max_time", m.max_time);
    p.get("num_freq_masks", m.num_freq_masks);
    p.get("max_freq", m.max_freq);
    std::string fill = fill_name(m.fill);
    p.get("fill", fill);
    m.fill = fill_from(fill);
    p.done();
  }
  std::string aug = to_string(t.stage2_augment);
  o.get("stage2_augment", aug);
  t.stage2_augment = stage2_augment_from_string(aug);
  o.get("stage2_num_masks", t.stage2_num_masks);
  o.get("stage2_max_len", t.stage2_max_len);
  o.get("dropout", t.dropout);
  o.get("data_fraction", t.data_fraction);
  o.done();
}

json condition_json(const Condition& c) {
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  return {{"name", c.name}, {"streams", c.streams}, {"modes", modes}, {"fixed_weights", c.fixed_weights}};
}

Condition condition_from(const json& j, const std::string& where) {
  Obj o(j, where);
  Condition c;
  o.get("name", c.name);
  o.get("streams", c.streams);
  std::vector<std::string> modes{"equal", "adaptive", "fixed"};
  o.get("modes", modes);
  for (const auto& m : modes) c.modes.push_back(fusion_mode_from_string(m));
  o.get("fixed_weights", c.fixed_weights);
  o.done();
  return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.stage1.optimizer.lr = 2.0;
  c.stage2.batch_size = 4;
  const std::vector<FusionMode> all{FusionMode::kEqual, FusionMode::kAdaptive, FusionMode::kFixed};
  c.conditions = {{"matched", {"clean", "far"}, all, {}},
                  {"nomic", {"clean", "nomic"}, all, {}}};
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c = defaults();
  {
    Obj o(j, "config");
    if (const json* s = o.sub("corpus")) corpus_from(*s, c.corpus);
    if (const json* s = o.sub("test_streams")) c.test_streams = streams_from(*s, "test_streams");
    if (const json* s = o.sub("model")) model_from(*s, c.model);
    if (const json* s = o.sub("stage1")) train_from(*s, "stage1", c.stage1, c.stage1_streams);
    if (const json* s = o.sub("stage2")) train_from(*s, "stage2", c.stage2, c.stage2_streams);
    if (const json* s = o.sub("decode")) {
      Obj d(*s, "decode");
      d.get("beam", c.decode.beam);
      d.get("ctc_weight", c.decode.ctc_weight);
      d.get("max_output_len", c.decode.max_output_len);
      d.get("nbest", c.decode.nbest);
      d.done();
    }
    if (const json* s = o.sub("conditions")) {
      if (!s->is_array()) throw ConfigError("conditions: expected an array");
      c.conditions.clear();
      for (std::size_t i = 0; i < s->size(); ++i) {
        c.conditions.push_back(condition_from((*s)[i], "conditions[" + std::to_string(i) + "]"));
      }
    }
    if (const json* s = o.sub("sweep")) {
      Obj w(*s, "sweep");
      w.get("data_fractions", c.sweep_fractions);
      w.done();
    }
    o.get("svg_utterances", c.svg_utterances);
    o.done();
  }
  c.model.feat_dim = static_cast<std::size_t>(c.corpus.feat_dim);
  c.model.subsampling = static_cast<std::size_t>(c.corpus.subsampling);
  c.model.vocab_size = c.corpus.vocab_size;
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json() const {
  json tests = json::array();
  for (const auto& s : test_streams) tests.push_back(stream_spec_to_json(s));
  json conds = json::array();
  for (const auto& c : conditions) conds.push_back(condition_json(c));
  const json j = {{"corpus", corpus_json(corpus)},
                  {"test_streams", tests},
                  {"model", model_json(model)},
                  {"stage1", train_json(stage1, stage1_streams)},
                  {"stage2", train_json(stage2, stage2_streams)},
                  {"decode",
                   {{"beam", decode.beam},
                    {"ctc_weight", decode.ctc_weight},
                    {"max_output_len", decode.max_output_len},
                    {"nbest", decode.nbest}}},
                  {"conditions", conds},
                  {"sweep", {{"data_fractions", sweep_fractions}}},
                  {"svg_utterances", svg_utterances}};
  return j.dump(2);
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(to_json())); }

std::string ExperimentConfig::stage_key(const std::string& stage) const {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> scopes = {
      {"data", {"corpus", "test_streams"}},
      {"stage1", {"model", "stage1"}},
      {"stage2", {"stage2"}},
      {"decode", {"decode", "conditions", "svg_utterances"}}};
  const json all = json::parse(to_json());
  json part = json::object();
  for (const auto& [name, keys] : scopes) {
    for (const auto& k : keys) part[k] = all.at(k);
    if (name == stage) return hex64(fnv1a64(part.dump()));
  }
  throw ConfigError("unknown stage '" + stage + "'");
}

CorpusConfig ExperimentConfig::test_corpus() const {
  CorpusConfig c = corpus;
  c.streams.insert(c.streams.end(), test_streams.begin(), test_streams.end());
  return c;
}

bool ExperimentConfig::has_stream(const std::string& id) const {
  auto match = [&](const StreamSpec& s) { return s.id == id; };
  return std::any_of(corpus.streams.begin(), corpus.streams.end(), match) ||
         std::any_of(test_streams.begin(), test_streams.end(), match);
}

void ExperimentConfig::validate() const {
  corpus.validate();
  test_corpus().validate();
  stage1.validate();
  stage2.validate();
  decode.validate(1);
  auto in_corpus = [&](const std::string& id) {
    return std::any_of(corpus.streams.begin(), corpus.streams.end(),
                       [&](const StreamSpec& s) { return s.id == id; });
  };
  if (stage1_streams.empty()) throw ConfigError("stage1: no training streams");
  for (const auto& s : stage1_streams) {
    if (!in_corpus(s)) throw ConfigError("stage1: unknown corpus stream '" + s + "'");
  }
  if (stage2_streams.size() < 2) throw ConfigError("stage2: needs at least two target streams");
  for (const auto& s : stage2_streams) {
    if (!in_corpus(s)) throw ConfigError("stage2: unknown corpus stream '" + s + "'");
  }
  if (conditions.empty()) throw ConfigError("conditions: at least one test condition is required");
  std::set<std::string> names;
  for (const auto& c : conditions) {
    if (c.name.empty() || !names.insert(c.name).second) {
      throw ConfigError("conditions: names must be unique and non-empty");
    }
    if (c.streams.size() != stage2_streams.size()) {
      throw ConfigError("condition '" + c.name + "': needs " + std::to_string(stage2_streams.size()) +
                        " streams to match the Stage-2 model");
    }
    for (const auto& s : c.streams) {
      if (!has_stream(s)) throw ConfigError("condition '" + c.name + "': unknown stream '" + s + "'");
    }
    if (c.modes.empty()) throw ConfigError("condition '" + c.name + "': no fusion modes");
    if (!c.fixed_weights.empty()) {
      DecodeConfig d = decode;
      d.fusion = FusionMode::kFixed;
      d.fixed_weights = c.fixed_weights;
      d.validate(c.streams.size());
    }
  }
  for (double f : sweep_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep: data fractions must be in (0, 1]");
  }
  if (svg_utterances < 0) throw ConfigError("svg_utterances must be >= 0");
  if (model.feat_dim != static_cast<std::size_t>(corpus.feat_dim) ||
      model.subsampling != static_cast<std::size_t>(corpus.subsampling) ||
      model.vocab_size != corpus.vocab_size) {
    throw ConfigError("model: feat_dim, subsampling and vocab_size must follow the corpus");
  }
}

ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed) {
  cfg.stage1.seed = seed;
  cfg.stage2.seed = seed;
  return cfg;
}

}  // namespace mema
