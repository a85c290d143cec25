#include "memarray/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "memarray/checkpoint.hpp"
#include "memarray/errors.hpp"
#include "memarray/io.hpp"
#include "memarray/parallel.hpp"
#include "memarray/rng.hpp"
#include "memarray/svg.hpp"

namespace mema {

namespace fs = std::filesystem;
using nlohmann::json;

RunLayout RunLayout::under(const fs::path& root) {
  return {root / "data",   root / "stage1", root / "ufe",   root / "stage2",
          root / "decode", root / "score",  root};
}

namespace {

const char* kSplits[] = {"train", "dev", "test"};

void say(const RunOptions& o, const std::string& line) {
  if (o.log) o.log(line);
}

std::string hash_path(const fs::path& p) {
  if (fs::is_directory(p)) return split_hash(p);
  return hex64(fnv1a64(read_file(p)));
}

// Which subcommand produces each stage directory, for error messages.
std::string producer(const std::string& stage) {
  if (stage == "data") return "gen-data";
  if (stage == "stage1") return "train-stage1";
  if (stage == "ufe") return "extract-ufe";
  if (stage == "stage2") return "train-stage2";
  if (stage == "decode") return "decode";
  return "score";
}

// Artifact key of each stage directory: ufe artifacts depend on the same
// settings as the Stage-1 model, scores on the same as decoding.
std::string key_for(const ExperimentConfig& cfg, const std::string& stage) {
  if (stage == "ufe") return cfg.stage_key("stage1");
  if (stage == "score") return cfg.stage_key("decode");
  return cfg.stage_key(stage);
}

// Empties a stage directory before it is rewritten. Refuses to touch a
// non-empty directory that was not written by this tool.
void fresh_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !fs::exists(dir / "stamp.json")) {
      throw DataError("refusing to overwrite " + dir.string() + ": it has no stamp.json");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

json provenance(const RunOptions& o) { return {{"config_hash", o.cfg.hash()}, {"seed", o.seed}}; }

void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing " + p.string());
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

// outputs: paths relative to dir.
void write_stamp(const RunOptions& o, const fs::path& dir, const std::string& stage,
                 const json& inputs, const std::vector<std::string>& outputs) {
  json out = json::object();
  for (const auto& rel : outputs) out[rel] = hash_path(dir / rel);
  json j = provenance(o);
  j["stage"] = stage;
  j["key"] = key_for(o.cfg, stage);
  j["inputs"] = inputs;
  j["outputs"] = out;
  write_json(dir / "stamp.json", j);
}

// Checks that `dir` was produced by `stage` for the current config key and
// seed, and that its files still hash to what the stamp recorded. Returns
// {relative path: hash} of its outputs.
json require_stage(const RunOptions& o, const fs::path& dir, const std::string& stage) {
  const std::string cmd = producer(stage);
  const fs::path sp = dir / "stamp.json";
  if (!fs::exists(sp)) {
    throw DataError("missing " + sp.string() + "; run `memarray " + cmd + "` first");
  }
  const json s = read_json(sp);
  try {
    const std::string want = key_for(o.cfg, stage);
    const std::string got = s.at("key").get<std::string>();
    const auto seed = s.at("seed").get<std::uint64_t>();
    if (s.at("stage").get<std::string>() != stage || got != want || seed != o.seed) {
      throw DataError(dir.string() + " holds " + s.at("stage").get<std::string>() + " key " + got +
                      " seed " + std::to_string(seed) + "; expected " + stage + " key " + want +
                      " seed " + std::to_string(o.seed) + ". Re-run `memarray " + cmd + "`");
    }
    const json& outs = s.at("outputs");
    for (auto it = outs.begin(); it != outs.end(); ++it) {
      const fs::path p = dir / it.key();
      const std::string expected = it.value().get<std::string>();
      if (!fs::exists(p)) {
        throw DataError("missing " + p.string() + " (expected hash " + expected + "); re-run `memarray " +
                        cmd + "`");
      }
      const std::string actual = hash_path(p);
      if (actual != expected) {
        throw DataError(p.string() + " has hash " + actual + ", expected " + expected +
                        "; re-run `memarray " + cmd + "`");
      }
    }
    return outs;
  } catch (const json::exception& e) {
    throw DataError(sp.string() + ": " + e.what());
  }
}

json history_json(const std::vector<EpochLog>& h) {
  json a = json::array();
  for (const auto& e : h) {
    // NaN (epoch 0 has no training loss) is written as null.
    a.push_back({{"epoch", e.epoch},
                 {"train_loss", std::isfinite(e.train_loss) ? json(e.train_loss) : json(nullptr)},
                 {"dev_loss", e.dev_loss},
                 {"grad_norm", e.grad_norm},
                 {"improved", e.improved}});
  }
  return a;
}

EpochCallback epoch_logger(const RunOptions& o, const std::string& what) {
  return [&o, what](const EpochLog& e) {
    std::ostringstream os;
    os.precision(5);
    os << what << " epoch " << e.epoch << " train " << e.train_loss << " dev " << e.dev_loss
       << (e.improved ? " *" : "");
    say(o, os.str());
  };
}

Checkpoint load_stage_checkpoint(const fs::path& dir, int stage) {
  Checkpoint c = checkpoint_load(dir / "model.ckpt");
  if (c.meta.stage != stage) {
    throw DataError((dir / "model.ckpt").string() + " is a Stage-" + std::to_string(c.meta.stage) +
                    " checkpoint, expected Stage-" + std::to_string(stage));
  }
  return c;
}

json result_json(const Hypothesis& h) {
  return {{"labels", h.prefix},        {"joint", h.joint}, {"att", h.att},
          {"ctc", h.ctc},              {"ctc_streams", h.ctc_streams},
          {"finished", h.finished}};
}

std::string safe_name(double f) {
  std::ostringstream os;
  os << f;
  std::string s = os.str();
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

struct SystemJob {
  std::size_t condition;
  std::string system;
  std::vector<std::string> streams;
  DecodeConfig decode;
  bool single = false;
};

std::vector<SystemJob> systems(const ExperimentConfig& cfg) {
  std::vector<SystemJob> out;
  for (std::size_t c = 0; c < cfg.conditions.size(); ++c) {
    const auto& cond = cfg.conditions[c];
    for (auto mode : cond.modes) {
      SystemJob j{c, to_string(mode), cond.streams, cfg.decode, false};
      j.decode.fusion = mode;
      if (mode == FusionMode::kFixed) {
        j.decode.fixed_weights = cond.fixed_weights;
        if (j.decode.fixed_weights.empty()) {
          j.decode.fixed_weights.assign(cond.streams.size(), 0.0);
          j.decode.fixed_weights[0] = 1.0;
        }
      }
      out.push_back(std::move(j));
    }
    for (const auto& s : cond.streams) {
      SystemJob j{c, "single_" + s, {s}, cfg.decode, true};
      j.decode.fusion = FusionMode::kAdaptive;
      out.push_back(std::move(j));
    }
  }
  return out;
}

void gen_one(const RunOptions& o, const std::string& split, const CorpusConfig& corpus,
             std::size_t count) {
  const auto bundles = gen_split(corpus, o.seed, split, count);
  SplitManifest m{split, "features", corpus.streams, o.cfg.hash(), o.seed, ""};
  write_split(o.layout.data / split, m, bundles);
  say(o, "gen-data: " + split + " " + std::to_string(bundles.size()) + " utterances");
}

}  // namespace

Model init_stage1_model(const ModelDims& dims, const std::vector<StreamBundle>& train,
                        std::uint64_t seed) {
  Rng rng = Rng(seed).split("stage1-init");
  Model m = Model::create(dims, 1, rng);
  std::vector<Transcript> ts;
  ts.reserve(train.size());
  for (const auto& b : train) ts.push_back(b.transcript);
  m.unigram = unigram_prior(ts, m.vocab());
  return m;
}

std::vector<DecodeResult> decode_bundles(const Model& m, const std::vector<UfeBundle>& data,
                                         const DecodeConfig& cfg, int jobs) {
  std::vector<DecodeResult> out(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = beam_search(m, data[i].streams, cfg); });
  return out;
}

std::vector<ErrorBreakdown> score_bundles(const std::vector<UfeBundle>& data,
                                          const std::vector<DecodeResult>& results) {
  if (data.size() != results.size()) throw ShapeError("score_bundles: size mismatch");
  std::vector<ErrorBreakdown> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Transcript hyp{results[i].nbest.empty() ? std::vector<int>{} : results[i].nbest[0].prefix};
    out.push_back(edit_distance_align(data[i].transcript, hyp));
  }
  return out;
}

void cmd_gen_data(const RunOptions& o) {
  o.cfg.validate();
  fresh_dir(o.layout.data);
  const auto& c = o.cfg.corpus;
  const auto n_dev = static_cast<std::size_t>(
      std::llround(static_cast<double>(c.num_utterances) * c.dev_fraction));
  if (c.num_utterances == 0 || n_dev >= c.num_utterances) {
    throw ConfigError("corpus: need at least one training utterance");
  }
  gen_one(o, "train", c, c.num_utterances - n_dev);
  gen_one(o, "dev", c, n_dev);
  gen_one(o, "test", o.cfg.test_corpus(), c.num_test);
  write_stamp(o, o.layout.data, "data", json::object(), {"train", "dev", "test"});
}

void cmd_train_stage1(const RunOptions& o) {
  o.cfg.validate();
  const json data = require_stage(o, o.layout.data, "data");
  const auto train = read_split(o.layout.data / "train");
  const auto dev = read_split(o.layout.data / "dev");
  TrainConfig tc = o.cfg.stage1;
  tc.seed = o.seed;
  tc.jobs = o.jobs;
  const Model init = init_stage1_model(o.cfg.model, train, o.seed);
  say(o, "train-stage1: " + std::to_string(train.size()) + " utterances x " +
             std::to_string(o.cfg.stage1_streams.size()) + " streams");
  const TrainResult res = train_stage1(init, pooled_view(train, o.cfg.stage1_streams),
                                       pooled_view(dev, o.cfg.stage1_streams), tc,
                                       epoch_logger(o, "stage1"));
  fresh_dir(o.layout.stage1);
  checkpoint_save({res.model, {1, res.best_epoch, o.seed, o.cfg.hash()}}, o.layout.stage1 / "model.ckpt");
  json h = provenance(o);
  h["best_epoch"] = res.best_epoch;
  h["best_dev_loss"] = res.best_dev_loss;
  h["history"] = history_json(res.history);
  write_json(o.layout.stage1 / "history.json", h);
  write_stamp(o, o.layout.stage1, "stage1",
              {{"data/train", data.at("train")}, {"data/dev", data.at("dev")}},
              {"model.ckpt", "history.json"});
  say(o, "train-stage1: best epoch " + std::to_string(res.best_epoch));
}

void cmd_extract_ufe(const RunOptions& o) {
  o.cfg.validate();
  const json data = require_stage(o, o.layout.data, "data");
  const json s1 = require_stage(o, o.layout.stage1, "stage1");
  const Checkpoint ck = load_stage_checkpoint(o.layout.stage1, 1);
  const std::string ck_hash = s1.at("model.ckpt").get<std::string>();
  fresh_dir(o.layout.ufe);
  json inputs = {{"stage1/model.ckpt", ck_hash}};
  for (const char* split : kSplits) {
    SplitManifest in;
    const auto bundles = read_split(o.layout.data / split, &in);
    const auto ufe = extract_ufe(ck.model, bundles, o.jobs);
    SplitManifest m{split, "ufe", in.streams, o.cfg.hash(), o.seed, ck_hash};
    write_split(o.layout.ufe / split, m, ufe);
    inputs[std::string("data/") + split] = data.at(split);
    say(o, std::string("extract-ufe: ") + split + " " + std::to_string(ufe.size()) + " utterances");
  }
  write_stamp(o, o.layout.ufe, "ufe", inputs, {"train", "dev", "test"});
}

void cmd_train_stage2(const RunOptions& o) {
  o.cfg.validate();
  const json s1 = require_stage(o, o.layout.stage1, "stage1");
  const json ufe = require_stage(o, o.layout.ufe, "ufe");
  const std::string ck_hash = s1.at("model.ckpt").get<std::string>();
  for (const char* split : {"train", "dev"}) {
    const SplitManifest m = read_manifest(o.layout.ufe / split);
    if (m.checkpoint_hash != ck_hash) {
      throw DataError((o.layout.ufe / split).string() + " was extracted with checkpoint " +
                      m.checkpoint_hash + ", expected " + ck_hash + " (" +
                      (o.layout.stage1 / "model.ckpt").string() + "); re-run `memarray extract-ufe`");
    }
  }
  const Checkpoint ck = load_stage_checkpoint(o.layout.stage1, 1);
  const auto train = select_streams(read_split(o.layout.ufe / "train"), o.cfg.stage2_streams);
  const auto dev = select_streams(read_split(o.layout.ufe / "dev"), o.cfg.stage2_streams);
  TrainConfig tc = o.cfg.stage2;
  tc.seed = o.seed;
  tc.jobs = o.jobs;
  say(o, "train-stage2: streams " + json(o.cfg.stage2_streams).dump() + ", augment " +
             to_string(tc.stage2_augment));
  const TrainResult res = train_stage2(ck.model, train, dev, tc, epoch_logger(o, "stage2"));
  fresh_dir(o.layout.stage2);
  checkpoint_save({res.model, {2, res.best_epoch, o.seed, o.cfg.hash()}}, o.layout.stage2 / "model.ckpt");
  json side = provenance(o);
  side["stage1_checkpoint"] = ck_hash;
  side["streams"] = o.cfg.stage2_streams;
  side["best_epoch"] = res.best_epoch;
  side["best_dev_loss"] = res.best_dev_loss;
  side["history"] = history_json(res.history);
  write_json(o.layout.stage2 / "model.json", side);
  write_stamp(o, o.layout.stage2, "stage2",
              {{"stage1/model.ckpt", ck_hash}, {"ufe/train", ufe.at("train")}, {"ufe/dev", ufe.at("dev")}},
              {"model.ckpt", "model.json"});
  say(o, "train-stage2: best epoch " + std::to_string(res.best_epoch));
}

void cmd_decode(const RunOptions& o) {
  o.cfg.validate();
  const json s1 = require_stage(o, o.layout.stage1, "stage1");
  const json s2 = require_stage(o, o.layout.stage2, "stage2");
  const json ufe = require_stage(o, o.layout.ufe, "ufe");
  const std::string ck1 = s1.at("model.ckpt").get<std::string>();
  const std::string ck2 = s2.at("model.ckpt").get<std::string>();
  const json side = read_json(o.layout.stage2 / "model.json");
  if (side.value("stage1_checkpoint", "") != ck1) {
    throw DataError((o.layout.stage2 / "model.ckpt").string() + " was trained from Stage-1 checkpoint " +
                    side.value("stage1_checkpoint", "?") + ", expected " + ck1 +
                    "; re-run `memarray train-stage2`");
  }
  const SplitManifest test_man = read_manifest(o.layout.ufe / "test");
  if (test_man.checkpoint_hash != ck1) {
    throw DataError((o.layout.ufe / "test").string() + " was extracted with checkpoint " +
                    test_man.checkpoint_hash + ", expected " + ck1 + "; re-run `memarray extract-ufe`");
  }
  const Model stage1 = load_stage_checkpoint(o.layout.stage1, 1).model;
  const Model stage2 = load_stage_checkpoint(o.layout.stage2, 2).model;
  const auto test = read_split(o.layout.ufe / "test");

  const auto jobs = systems(o.cfg);
  std::vector<std::vector<UfeBundle>> inputs;
  for (const auto& j : jobs) inputs.push_back(select_streams(test, j.streams));
  // One task per (system, utterance) so that conditions decode in parallel too.
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t s = 0; s < jobs.size(); ++s) {
    for (std::size_t u = 0; u < test.size(); ++u) tasks.emplace_back(s, u);
  }
  const auto n_svg = static_cast<std::size_t>(o.cfg.svg_utterances);
  std::vector<std::vector<DecodeResult>> results(jobs.size(), std::vector<DecodeResult>(test.size()));
  say(o, "decode: " + std::to_string(jobs.size()) + " systems x " + std::to_string(test.size()) +
             " utterances");
  parallel_for(tasks.size(), o.jobs, [&](std::size_t t) {
    const auto [s, u] = tasks[t];
    DecodeConfig dc = jobs[s].decode;
    dc.record_frame_weights = !jobs[s].single && u < n_svg;
    results[s][u] = beam_search(jobs[s].single ? stage1 : stage2, inputs[s][u].streams, dc);
  });

  fresh_dir(o.layout.decode);
  std::vector<std::string> outputs;
  const std::string desc = "config_hash " + o.cfg.hash() + " seed " + std::to_string(o.seed);
  for (std::size_t s = 0; s < jobs.size(); ++s) {
    const auto& j = jobs[s];
    const auto& cond = o.cfg.conditions[j.condition];
    const fs::path dir = o.layout.decode / cond.name;
    json head = provenance(o);
    head["condition"] = cond.name;
    head["system"] = j.system;
    head["streams"] = j.streams;
    head["fusion"] = to_string(j.decode.fusion);
    head["fixed_weights"] = j.decode.fixed_weights;
    head["beam"] = j.decode.beam;
    head["ctc_weight"] = j.decode.ctc_weight;
    head["checkpoint"] = j.single ? ck1 : ck2;
    std::string body = head.dump() + "\n";
    for (std::size_t u = 0; u < test.size(); ++u) {
      const DecodeResult& r = results[s][u];
      json line = {{"utt_id", test[u].utt_id}, {"ref", test[u].transcript.labels}, {"finished", r.finished}};
      json nb = json::array();
      for (const auto& h : r.nbest) nb.push_back(result_json(h));
      line["nbest"] = nb;
      line["beta"] = r.nbest.empty() ? json::array() : json(r.nbest[0].beta_trace);
      body += line.dump() + "\n";
      if (!j.single && u < n_svg && !r.nbest.empty() && !r.nbest[0].beta_trace.empty()) {
        const Hypothesis& h = r.nbest[0];
        const AttentionSvgs svg =
            emit_attention_svg(h.beta_trace, h.frame_trace, j.streams, desc + " utt " + test[u].utt_id);
        const std::string base = "svg/" + j.system + "/" + test[u].utt_id;
        write_file(dir / (base + ".beta.svg"), svg.beta);
        outputs.push_back(cond.name + "/" + base + ".beta.svg");
        for (std::size_t i = 0; i < j.streams.size(); ++i) {
          const std::string name = base + ".frames." + j.streams[i] + ".svg";
          write_file(dir / name, svg.frames[i]);
          outputs.push_back(cond.name + "/" + name);
        }
      }
    }
    const std::string file = j.system + ".nbest.jsonl";
    write_file(dir / file, body);
    outputs.push_back(cond.name + "/" + file);
  }
  write_stamp(o, o.layout.decode, "decode",
              {{"stage1/model.ckpt", ck1}, {"stage2/model.ckpt", ck2}, {"ufe/test", ufe.at("test")}},
              outputs);
}

void cmd_score(const RunOptions& o) {
  o.cfg.validate();
  const json dec = require_stage(o, o.layout.decode, "decode");
  const auto jobs = systems(o.cfg);
  struct Scored {
    std::vector<std::string> utts;
    std::vector<Transcript> refs, hyps;
    std::vector<ErrorBreakdown> errs;
  };
  std::vector<Scored> scored(jobs.size());
  for (std::size_t s = 0; s < jobs.size(); ++s) {
    const auto& cond = o.cfg.conditions[jobs[s].condition];
    const fs::path p = o.layout.decode / cond.name / (jobs[s].system + ".nbest.jsonl");
    std::istringstream in(read_file(p));
    std::string line;
    bool header = true;
    try {
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        if (header) {
          header = false;
          continue;
        }
        Transcript ref{j.at("ref").get<std::vector<int>>()};
        Transcript hyp;
        if (!j.at("nbest").empty()) hyp.labels = j.at("nbest")[0].at("labels").get<std::vector<int>>();
        scored[s].utts.push_back(j.at("utt_id").get<std::string>());
        scored[s].errs.push_back(edit_distance_align(ref, hyp));
        scored[s].refs.push_back(std::move(ref));
        scored[s].hyps.push_back(std::move(hyp));
      }
    } catch (const json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }

  fresh_dir(o.layout.score);
  std::vector<std::string> outputs;
  for (std::size_t s = 0; s < jobs.size(); ++s) {
    const auto& j = jobs[s];
    const auto& cond = o.cfg.conditions[j.condition];
    const auto& sc = scored[s];
    std::ostringstream csv;
    csv.precision(17);
    csv << "# config_hash " << o.cfg.hash() << " seed " << o.seed << "\n";
    csv << "utt_id,ref,hyp,S,D,I,rate\n";
    for (std::size_t u = 0; u < sc.utts.size(); ++u) {
      const auto& e = sc.errs[u];
      csv << sc.utts[u] << ',' << format_labels(sc.refs[u]) << ',' << format_labels(sc.hyps[u]) << ','
          << e.substitutions << ',' << e.deletions << ',' << e.insertions << ',' << e.rate() << "\n";
    }
    const ErrorBreakdown total = sum(sc.errs);
    json summary = provenance(o);
    summary["condition"] = cond.name;
    summary["system"] = j.system;
    summary["streams"] = j.streams;
    summary["S"] = total.substitutions;
    summary["D"] = total.deletions;
    summary["I"] = total.insertions;
    summary["ref_len"] = total.ref_len;
    summary["ter"] = total.rate();
    summary["utterances"] = sc.utts.size();
    const std::string nbest = cond.name + "/" + j.system + ".nbest.jsonl";
    summary["nbest"] = nbest;
    summary["nbest_hash"] = dec.at(nbest);
    if (!j.single) {
      // Per utterance: multi-stream rate against the best single-stream rate.
      std::vector<double> multi, best;
      for (std::size_t u = 0; u < sc.utts.size(); ++u) {
        multi.push_back(sc.errs[u].rate());
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < jobs.size(); ++t) {
          if (jobs[t].single && jobs[t].condition == j.condition) b = std::min(b, scored[t].errs[u].rate());
        }
        best.push_back(b);
      }
      summary["improved_fraction"] = improved_fraction(multi, best);
      const fs::path svg = o.layout.decode / cond.name / "svg" / j.system;
      if (fs::exists(svg)) summary["svg_dir"] = cond.name + "/svg/" + j.system;
    }
    const std::string base = cond.name + "/" + j.system;
    write_file(o.layout.score / (base + ".csv"), csv.str());
    write_json(o.layout.score / (base + ".json"), summary);
    outputs.push_back(base + ".csv");
    outputs.push_back(base + ".json");
    say(o, "score: " + cond.name + " " + j.system + " TER " + std::to_string(total.rate()));
  }
  json inputs = json::object();
  inputs["decode"] = hex64(fnv1a64(read_file(o.layout.decode / "stamp.json")));
  write_stamp(o, o.layout.score, "score", inputs, outputs);
}

std::string RunReport::to_csv() const {
  std::vector<std::string> rows;
  for (const auto& c : conditions) {
    for (const auto* list : {&c.modes, &c.single}) {
      for (const auto& s : *list) {
        if (std::find(rows.begin(), rows.end(), s.system) == rows.end()) rows.push_back(s.system);
      }
    }
  }
  std::ostringstream os;
  os.precision(6);
  os << "config_hash,seed,system";
  for (const auto& c : conditions) os << ',' << c.name;
  os << "\n";
  for (const auto& r : rows) {
    os << config_hash << ',' << seed << ',' << r;
    for (const auto& c : conditions) {
      os << ',';
      for (const auto* list : {&c.modes, &c.single}) {
        for (const auto& s : *list) {
          if (s.system == r) os << s.errors.rate();
        }
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string RunReport::to_json() const {
  json conds = json::array();
  for (const auto& c : conditions) {
    auto systems_json = [](const std::vector<SystemResult>& list) {
      json a = json::array();
      for (const auto& s : list) {
        json j = {{"system", s.system},
                  {"S", s.errors.substitutions},
                  {"D", s.errors.deletions},
                  {"I", s.errors.insertions},
                  {"ref_len", s.errors.ref_len},
                  {"ter", s.errors.rate()},
                  {"nbest", s.nbest_path}};
        if (s.improved_fraction) j["improved_fraction"] = *s.improved_fraction;
        if (!s.svg_dir.empty()) j["svg_dir"] = s.svg_dir;
        a.push_back(j);
      }
      return a;
    };
    conds.push_back({{"name", c.name},
                     {"streams", c.streams},
                     {"modes", systems_json(c.modes)},
                     {"single", systems_json(c.single)}});
  }
  const json j = {{"config_hash", config_hash}, {"seed", seed}, {"conditions", conds}};
  return j.dump(2) + "\n";
}

const ConditionResult& RunReport::condition(const std::string& name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return c;
  }
  throw ConfigError("report has no condition '" + name + "'");
}

RunReport cmd_report(const RunOptions& o) {
  o.cfg.validate();
  require_stage(o, o.layout.score, "score");
  RunReport r;
  r.config_hash = o.cfg.hash();
  r.seed = o.seed;
  const auto jobs = systems(o.cfg);
  for (const auto& cond : o.cfg.conditions) r.conditions.push_back({cond.name, cond.streams, {}, {}});
  for (const auto& j : jobs) {
    const auto& cond = o.cfg.conditions[j.condition];
    const fs::path p = o.layout.score / cond.name / (j.system + ".json");
    const json s = read_json(p);
    SystemResult res;
    res.system = j.system;
    try {
      res.errors = {s.at("S").get<std::size_t>(), s.at("D").get<std::size_t>(),
                    s.at("I").get<std::size_t>(), s.at("ref_len").get<std::size_t>()};
      // Relative to the report directory, so reports do not depend on where the run lives.
      const fs::path base = fs::absolute(o.layout.report);
      res.nbest_path = fs::absolute(o.layout.decode / s.at("nbest").get<std::string>())
                           .lexically_relative(base).generic_string();
      if (s.contains("improved_fraction")) res.improved_fraction = s.at("improved_fraction").get<double>();
      if (s.contains("svg_dir")) {
        res.svg_dir = fs::absolute(o.layout.decode / s.at("svg_dir").get<std::string>())
                          .lexically_relative(base).generic_string();
      }
    } catch (const json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
    auto& target = r.conditions[j.condition];
    (j.single ? target.single : target.modes).push_back(std::move(res));
  }
  fs::create_directories(o.layout.report);
  write_file(o.layout.report / "report.json", r.to_json());
  write_file(o.layout.report / "report.csv", r.to_csv());
  say(o, "report: " + (o.layout.report / "report.json").string());
  return r;
}

RunReport cmd_all(const RunOptions& o) {
  cmd_gen_data(o);
  cmd_train_stage1(o);
  cmd_extract_ufe(o);
  cmd_train_stage2(o);
  cmd_decode(o);
  cmd_score(o);
  return cmd_report(o);
}

void cmd_sweep(const RunOptions& o, const fs::path& root) {
  o.cfg.validate();
  json table = json::array();
  std::ostringstream csv;
  csv << "# config_hash " << o.cfg.hash() << " seed " << o.seed << "\n"
      << "fraction,condition,system,ter\n";
  // TER per (condition, system) across fractions, for the trend check.
  std::map<std::pair<std::string, std::string>, std::vector<double>> trend;
  for (double f : o.cfg.sweep_fractions) {
    RunOptions sub = o;
    sub.cfg.stage2.data_fraction = f;
    const fs::path dir = root / "sweep" / ("frac_" + safe_name(f));
    sub.layout.stage2 = dir / "stage2";
    sub.layout.decode = dir / "decode";
    sub.layout.score = dir / "score";
    sub.layout.report = dir;
    say(o, "sweep: stage-2 data fraction " + std::to_string(f));
    cmd_train_stage2(sub);
    cmd_decode(sub);
    cmd_score(sub);
    const RunReport r = cmd_report(sub);
    for (const auto& c : r.conditions) {
      for (const auto& s : c.modes) {
        csv << f << ',' << c.name << ',' << s.system << ',' << s.errors.rate() << "\n";
        table.push_back({{"fraction", f}, {"condition", c.name}, {"system", s.system}, {"ter", s.errors.rate()}});
        trend[{c.name, s.system}].push_back(s.errors.rate());
      }
    }
  }
  // Soft check: with more data TER should not go up. Logged only.
  json notes = json::array();
  for (const auto& [k, v] : trend) {
    bool monotone = true;
    for (std::size_t i = 1; i < v.size(); ++i) monotone = monotone && v[i] <= v[i - 1] + 1e-12;
    const std::string msg = k.first + "/" + k.second + (monotone ? " monotone-or-flat" : " not monotone");
    notes.push_back(msg);
    say(o, "sweep: " + msg);
  }
  json j = provenance(o);
  j["fractions"] = o.cfg.sweep_fractions;
  j["results"] = table;
  j["trend"] = notes;
  write_file(root / "sweep" / "sweep.csv", csv.str());
  write_json(root / "sweep" / "sweep.json", j);
}

}  // namespace mema
