#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memarray/beam_search.hpp"
#include "memarray/config.hpp"
#include "memarray/metrics.hpp"
#include "memarray/pipeline.hpp"

namespace mema {

// Where each stage reads and writes. Every stage directory holds a
// stamp.json with the config hash, seed, stage key, the hashes of the
// inputs it consumed and of the files it produced.
//
//   data/{train,dev,test}/        features (test adds the test-only streams)
//   stage1/model.ckpt, history.json
//   ufe/{train,dev,test}/         UFE features from the Stage-1 encoder
//   stage2/model.ckpt, model.json
//   decode/<cond>/<system>.nbest.jsonl, decode/<cond>/svg/<mode>/*.svg
//   score/<cond>/<system>.csv, .json
//   report.json, report.csv
// A system is a fusion mode name or single_<stream>.
struct RunLayout {
  std::filesystem::path data, stage1, ufe, stage2, decode, score, report;

  static RunLayout under(const std::filesystem::path& root);
};

struct RunOptions {
  ExperimentConfig cfg;
  std::uint64_t seed = 1;
  RunLayout layout;
  int jobs = 1;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct SystemResult {
  std::string system;
  ErrorBreakdown errors;
  std::optional<double> improved_fraction;  // fusion modes only
  std::string nbest_path;  // relative to the report directory
  std::string svg_dir;     // same; empty when no heatmaps were written
};

struct ConditionResult {
  std::string name;
  std::vector<std::string> streams;
  std::vector<SystemResult> modes;
  std::vector<SystemResult> single;
};

struct RunReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ConditionResult> conditions;

  // Systems as rows, conditions as columns, TER in the cells.
  std::string to_csv() const;
  std::string to_json() const;
  const ConditionResult& condition(const std::string& name) const;
};

void cmd_gen_data(const RunOptions& o);
void cmd_train_stage1(const RunOptions& o);
void cmd_extract_ufe(const RunOptions& o);
void cmd_train_stage2(const RunOptions& o);
void cmd_decode(const RunOptions& o);
void cmd_score(const RunOptions& o);
RunReport cmd_report(const RunOptions& o);
// gen-data through report.
RunReport cmd_all(const RunOptions& o);
// Stage-2 training, decoding and scoring per Stage-2 data fraction, under
// <root>/sweep/frac_<f>, reusing the data, Stage-1 and UFE artifacts of `o`.
// Writes sweep.csv and sweep.json; TER trends are logged, never asserted.
void cmd_sweep(const RunOptions& o, const std::filesystem::path& root);

// Stage-1 initialization shared by the CLI and the tests: random weights
// from the seed and the unigram prior of the training transcripts.
Model init_stage1_model(const ModelDims& dims, const std::vector<StreamBundle>& train,
                        std::uint64_t seed);

// Decodes every bundle; results are in input order.
std::vector<DecodeResult> decode_bundles(const Model& m, const std::vector<UfeBundle>& data,
                                         const DecodeConfig& cfg, int jobs = 1);

std::vector<ErrorBreakdown> score_bundles(const std::vector<UfeBundle>& data,
                                          const std::vector<DecodeResult>& results);

}  // namespace mema
