#pragma once

#include <string>
#include <vector>

#include "memarray/beam_search.hpp"
#include "memarray/datagen.hpp"
#include "memarray/model.hpp"
#include "memarray/pipeline.hpp"

namespace mema {

// One test condition: a stream combination decoded under a set of fusion
// modes. Streams may come from the corpus or from the test-only variants.
struct Condition {
  std::string name;
  std::vector<std::string> streams;
  std::vector<FusionMode> modes;
  Vec fixed_weights;  // for FusionMode::kFixed; empty = all weight on the first stream
};

// Everything a run needs except the seed, which is supplied separately and
// recorded next to the config hash in every artifact.
//
// JSON schema (every key optional, unknown keys rejected):
//   corpus        { vocab_size, feat_dim, min_label_len, max_label_len,
//                   min_frames_per_label, max_frames_per_label, min_silence,
//                   max_silence, frame_noise, subsampling, num_utterances, dev_fraction,
//                   num_test, streams: [{id, corruption}] }
//   test_streams  [{id, corruption}]   extra test-split-only stream variants
//   model         { enc_hidden, enc_layers, ufe_dim, att_dim, conv_filters,
//                   conv_width, attention, dec_hidden, embed_dim, han_att_dim }
//   stage1        train block + streams: [ids pooled for Stage-1]
//   stage2        train block + streams: [ids of the N target streams]
//   decode        { beam, ctc_weight, max_output_len, nbest }
//   conditions    [{name, streams, modes, fixed_weights}]
//   sweep         { data_fractions: [..] }
//   svg_utterances  number of test utterances with attention heatmaps
// A train block holds ctc_weight, smoothing, epochs, patience, batch_size,
// optimizer {kind, rho, eps, lr, grad_clip}, stage1_mask {num_time_masks,
// max_time, num_freq_masks, max_freq, fill}, stage2_augment, stage2_num_masks,
// stage2_max_len, dropout, data_fraction. The model takes feat_dim,
// subsampling and vocab_size from the corpus. A corruption is {snr_db
// (null = none), smear_taps, smear_decay, gain, offset, nomic}.
struct ExperimentConfig {
  CorpusConfig corpus;
  std::vector<StreamSpec> test_streams;
  ModelDims model;
  std::vector<std::string> stage1_streams{"clean", "far"};
  TrainConfig stage1;
  std::vector<std::string> stage2_streams{"clean", "far"};
  TrainConfig stage2;
  DecodeConfig decode;
  std::vector<Condition> conditions;
  std::vector<double> sweep_fractions{0.01, 0.1, 0.5, 1.0};
  int svg_utterances = 2;

  static ExperimentConfig defaults();
  static ExperimentConfig from_json(const std::string& text);
  // Canonical form with every default filled in; the hash is taken over it.
  std::string to_json() const;
  std::string hash() const;
  // Hash of only the settings an artifact stage depends on, so that, say,
  // a new beam width does not invalidate trained models. Stages: "data",
  // "stage1", "stage2", "decode"; each includes its predecessors.
  std::string stage_key(const std::string& stage) const;
  void validate() const;

  // Corpus streams plus the test-only variants.
  CorpusConfig test_corpus() const;
  bool has_stream(const std::string& id) const;
};

// Seeds the Stage-1/Stage-2 training configs and returns the config.
ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed);

}  // namespace mema
