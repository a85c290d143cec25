#pragma once

#include <vector>

#include "memarray/model.hpp"

namespace mema {

struct DecodeConfig {
  int beam = 10;
  double ctc_weight = 0.3;  // lambda at decode time
  FusionMode fusion = FusionMode::kAdaptive;
  Vec fixed_weights;        // used by FusionMode::kFixed
  int max_output_len = 0;   // output steps including eos; 0 = 2 * shortest UFE length
  int nbest = 0;            // 0 = beam
  bool record_frame_weights = false;
  // Per step, compares each live prefix's CTC mass with the sum of its
  // "ends here" and one-label-extension masses (all labels, before pruning).
  bool check_ctc_conservation = false;

  void validate(std::size_t streams) const;
};

struct Hypothesis {
  std::vector<int> prefix;  // emitted labels, sos implied, eos excluded
  double att = 0.0;         // sum of attention log-probs
  double ctc = 0.0;         // fused CTC prefix score
  double joint = 0.0;       // (1 - lambda) att + lambda ctc
  std::vector<double> ctc_streams;  // per-stream alpha of the prefix
  std::vector<CtcPrefixState> ctc_state;
  std::vector<FrameAttentionState> att_state;
  DecoderState dec;
  StreamWeights last_beta;
  std::vector<Vec> beta_trace;                 // one beta per output step
  std::vector<std::vector<Vec>> frame_trace;   // [stream][step] attention weights
  bool finished = false;
};

struct DecodeResult {
  std::vector<Hypothesis> nbest;  // sorted best first
  bool finished = true;           // false: no hypothesis reached eos, best partial returned
  // With check_ctc_conservation: max |parts / whole - 1| over all checks.
  double ctc_conservation_error = 0.0;
  std::size_t ctc_conservation_checks = 0;
};

// Label-synchronous joint CTC/attention beam search over N streams of UFE
// features. Per step and live hypothesis: frame attention per stream, stream
// weights from the HAN on q_{l-1}, fused context, one decoder step, then each
// candidate label (and eos) is scored with per-stream CTC prefix scores
// combined per cfg.fusion. The same beta serves context fusion and adaptive
// CTC weighting. Live hypotheses are pruned to `beam` by joint score with
// ties broken by the lexicographically smaller label sequence; every eos
// expansion with a finite score is kept as finished. Scores are not length
// normalized.
DecodeResult beam_search(const Model& m, const std::vector<Matrix>& ufe,
                         const DecodeConfig& cfg);

// Joint score of a complete label sequence followed by eos, evaluated along
// the same path the search uses. Used as the exhaustive-search oracle.
Hypothesis score_sequence(const Model& m, const std::vector<Matrix>& ufe,
                          const std::vector<int>& labels, const DecodeConfig& cfg);

}  // namespace mema
