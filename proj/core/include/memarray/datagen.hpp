#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "memarray/rng.hpp"
#include "memarray/types.hpp"

namespace mema {

// Degradations applied to one stream on top of the clean rendering.
// Order: smearing, gain/offset, additive noise, then normalization.
struct CorruptionSpec {
  double snr_db = std::numeric_limits<double>::infinity();  // inf: no extra noise
  int smear_taps = 0;        // 0 or 1: no smearing
  double smear_decay = 0.6;  // tap k weighted decay^k
  double gain = 1.0;
  double offset = 0.0;
  bool nomic = false;  // dead channel: all-zero output

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

struct StreamSpec {
  std::string id;
  CorruptionSpec corruption;
};

struct CorpusConfig {
  int vocab_size = 12;
  int feat_dim = 20;
  int min_label_len = 3;
  int max_label_len = 10;
  int min_frames_per_label = 5;
  int max_frames_per_label = 8;
  int min_silence = 2;  // leading and trailing silence frames, each side
  int max_silence = 6;
  double frame_noise = 0.5;  // per-stream i.i.d. noise on the clean rendering
  int subsampling = 4;       // used to guarantee CTC realizability
  std::size_t num_utterances = 400;  // train + dev pool
  double dev_fraction = 0.1;
  std::size_t num_test = 100;
  std::vector<StreamSpec> streams = default_streams();

  static std::vector<StreamSpec> default_streams();

  void validate() const;
  const StreamSpec& stream(std::string_view id) const;
};

struct CorpusSplits {
  std::vector<StreamBundle> train;
  std::vector<StreamBundle> dev;
  std::vector<StreamBundle> test;
};

// Label templates shared by every utterance of a corpus seed. Row k is the
// template of label k; the final row is silence.
Matrix label_templates(const CorpusConfig& cfg, std::uint64_t seed);

// Deterministic given (cfg, seed, split, index range). Utterance i of a split
// depends only on (seed, split, i), never on the other utterances.
std::vector<StreamBundle> gen_split(const CorpusConfig& cfg, std::uint64_t seed,
                                   std::string_view split, std::size_t count);
CorpusSplits gen_corpus(const CorpusConfig& cfg, std::uint64_t seed);

// Clean rendering plus its frame-level label alignment (-1 = silence).
struct Rendering {
  Matrix frames;
  std::vector<int> alignment;
};
Rendering render_clean(const CorpusConfig& cfg, const Matrix& templates,
                       const Transcript& t, Rng& rng);

// Per-dimension zero mean, unit variance over time. Dimensions whose
// standard deviation is below 1e-8 become zero.
FeatureSequence normalize_mv(const FeatureSequence& f);
Matrix normalize_mv(const Matrix& x);

FeatureSequence make_nomic(const FeatureSequence& like);

enum class MaskFill { kZero, kUtteranceMean };

struct MaskPolicy {
  int num_time_masks = 2;
  int max_time = 40;
  int num_freq_masks = 2;
  int max_freq = 30;
  MaskFill fill = MaskFill::kZero;

  static MaskPolicy none() { return {0, 0, 0, 0, MaskFill::kZero}; }
  void validate(std::size_t dim) const;
};

// Half-open [begin, begin+length) along time or feature axis.
struct MaskRegion {
  enum class Axis { kTime, kFreq } axis;
  std::size_t begin;
  std::size_t length;
};

// SpecAugment-style masking without time warping. Lengths are drawn from
// Uniform{0..max} (clipped to the axis length), starts uniformly over the
// valid range. Frequency masks are applied first, then time masks.
FeatureSequence spec_augment(const FeatureSequence& f, const MaskPolicy& policy,
                             Rng& rng, std::vector<MaskRegion>* regions = nullptr);

// Masks whole frames of UFE features with the per-dimension temporal mean of
// the input utterance.
UfeSequence stage2_time_mask(const UfeSequence& h, int num_masks, int max_len,
                             Rng& rng, std::vector<MaskRegion>* regions = nullptr);

// Inverted dropout over every scalar.
UfeSequence input_dropout(const UfeSequence& h, double p, Rng& rng);

// Per-dimension mean over rows.
Vec column_mean(const Matrix& x);

}  // namespace mema
