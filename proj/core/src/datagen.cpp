#include "memarray/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "memarray/errors.hpp"

namespace mema {

const FeatureSequence& StreamBundle::stream(const std::string& id) const {
  for (const auto& s : streams) {
    if (s.stream_id == id) return s;
  }
  throw DataError("utterance " + utt_id + " has no stream '" + id + "'");
}

std::vector<StreamSpec> CorpusConfig::default_streams() {
  CorruptionSpec far;
  far.snr_db = 6.0;
  far.smear_taps = 3;
  return {{"clean", {}}, {"far", far}, {"nomic", CorruptionSpec{.nomic = true}}};
}

void CorpusConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("corpus: vocab_size must be >= 2");
  if (feat_dim < 1) throw ConfigError("corpus: feat_dim must be >= 1");
  if (min_label_len < 1 || max_label_len < min_label_len) {
    throw ConfigError("corpus: invalid label length range");
  }
  if (subsampling < 1) throw ConfigError("corpus: subsampling must be >= 1");
  if (min_frames_per_label < subsampling || max_frames_per_label < min_frames_per_label) {
    throw ConfigError("corpus: frames per label must be >= subsampling factor");
  }
  if (min_silence < 0 || max_silence < min_silence) {
    throw ConfigError("corpus: invalid silence range");
  }
  if (frame_noise < 0.0) throw ConfigError("corpus: frame_noise must be >= 0");
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) {
    throw ConfigError("corpus: dev_fraction must be in [0, 1)");
  }
  if (streams.empty()) throw ConfigError("corpus: at least one stream is required");
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (streams[i].id.empty()) throw ConfigError("corpus: empty stream id");
    for (std::size_t j = 0; j < i; ++j) {
      if (streams[j].id == streams[i].id) {
        throw ConfigError("corpus: duplicate stream id '" + streams[i].id + "'");
      }
    }
    const auto& c = streams[i].corruption;
    if (c.smear_taps < 0) throw ConfigError("corpus: smear_taps must be >= 0");
    if (!(c.smear_decay > 0.0 && c.smear_decay <= 1.0)) {
      throw ConfigError("corpus: smear_decay must be in (0, 1]");
    }
  }
}

const StreamSpec& CorpusConfig::stream(std::string_view id) const {
  for (const auto& s : streams) {
    if (s.id == id) return s;
  }
  throw ConfigError("corpus: unknown stream '" + std::string(id) + "'");
}

Matrix label_templates(const CorpusConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).split("templates");
  Matrix t(static_cast<std::size_t>(cfg.vocab_size) + 1,
           static_cast<std::size_t>(cfg.feat_dim));
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

namespace {

Transcript draw_transcript(const CorpusConfig& cfg, Rng& rng) {
  const auto len = rng.uniform_int(cfg.min_label_len, cfg.max_label_len);
  Transcript t;
  int prev = -1;
  for (std::int64_t i = 0; i < len; ++i) {
    // No immediate repeats: a repeated label renders as one longer segment.
    int c;
    if (prev < 0) {
      c = static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 1));
    } else {
      c = static_cast<int>(rng.uniform_int(0, cfg.vocab_size - 2));
      if (c >= prev) ++c;
    }
    t.labels.push_back(c);
    prev = c;
  }
  return t;
}

Matrix corrupt(const Matrix& clean, const CorruptionSpec& spec, double frame_noise,
               Rng& rng) {
  if (spec.nomic) return Matrix(clean.rows(), clean.cols());
  Matrix x = clean;
  for (auto& v : x.data()) v += frame_noise * rng.normal();

  if (spec.smear_taps > 1) {
    Matrix y(x.rows(), x.cols());
    double norm = 0.0;
    for (int k = 0; k < spec.smear_taps; ++k) norm += std::pow(spec.smear_decay, k);
    for (std::size_t t = 0; t < x.rows(); ++t) {
      for (int k = 0; k < spec.smear_taps && static_cast<std::size_t>(k) <= t; ++k) {
        axpy(std::pow(spec.smear_decay, k) / norm, x.row(t - k), y.row(t));
      }
    }
    x = std::move(y);
  }

  for (auto& v : x.data()) v = spec.gain * v + spec.offset;

  if (std::isfinite(spec.snr_db)) {
    const double power = x.squared_norm() / static_cast<double>(x.size());
    const double sigma = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
    for (auto& v : x.data()) v += sigma * rng.normal();
  }
  return x;
}

}  // namespace

Rendering render_clean(const CorpusConfig& cfg, const Matrix& templates,
                       const Transcript& t, Rng& rng) {
  const int silence_row = cfg.vocab_size;
  Rendering out;
  auto push = [&](int label, std::int64_t frames) {
    for (std::int64_t i = 0; i < frames; ++i) {
      out.alignment.push_back(label);
    }
  };
  push(-1, rng.uniform_int(cfg.min_silence, cfg.max_silence));
  for (int c : t.labels) {
    push(c, rng.uniform_int(cfg.min_frames_per_label, cfg.max_frames_per_label));
  }
  push(-1, rng.uniform_int(cfg.min_silence, cfg.max_silence));

  out.frames = Matrix(out.alignment.size(), templates.cols());
  for (std::size_t f = 0; f < out.alignment.size(); ++f) {
    const int row = out.alignment[f] < 0 ? silence_row : out.alignment[f];
    auto src = templates.row(static_cast<std::size_t>(row));
    std::copy(src.begin(), src.end(), out.frames.row(f).begin());
  }
  return out;
}

std::vector<StreamBundle> gen_split(const CorpusConfig& cfg, std::uint64_t seed,
                                   std::string_view split, std::size_t count) {
  cfg.validate();
  const Matrix templates = label_templates(cfg, seed);
  const Rng split_rng = Rng(seed).split(split);
  std::vector<StreamBundle> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng utt_rng = split_rng.split(i);
    char id[64];
    std::snprintf(id, sizeof(id), "%.*s_%05zu", static_cast<int>(split.size()),
                  split.data(), i);
    StreamBundle b;
    b.utt_id = id;
    Rng tr = utt_rng.split("transcript");
    b.transcript = draw_transcript(cfg, tr);
    Rng ar = utt_rng.split("alignment");
    const Rendering clean = render_clean(cfg, templates, b.transcript, ar);
    for (const auto& spec : cfg.streams) {
      Rng sr = utt_rng.split("stream").split(spec.id);
      FeatureSequence f{corrupt(clean.frames, spec.corruption, cfg.frame_noise, sr),
                        spec.id, b.utt_id};
      b.streams.push_back(normalize_mv(f));
    }
    out.push_back(std::move(b));
  }
  return out;
}

CorpusSplits gen_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto n_dev = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.num_utterances) * cfg.dev_fraction));
  if (cfg.num_utterances == 0 || n_dev >= cfg.num_utterances) {
    throw ConfigError("corpus: need at least one training utterance");
  }
  CorpusSplits s;
  s.train = gen_split(cfg, seed, "train", cfg.num_utterances - n_dev);
  s.dev = gen_split(cfg, seed, "dev", n_dev);
  s.test = gen_split(cfg, seed, "test", cfg.num_test);
  return s;
}

Vec column_mean(const Matrix& x) {
  Vec mean(x.cols(), 0.0);
  for (std::size_t t = 0; t < x.rows(); ++t) axpy(1.0, x.row(t), mean);
  if (x.rows() > 0) {
    for (auto& m : mean) m /= static_cast<double>(x.rows());
  }
  return mean;
}

Matrix normalize_mv(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  if (x.rows() == 0) return y;
  const Vec mean = column_mean(x);
  const double n = static_cast<double>(x.rows());
  for (std::size_t d = 0; d < x.cols(); ++d) {
    double var = 0.0;
    for (std::size_t t = 0; t < x.rows(); ++t) {
      const double c = x(t, d) - mean[d];
      var += c * c;
    }
    const double sd = std::sqrt(var / n);
    if (sd < 1e-8) continue;
    for (std::size_t t = 0; t < x.rows(); ++t) y(t, d) = (x(t, d) - mean[d]) / sd;
  }
  return y;
}

FeatureSequence normalize_mv(const FeatureSequence& f) {
  return {normalize_mv(f.frames), f.stream_id, f.utt_id};
}

FeatureSequence make_nomic(const FeatureSequence& like) {
  return {Matrix(like.frames.rows(), like.frames.cols()), like.stream_id, like.utt_id};
}

void MaskPolicy::validate(std::size_t dim) const {
  if (num_time_masks < 0 || num_freq_masks < 0 || max_time < 0 || max_freq < 0) {
    throw ConfigError("mask policy: counts and widths must be >= 0");
  }
  if (num_freq_masks > 0 && static_cast<std::size_t>(max_freq) > dim) {
    throw ConfigError("mask policy: max_freq exceeds feature dimension");
  }
}

namespace {

// Draws one mask over an axis of length n.
MaskRegion draw_mask(MaskRegion::Axis axis, std::size_t n, int max_len, Rng& rng) {
  const auto len = static_cast<std::size_t>(
      std::min<std::int64_t>(rng.uniform_int(0, max_len), static_cast<std::int64_t>(n)));
  const auto start =
      static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - len)));
  return {axis, start, len};
}

}  // namespace

FeatureSequence spec_augment(const FeatureSequence& f, const MaskPolicy& policy,
                             Rng& rng, std::vector<MaskRegion>* regions) {
  policy.validate(f.frames.cols());
  FeatureSequence out = f;
  Matrix& x = out.frames;
  const Vec mean = column_mean(f.frames);
  auto fill = [&](std::size_t d) {
    return policy.fill == MaskFill::kZero ? 0.0 : mean[d];
  };
  for (int i = 0; i < policy.num_freq_masks; ++i) {
    const MaskRegion m = draw_mask(MaskRegion::Axis::kFreq, x.cols(), policy.max_freq, rng);
    for (std::size_t t = 0; t < x.rows(); ++t) {
      for (std::size_t d = m.begin; d < m.begin + m.length; ++d) x(t, d) = fill(d);
    }
    if (regions) regions->push_back(m);
  }
  for (int i = 0; i < policy.num_time_masks; ++i) {
    const MaskRegion m = draw_mask(MaskRegion::Axis::kTime, x.rows(), policy.max_time, rng);
    for (std::size_t t = m.begin; t < m.begin + m.length; ++t) {
      for (std::size_t d = 0; d < x.cols(); ++d) x(t, d) = fill(d);
    }
    if (regions) regions->push_back(m);
  }
  return out;
}

UfeSequence stage2_time_mask(const UfeSequence& h, int num_masks, int max_len, Rng& rng,
                             std::vector<MaskRegion>* regions) {
  if (num_masks < 0 || max_len < 0) {
    throw ConfigError("stage2_time_mask: counts must be >= 0");
  }
  if (h.frames.rows() == 0) throw ShapeError("stage2_time_mask: empty sequence");
  UfeSequence out = h;
  const Vec mean = column_mean(h.frames);
  for (int i = 0; i < num_masks; ++i) {
    const MaskRegion m = draw_mask(MaskRegion::Axis::kTime, h.frames.rows(), max_len, rng);
    for (std::size_t t = m.begin; t < m.begin + m.length; ++t) {
      std::copy(mean.begin(), mean.end(), out.frames.row(t).begin());
    }
    if (regions) regions->push_back(m);
  }
  return out;
}

UfeSequence input_dropout(const UfeSequence& h, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("input_dropout: p must be in [0, 1)");
  UfeSequence out = h;
  if (p == 0.0) return out;
  const double scale = 1.0 / (1.0 - p);
  for (auto& v : out.frames.data()) v = rng.bernoulli(p) ? 0.0 : v * scale;
  return out;
}

}  // namespace mema
