#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "memarray/attention.hpp"
#include "memarray/ctc.hpp"
#include "memarray/encoder.hpp"
#include "memarray/fusion.hpp"
#include "memarray/types.hpp"

namespace mema {

struct ModelDims {
  std::size_t feat_dim = 20;
  std::size_t subsampling = 4;
  std::size_t enc_hidden = 64;
  std::size_t enc_layers = 2;
  std::size_t ufe_dim = 64;
  std::size_t att_dim = 32;
  std::size_t conv_filters = 4;
  std::size_t conv_width = 8;
  AttentionKind attention = AttentionKind::kLocationAware;
  std::size_t dec_hidden = 64;
  std::size_t embed_dim = 32;
  std::size_t han_att_dim = 32;
  int vocab_size = 12;  // |U|

  EncoderDims encoder() const {
    return {feat_dim, subsampling, enc_hidden, enc_layers, ufe_dim};
  }
  AttentionDims frame_attention() const {
    return {dec_hidden, ufe_dim, att_dim, conv_filters, conv_width, attention};
  }
  DecoderDims decoder() const { return {embed_dim, dec_hidden, ufe_dim, vocab_size}; }
  StreamAttentionDims han() const { return {dec_hidden, ufe_dim, han_att_dim}; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Group names, in canonical order: encoder, frame_attention.<i>, decoder,
// ctc.<i>, han.
struct Model {
  ModelDims dims;
  EncoderParams encoder;
  std::vector<FrameAttentionParams> frame_attention;  // one per stream
  DecoderParams decoder;
  std::vector<CtcParams> ctc;  // one per stream
  StreamAttentionParams han;
  Vec unigram;  // label-smoothing prior over the output vocabulary
  std::set<std::string> frozen;

  // Uniform[-0.1, 0.1] initialization of every tensor.
  static Model create(const ModelDims& dims, std::size_t streams, Rng& rng);
  // Gradient mirror: same shapes, all zeros, nothing frozen.
  Model zeros_like() const;

  std::size_t num_streams() const { return frame_attention.size(); }
  OutputVocab vocab() const { return {dims.vocab_size}; }

  std::vector<ParamGroup> groups();
  std::vector<std::string> group_names() const;
  bool is_frozen(const std::string& group) const { return frozen.count(group) > 0; }

  // Stage-2 initialization: N copies of stream-0 frame attention and CTC,
  // everything but the HAN frozen.
  Model to_multistream(std::size_t streams) const;

  void set_zero();
  Model& operator+=(const Model& o);
  Model& operator*=(double s);
};

// Equality of two models' tensors, bit for bit, per group.
bool groups_identical(const Model& a, const Model& b, const std::string& group);

// Unigram prior over output ids (labels + eos; sos gets zero mass) counted
// from training transcripts, one eos per transcript.
Vec unigram_prior(const std::vector<Transcript>& transcripts, const OutputVocab& vocab);

struct LossWeights {
  double ctc = 0.2;        // lambda
  double smoothing = 0.05;
};

struct JointLoss {
  double total = 0.0;
  double ctc = 0.0;
  double att = 0.0;
};

// Teacher-forced label-smoothed cross entropy averaged over the L+1 output
// steps (eos target last). With one memory this is single-stream decoding
// (the HAN yields beta = [1]); with N memories contexts are fused by the HAN.
// When grad is set, gradients of grad_scale * loss accumulate into it and
// into dmemories (if given).
double attention_seq_loss(const Model& m, std::span<const Matrix* const> memories,
                          const Transcript& t, double smoothing, Model* grad = nullptr,
                          std::vector<Matrix>* dmemories = nullptr, double grad_scale = 1.0);

// Single-stream joint objective through the encoder:
// lambda * ctc + (1 - lambda) * attention.
JointLoss stage1_loss(const Model& m, const Matrix& features, const Transcript& t,
                      const LossWeights& w, Model* grad = nullptr);

// Multi-stream objective on precomputed UFE features; CTC losses of the
// streams are averaged with equal weights.
JointLoss stage2_loss(const Model& m, const std::vector<Matrix>& ufe, const Transcript& t,
                      const LossWeights& w, Model* grad = nullptr);

}  // namespace mema
