#pragma once

#include <utility>
#include <vector>

#include "memarray/numcore.hpp"

namespace mema {

// Output vocabulary of the attention decoder: base labels 0..|U|-1, then
// sos = |U| and eos = |U|+1.
struct OutputVocab {
  int base_size = 0;

  int sos() const { return base_size; }
  int eos() const { return base_size + 1; }
  int size() const { return base_size + 2; }
  bool valid(int id) const { return id >= 0 && id < size(); }
};

enum class AttentionKind { kLocationAware, kContent };

struct AttentionDims {
  std::size_t query_dim = 64;  // decoder state
  std::size_t value_dim = 64;  // E
  std::size_t att_dim = 32;
  std::size_t conv_filters = 4;
  std::size_t conv_width = 8;
  AttentionKind kind = AttentionKind::kLocationAware;
};

// e_t = w . tanh(q Wq + h_t V + conv(a_prev)_t U + b)
struct FrameAttentionParams {
  AttentionDims dims;
  Matrix Wq;    // query_dim x att_dim
  Matrix V;     // value_dim x att_dim
  Matrix U;     // conv_filters x att_dim
  Matrix b;     // 1 x att_dim
  Matrix w;     // 1 x att_dim
  Matrix conv;  // conv_filters x conv_width, taps at offsets -width/2 .. width/2-1

  FrameAttentionParams() = default;
  explicit FrameAttentionParams(const AttentionDims& d);
  void init(Rng& rng, double scale = 0.1);

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "Wq", self.Wq);
    f(prefix + "V", self.V);
    f(prefix + "U", self.U);
    f(prefix + "b", self.b);
    f(prefix + "w", self.w);
    f(prefix + "conv", self.conv);
  }
};

// Per-utterance, per-stream attention memory: the UFE frames and their
// query-independent projection h V.
struct AttentionMemory {
  const Matrix* values = nullptr;
  Matrix projected;

  std::size_t frames() const { return values->rows(); }
};

AttentionMemory make_memory(const FrameAttentionParams& p, const Matrix& values);

// a_{l-1}; uniform before the first output step.
struct FrameAttentionState {
  Vec prev_weights;

  static FrameAttentionState initial(std::size_t frames) {
    return {Vec(frames, 1.0 / static_cast<double>(frames))};
  }
};

struct FrameAttentionCache {
  Vec query;
  Vec prev_weights;
  Matrix conv_out;  // T x filters
  Matrix act;       // T x att_dim, tanh outputs
  Vec weights;
};

struct FrameAttentionOutput {
  Vec context;  // r_l = sum_t a_t h_t
  FrameAttentionState state;  // holds a_l
};

FrameAttentionOutput frame_attention(const FrameAttentionParams& p,
                                     std::span<const double> query,
                                     const AttentionMemory& mem,
                                     const FrameAttentionState& st,
                                     FrameAttentionCache* cache = nullptr);

// Gradient accumulators for one memory across all output steps. The value
// projection gradient is folded in once at the end via finish_memory_backward.
struct MemoryGrad {
  Matrix dprojected;  // T x att_dim
  Matrix dvalues;     // T x E
};

MemoryGrad make_memory_grad(const AttentionMemory& mem, std::size_t att_dim);

// Backward of one frame_attention call. `dweights` is dL/da_l flowing back
// from later steps (may be empty). Adds into dquery, the memory grads, and
// dprev_weights (dL/da_{l-1}).
void frame_attention_backward(const FrameAttentionParams& p, const AttentionMemory& mem,
                              const FrameAttentionCache& cache,
                              std::span<const double> dcontext,
                              std::span<const double> dweights,
                              FrameAttentionParams& grad, std::span<double> dquery,
                              MemoryGrad& mgrad, std::span<double> dprev_weights);

void finish_memory_backward(const FrameAttentionParams& p, const AttentionMemory& mem,
                            MemoryGrad& mgrad, FrameAttentionParams& grad);

struct DecoderDims {
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  std::size_t context_dim = 64;
  int base_vocab = 12;
};

// q_l = GRU(q_{l-1}, [embed(y_{l-1}); r_l]); logits = [q_l; r_l] Wo + bo
struct DecoderParams {
  DecoderDims dims;
  Matrix embed;  // |V| x embed_dim
  GruParams gru;
  DenseParams out;

  DecoderParams() = default;
  explicit DecoderParams(const DecoderDims& d);
  void init(Rng& rng, double scale = 0.1);
  OutputVocab vocab() const { return {dims.base_vocab}; }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "embed", self.embed);
    GruParams::visit(self.gru, prefix + "gru.", f);
    DenseParams::visit(self.out, prefix + "out.", f);
  }
};

struct DecoderState {
  Vec q;
  int prev_label = -1;

  static DecoderState initial(const DecoderParams& p) {
    return {Vec(p.dims.hidden, 0.0), p.vocab().sos()};
  }
};

struct DecoderCache {
  int prev_label = -1;
  Vec input;  // [embed; context]
  GruStepCache gru;
  Vec out_input;  // [q_l; context]
};

struct DecoderOutput {
  DecoderState state;
  Vec logits;
};

DecoderOutput decoder_step(const DecoderParams& p, const DecoderState& st, int prev_label,
                           std::span<const double> context,
                           DecoderCache* cache = nullptr);

// Adds dL/dq_{l-1} into dstate_prev and dL/dr_l into dcontext.
void decoder_step_backward(const DecoderParams& p, const DecoderCache& cache,
                           std::span<const double> dlogits, std::span<const double> dq_new,
                           DecoderParams& grad, std::span<double> dstate_prev,
                           std::span<double> dcontext);

// Cross-entropy of softmax(logits) against (1-w) onehot(target) + w prior.
// Returns the loss and dL/dlogits.
std::pair<double, Vec> label_smoothing_loss_grad(std::span<const double> logits, int target,
                                                 double weight, std::span<const double> prior);
double label_smoothing_loss(std::span<const double> logits, int target, double weight,
                            std::span<const double> prior);

}  // namespace mema
