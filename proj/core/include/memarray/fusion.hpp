#pragma once

#include <span>
#include <string>
#include <vector>

#include "memarray/numcore.hpp"

namespace mema {

struct StreamAttentionDims {
  std::size_t query_dim = 64;
  std::size_t context_dim = 64;
  std::size_t att_dim = 32;
};

// Content-based stream attention (the HAN):
//   e_i = w . tanh(q Wq + r_i V + b),  beta = softmax(e)
struct StreamAttentionParams {
  StreamAttentionDims dims;
  Matrix Wq;
  Matrix V;
  Matrix b;
  Matrix w;

  StreamAttentionParams() = default;
  explicit StreamAttentionParams(const StreamAttentionDims& d);
  void init(Rng& rng, double scale = 0.1);

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "Wq", self.Wq);
    f(prefix + "V", self.V);
    f(prefix + "b", self.b);
    f(prefix + "w", self.w);
  }
};

// beta over N streams at one output step; a probability simplex.
struct StreamWeights {
  Vec beta;

  std::size_t size() const { return beta.size(); }
  static StreamWeights uniform(std::size_t n) {
    return {Vec(n, 1.0 / static_cast<double>(n))};
  }
};

struct StreamAttentionCache {
  Vec query;
  Matrix act;  // N x att_dim
  Vec beta;
};

StreamWeights stream_attention(const StreamAttentionParams& p, std::span<const double> query,
                               const std::vector<Vec>& contexts,
                               StreamAttentionCache* cache = nullptr);

// Given dL/dbeta, accumulates parameter grads and adds into dquery and
// dcontexts[i].
void stream_attention_backward(const StreamAttentionParams& p,
                               const std::vector<Vec>& contexts,
                               const StreamAttentionCache& cache,
                               std::span<const double> dbeta, StreamAttentionParams& grad,
                               std::span<double> dquery, std::vector<Vec>& dcontexts);

// r = sum_i beta_i r_i
Vec fuse_contexts(const StreamWeights& w, const std::vector<Vec>& contexts);

// (1/N) sum_i alpha_i, in score space.
double ctc_score_equal(std::span<const double> scores);
// sum_i beta_i alpha_i. With -inf scores, zero-weight streams contribute 0.
double ctc_score_adaptive(const StreamWeights& w, std::span<const double> scores);

enum class FusionMode { kEqual, kAdaptive, kFixed };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

}  // namespace mema
