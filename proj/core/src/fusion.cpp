#include "memarray/fusion.hpp"

#include <cmath>

#include "memarray/errors.hpp"

namespace mema {

StreamAttentionParams::StreamAttentionParams(const StreamAttentionDims& d)
    : dims(d), Wq(d.query_dim, d.att_dim), V(d.context_dim, d.att_dim), b(1, d.att_dim),
      w(1, d.att_dim) {}

void StreamAttentionParams::init(Rng& rng, double scale) {
  init_uniform(Wq, rng, scale);
  init_uniform(V, rng, scale);
  init_uniform(b, rng, scale);
  init_uniform(w, rng, scale);
}

StreamWeights stream_attention(const StreamAttentionParams& p, std::span<const double> query,
                               const std::vector<Vec>& contexts,
                               StreamAttentionCache* cache) {
  if (contexts.empty()) throw ShapeError("stream_attention: no streams");
  const std::size_t A = p.dims.att_dim;
  Vec qproj(p.b.row(0).begin(), p.b.row(0).end());
  vec_mat_acc(query, p.Wq, qproj);
  Matrix act(contexts.size(), A);
  Vec scores(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i].size() != p.dims.context_dim) {
      throw ShapeError("stream_attention: context " + std::to_string(i) + " has dim " +
                       std::to_string(contexts[i].size()));
    }
    auto u = act.row(i);
    std::copy(qproj.begin(), qproj.end(), u.begin());
    vec_mat_acc(contexts[i], p.V, u);
    for (auto& x : u) x = std::tanh(x);
    scores[i] = dot(u, p.w.row(0));
  }
  StreamWeights w{softmax_stable(scores)};
  if (cache) {
    cache->query.assign(query.begin(), query.end());
    cache->act = std::move(act);
    cache->beta = w.beta;
  }
  return w;
}

void stream_attention_backward(const StreamAttentionParams& p,
                               const std::vector<Vec>& contexts,
                               const StreamAttentionCache& c,
                               std::span<const double> dbeta, StreamAttentionParams& grad,
                               std::span<double> dquery, std::vector<Vec>& dcontexts) {
  const std::size_t A = p.dims.att_dim;
  const Vec de = softmax_backward(c.beta, dbeta);
  Vec dpre_sum(A, 0.0);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    auto u = c.act.row(i);
    axpy(de[i], u, grad.w.row(0));
    Vec dpre(A);
    for (std::size_t j = 0; j < A; ++j) dpre[j] = de[i] * p.w(0, j) * (1.0 - u[j] * u[j]);
    outer_acc(contexts[i], dpre, grad.V);
    mat_vec_t_acc(p.V, dpre, dcontexts[i]);
    axpy(1.0, dpre, dpre_sum);
  }
  outer_acc(c.query, dpre_sum, grad.Wq);
  axpy(1.0, dpre_sum, grad.b.row(0));
  mat_vec_t_acc(p.Wq, dpre_sum, dquery);
}

Vec fuse_contexts(const StreamWeights& w, const std::vector<Vec>& contexts) {
  if (w.size() != contexts.size() || contexts.empty()) {
    throw ShapeError("fuse_contexts: " + std::to_string(w.size()) + " weights for " +
                     std::to_string(contexts.size()) + " contexts");
  }
  Vec r(contexts[0].size(), 0.0);
  for (std::size_t i = 0; i < contexts.size(); ++i) axpy(w.beta[i], contexts[i], r);
  return r;
}

double ctc_score_equal(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("ctc_score_equal: no streams");
  // Same accumulation as the adaptive path so that uniform weights
  // reproduce this value bit for bit.
  return ctc_score_adaptive(StreamWeights::uniform(scores.size()), scores);
}

double ctc_score_adaptive(const StreamWeights& w, std::span<const double> scores) {
  if (w.size() != scores.size() || scores.empty()) {
    throw ShapeError("ctc_score_adaptive: weight/score length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (w.beta[i] == 0.0) continue;
    s += w.beta[i] * scores[i];
  }
  return s;
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kEqual: return "equal";
    case FusionMode::kAdaptive: return "adaptive";
    case FusionMode::kFixed: return "fixed";
  }
  return "unknown";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "equal") return FusionMode::kEqual;
  if (s == "adaptive") return FusionMode::kAdaptive;
  if (s == "fixed") return FusionMode::kFixed;
  throw ConfigError("unknown fusion mode '" + s + "' (expected equal, adaptive or fixed)");
}

}  // namespace mema
