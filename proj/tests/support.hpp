#pragma once

#include <cmath>
#include <vector>

#include "memarray/ctc.hpp"
#include "memarray/model.hpp"
#include "memarray/rng.hpp"

namespace mema::testing {

// Small enough for exhaustive and finite-difference checks.
inline ModelDims tiny_dims(int vocab = 3) {
  ModelDims d;
  d.feat_dim = 3;
  d.subsampling = 2;
  d.enc_hidden = 3;
  d.enc_layers = 2;
  d.ufe_dim = 4;
  d.att_dim = 3;
  d.conv_filters = 2;
  d.conv_width = 4;
  d.dec_hidden = 4;
  d.embed_dim = 3;
  d.han_att_dim = 3;
  d.vocab_size = vocab;
  return d;
}

// Uniform[-scale, scale] initialization is too flat for meaningful checks;
// widen every tensor and give the prior some shape.
inline Model random_model(const ModelDims& d, std::size_t streams, Rng& rng,
                          double scale = 0.8) {
  Model m = Model::create(d, streams, rng);
  for (auto& g : m.groups()) {
    for (auto& t : g.tensors) init_uniform(*t.value, rng, scale);
  }
  // Distinct streams so that multi-stream checks are not degenerate.
  double total = 0.0;
  for (std::size_t k = 0; k < m.unigram.size(); ++k) {
    m.unigram[k] = static_cast<int>(k) == m.vocab().sos() ? 0.0 : rng.uniform(0.2, 1.0);
    total += m.unigram[k];
  }
  for (auto& u : m.unigram) u /= total;
  return m;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = scale * rng.normal();
  return m;
}

enum class LatticeKind { kUniform, kRandom, kNearOneHot };

inline CtcLattice random_lattice(std::size_t T, int vocab, LatticeKind kind, Rng& rng) {
  const std::size_t K = static_cast<std::size_t>(vocab) + 1;
  Matrix scores(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    const auto hot = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(K - 1)));
    for (std::size_t k = 0; k < K; ++k) {
      switch (kind) {
        case LatticeKind::kUniform: scores(t, k) = 0.0; break;
        case LatticeKind::kRandom: scores(t, k) = 2.0 * rng.normal(); break;
        case LatticeKind::kNearOneHot: scores(t, k) = (k == hot ? 12.0 : 0.0) + 0.1 * rng.normal(); break;
      }
    }
  }
  return make_lattice(scores);
}

inline Transcript random_transcript(std::size_t len, int vocab, Rng& rng) {
  Transcript t;
  for (std::size_t i = 0; i < len; ++i) {
    t.labels.push_back(static_cast<int>(rng.uniform_int(0, vocab - 1)));
  }
  return t;
}

// All label sequences over [0, vocab) with length in [0, max_len].
inline std::vector<std::vector<int>> all_sequences(int vocab, std::size_t max_len) {
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (std::size_t l = 1; l <= max_len; ++l) {
    std::vector<std::vector<int>> next;
    for (const auto& s : frontier) {
      for (int c = 0; c < vocab; ++c) {
        auto e = s;
        e.push_back(c);
        next.push_back(e);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace mema::testing
