#pragma once

#include <vector>

#include "memarray/numcore.hpp"
#include "memarray/types.hpp"

namespace mema {

struct EncoderDims {
  std::size_t feat_dim = 20;
  std::size_t subsampling = 4;
  std::size_t hidden = 64;  // per direction
  std::size_t layers = 2;
  std::size_t out_dim = 64;  // E
};

// One bidirectional recurrent layer followed by a tanh projection of the
// concatenated directions back to E.
struct BiGruLayerParams {
  GruParams fwd;
  GruParams bwd;
  DenseParams proj;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    GruParams::visit(self.fwd, prefix + "fwd.", f);
    GruParams::visit(self.bwd, prefix + "bwd.", f);
    DenseParams::visit(self.proj, prefix + "proj.", f);
  }
};

// stack(s) -> tanh(dense) -> [BiGRU -> tanh(dense)] x layers
struct EncoderParams {
  EncoderDims dims;
  DenseParams front;
  std::vector<BiGruLayerParams> layers;

  EncoderParams() = default;
  explicit EncoderParams(const EncoderDims& d);
  void init(Rng& rng, double scale = 0.1);

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    DenseParams::visit(self.front, prefix + "front.", f);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      BiGruLayerParams::visit(self.layers[i], prefix + "l" + std::to_string(i) + ".", f);
    }
  }
};

// Concatenates each block of s consecutive frames into one row of s*D
// values; a trailing partial block is discarded.
Matrix subsample_stack(const Matrix& x, std::size_t s);
// Backward of subsample_stack onto an input of `rows` frames.
Matrix subsample_unstack(const Matrix& dy, std::size_t rows, std::size_t s);

struct EncoderCache {
  Matrix stacked;
  Matrix front_out;
  struct Layer {
    Matrix input;
    std::vector<GruStepCache> fwd;
    std::vector<GruStepCache> bwd;
    Matrix concat;
    Matrix out;
  };
  std::vector<Layer> layers;
};

UfeSequence encode(const EncoderParams& p, const FeatureSequence& f,
                   EncoderCache* cache = nullptr);
Matrix encode(const EncoderParams& p, const Matrix& frames, EncoderCache* cache = nullptr);

// Accumulates parameter gradients for dL/dH (rows = floor(T/s), cols = E).
void encode_backward(const EncoderParams& p, const EncoderCache& cache,
                     const Matrix& dh, EncoderParams& grad);

}  // namespace mema
