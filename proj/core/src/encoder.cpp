#include "memarray/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "memarray/errors.hpp"

namespace mema {

EncoderParams::EncoderParams(const EncoderDims& d)
    : dims(d), front(d.feat_dim * d.subsampling, d.out_dim) {
  if (d.subsampling == 0 || d.layers == 0) {
    throw ConfigError("encoder: subsampling and layers must be >= 1");
  }
  for (std::size_t i = 0; i < d.layers; ++i) {
    layers.push_back({GruParams(d.out_dim, d.hidden), GruParams(d.out_dim, d.hidden),
                      DenseParams(2 * d.hidden, d.out_dim)});
  }
}

void EncoderParams::init(Rng& rng, double scale) {
  front.init(rng, scale);
  for (auto& l : layers) {
    l.fwd.init(rng, scale);
    l.bwd.init(rng, scale);
    l.proj.init(rng, scale);
  }
}

Matrix subsample_stack(const Matrix& x, std::size_t s) {
  if (s == 0) throw ConfigError("subsample_stack: factor must be >= 1");
  if (x.rows() < s) {
    throw ShapeError("subsample_stack: " + std::to_string(x.rows()) +
                     " frames is shorter than subsampling factor " + std::to_string(s));
  }
  const std::size_t n = x.rows() / s;
  Matrix y(n, s * x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = y.row(i);
    for (std::size_t k = 0; k < s; ++k) {
      auto src = x.row(i * s + k);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(k * x.cols()));
    }
  }
  return y;
}

Matrix subsample_unstack(const Matrix& dy, std::size_t rows, std::size_t s) {
  const std::size_t d = dy.cols() / s;
  Matrix dx(rows, d);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      auto src = dy.row(i).subspan(k * d, d);
      std::copy(src.begin(), src.end(), dx.row(i * s + k).begin());
    }
  }
  return dx;
}

namespace {

void tanh_inplace(Matrix& m) {
  for (auto& v : m.data()) v = std::tanh(v);
}

// dL/dpre given dL/dout for out = tanh(pre).
Matrix tanh_backward(const Matrix& out, const Matrix& dout) {
  Matrix d(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = out.data()[i];
    d.data()[i] = dout.data()[i] * (1.0 - y * y);
  }
  return d;
}

Matrix input_projection(const GruParams& p, const Matrix& x) {
  Matrix gx = matmul(x, p.Wx);
  for (std::size_t t = 0; t < gx.rows(); ++t) axpy(1.0, p.bx.row(0), gx.row(t));
  return gx;
}

// Runs one direction, writing states into columns [col, col+H) of out.
void run_direction(const GruParams& p, const Matrix& gx, bool reverse, Matrix& out,
                   std::size_t col, std::vector<GruStepCache>* caches) {
  const std::size_t n = gx.rows();
  const std::size_t h = p.hidden();
  Vec state(h, 0.0);
  if (caches) caches->assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = reverse ? n - 1 - i : i;
    state = gru_step_pre(p, state, gx.row(t), caches ? &(*caches)[t] : nullptr);
    std::copy(state.begin(), state.end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(col));
  }
}

// Backward of run_direction; returns dL/dgx.
Matrix backprop_direction(const GruParams& p, const std::vector<GruStepCache>& caches,
                          const Matrix& dout, std::size_t col, bool reverse,
                          GruParams& grad) {
  const std::size_t n = caches.size();
  const std::size_t h = p.hidden();
  Matrix dgx(n, 3 * h);
  Vec carry(h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    // Visit steps in the opposite order of the forward pass.
    const std::size_t t = reverse ? i : n - 1 - i;
    Vec dh(carry);
    axpy(1.0, dout.row(t).subspan(col, h), dh);
    Vec dprev(h, 0.0);
    Vec g = gru_step_pre_backward(p, caches[t], dh, grad, dprev);
    std::copy(g.begin(), g.end(), dgx.row(t).begin());
    carry = std::move(dprev);
  }
  return dgx;
}

}  // namespace

Matrix encode(const EncoderParams& p, const Matrix& frames, EncoderCache* cache) {
  const auto& d = p.dims;
  if (frames.cols() != d.feat_dim) {
    throw ShapeError("encode: feature dim " + std::to_string(frames.cols()) +
                     " does not match encoder dim " + std::to_string(d.feat_dim));
  }
  if (frames.rows() < d.subsampling) {
    throw ShapeError("encode: utterance of " + std::to_string(frames.rows()) +
                     " frames is shorter than subsampling factor " +
                     std::to_string(d.subsampling));
  }
  Matrix stacked = subsample_stack(frames, d.subsampling);
  Matrix x = dense_forward(p.front, stacked);
  tanh_inplace(x);
  if (cache) {
    cache->stacked = std::move(stacked);
    cache->front_out = x;
    cache->layers.assign(p.layers.size(), {});
  }
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const auto& layer = p.layers[li];
    const std::size_t h = layer.fwd.hidden();
    Matrix concat(x.rows(), 2 * h);
    EncoderCache::Layer* lc = cache ? &cache->layers[li] : nullptr;
    run_direction(layer.fwd, input_projection(layer.fwd, x), false, concat, 0,
                  lc ? &lc->fwd : nullptr);
    run_direction(layer.bwd, input_projection(layer.bwd, x), true, concat, h,
                  lc ? &lc->bwd : nullptr);
    Matrix y = dense_forward(layer.proj, concat);
    tanh_inplace(y);
    if (lc) {
      lc->input = std::move(x);
      lc->concat = std::move(concat);
      lc->out = y;
    }
    x = std::move(y);
  }
  return x;
}

UfeSequence encode(const EncoderParams& p, const FeatureSequence& f, EncoderCache* cache) {
  return {encode(p, f.frames, cache), f.stream_id, f.utt_id};
}

void encode_backward(const EncoderParams& p, const EncoderCache& cache, const Matrix& dh,
                     EncoderParams& grad) {
  Matrix dx = dh;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& layer = p.layers[li];
    auto& g = grad.layers[li];
    const auto& lc = cache.layers[li];
    const std::size_t h = layer.fwd.hidden();
    Matrix dpre = tanh_backward(lc.out, dx);
    Matrix dconcat = dense_backward(layer.proj, lc.concat, dpre, g.proj);

    Matrix dgx_f = backprop_direction(layer.fwd, lc.fwd, dconcat, 0, false, g.fwd);
    Matrix dgx_b = backprop_direction(layer.bwd, lc.bwd, dconcat, h, true, g.bwd);

    matmul_tn_acc(lc.input, dgx_f, g.fwd.Wx);
    matmul_tn_acc(lc.input, dgx_b, g.bwd.Wx);
    for (std::size_t t = 0; t < dgx_f.rows(); ++t) {
      axpy(1.0, dgx_f.row(t), g.fwd.bx.row(0));
      axpy(1.0, dgx_b.row(t), g.bwd.bx.row(0));
    }
    dx = matmul_nt(dgx_f, layer.fwd.Wx);
    dx += matmul_nt(dgx_b, layer.bwd.Wx);
  }
  Matrix dfront = tanh_backward(cache.front_out, dx);
  dense_backward(p.front, cache.stacked, dfront, grad.front);
}

}  // namespace mema
