#include "memarray/attention.hpp"

#include <cmath>

#include "memarray/errors.hpp"

namespace mema {

FrameAttentionParams::FrameAttentionParams(const AttentionDims& d)
    : dims(d), Wq(d.query_dim, d.att_dim), V(d.value_dim, d.att_dim),
      U(d.conv_filters, d.att_dim), b(1, d.att_dim), w(1, d.att_dim),
      conv(d.conv_filters, d.conv_width) {}

void FrameAttentionParams::init(Rng& rng, double scale) {
  init_uniform(Wq, rng, scale);
  init_uniform(V, rng, scale);
  init_uniform(U, rng, scale);
  init_uniform(b, rng, scale);
  init_uniform(w, rng, scale);
  init_uniform(conv, rng, scale);
}

AttentionMemory make_memory(const FrameAttentionParams& p, const Matrix& values) {
  if (values.cols() != p.dims.value_dim) {
    throw ShapeError("attention memory: value dim " + std::to_string(values.cols()) +
                     " vs " + std::to_string(p.dims.value_dim));
  }
  if (values.rows() == 0) throw ShapeError("attention memory: empty sequence");
  return {&values, matmul(values, p.V)};
}

namespace {

bool uses_location(const FrameAttentionParams& p) {
  return p.dims.kind == AttentionKind::kLocationAware && p.dims.conv_filters > 0;
}

std::ptrdiff_t conv_offset(const FrameAttentionParams& p) {
  return static_cast<std::ptrdiff_t>(p.dims.conv_width / 2);
}

}  // namespace

FrameAttentionOutput frame_attention(const FrameAttentionParams& p,
                                     std::span<const double> query,
                                     const AttentionMemory& mem,
                                     const FrameAttentionState& st,
                                     FrameAttentionCache* cache) {
  const std::size_t T = mem.frames();
  const std::size_t A = p.dims.att_dim;
  if (st.prev_weights.size() != T) {
    throw ShapeError("frame_attention: previous weights cover " +
                     std::to_string(st.prev_weights.size()) + " frames, memory has " +
                     std::to_string(T));
  }
  if (query.size() != p.dims.query_dim) throw ShapeError("frame_attention: query dim mismatch");

  Vec qproj(p.b.row(0).begin(), p.b.row(0).end());
  vec_mat_acc(query, p.Wq, qproj);

  Matrix conv_out(T, p.dims.conv_filters);
  if (uses_location(p)) {
    const auto off = conv_offset(p);
    const auto n = static_cast<std::ptrdiff_t>(T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < p.dims.conv_filters; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.dims.conv_width; ++j) {
          const auto src = static_cast<std::ptrdiff_t>(t + j) - off;
          if (src >= 0 && src < n) s += p.conv(k, j) * st.prev_weights[static_cast<std::size_t>(src)];
        }
        conv_out(t, k) = s;
      }
    }
  }

  Matrix act(T, A);
  Vec scores(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto u = act.row(t);
    auto hv = mem.projected.row(t);
    for (std::size_t j = 0; j < A; ++j) u[j] = qproj[j] + hv[j];
    if (uses_location(p)) vec_mat_acc(conv_out.row(t), p.U, u);
    for (auto& x : u) x = std::tanh(x);
    scores[t] = dot(u, p.w.row(0));
  }
  Vec weights = softmax_stable(scores);

  Vec context(mem.values->cols(), 0.0);
  for (std::size_t t = 0; t < T; ++t) axpy(weights[t], mem.values->row(t), context);

  if (cache) {
    cache->query.assign(query.begin(), query.end());
    cache->prev_weights = st.prev_weights;
    cache->conv_out = std::move(conv_out);
    cache->act = std::move(act);
    cache->weights = weights;
  }
  return {std::move(context), {std::move(weights)}};
}

MemoryGrad make_memory_grad(const AttentionMemory& mem, std::size_t att_dim) {
  return {Matrix(mem.frames(), att_dim), Matrix(mem.frames(), mem.values->cols())};
}

void frame_attention_backward(const FrameAttentionParams& p, const AttentionMemory& mem,
                              const FrameAttentionCache& c,
                              std::span<const double> dcontext,
                              std::span<const double> dweights,
                              FrameAttentionParams& grad, std::span<double> dquery,
                              MemoryGrad& mgrad, std::span<double> dprev_weights) {
  const std::size_t T = mem.frames();
  const std::size_t A = p.dims.att_dim;
  const Matrix& H = *mem.values;

  Vec da(T);
  for (std::size_t t = 0; t < T; ++t) {
    da[t] = dot(dcontext, H.row(t));
    if (!dweights.empty()) da[t] += dweights[t];
    axpy(c.weights[t], dcontext, mgrad.dvalues.row(t));
  }
  const Vec de = softmax_backward(c.weights, da);

  Vec dpre_sum(A, 0.0);
  Matrix dconv_out(T, p.dims.conv_filters);
  const bool loc = uses_location(p);
  for (std::size_t t = 0; t < T; ++t) {
    auto u = c.act.row(t);
    axpy(de[t], u, grad.w.row(0));
    Vec dpre(A);
    for (std::size_t j = 0; j < A; ++j) dpre[j] = de[t] * p.w(0, j) * (1.0 - u[j] * u[j]);
    axpy(1.0, dpre, dpre_sum);
    axpy(1.0, dpre, mgrad.dprojected.row(t));
    if (loc) {
      outer_acc(c.conv_out.row(t), dpre, grad.U);
      mat_vec_t_acc(p.U, dpre, dconv_out.row(t));
    }
  }
  outer_acc(c.query, dpre_sum, grad.Wq);
  axpy(1.0, dpre_sum, grad.b.row(0));
  mat_vec_t_acc(p.Wq, dpre_sum, dquery);

  if (loc) {
    const auto off = conv_offset(p);
    const auto n = static_cast<std::ptrdiff_t>(T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < p.dims.conv_filters; ++k) {
        const double g = dconv_out(t, k);
        if (g == 0.0) continue;
        for (std::size_t j = 0; j < p.dims.conv_width; ++j) {
          const auto src = static_cast<std::ptrdiff_t>(t + j) - off;
          if (src < 0 || src >= n) continue;
          const auto s = static_cast<std::size_t>(src);
          grad.conv(k, j) += g * c.prev_weights[s];
          if (!dprev_weights.empty()) dprev_weights[s] += g * p.conv(k, j);
        }
      }
    }
  }
}

void finish_memory_backward(const FrameAttentionParams& p, const AttentionMemory& mem,
                            MemoryGrad& mgrad, FrameAttentionParams& grad) {
  matmul_tn_acc(*mem.values, mgrad.dprojected, grad.V);
  mgrad.dvalues += matmul_nt(mgrad.dprojected, p.V);
  mgrad.dprojected.set_zero();
}

DecoderParams::DecoderParams(const DecoderDims& d)
    : dims(d), embed(static_cast<std::size_t>(d.base_vocab + 2), d.embed_dim),
      gru(d.embed_dim + d.context_dim, d.hidden),
      out(d.hidden + d.context_dim, static_cast<std::size_t>(d.base_vocab + 2)) {
  if (d.base_vocab < 2) throw ConfigError("decoder: vocabulary needs >= 2 labels");
}

void DecoderParams::init(Rng& rng, double scale) {
  init_uniform(embed, rng, scale);
  gru.init(rng, scale);
  out.init(rng, scale);
}

DecoderOutput decoder_step(const DecoderParams& p, const DecoderState& st, int prev_label,
                           std::span<const double> context, DecoderCache* cache) {
  if (!p.vocab().valid(prev_label)) {
    throw DataError("decoder_step: invalid label id " + std::to_string(prev_label));
  }
  if (context.size() != p.dims.context_dim) throw ShapeError("decoder_step: context dim mismatch");
  Vec input = concat(p.embed.row(static_cast<std::size_t>(prev_label)), context);
  DecoderOutput out;
  out.state.q = gru_cell_step(p.gru, st.q, input, cache ? &cache->gru : nullptr);
  out.state.prev_label = prev_label;
  Vec out_in = concat(out.state.q, context);
  out.logits = dense_forward(p.out, out_in);
  if (cache) {
    cache->prev_label = prev_label;
    cache->input = std::move(input);
    cache->out_input = std::move(out_in);
  }
  return out;
}

void decoder_step_backward(const DecoderParams& p, const DecoderCache& c,
                           std::span<const double> dlogits, std::span<const double> dq_new,
                           DecoderParams& grad, std::span<double> dstate_prev,
                           std::span<double> dcontext) {
  const std::size_t H = p.dims.hidden;
  const std::size_t E = p.dims.context_dim;
  const std::size_t M = p.dims.embed_dim;
  Vec dout_in(H + E, 0.0);
  dense_backward(p.out, c.out_input, dlogits, grad.out, dout_in);
  Vec dq(dq_new.begin(), dq_new.end());
  axpy(1.0, std::span<const double>(dout_in).first(H), dq);
  axpy(1.0, std::span<const double>(dout_in).subspan(H), dcontext);

  Vec dinput(M + E, 0.0);
  gru_cell_step_backward(p.gru, c.gru, c.input, dq, grad.gru, dstate_prev, dinput);
  axpy(1.0, std::span<const double>(dinput).first(M),
       grad.embed.row(static_cast<std::size_t>(c.prev_label)));
  axpy(1.0, std::span<const double>(dinput).subspan(M), dcontext);
}

std::pair<double, Vec> label_smoothing_loss_grad(std::span<const double> logits, int target,
                                                 double weight, std::span<const double> prior) {
  if (!(weight >= 0.0 && weight < 1.0)) {
    throw ConfigError("label smoothing weight must be in [0, 1)");
  }
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw DataError("label smoothing: target id out of range");
  }
  if (weight > 0.0 && prior.size() != logits.size()) {
    throw ShapeError("label smoothing: prior length mismatch");
  }
  const Vec lp = log_softmax(logits);
  Vec q(logits.size(), 0.0);
  q[static_cast<std::size_t>(target)] = 1.0 - weight;
  if (weight > 0.0) axpy(weight, prior, q);
  double mass = 0.0;
  double loss = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    mass += q[k];
    if (q[k] > 0.0) loss -= q[k] * lp[k];
  }
  Vec grad(logits.size());
  for (std::size_t k = 0; k < q.size(); ++k) grad[k] = mass * std::exp(lp[k]) - q[k];
  return {loss, std::move(grad)};
}

double label_smoothing_loss(std::span<const double> logits, int target, double weight,
                            std::span<const double> prior) {
  return label_smoothing_loss_grad(logits, target, weight, prior).first;
}

}  // namespace mema
