#include "memarray/model.hpp"

#include <cmath>

#include "memarray/errors.hpp"

namespace mema {

Model Model::create(const ModelDims& dims, std::size_t streams, Rng& rng) {
  if (streams == 0) throw ConfigError("model: at least one stream");
  Model m;
  m.dims = dims;
  m.encoder = EncoderParams(dims.encoder());
  m.encoder.init(rng);
  FrameAttentionParams fa(dims.frame_attention());
  fa.init(rng);
  m.decoder = DecoderParams(dims.decoder());
  m.decoder.init(rng);
  CtcParams ctc(dims.ufe_dim, static_cast<std::size_t>(dims.vocab_size) + 1);
  ctc.init(rng);
  m.han = StreamAttentionParams(dims.han());
  m.han.init(rng);
  m.frame_attention.assign(streams, fa);
  m.ctc.assign(streams, ctc);
  const OutputVocab v = m.vocab();
  m.unigram.assign(static_cast<std::size_t>(v.size()), 0.0);
  for (int k = 0; k < v.size(); ++k) {
    if (k != v.sos()) m.unigram[static_cast<std::size_t>(k)] = 1.0 / (v.size() - 1);
  }
  return m;
}

Model Model::zeros_like() const {
  Model g = *this;
  g.frozen.clear();
  g.set_zero();
  return g;
}

std::vector<ParamGroup> Model::groups() {
  std::vector<ParamGroup> out;
  auto add = [&](std::string name, auto& params) {
    const bool f = is_frozen(name);
    out.push_back(make_group(std::move(name), params, f));
  };
  add("encoder", encoder);
  for (std::size_t i = 0; i < frame_attention.size(); ++i) {
    add("frame_attention." + std::to_string(i), frame_attention[i]);
  }
  add("decoder", decoder);
  for (std::size_t i = 0; i < ctc.size(); ++i) add("ctc." + std::to_string(i), ctc[i]);
  add("han", han);
  return out;
}

std::vector<std::string> Model::group_names() const {
  std::vector<std::string> names{"encoder"};
  for (std::size_t i = 0; i < frame_attention.size(); ++i) {
    names.push_back("frame_attention." + std::to_string(i));
  }
  names.push_back("decoder");
  for (std::size_t i = 0; i < ctc.size(); ++i) names.push_back("ctc." + std::to_string(i));
  names.push_back("han");
  return names;
}

Model Model::to_multistream(std::size_t streams) const {
  if (streams < 1) throw ConfigError("to_multistream: need at least one stream");
  Model m = *this;
  m.frame_attention.assign(streams, frame_attention.at(0));
  m.ctc.assign(streams, ctc.at(0));
  m.frozen.clear();
  for (const auto& g : m.group_names()) {
    if (g != "han") m.frozen.insert(g);
  }
  return m;
}

void Model::set_zero() {
  for (auto& g : groups()) {
    for (auto& t : g.tensors) t.value->set_zero();
  }
}

Model& Model::operator+=(const Model& o) {
  auto a = groups();
  auto b = const_cast<Model&>(o).groups();
  if (a.size() != b.size()) throw ShapeError("model +=: group count mismatch");
  for (std::size_t g = 0; g < a.size(); ++g) {
    for (std::size_t t = 0; t < a[g].tensors.size(); ++t) {
      *a[g].tensors[t].value += *b[g].tensors[t].value;
    }
  }
  return *this;
}

Model& Model::operator*=(double s) {
  for (auto& g : groups()) {
    for (auto& t : g.tensors) *t.value *= s;
  }
  return *this;
}

bool groups_identical(const Model& a, const Model& b, const std::string& group) {
  // groups() only hands out views; nothing is written here.
  auto ga = const_cast<Model&>(a).groups();
  auto gb = const_cast<Model&>(b).groups();
  for (std::size_t i = 0; i < ga.size(); ++i) {
    if (ga[i].name != group) continue;
    if (i >= gb.size() || gb[i].name != group) return false;
    for (std::size_t t = 0; t < ga[i].tensors.size(); ++t) {
      if (!(*ga[i].tensors[t].value == *gb[i].tensors[t].value)) return false;
    }
    return true;
  }
  throw ConfigError("unknown parameter group '" + group + "'");
}

Vec unigram_prior(const std::vector<Transcript>& transcripts, const OutputVocab& vocab) {
  Vec counts(static_cast<std::size_t>(vocab.size()), 0.0);
  double total = 0.0;
  for (const auto& t : transcripts) {
    for (int c : t.labels) {
      counts.at(static_cast<std::size_t>(c)) += 1.0;
      total += 1.0;
    }
    counts[static_cast<std::size_t>(vocab.eos())] += 1.0;
    total += 1.0;
  }
  if (total == 0.0) throw DataError("unigram_prior: no transcripts");
  for (auto& c : counts) c /= total;
  return counts;
}

namespace {

struct StepRecord {
  std::vector<FrameAttentionCache> att;
  std::vector<Vec> contexts;
  StreamAttentionCache han;
  DecoderCache dec;
  Vec dlogits;
};

}  // namespace

double attention_seq_loss(const Model& m, std::span<const Matrix* const> memories,
                          const Transcript& t, double smoothing, Model* grad,
                          std::vector<Matrix>* dmemories, double grad_scale) {
  if (t.empty()) throw DataError("attention_seq_loss: empty transcript");
  const std::size_t N = memories.size();
  if (N == 0 || N > m.frame_attention.size()) {
    throw ShapeError("attention_seq_loss: " + std::to_string(N) + " memories for a model with " +
                     std::to_string(m.frame_attention.size()) + " streams");
  }
  const OutputVocab vocab = m.vocab();
  for (int c : t.labels) {
    if (c < 0 || c >= vocab.base_size) throw DataError("attention_seq_loss: label out of range");
  }

  std::vector<AttentionMemory> mems;
  std::vector<FrameAttentionState> att_state;
  for (std::size_t i = 0; i < N; ++i) {
    mems.push_back(make_memory(m.frame_attention[i], *memories[i]));
    att_state.push_back(FrameAttentionState::initial(memories[i]->rows()));
  }

  const std::size_t steps = t.size() + 1;
  const double norm = 1.0 / static_cast<double>(steps);
  std::vector<StepRecord> rec(grad ? steps : 0);
  DecoderState dec = DecoderState::initial(m.decoder);
  double loss = 0.0;
  for (std::size_t l = 0; l < steps; ++l) {
    StepRecord* r = grad ? &rec[l] : nullptr;
    if (r) r->att.resize(N);
    std::vector<Vec> contexts(N);
    for (std::size_t i = 0; i < N; ++i) {
      auto out = frame_attention(m.frame_attention[i], dec.q, mems[i], att_state[i],
                                 r ? &r->att[i] : nullptr);
      contexts[i] = std::move(out.context);
      att_state[i] = std::move(out.state);
    }
    const StreamWeights beta = stream_attention(m.han, dec.q, contexts, r ? &r->han : nullptr);
    const Vec fused = fuse_contexts(beta, contexts);
    const int input = l == 0 ? vocab.sos() : t.labels[l - 1];
    const int target = l < t.size() ? t.labels[l] : vocab.eos();
    auto out = decoder_step(m.decoder, dec, input, fused, r ? &r->dec : nullptr);
    auto [step_loss, dlogits] = label_smoothing_loss_grad(out.logits, target, smoothing, m.unigram);
    loss += step_loss * norm;
    if (r) {
      r->contexts = std::move(contexts);
      r->dlogits = std::move(dlogits);
    }
    dec = std::move(out.state);
  }
  if (!grad) return loss;

  const std::size_t H = m.dims.dec_hidden;
  const std::size_t E = m.dims.ufe_dim;
  std::vector<MemoryGrad> mgrads;
  std::vector<Vec> dweights(N);
  for (std::size_t i = 0; i < N; ++i) {
    mgrads.push_back(make_memory_grad(mems[i], m.frame_attention[i].dims.att_dim));
  }
  Vec dq(H, 0.0);
  for (std::size_t l = steps; l-- > 0;) {
    StepRecord& r = rec[l];
    for (auto& g : r.dlogits) g *= norm * grad_scale;
    Vec dq_prev(H, 0.0);
    Vec dfused(E, 0.0);
    decoder_step_backward(m.decoder, r.dec, r.dlogits, dq, grad->decoder, dq_prev, dfused);

    Vec dbeta(N);
    std::vector<Vec> dctx(N, Vec(E, 0.0));
    for (std::size_t i = 0; i < N; ++i) {
      dbeta[i] = dot(dfused, r.contexts[i]);
      axpy(r.han.beta[i], dfused, dctx[i]);
    }
    stream_attention_backward(m.han, r.contexts, r.han, dbeta, grad->han, dq_prev, dctx);

    for (std::size_t i = 0; i < N; ++i) {
      Vec dprev(mems[i].frames(), 0.0);
      frame_attention_backward(m.frame_attention[i], mems[i], r.att[i], dctx[i], dweights[i],
                               grad->frame_attention[i], dq_prev, mgrads[i], dprev);
      dweights[i] = std::move(dprev);
    }
    dq = std::move(dq_prev);
  }
  if (dmemories) dmemories->clear();
  for (std::size_t i = 0; i < N; ++i) {
    finish_memory_backward(m.frame_attention[i], mems[i], mgrads[i], grad->frame_attention[i]);
    if (dmemories) dmemories->push_back(std::move(mgrads[i].dvalues));
  }
  return loss;
}

namespace {

// CTC loss of one stream; accumulates scaled gradients into the projection
// and into dmemory when requested.
double ctc_term(const CtcParams& p, const Matrix& h, const Transcript& t, double scale,
                CtcParams* grad, Matrix* dmemory) {
  const Matrix scores = dense_forward(p, h);
  const CtcLattice lat = make_lattice(scores);
  if (!grad) return ctc_forward_loss(lat, t);
  auto [loss, dscores] = ctc_loss_grad(lat, t);
  dscores *= scale;
  Matrix dh = dense_backward(p, h, dscores, *grad);
  if (dmemory) *dmemory += dh;
  return loss;
}

void check_finite(const JointLoss& l) {
  if (!std::isfinite(l.total)) {
    throw NumericError("non-finite loss (ctc " + std::to_string(l.ctc) + ", att " +
                       std::to_string(l.att) + ")");
  }
}

}  // namespace

JointLoss stage1_loss(const Model& m, const Matrix& features, const Transcript& t,
                      const LossWeights& w, Model* grad) {
  EncoderCache cache;
  const Matrix h = encode(m.encoder, features, grad ? &cache : nullptr);
  const bool ctc_grad = grad && w.ctc > 0.0;
  const bool att_grad = grad && w.ctc < 1.0;
  JointLoss out;
  Matrix dh(h.rows(), h.cols());
  out.ctc = ctc_term(m.ctc[0], h, t, w.ctc, ctc_grad ? &grad->ctc[0] : nullptr, &dh);
  std::vector<Matrix> dmem;
  const Matrix* mem[] = {&h};
  out.att = attention_seq_loss(m, mem, t, w.smoothing, att_grad ? grad : nullptr,
                               att_grad ? &dmem : nullptr, 1.0 - w.ctc);
  out.total = w.ctc * out.ctc + (1.0 - w.ctc) * out.att;
  check_finite(out);
  if (grad) {
    if (att_grad) dh += dmem[0];
    encode_backward(m.encoder, cache, dh, grad->encoder);
  }
  return out;
}

JointLoss stage2_loss(const Model& m, const std::vector<Matrix>& ufe, const Transcript& t,
                      const LossWeights& w, Model* grad) {
  const std::size_t N = ufe.size();
  if (N == 0 || N > m.num_streams()) {
    throw ShapeError("stage2_loss: " + std::to_string(N) + " streams for a model with " +
                     std::to_string(m.num_streams()));
  }
  const bool ctc_grad = grad && w.ctc > 0.0;
  const bool att_grad = grad && w.ctc < 1.0;
  JointLoss out;
  const double share = 1.0 / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    out.ctc += share * ctc_term(m.ctc[i], ufe[i], t, w.ctc * share,
                                ctc_grad ? &grad->ctc[i] : nullptr, nullptr);
  }
  std::vector<const Matrix*> mem;
  for (const auto& h : ufe) mem.push_back(&h);
  out.att = attention_seq_loss(m, mem, t, w.smoothing, att_grad ? grad : nullptr, nullptr,
                               1.0 - w.ctc);
  out.total = w.ctc * out.ctc + (1.0 - w.ctc) * out.att;
  check_finite(out);
  return out;
}

}  // namespace mema
