#include "memarray/beam_search.hpp"

#include <algorithm>
#include <cmath>

#include "memarray/errors.hpp"

namespace mema {

void DecodeConfig::validate(std::size_t streams) const {
  if (beam < 1) throw ConfigError("decode: beam must be >= 1");
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) {
    throw ConfigError("decode: ctc_weight must be in [0, 1]");
  }
  if (max_output_len < 0 || nbest < 0) throw ConfigError("decode: negative length limits");
  if (fusion == FusionMode::kFixed) {
    if (fixed_weights.size() != streams) {
      throw ConfigError("decode: fixed weights need one entry per stream (" +
                        std::to_string(streams) + ")");
    }
    double sum = 0.0;
    for (double w : fixed_weights) {
      if (w < 0.0) throw ConfigError("decode: fixed weights must be >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("decode: fixed weights must sum to 1");
  }
}

namespace {

struct Context {
  const Model& model;
  const DecodeConfig& cfg;
  std::vector<AttentionMemory> mems;
  std::vector<CtcLattice> lattices;
  OutputVocab vocab;
};

Context make_context(const Model& m, const std::vector<Matrix>& ufe, const DecodeConfig& cfg) {
  if (ufe.empty() || ufe.size() > m.num_streams()) {
    throw ShapeError("beam_search: " + std::to_string(ufe.size()) +
                     " streams for a model with " + std::to_string(m.num_streams()));
  }
  cfg.validate(ufe.size());
  Context ctx{m, cfg, {}, {}, m.vocab()};
  for (std::size_t i = 0; i < ufe.size(); ++i) {
    ctx.mems.push_back(make_memory(m.frame_attention[i], ufe[i]));
    ctx.lattices.push_back(ctc_project(m.ctc[i], ufe[i]));
  }
  return ctx;
}

Hypothesis initial_hypothesis(const Context& ctx) {
  Hypothesis h;
  h.dec = DecoderState::initial(ctx.model.decoder);
  for (std::size_t i = 0; i < ctx.mems.size(); ++i) {
    h.ctc_state.push_back(ctc_prefix_init(ctx.lattices[i]));
    h.ctc_streams.push_back(0.0);
    h.att_state.push_back(FrameAttentionState::initial(ctx.mems[i].frames()));
  }
  h.frame_trace.resize(ctx.mems.size());
  return h;
}

// Everything one decoder step of a hypothesis produces, before a label is
// chosen.
struct Step {
  std::vector<FrameAttentionState> att_state;
  StreamWeights beta;
  DecoderState dec;
  Vec logp;
};

Step advance(const Context& ctx, const Hypothesis& h) {
  const std::size_t N = ctx.mems.size();
  Step s;
  std::vector<Vec> contexts(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto out = frame_attention(ctx.model.frame_attention[i], h.dec.q, ctx.mems[i], h.att_state[i]);
    contexts[i] = std::move(out.context);
    s.att_state.push_back(std::move(out.state));
  }
  s.beta = stream_attention(ctx.model.han, h.dec.q, contexts);
  const Vec fused = fuse_contexts(s.beta, contexts);
  const int prev = h.prefix.empty() ? ctx.vocab.sos() : h.prefix.back();
  auto out = decoder_step(ctx.model.decoder, h.dec, prev, fused);
  s.dec = std::move(out.state);
  s.logp = log_softmax(out.logits);
  return s;
}

double fuse_ctc(const Context& ctx, const StreamWeights& beta, std::span<const double> alphas) {
  switch (ctx.cfg.fusion) {
    case FusionMode::kEqual: return ctc_score_equal(alphas);
    case FusionMode::kAdaptive: return ctc_score_adaptive(beta, alphas);
    case FusionMode::kFixed: return ctc_score_adaptive({ctx.cfg.fixed_weights}, alphas);
  }
  return kNegInf;
}

struct Candidate {
  std::size_t parent;
  int label;  // eos for termination
  double att;
  double ctc;
  double joint;
  std::vector<double> alphas;
  std::vector<CtcPrefixState> states;  // empty for eos
};

Candidate make_candidate(const Context& ctx, const Hypothesis& h, const Step& s,
                         std::size_t parent, int label) {
  const std::size_t N = ctx.mems.size();
  Candidate c{parent, label, h.att + s.logp[static_cast<std::size_t>(label)], 0.0, 0.0, {}, {}};
  c.alphas.resize(N);
  if (label == ctx.vocab.eos()) {
    for (std::size_t i = 0; i < N; ++i) c.alphas[i] = ctc_prefix_end(h.ctc_state[i]);
  } else {
    for (std::size_t i = 0; i < N; ++i) {
      c.states.push_back(ctc_prefix_extend(h.ctc_state[i], ctx.lattices[i], label));
      c.alphas[i] = c.states.back().score;
    }
  }
  c.ctc = fuse_ctc(ctx, s.beta, c.alphas);
  const double lambda = ctx.cfg.ctc_weight;
  // A zero weight must not turn a -inf score into NaN.
  const double att_part = lambda < 1.0 ? (1.0 - lambda) * c.att : 0.0;
  const double ctc_part = lambda > 0.0 ? lambda * c.ctc : 0.0;
  c.joint = att_part + ctc_part;
  return c;
}

Hypothesis materialize(const Context& ctx, const Hypothesis& parent, const Step& s,
                       Candidate&& c) {
  Hypothesis h;
  h.prefix = parent.prefix;
  h.att = c.att;
  h.ctc = c.ctc;
  h.joint = c.joint;
  h.ctc_streams = std::move(c.alphas);
  h.last_beta = s.beta;
  h.beta_trace = parent.beta_trace;
  h.beta_trace.push_back(s.beta.beta);
  if (ctx.cfg.record_frame_weights) {
    h.frame_trace = parent.frame_trace;
    for (std::size_t i = 0; i < s.att_state.size(); ++i) {
      h.frame_trace[i].push_back(s.att_state[i].prev_weights);
    }
  } else {
    h.frame_trace.resize(parent.frame_trace.size());
  }
  if (c.label == ctx.vocab.eos()) {
    h.finished = true;
    h.ctc_state = parent.ctc_state;
    h.att_state = s.att_state;
    h.dec = s.dec;
  } else {
    h.prefix.push_back(c.label);
    h.ctc_state = std::move(c.states);
    h.att_state = s.att_state;
    h.dec = s.dec;
    h.dec.prev_label = c.label;
  }
  return h;
}

// Higher joint first; ties go to the lexicographically smaller sequence.
bool better(double ja, const std::vector<int>& a, int la, double jb,
            const std::vector<int>& b, int lb) {
  if (ja != jb) return ja > jb;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  if (a.size() != b.size()) {
    // Compare the next element: the shorter prefix continues with its own label.
    const int na = a.size() > n ? a[n] : la;
    const int nb = b.size() > n ? b[n] : lb;
    if (na != nb) return na < nb;
    return a.size() < b.size();
  }
  return la < lb;
}

bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.joint != b.joint) return a.joint > b.joint;
  return std::lexicographical_compare(a.prefix.begin(), a.prefix.end(), b.prefix.begin(),
                                      b.prefix.end());
}

int resolve_max_len(const Context& ctx) {
  if (ctx.cfg.max_output_len > 0) return ctx.cfg.max_output_len;
  std::size_t shortest = ctx.mems[0].frames();
  for (const auto& m : ctx.mems) shortest = std::min(shortest, m.frames());
  return static_cast<int>(2 * shortest);
}

}  // namespace

DecodeResult beam_search(const Model& m, const std::vector<Matrix>& ufe,
                         const DecodeConfig& cfg) {
  const Context ctx = make_context(m, ufe, cfg);
  const int max_len = resolve_max_len(ctx);
  const int eos = ctx.vocab.eos();

  std::vector<Hypothesis> live{initial_hypothesis(ctx)};
  std::vector<Hypothesis> finished;
  double conservation = 0.0;
  std::size_t conservation_checks = 0;
  for (int step = 1; step <= max_len && !live.empty(); ++step) {
    const bool last = step == max_len;
    std::vector<Step> steps;
    steps.reserve(live.size());
    std::vector<Candidate> cands;
    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      steps.push_back(advance(ctx, live[hi]));
      const Step& s = steps.back();
      Candidate end = make_candidate(ctx, live[hi], s, hi, eos);
      if (std::isfinite(end.joint)) {
        finished.push_back(materialize(ctx, live[hi], s, std::move(end)));
      }
      if (last) continue;
      const bool check = cfg.check_ctc_conservation;
      std::vector<std::vector<double>> mass(check ? ctx.mems.size() : 0);
      for (std::size_t i = 0; i < mass.size(); ++i) mass[i].push_back(ctc_prefix_end(live[hi].ctc_state[i]));
      for (int c = 0; c < ctx.vocab.base_size; ++c) {
        Candidate cand = make_candidate(ctx, live[hi], s, hi, c);
        for (std::size_t i = 0; i < mass.size(); ++i) mass[i].push_back(cand.alphas[i]);
        if (cand.joint == kNegInf || std::isnan(cand.joint)) continue;
        cands.push_back(std::move(cand));
      }
      // Prefix mass splits exactly into "ends here" and its one-label extensions.
      for (std::size_t i = 0; i < mass.size(); ++i) {
        const double whole = live[hi].ctc_state[i].score;
        if (whole == kNegInf) continue;
        const double rel = std::abs(std::expm1(log_sum_exp(mass[i]) - whole));
        conservation = std::max(conservation, rel);
        ++conservation_checks;
      }
    }
    auto order = [&](const Candidate& a, const Candidate& b) {
      return better(a.joint, live[a.parent].prefix, a.label, b.joint, live[b.parent].prefix,
                    b.label);
    };
    const std::size_t keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(cfg.beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), order);
    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const std::size_t p = cands[k].parent;
      next.push_back(materialize(ctx, live[p], steps[p], std::move(cands[k])));
    }
    live = std::move(next);
  }

  DecodeResult res;
  res.ctc_conservation_error = conservation;
  res.ctc_conservation_checks = conservation_checks;
  const std::size_t nbest = static_cast<std::size_t>(cfg.nbest > 0 ? cfg.nbest : cfg.beam);
  if (finished.empty()) {
    res.finished = false;
    std::sort(live.begin(), live.end(), hyp_better);
    if (!live.empty()) res.nbest.push_back(std::move(live.front()));
    return res;
  }
  std::sort(finished.begin(), finished.end(), hyp_better);
  if (finished.size() > nbest) finished.resize(nbest);
  res.nbest = std::move(finished);
  return res;
}

Hypothesis score_sequence(const Model& m, const std::vector<Matrix>& ufe,
                          const std::vector<int>& labels, const DecodeConfig& cfg) {
  const Context ctx = make_context(m, ufe, cfg);
  Hypothesis h = initial_hypothesis(ctx);
  for (std::size_t l = 0; l <= labels.size(); ++l) {
    const Step s = advance(ctx, h);
    const int label = l < labels.size() ? labels[l] : ctx.vocab.eos();
    if (label < 0 || label >= ctx.vocab.base_size + (l == labels.size() ? 2 : 0)) {
      throw DataError("score_sequence: label out of range");
    }
    Candidate c = make_candidate(ctx, h, s, 0, label);
    h = materialize(ctx, h, s, std::move(c));
  }
  return h;
}

}  // namespace mema
