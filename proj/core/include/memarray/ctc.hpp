#pragma once

#include <utility>

#include "memarray/numcore.hpp"
#include "memarray/types.hpp"

namespace mema {

// Column 0 of every CTC distribution is blank; base label c lives in column
// c + 1. sos/eos never appear here.
inline constexpr int kBlank = 0;
inline int ctc_index(int label) { return label + 1; }

// Linear projection E -> |U|+1 followed by a row-wise log-softmax.
using CtcParams = DenseParams;

struct CtcLattice {
  Matrix logprobs;  // T' x (|U|+1), rows are log-simplices

  std::size_t frames() const { return logprobs.rows(); }
  std::size_t classes() const { return logprobs.cols(); }
  double at(std::size_t t, int k) const { return logprobs(t, static_cast<std::size_t>(k)); }
};

CtcLattice ctc_project(const CtcParams& p, const Matrix& h);
CtcLattice ctc_project(const CtcParams& p, const UfeSequence& h);
// Row-wise log-softmax of arbitrary scores.
CtcLattice make_lattice(const Matrix& scores);

// Minimum frames needed to emit `labels`: L plus one blank per adjacent repeat.
std::size_t ctc_min_frames(const Transcript& labels);

// -log p(labels | lattice) by the blank-interleaved forward recursion.
// Throws UnrealizableError when T' < ctc_min_frames; returns +inf when the
// labeling is realizable but has zero probability.
double ctc_forward_loss(const CtcLattice& lat, const Transcript& labels);

// Loss together with its gradient w.r.t. the pre-softmax scores that
// produced the lattice (softmax(scores) - state occupancy).
std::pair<double, Matrix> ctc_loss_grad(const CtcLattice& lat, const Transcript& labels);

// Exhaustive path enumeration; requires (|U|+1)^T' <= 1e6.
double ctc_brute_force(const CtcLattice& lat, const Transcript& labels);

// Collapses a frame-level path: merge repeats, then drop blanks. Returns
// base label ids.
std::vector<int> ctc_collapse(std::span<const int> path);

// Prefix probabilities for the current label prefix g:
//   gamma_n[t] = log p(frames 0..t emit g, frame t non-blank)
//   gamma_b[t] = log p(frames 0..t emit g, frame t blank)
struct CtcPrefixState {
  Vec gamma_n;
  Vec gamma_b;
  int last = -1;  // last base label of g, -1 for the empty prefix
  double score = 0.0;  // alpha(g), log prob of all labelings starting with g

  friend bool operator==(const CtcPrefixState&, const CtcPrefixState&) = default;
};

CtcPrefixState ctc_prefix_init(const CtcLattice& lat);

// log p(labeling is exactly g).
double ctc_prefix_end(const CtcPrefixState& st);

// Extends g by base label c; the returned state's score is alpha(g.c).
CtcPrefixState ctc_prefix_extend(const CtcPrefixState& st, const CtcLattice& lat, int c);

}  // namespace mema
