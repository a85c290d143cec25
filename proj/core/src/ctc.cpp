#include "memarray/ctc.hpp"

#include <cmath>

#include "memarray/errors.hpp"

namespace mema {

CtcLattice make_lattice(const Matrix& scores) {
  CtcLattice lat{Matrix(scores.rows(), scores.cols())};
  for (std::size_t t = 0; t < scores.rows(); ++t) {
    Vec row = log_softmax(scores.row(t));
    std::copy(row.begin(), row.end(), lat.logprobs.row(t).begin());
  }
  return lat;
}

CtcLattice ctc_project(const CtcParams& p, const Matrix& h) {
  return make_lattice(dense_forward(p, h));
}

CtcLattice ctc_project(const CtcParams& p, const UfeSequence& h) {
  return ctc_project(p, h.frames);
}

std::size_t ctc_min_frames(const Transcript& labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels.labels[i] == labels.labels[i - 1]) ++n;
  }
  return n;
}

namespace {

void check_labels(const CtcLattice& lat, const Transcript& labels) {
  if (labels.empty()) throw DataError("ctc: empty transcript");
  for (int c : labels.labels) {
    if (c < 0 || ctc_index(c) >= static_cast<int>(lat.classes())) {
      throw DataError("ctc: label id " + std::to_string(c) + " outside vocabulary");
    }
  }
  const std::size_t need = ctc_min_frames(labels);
  if (lat.frames() < need) {
    throw UnrealizableError("ctc: " + std::to_string(labels.size()) + " labels need " +
                            std::to_string(need) + " frames, lattice has " +
                            std::to_string(lat.frames()));
  }
}

// Blank-interleaved label sequence: b l1 b l2 ... lL b (CTC column ids).
std::vector<int> extended(const Transcript& labels) {
  std::vector<int> ext;
  ext.reserve(2 * labels.size() + 1);
  ext.push_back(kBlank);
  for (int c : labels.labels) {
    ext.push_back(ctc_index(c));
    ext.push_back(kBlank);
  }
  return ext;
}

bool can_skip(const std::vector<int>& ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
}

Matrix forward_table(const CtcLattice& lat, const std::vector<int>& ext) {
  const std::size_t T = lat.frames();
  const std::size_t S = ext.size();
  Matrix alpha(T, S, kNegInf);
  alpha(0, 0) = lat.at(0, ext[0]);
  if (S > 1) alpha(0, 1) = lat.at(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(ext, s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + lat.at(t, ext[s]);
    }
  }
  return alpha;
}

Matrix backward_table(const CtcLattice& lat, const std::vector<int>& ext) {
  const std::size_t T = lat.frames();
  const std::size_t S = ext.size();
  Matrix beta(T, S, kNegInf);
  beta(T - 1, S - 1) = lat.at(T - 1, ext[S - 1]);
  beta(T - 1, S - 2) = lat.at(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < S && can_skip(ext, s + 2)) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == kNegInf ? kNegInf : b + lat.at(t, ext[s]);
    }
  }
  return beta;
}

double total_logprob(const Matrix& alpha) {
  const std::size_t T = alpha.rows();
  const std::size_t S = alpha.cols();
  return log_add(alpha(T - 1, S - 1), alpha(T - 1, S - 2));
}

}  // namespace

double ctc_forward_loss(const CtcLattice& lat, const Transcript& labels) {
  check_labels(lat, labels);
  const double lp = total_logprob(forward_table(lat, extended(labels)));
  if (std::isnan(lp)) throw NumericError("ctc_forward_loss: NaN");
  return -lp;
}

std::pair<double, Matrix> ctc_loss_grad(const CtcLattice& lat, const Transcript& labels) {
  check_labels(lat, labels);
  const auto ext = extended(labels);
  const Matrix alpha = forward_table(lat, ext);
  const Matrix beta = backward_table(lat, ext);
  const double lp = total_logprob(alpha);
  if (!std::isfinite(lp)) {
    throw NumericError("ctc_loss_grad: labeling has zero probability");
  }
  const std::size_t T = lat.frames();
  const std::size_t K = lat.classes();
  Matrix grad(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    Vec occ(K, kNegInf);
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const double a = alpha(t, s);
      const double b = beta(t, s);
      if (a == kNegInf || b == kNegInf) continue;
      const auto k = static_cast<std::size_t>(ext[s]);
      occ[k] = log_add(occ[k], a + b - lat.at(t, ext[s]));
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double post = occ[k] == kNegInf ? 0.0 : std::exp(occ[k] - lp);
      grad(t, k) = std::exp(lat.logprobs(t, k)) - post;
    }
  }
  return {-lp, std::move(grad)};
}

std::vector<int> ctc_collapse(std::span<const int> path) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != kBlank) out.push_back(k - 1);
    prev = k;
  }
  return out;
}

double ctc_brute_force(const CtcLattice& lat, const Transcript& labels) {
  const std::size_t T = lat.frames();
  const std::size_t K = lat.classes();
  double count = 1.0;
  for (std::size_t t = 0; t < T; ++t) count *= static_cast<double>(K);
  if (count > 1e6) throw ConfigError("ctc_brute_force: instance too large");
  std::vector<int> path(T, 0);
  double total = kNegInf;
  const auto n = static_cast<std::size_t>(count);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t rem = idx;
    double lp = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % K);
      rem /= K;
      lp += lat.at(t, path[t]);
    }
    if (lp == kNegInf) continue;
    if (ctc_collapse(path) == labels.labels) total = log_add(total, lp);
  }
  return -total;
}

CtcPrefixState ctc_prefix_init(const CtcLattice& lat) {
  const std::size_t T = lat.frames();
  if (T == 0) throw ShapeError("ctc_prefix_init: empty lattice");
  CtcPrefixState st;
  st.gamma_n.assign(T, kNegInf);
  st.gamma_b.assign(T, kNegInf);
  double acc = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    acc += lat.at(t, kBlank);
    st.gamma_b[t] = acc;
  }
  st.last = -1;
  st.score = 0.0;
  return st;
}

double ctc_prefix_end(const CtcPrefixState& st) {
  return log_add(st.gamma_n.back(), st.gamma_b.back());
}

CtcPrefixState ctc_prefix_extend(const CtcPrefixState& st, const CtcLattice& lat, int c) {
  if (c < 0 || ctc_index(c) >= static_cast<int>(lat.classes())) {
    throw DataError("ctc_prefix_extend: label id " + std::to_string(c) + " outside vocabulary");
  }
  const std::size_t T = lat.frames();
  if (st.gamma_n.size() != T) throw ShapeError("ctc_prefix_extend: state/lattice length mismatch");
  const int k = ctc_index(c);
  CtcPrefixState out;
  out.gamma_n.assign(T, kNegInf);
  out.gamma_b.assign(T, kNegInf);
  out.last = c;
  out.gamma_n[0] = st.last < 0 ? lat.at(0, k) : kNegInf;
  double psi = out.gamma_n[0];
  for (std::size_t t = 1; t < T; ++t) {
    // Probability mass that has emitted exactly g by frame t-1 and may
    // start c at frame t. A repeated label must be separated by a blank.
    const double phi =
        log_add(st.gamma_b[t - 1], st.last == c ? kNegInf : st.gamma_n[t - 1]);
    out.gamma_n[t] = log_add(out.gamma_n[t - 1], phi) + lat.at(t, k);
    out.gamma_b[t] = log_add(out.gamma_b[t - 1], out.gamma_n[t - 1]) + lat.at(t, kBlank);
    psi = log_add(psi, phi + lat.at(t, k));
  }
  out.score = psi;
  return out;
}

}  // namespace mema
