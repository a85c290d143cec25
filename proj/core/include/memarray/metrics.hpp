#pragma once

#include <span>
#include <string>
#include <vector>

#include "memarray/types.hpp"

namespace mema {

struct ErrorBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  // (S + D + I) / ref_len; exceeds 1 when insertions dominate.
  double rate() const;
  friend bool operator==(const ErrorBreakdown&, const ErrorBreakdown&) = default;
};

// Minimal-cost Levenshtein alignment. Among minimal alignments the
// backtrace prefers substitution (or match), then deletion, then insertion.
ErrorBreakdown edit_distance_align(const Transcript& ref, const Transcript& hyp);

// Pooled rate (sum of errors over sum of reference lengths).
double aggregate(std::span<const ErrorBreakdown> results);
ErrorBreakdown sum(std::span<const ErrorBreakdown> results);

// Fraction of utterances whose multi-stream rate is at most the best
// single-stream rate.
double improved_fraction(std::span<const double> multi, std::span<const double> best_single);

std::string format_labels(const Transcript& t);

}  // namespace mema
