#include "memarray/metrics.hpp"

#include <algorithm>

#include "memarray/errors.hpp"

namespace mema {

double ErrorBreakdown::rate() const {
  if (ref_len == 0) throw DataError("error rate of an empty reference");
  return static_cast<double>(errors()) / static_cast<double>(ref_len);
}

ErrorBreakdown edit_distance_align(const Transcript& ref, const Transcript& hyp) {
  if (ref.empty()) throw DataError("edit_distance_align: empty reference");
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref.labels[i - 1] == hyp.labels[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  ErrorBreakdown e;
  e.ref_len = n;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = ref.labels[i - 1] == hyp.labels[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++e.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

ErrorBreakdown sum(std::span<const ErrorBreakdown> results) {
  ErrorBreakdown s;
  for (const auto& r : results) {
    s.substitutions += r.substitutions;
    s.deletions += r.deletions;
    s.insertions += r.insertions;
    s.ref_len += r.ref_len;
  }
  return s;
}

double aggregate(std::span<const ErrorBreakdown> results) {
  if (results.empty()) throw DataError("aggregate: no results");
  return sum(results).rate();
}

double improved_fraction(std::span<const double> multi, std::span<const double> best_single) {
  if (multi.size() != best_single.size()) {
    throw ShapeError("improved_fraction: " + std::to_string(multi.size()) + " vs " +
                     std::to_string(best_single.size()) + " utterances");
  }
  if (multi.empty()) throw DataError("improved_fraction: no utterances");
  std::size_t k = 0;
  for (std::size_t i = 0; i < multi.size(); ++i) k += multi[i] <= best_single[i] ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(multi.size());
}

std::string format_labels(const Transcript& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(t.labels[i]);
  }
  return s;
}

}  // namespace mema
