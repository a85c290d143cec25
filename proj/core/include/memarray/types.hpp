#pragma once

#include <string>
#include <vector>

#include "memarray/matrix.hpp"

namespace mema {

// T x D acoustic-like frames of one stream of one utterance.
struct FeatureSequence {
  Matrix frames;
  std::string stream_id;
  std::string utt_id;
};

// floor(T/s) x E encoder outputs of one stream.
struct UfeSequence {
  Matrix frames;
  std::string stream_id;
  std::string utt_id;
};

// Label ids over the base vocabulary; never contains sos, eos or blank.
struct Transcript {
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  friend bool operator==(const Transcript&, const Transcript&) = default;
};

struct StreamBundle {
  std::string utt_id;
  std::vector<FeatureSequence> streams;
  Transcript transcript;

  const FeatureSequence& stream(const std::string& id) const;
};

}  // namespace mema
