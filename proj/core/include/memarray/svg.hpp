#pragma once

#include <string>
#include <vector>

#include "memarray/matrix.hpp"

namespace mema {

// Grayscale ramp used by every heatmap: a weight v in [0, 1] is drawn as
// gray level round(255 * (1 - v)), so 0 is white and 1 is black. Values
// outside [0, 1] are clamped.
std::string gray_hex(double v);

// One cell per matrix entry, rows top to bottom. `desc` ends up in the
// <desc> element (provenance); row labels are optional.
std::string heatmap_svg(const Matrix& values, const std::string& title,
                        const std::vector<std::string>& row_labels, const std::string& x_label,
                        const std::string& desc);

struct AttentionSvgs {
  std::string beta;                 // streams x output steps
  std::vector<std::string> frames;  // per stream: output steps x frames
};

// beta_trace: one beta per output step. frame_trace: [stream][step] frame
// attention weights. Throws ShapeError on empty or ragged traces.
AttentionSvgs emit_attention_svg(const std::vector<std::vector<double>>& beta_trace,
                                 const std::vector<std::vector<std::vector<double>>>& frame_trace,
                                 const std::vector<std::string>& stream_ids,
                                 const std::string& desc);

}  // namespace mema
