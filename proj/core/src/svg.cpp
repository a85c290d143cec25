#include "memarray/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "memarray/errors.hpp"

namespace mema {

namespace {

constexpr int kCell = 12;
constexpr int kLeft = 70;
constexpr int kTop = 28;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string gray_hex(double v) {
  const double c = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  const int g = static_cast<int>(std::lround(255.0 * (1.0 - c)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", g, g, g);
  return buf;
}

std::string heatmap_svg(const Matrix& values, const std::string& title,
                        const std::vector<std::string>& row_labels, const std::string& x_label,
                        const std::string& desc) {
  if (values.rows() == 0 || values.cols() == 0) throw ShapeError("heatmap_svg: empty matrix");
  const auto w = static_cast<int>(kLeft + values.cols() * kCell + 10);
  const auto h = static_cast<int>(kTop + values.rows() * kCell + 24);
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
     << "<title>" << escape(title) << "</title>\n"
     << "<desc>" << escape(desc) << "</desc>\n"
     << "<text x=\"4\" y=\"16\" font-family=\"monospace\" font-size=\"11\">" << escape(title)
     << "</text>\n"
     << "<g shape-rendering=\"crispEdges\">\n";
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      os << "<rect x=\"" << kLeft + static_cast<int>(c) * kCell << "\" y=\""
         << kTop + static_cast<int>(r) * kCell << "\" width=\"" << kCell << "\" height=\"" << kCell
         << "\" fill=\"" << gray_hex(values(r, c)) << "\"/>\n";
    }
  }
  os << "</g>\n";
  for (std::size_t r = 0; r < values.rows() && r < row_labels.size(); ++r) {
    os << "<text x=\"4\" y=\"" << kTop + static_cast<int>(r) * kCell + kCell - 2
       << "\" font-family=\"monospace\" font-size=\"10\">" << escape(row_labels[r]) << "</text>\n";
  }
  os << "<text x=\"" << kLeft << "\" y=\"" << h - 8
     << "\" font-family=\"monospace\" font-size=\"10\">" << escape(x_label) << "</text>\n"
     << "</svg>\n";
  return os.str();
}

AttentionSvgs emit_attention_svg(const std::vector<std::vector<double>>& beta_trace,
                                 const std::vector<std::vector<std::vector<double>>>& frame_trace,
                                 const std::vector<std::string>& stream_ids,
                                 const std::string& desc) {
  if (beta_trace.empty()) throw ShapeError("emit_attention_svg: empty beta trace");
  const std::size_t n = beta_trace[0].size();
  if (n == 0 || stream_ids.size() != n || frame_trace.size() != n) {
    throw ShapeError("emit_attention_svg: stream count mismatch");
  }
  const std::size_t steps = beta_trace.size();
  AttentionSvgs out;
  Matrix beta(n, steps);
  for (std::size_t l = 0; l < steps; ++l) {
    if (beta_trace[l].size() != n) throw ShapeError("emit_attention_svg: ragged beta trace");
    for (std::size_t i = 0; i < n; ++i) beta(i, l) = beta_trace[l][i];
  }
  out.beta = heatmap_svg(beta, "stream attention (beta)", stream_ids, "output step", desc);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tr = frame_trace[i];
    if (tr.size() != steps || tr[0].empty()) {
      throw ShapeError("emit_attention_svg: frame trace of stream " + stream_ids[i] + " has the wrong shape");
    }
    Matrix a(steps, tr[0].size());
    std::vector<std::string> labels;
    for (std::size_t l = 0; l < steps; ++l) {
      if (tr[l].size() != a.cols()) throw ShapeError("emit_attention_svg: ragged frame trace");
      std::copy(tr[l].begin(), tr[l].end(), a.row(l).begin());
      labels.push_back("step " + std::to_string(l + 1));
    }
    out.frames.push_back(heatmap_svg(a, "frame attention, stream " + stream_ids[i], labels, "frame", desc));
  }
  return out;
}

}  // namespace mema
