// Copyright 2026 The bang Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bang/masking.hpp"

#include <sstream>
#include <stdexcept>

namespace bang {

StreamLayout::StreamLayout(int target_len, int n_streams)
    : target_len_(target_len), n_streams_(n_streams) {
  if (target_len < 1) throw std::invalid_argument("stream layout: target_len must be positive");
  if (n_streams < 1) throw std::invalid_argument("stream layout: n_streams must be positive");
  if (n_streams > target_len) throw std::invalid_argument("stream layout: n_streams exceeds target_len");
}

int StreamLayout::row_index(int stream, int pos) const {
  if (!in_range(stream, pos)) throw std::out_of_range("stream layout: cell out of range");
  return stream * target_len_ + (pos - 1);
}

Cell StreamLayout::cell(int row) const {
  if (row < 0 || row >= rows()) throw std::out_of_range("stream layout: row out of range");
  return Cell{row / target_len_, row % target_len_ + 1};
}

bool StreamLayout::in_range(int stream, int pos) const {
  return stream >= 0 && stream <= n_streams_ && pos >= 1 && pos <= target_len_;
}

bool StreamLayout::valid(int stream, int pos) const {
  return in_range(stream, pos) && (stream == 0 || pos >= stream);
}

bool StreamLayout::valid_row(int row) const {
  const Cell c = cell(row);
  return valid(c.stream, c.pos);
}

int StreamLayout::valid_predicting_cells() const {
  int count = 0;
  for (int t = 1; t <= target_len_; ++t) count += std::min(t, n_streams_);
  return count;
}

std::vector<Cell> visible_set(const StreamLayout& layout, int stream, int pos) {
  if (!layout.valid(stream, pos)) throw std::invalid_argument("invalid stream cell");
  std::vector<Cell> out;
  if (stream == 0) {
    for (int u = 1; u <= pos; ++u) out.push_back({0, u});
    return out;
  }
  const int golden = pos - stream;
  for (int u = 1; u <= golden; ++u) out.push_back({0, u});
  // The j-th previous [MASK] comes from predicting stream j at position golden + j.
  for (int j = 1; j < stream; ++j) out.push_back({j, golden + j});
  out.push_back({stream, pos});
  return out;
}

int VisibilityMask::visible_count() const {
  int count = 0;
  for (Eigen::Index q = 0; q < bias.rows(); ++q) {
    if (!valid[q]) continue;
    for (Eigen::Index k = 0; k < bias.cols(); ++k) count += bias(q, k) == Real(0);
  }
  return count;
}

VisibilityMask build_mask(const StreamLayout& layout) {
  const int rows = layout.rows();
  const int T = layout.target_len();
  VisibilityMask mask;
  mask.bias = Mat::Constant(rows, rows, kMaskedScore);
  mask.valid = validity_mask(layout);

  for (int q = 0; q < rows; ++q) {
    const int s = q / T;
    const int t = q % T + 1;
    auto row = mask.bias.row(q);
    if (!mask.valid[q]) {
      row(q) = 0;
      continue;
    }
    // Golden prefix from the main stream occupies the first columns.
    const int golden = s == 0 ? t : t - s;
    row.head(golden).setZero();
    for (int j = 1; j < s; ++j) row(j * T + golden + j - 1) = 0;
    row(q) = 0;
  }
  return mask;
}

std::vector<bool> validity_mask(const StreamLayout& layout) {
  std::vector<bool> valid(layout.rows());
  for (int r = 0; r < layout.rows(); ++r) valid[r] = layout.valid_row(r);
  return valid;
}

namespace {

void check_render_size(const StreamLayout& layout) {
  if (layout.rows() > kRenderCellCap) throw std::invalid_argument("render_mask: size cap exceeded");
}

char grid_char(const VisibilityMask& mask, int q, int k) {
  if (!mask.valid[q] || !mask.valid[k]) return 'x';
  return mask.visible(q, k) ? '#' : '.';
}

}  // namespace

std::string render_mask_text(const StreamLayout& layout) {
  check_render_size(layout);
  const VisibilityMask mask = build_mask(layout);
  const int rows = layout.rows();
  std::string out;
  out.reserve(static_cast<size_t>(rows) * (rows + 1));
  for (int q = 0; q < rows; ++q) {
    for (int k = 0; k < rows; ++k) out.push_back(grid_char(mask, q, k));
    out.push_back('\n');
  }
  return out;
}

std::string render_mask_svg(const StreamLayout& layout) {
  check_render_size(layout);
  const VisibilityMask mask = build_mask(layout);
  const int rows = layout.rows();
  constexpr int kCell = 12;
  constexpr int kMargin = 4;
  const int side = rows * kCell + 2 * kMargin;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << side << "\" height=\"" << side
      << "\" viewBox=\"0 0 " << side << ' ' << side << "\">\n"
      << "<title>stream visibility T=" << layout.target_len() << " n=" << layout.n_streams() << "</title>\n"
      << "<defs><pattern id=\"hatch\" width=\"4\" height=\"4\" patternUnits=\"userSpaceOnUse\">"
      << "<path d=\"M0,4 L4,0\" stroke=\"#888888\" stroke-width=\"1\"/></pattern></defs>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << side << "\" height=\"" << side << "\" fill=\"#ffffff\"/>\n";
  for (int q = 0; q < rows; ++q) {
    for (int k = 0; k < rows; ++k) {
      const char c = grid_char(mask, q, k);
      const char* fill = c == '#' ? "#1f4e9c" : (c == 'x' ? "url(#hatch)" : "#ffffff");
      svg << "<rect x=\"" << kMargin + k * kCell << "\" y=\"" << kMargin + q * kCell << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"" << fill << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
    }
  }
  // Stream boundaries.
  for (int s = 1; s <= layout.n_streams(); ++s) {
    const int at = kMargin + s * layout.target_len() * kCell;
    svg << "<line x1=\"" << kMargin << "\" y1=\"" << at << "\" x2=\"" << side - kMargin << "\" y2=\"" << at
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << at << "\" y1=\"" << kMargin << "\" x2=\"" << at << "\" y2=\"" << side - kMargin
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace bang
