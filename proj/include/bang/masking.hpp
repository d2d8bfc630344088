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

#pragma once

#include <compare>
#include <string>
#include <vector>

#include "bang/real.hpp"

namespace bang {

// One cell of the decoder layout: stream 0 is the main stream (golden
// tokens), streams 1..n are predicting streams fed with [MASK]. Positions are
// 1-based target positions.
struct Cell {
  int stream = 0;
  int pos = 1;
  auto operator<=>(const Cell&) const = default;
};

// Geometry of one main stream plus n predicting streams over a target of
// length T. Storage is rectangular; predicting cells with pos < stream have
// too few predecessors and are flagged invalid.
class StreamLayout {
 public:
  StreamLayout(int target_len, int n_streams);

  int target_len() const { return target_len_; }
  int n_streams() const { return n_streams_; }
  int rows() const { return (n_streams_ + 1) * target_len_; }

  // Row-major over streams: all of stream 0, then stream 1, ...
  int row_index(int stream, int pos) const;
  Cell cell(int row) const;

  bool in_range(int stream, int pos) const;
  bool valid(int stream, int pos) const;
  bool valid_row(int row) const;

  // Sum over t of min(t, n).
  int valid_predicting_cells() const;

 private:
  int target_len_;
  int n_streams_;
};

// Keys visible to cell (stream, pos), sorted by (stream, pos), self included.
// Throws std::invalid_argument("invalid stream cell") for invalid cells.
std::vector<Cell> visible_set(const StreamLayout& layout, int stream, int pos);

// Additive attention mask over layout rows: 0 where the key row is visible to
// the query row, kMaskedScore elsewhere. Invalid query rows see only
// themselves so their softmax stays finite; they are never read.
struct VisibilityMask {
  Mat bias;
  std::vector<bool> valid;

  bool visible(int query_row, int key_row) const { return bias(query_row, key_row) == Real(0); }
  int visible_count() const;  // visible entries of valid query rows
};

VisibilityMask build_mask(const StreamLayout& layout);

std::vector<bool> validity_mask(const StreamLayout& layout);

// Grid of layout rows x layout rows: '#' visible, '.' masked, 'x' invalid
// (query or key cell invalid). Rows joined by '\n', trailing newline.
std::string render_mask_text(const StreamLayout& layout);
std::string render_mask_svg(const StreamLayout& layout);

inline constexpr int kRenderCellCap = 10000;

}  // namespace bang
