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

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "bang/real.hpp"

namespace bang {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Tape for reverse-mode differentiation over row-major matrices. Nodes are
// appended in evaluation order, so backward is a reverse sweep. A graph built
// with record=false keeps values only (inference).
class Graph {
 public:
  using Backward = std::function<void(Graph&, Var out)>;

  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  // Leaf bound to external storage; the referenced matrix must outlive the graph.
  Var parameter(const Mat& value);

  const Mat& value(Var v) const;
  Mat& grad(Var v);
  bool has_grad(Var v) const { return nodes_[v.id].grad.size() > 0; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool recording() const { return record_; }

  Var push(Mat value, bool needs_grad, Backward back);
  void backward(Var scalar);

  void enable_dropout(Real rate, uint64_t seed);
  Real dropout_rate() const { return dropout_; }
  std::mt19937_64& rng() { return rng_; }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool needs_grad = false;
    Backward back;
  };

  std::vector<Node> nodes_;
  bool record_;
  Real dropout_ = 0;
  std::mt19937_64 rng_{0};
};

// Attention masking/biasing for multi_head_attention.
struct AttentionBias {
  // [queries x keys] additive 0 / kMaskedScore; null means all visible.
  std::shared_ptr<const Mat> mask;
  // [queries x keys] relative-position bucket per pair, read from `table`
  // ([heads x buckets]). Both or neither.
  std::shared_ptr<const IndexMat> buckets;
  Var table;
  // >0: query block b (rows [b*block_rows, (b+1)*block_rows)) attends only to
  // the key prefix [0, (b+1)*block_rows), i.e. the blocks cached so far.
  int block_rows = 0;
};

namespace ops {

Var matmul(Graph& g, Var a, Var b);     // a b
Var matmul_nt(Graph& g, Var a, Var b);  // a b^T
Var linear(Graph& g, Var x, Var weight, Var bias);  // x W + b, bias [1 x out]
Var add(Graph& g, Var a, Var b);
Var gelu(Graph& g, Var x);
Var layer_norm(Graph& g, Var x, Var gain, Var bias);
Var embedding(Graph& g, Var table, std::span<const int> ids);
Var gather_rows(Graph& g, Var x, std::span<const int> rows);
Var dropout(Graph& g, Var x);
Var multi_head_attention(Graph& g, Var q, Var k, Var v, int heads, const AttentionBias& bias);

// Sum over rows of weight * smoothed cross-entropy; returns [1 x 1]. Per-row
// unweighted losses are written to row_losses when given.
Var cross_entropy(Graph& g, Var logits, std::span<const int> targets, Real smoothing, Real weight,
                  std::vector<double>* row_losses = nullptr);

}  // namespace ops
}  // namespace bang
