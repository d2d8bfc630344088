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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bang/graph.hpp"
#include "bang/masking.hpp"
#include "bang/real.hpp"

namespace bang {

struct ModelConfig {
  int enc_layers = 2;
  int dec_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ffn = 128;
  int vocab_size = 1000;
  int max_positions = 128;
  int n_streams = 8;
  int rel_buckets = 32;
  int rel_max_distance = 64;
  double dropout = 0.1;
  uint64_t seed = 1;

  int d_head() const { return d_model / n_heads; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct Tensor {
  std::vector<int64_t> shape;
  Mat data;  // 1-D tensors are stored as a single row
};

// Named tensors in a fixed, deterministic order.
class Parameters {
 public:
  void add(std::string name, std::vector<int64_t> shape, Mat data);

  size_t size() const { return entries_.size(); }
  const std::string& name(size_t i) const { return entries_[i].first; }
  Tensor& tensor(size_t i) { return entries_[i].second; }
  const Tensor& tensor(size_t i) const { return entries_[i].second; }

  bool contains(std::string_view name) const;
  int index(std::string_view name) const;  // throws std::out_of_range
  const Tensor& at(std::string_view name) const { return tensor(index(name)); }
  Tensor& at(std::string_view name) { return tensor(index(name)); }

  size_t element_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, int> index_;
};

Parameters init_parameters(const ModelConfig& config);

// Parameter indices resolved once per parameter set.
struct ModelIndex {
  struct Attn {
    int q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  };
  struct Norm {
    int gain, bias;
  };
  struct Ffn {
    int in_w, in_b, out_w, out_b;
  };
  struct EncLayer {
    Norm ln_attn;
    Attn attn;
    Norm ln_ffn;
    Ffn ffn;
  };
  struct DecLayer {
    Norm ln_self;
    Attn self_attn;
    Norm ln_cross;
    Attn cross_attn;
    Norm ln_ffn;
    Ffn ffn;
  };

  int tokens = -1;
  int enc_positions = -1;
  int dec_positions = -1;
  int rel_bias = -1;
  std::vector<EncLayer> enc;
  Norm enc_final{};
  std::vector<DecLayer> dec;
  Norm dec_final{};

  static ModelIndex build(const Parameters& params, const ModelConfig& config);
};

struct EncoderStates {
  Mat states;             // [source_len x d_model]
  std::vector<bool> pad;  // true for [PAD] source positions
};

// Signed distance key - query mapped to a bucket: half the buckets for
// key-after-query, exact below buckets/4, logarithmic up to max_distance,
// clamped beyond.
int relative_bucket(int distance, int buckets, int max_distance);

// Learned relative-position score for (query, key) target positions and a head.
Real relative_bias(int query_pos, int key_pos, int head, const Parameters& params, const ModelConfig& config);

// softmax(Q K^T / sqrt(d) + bias) V for a single head.
Mat attention(const Mat& q, const Mat& k, const Mat& v, const Mat& bias);

EncoderStates encode(std::span<const int> source, const Parameters& params, const ModelConfig& config);

// Logits for every layout row, [(n_streams + 1) * T x vocab]. Row (s, t)
// with s >= 1 scores y_t given y_1..y_{t-s}; main-stream rows are context.
Mat nstream_decoder_forward(std::span<const int> golden, const EncoderStates& enc, const StreamLayout& layout,
                            const Parameters& params, const ModelConfig& config);

// Plain single-stream causal decoder over a literal token sequence (golden
// tokens and/or [MASK]); logits for every position, [len x vocab].
Mat causal_decoder_forward(std::span<const int> tokens, const EncoderStates& enc, const Parameters& params,
                           const ModelConfig& config);

// Reference for the n-stream pass: last-position logits of the causal decoder
// over [golden..., MASK...]. Returns [1 x vocab].
Mat oracle_forward(std::span<const int> prefix_with_masks, const EncoderStates& enc, const Parameters& params,
                   const ModelConfig& config);

// Binds one parameter set into a Graph and builds the network on it.
class ModelGraph {
 public:
  ModelGraph(Graph& graph, const Parameters& params, const ModelConfig& config);

  struct Encoded {
    Var states;
    std::vector<bool> pad;
  };

  Encoded encode(std::span<const int> source);
  Encoded constant_encoder(const EncoderStates& enc);

  // Final-layer-normed decoder states for every layout row.
  Var nstream_hidden(std::span<const int> golden, const StreamLayout& layout, const Encoded& enc);
  // Final-layer-normed decoder states of the single-stream causal decoder.
  Var causal_hidden(std::span<const int> tokens, const Encoded& enc);
  // Tied output projection.
  Var logits(Var hidden);

  Var param(int index) const { return vars_[index]; }
  const std::vector<Var>& param_vars() const { return vars_; }

 private:
  Var decoder_stack(Var x, const AttentionBias& self_bias, const Encoded& enc);
  Var attention_block(Var x, const ModelIndex::Attn& ids, Var memory, const AttentionBias& bias);

  Graph& g_;
  const ModelConfig& cfg_;
  ModelIndex idx_;
  std::vector<Var> vars_;
};

}  // namespace bang
