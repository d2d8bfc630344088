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

#include "bang/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "bang/kernels.hpp"
#include "bang/tokens.hpp"

namespace bang {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
  };
  positive(enc_layers, "enc_layers");
  positive(dec_layers, "dec_layers");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(d_ffn, "d_ffn");
  positive(vocab_size, "vocab_size");
  positive(max_positions, "max_positions");
  positive(n_streams, "n_streams");
  positive(rel_buckets, "rel_buckets");
  positive(rel_max_distance, "rel_max_distance");
  if (d_model % n_heads != 0) throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  if (n_streams > max_positions) throw std::invalid_argument("model config: n_streams exceeds max_positions");
  if (rel_buckets < 4 || rel_buckets % 2 != 0)
    throw std::invalid_argument("model config: rel_buckets must be even and at least 4");
  if (vocab_size <= kNumSpecials) throw std::invalid_argument("model config: vocab_size must exceed the specials");
  if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("model config: dropout must be in [0,1)");
}

void Parameters::add(std::string name, std::vector<int64_t> shape, Mat data) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  int64_t count = 1;
  for (int64_t d : shape) count *= d;
  if (count != data.size()) throw std::invalid_argument("parameter shape/data mismatch: " + name);
  index_.emplace(name, static_cast<int>(entries_.size()));
  entries_.emplace_back(std::move(name), Tensor{std::move(shape), std::move(data)});
}

bool Parameters::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

int Parameters::index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

size_t Parameters::element_count() const {
  size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<size_t>(t.data.size());
  return n;
}

namespace {

class Initializer {
 public:
  Initializer(Parameters& p, uint64_t seed) : p_(p), rng_(seed) {}

  void normal(const std::string& name, int rows, int cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng_));
    p_.add(name, {rows, cols}, std::move(m));
  }

  void xavier(const std::string& name, int rows, int cols) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng_));
    p_.add(name, {rows, cols}, std::move(m));
  }

  void constant(const std::string& name, int n, Real value) { p_.add(name, {n}, Mat::Constant(1, n, value)); }

  void zeros2(const std::string& name, int rows, int cols) { p_.add(name, {rows, cols}, Mat::Zero(rows, cols)); }

  void linear(const std::string& prefix, int in, int out) {
    xavier(prefix + ".weight", in, out);
    constant(prefix + ".bias", out, 0);
  }

  void norm(const std::string& prefix, int d) {
    constant(prefix + ".gain", d, 1);
    constant(prefix + ".bias", d, 0);
  }

  void attn(const std::string& prefix, int d) {
    for (const char* part : {".q", ".k", ".v", ".o"}) linear(prefix + part, d, d);
  }

 private:
  Parameters& p_;
  std::mt19937_64 rng_;
};

}  // namespace

Parameters init_parameters(const ModelConfig& config) {
  config.validate();
  Parameters p;
  Initializer init(p, config.seed);
  const int d = config.d_model;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  init.normal("embed.tokens", config.vocab_size, d, emb_std);
  init.normal("embed.enc_positions", config.max_positions, d, emb_std);
  init.normal("embed.dec_positions", config.max_positions, d, emb_std);
  for (int l = 0; l < config.enc_layers; ++l) {
    const std::string pre = "encoder.layers." + std::to_string(l);
    init.norm(pre + ".ln_attn", d);
    init.attn(pre + ".attn", d);
    init.norm(pre + ".ln_ffn", d);
    init.linear(pre + ".ffn.in", d, config.d_ffn);
    init.linear(pre + ".ffn.out", config.d_ffn, d);
  }
  init.norm("encoder.ln_final", d);
  init.zeros2("decoder.rel_bias", config.n_heads, config.rel_buckets);
  for (int l = 0; l < config.dec_layers; ++l) {
    const std::string pre = "decoder.layers." + std::to_string(l);
    init.norm(pre + ".ln_self", d);
    init.attn(pre + ".self_attn", d);
    init.norm(pre + ".ln_cross", d);
    init.attn(pre + ".cross_attn", d);
    init.norm(pre + ".ln_ffn", d);
    init.linear(pre + ".ffn.in", d, config.d_ffn);
    init.linear(pre + ".ffn.out", config.d_ffn, d);
  }
  init.norm("decoder.ln_final", d);
  return p;
}

ModelIndex ModelIndex::build(const Parameters& p, const ModelConfig& config) {
  auto attn = [&](const std::string& pre) {
    return Attn{p.index(pre + ".q.weight"), p.index(pre + ".q.bias"), p.index(pre + ".k.weight"),
                p.index(pre + ".k.bias"),   p.index(pre + ".v.weight"), p.index(pre + ".v.bias"),
                p.index(pre + ".o.weight"), p.index(pre + ".o.bias")};
  };
  auto norm = [&](const std::string& pre) { return Norm{p.index(pre + ".gain"), p.index(pre + ".bias")}; };
  auto ffn = [&](const std::string& pre) {
    return Ffn{p.index(pre + ".in.weight"), p.index(pre + ".in.bias"), p.index(pre + ".out.weight"),
               p.index(pre + ".out.bias")};
  };

  ModelIndex idx;
  idx.tokens = p.index("embed.tokens");
  idx.enc_positions = p.index("embed.enc_positions");
  idx.dec_positions = p.index("embed.dec_positions");
  idx.rel_bias = p.index("decoder.rel_bias");
  for (int l = 0; l < config.enc_layers; ++l) {
    const std::string pre = "encoder.layers." + std::to_string(l);
    idx.enc.push_back({norm(pre + ".ln_attn"), attn(pre + ".attn"), norm(pre + ".ln_ffn"), ffn(pre + ".ffn")});
  }
  idx.enc_final = norm("encoder.ln_final");
  for (int l = 0; l < config.dec_layers; ++l) {
    const std::string pre = "decoder.layers." + std::to_string(l);
    idx.dec.push_back({norm(pre + ".ln_self"), attn(pre + ".self_attn"), norm(pre + ".ln_cross"),
                       attn(pre + ".cross_attn"), norm(pre + ".ln_ffn"), ffn(pre + ".ffn")});
  }
  idx.dec_final = norm("decoder.ln_final");

  const Tensor& tok = p.tensor(idx.tokens);
  if (tok.data.rows() != config.vocab_size || tok.data.cols() != config.d_model)
    throw std::invalid_argument("parameters do not match model config (embed.tokens)");
  const Tensor& rel = p.tensor(idx.rel_bias);
  if (rel.data.rows() != config.n_heads || rel.data.cols() != config.rel_buckets)
    throw std::invalid_argument("parameters do not match model config (decoder.rel_bias)");
  return idx;
}

int relative_bucket(int distance, int buckets, int max_distance) {
  const int half = buckets / 2;
  int bucket = distance > 0 ? half : 0;
  const int n = std::abs(distance);
  const int max_exact = std::max(1, half / 2);
  if (n < max_exact) return bucket + n;
  if (max_distance <= max_exact) return bucket + half - 1;
  const double ratio = std::log(static_cast<double>(n) / max_exact) / std::log(static_cast<double>(max_distance) / max_exact);
  const int large = max_exact + static_cast<int>(ratio * (half - max_exact));
  return bucket + std::min(large, half - 1);
}

Real relative_bias(int query_pos, int key_pos, int head, const Parameters& params, const ModelConfig& config) {
  if (query_pos < 1 || key_pos < 1 || query_pos > config.max_positions || key_pos > config.max_positions)
    throw std::out_of_range("relative_bias: position out of range");
  const int b = relative_bucket(key_pos - query_pos, config.rel_buckets, config.rel_max_distance);
  return params.at("decoder.rel_bias").data(head, b);
}

Mat attention(const Mat& q, const Mat& k, const Mat& v, const Mat& bias) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || bias.rows() != q.rows() || bias.cols() != k.rows())
    throw std::invalid_argument("attention: shape mismatch");
  Mat s = (q * k.transpose()) / std::sqrt(static_cast<Real>(q.cols()));
  s += bias;
  kernels::softmax_rows(s);
  return s * v;
}

namespace {

void check_tokens(std::span<const int> tokens, const ModelConfig& config, const char* what) {
  if (tokens.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  if (static_cast<int>(tokens.size()) > config.max_positions)
    throw std::invalid_argument(std::string(what) + ": input longer than max_positions");
  for (int t : tokens)
    if (t < 0 || t >= config.vocab_size) throw std::invalid_argument(std::string(what) + ": token id out of range");
}

std::shared_ptr<IndexMat> bucket_matrix(std::span<const int> query_pos, std::span<const int> key_pos,
                                        const ModelConfig& config) {
  auto b = std::make_shared<IndexMat>(query_pos.size(), key_pos.size());
  for (size_t i = 0; i < query_pos.size(); ++i)
    for (size_t j = 0; j < key_pos.size(); ++j)
      (*b)(i, j) = relative_bucket(key_pos[j] - query_pos[i], config.rel_buckets, config.rel_max_distance);
  return b;
}

std::shared_ptr<Mat> key_pad_mask(Eigen::Index queries, const std::vector<bool>& pad) {
  bool any = false;
  for (bool p : pad) any = any || p;
  if (!any) return nullptr;
  auto m = std::make_shared<Mat>(Mat::Zero(queries, static_cast<Eigen::Index>(pad.size())));
  for (size_t j = 0; j < pad.size(); ++j)
    if (pad[j]) m->col(static_cast<Eigen::Index>(j)).setConstant(kMaskedScore);
  return m;
}

}  // namespace

ModelGraph::ModelGraph(Graph& graph, const Parameters& params, const ModelConfig& config)
    : g_(graph), cfg_(config), idx_(ModelIndex::build(params, config)) {
  vars_.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) vars_.push_back(g_.parameter(params.tensor(i).data));
}

Var ModelGraph::attention_block(Var x, const ModelIndex::Attn& a, Var memory, const AttentionBias& bias) {
  Var q = ops::linear(g_, x, param(a.q_w), param(a.q_b));
  Var k = ops::linear(g_, memory, param(a.k_w), param(a.k_b));
  Var v = ops::linear(g_, memory, param(a.v_w), param(a.v_b));
  Var ctx = ops::multi_head_attention(g_, q, k, v, cfg_.n_heads, bias);
  return ops::linear(g_, ctx, param(a.o_w), param(a.o_b));
}

ModelGraph::Encoded ModelGraph::encode(std::span<const int> source) {
  check_tokens(source, cfg_, "encode");
  std::vector<int> positions(source.size());
  Encoded out;
  out.pad.resize(source.size());
  for (size_t i = 0; i < source.size(); ++i) {
    positions[i] = static_cast<int>(i);
    out.pad[i] = source[i] == kPad;
  }
  Var x = ops::add(g_, ops::embedding(g_, param(idx_.tokens), source),
                   ops::embedding(g_, param(idx_.enc_positions), positions));
  x = ops::dropout(g_, x);
  AttentionBias bias;
  bias.mask = key_pad_mask(static_cast<Eigen::Index>(source.size()), out.pad);
  for (const auto& layer : idx_.enc) {
    Var h = ops::layer_norm(g_, x, param(layer.ln_attn.gain), param(layer.ln_attn.bias));
    x = ops::add(g_, x, attention_block(h, layer.attn, h, bias));
    h = ops::layer_norm(g_, x, param(layer.ln_ffn.gain), param(layer.ln_ffn.bias));
    Var f = ops::gelu(g_, ops::linear(g_, h, param(layer.ffn.in_w), param(layer.ffn.in_b)));
    f = ops::dropout(g_, f);
    x = ops::add(g_, x, ops::linear(g_, f, param(layer.ffn.out_w), param(layer.ffn.out_b)));
  }
  out.states = ops::layer_norm(g_, x, param(idx_.enc_final.gain), param(idx_.enc_final.bias));
  return out;
}

ModelGraph::Encoded ModelGraph::constant_encoder(const EncoderStates& enc) {
  if (enc.states.cols() != cfg_.d_model) throw std::invalid_argument("encoder states: width mismatch");
  return Encoded{g_.constant(enc.states), enc.pad};
}

Var ModelGraph::decoder_stack(Var x, const AttentionBias& self_bias, const Encoded& enc) {
  AttentionBias cross;
  cross.mask = key_pad_mask(g_.value(x).rows(), enc.pad);
  for (const auto& layer : idx_.dec) {
    Var h = ops::layer_norm(g_, x, param(layer.ln_self.gain), param(layer.ln_self.bias));
    x = ops::add(g_, x, attention_block(h, layer.self_attn, h, self_bias));
    h = ops::layer_norm(g_, x, param(layer.ln_cross.gain), param(layer.ln_cross.bias));
    x = ops::add(g_, x, attention_block(h, layer.cross_attn, enc.states, cross));
    h = ops::layer_norm(g_, x, param(layer.ln_ffn.gain), param(layer.ln_ffn.bias));
    Var f = ops::gelu(g_, ops::linear(g_, h, param(layer.ffn.in_w), param(layer.ffn.in_b)));
    f = ops::dropout(g_, f);
    x = ops::add(g_, x, ops::linear(g_, f, param(layer.ffn.out_w), param(layer.ffn.out_b)));
  }
  return ops::layer_norm(g_, x, param(idx_.dec_final.gain), param(idx_.dec_final.bias));
}

Var ModelGraph::nstream_hidden(std::span<const int> golden, const StreamLayout& layout, const Encoded& enc) {
  const int T = layout.target_len();
  if (static_cast<int>(golden.size()) != T) throw std::invalid_argument("nstream: golden length != layout target_len");
  if (layout.n_streams() > cfg_.n_streams) throw std::invalid_argument("nstream: layout has more streams than config");
  check_tokens(golden, cfg_, "nstream");

  const int rows = layout.rows();
  std::vector<int> ids(rows), pos(rows), pos1(rows);
  for (int r = 0; r < rows; ++r) {
    const Cell c = layout.cell(r);
    ids[r] = c.stream == 0 ? golden[c.pos - 1] : kMask;
    pos[r] = c.pos - 1;
    pos1[r] = c.pos;
  }
  Var x = ops::add(g_, ops::embedding(g_, param(idx_.tokens), ids), ops::embedding(g_, param(idx_.dec_positions), pos));
  x = ops::dropout(g_, x);

  AttentionBias self;
  self.mask = std::make_shared<Mat>(build_mask(layout).bias);
  self.buckets = bucket_matrix(pos1, pos1, cfg_);
  self.table = param(idx_.rel_bias);
  // Stream blocks are processed main, 1, ..., n; each attends to the keys of
  // itself and the blocks before it.
  self.block_rows = T;
  return decoder_stack(x, self, enc);
}

Var ModelGraph::causal_hidden(std::span<const int> tokens, const Encoded& enc) {
  check_tokens(tokens, cfg_, "causal decoder");
  const int n = static_cast<int>(tokens.size());
  std::vector<int> pos(n), pos1(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = i;
    pos1[i] = i + 1;
  }
  Var x = ops::add(g_, ops::embedding(g_, param(idx_.tokens), tokens), ops::embedding(g_, param(idx_.dec_positions), pos));
  x = ops::dropout(g_, x);

  AttentionBias self;
  auto mask = std::make_shared<Mat>(Mat::Constant(n, n, kMaskedScore));
  for (int i = 0; i < n; ++i) mask->row(i).head(i + 1).setZero();
  self.mask = mask;
  self.buckets = bucket_matrix(pos1, pos1, cfg_);
  self.table = param(idx_.rel_bias);
  return decoder_stack(x, self, enc);
}

Var ModelGraph::logits(Var hidden) { return ops::matmul_nt(g_, hidden, param(idx_.tokens)); }

EncoderStates encode(std::span<const int> source, const Parameters& params, const ModelConfig& config) {
  Graph g(false);
  ModelGraph mg(g, params, config);
  auto enc = mg.encode(source);
  return EncoderStates{g.value(enc.states), enc.pad};
}

Mat nstream_decoder_forward(std::span<const int> golden, const EncoderStates& enc, const StreamLayout& layout,
                            const Parameters& params, const ModelConfig& config) {
  Graph g(false);
  ModelGraph mg(g, params, config);
  auto e = mg.constant_encoder(enc);
  return g.value(mg.logits(mg.nstream_hidden(golden, layout, e)));
}

Mat causal_decoder_forward(std::span<const int> tokens, const EncoderStates& enc, const Parameters& params,
                           const ModelConfig& config) {
  Graph g(false);
  ModelGraph mg(g, params, config);
  auto e = mg.constant_encoder(enc);
  return g.value(mg.logits(mg.causal_hidden(tokens, e)));
}

Mat oracle_forward(std::span<const int> prefix_with_masks, const EncoderStates& enc, const Parameters& params,
                   const ModelConfig& config) {
  if (prefix_with_masks.empty()) throw std::invalid_argument("oracle_forward: empty prefix");
  if (prefix_with_masks.back() != kMask) throw std::invalid_argument("oracle_forward: prefix must end with [MASK]");
  const Mat all = causal_decoder_forward(prefix_with_masks, enc, params, config);
  return all.bottomRows(1);
}

}  // namespace bang
