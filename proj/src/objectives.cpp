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

#include "bang/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "bang/kernels.hpp"
#include "bang/seeding.hpp"
#include "bang/tokens.hpp"

namespace bang {

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  ar_part += o.ar_part;
  bridging_part += o.bridging_part;
  nar_part += o.nar_part;
  total = ar_part + bridging_part + nar_part;
  ar_terms += o.ar_terms;
  bridging_terms += o.bridging_terms;
  nar_terms += o.nar_terms;
  return *this;
}

CellPart cell_part(int stream, int pos) {
  if (stream == 1) return CellPart::ar;
  if (stream == pos) return CellPart::nar;
  return CellPart::bridging;
}

double smoothed_cross_entropy(std::span<const Real> logits, int target, double smoothing) {
  if (target < 0 || target >= static_cast<int>(logits.size())) throw std::invalid_argument("cross entropy: target out of range");
  const double lse = kernels::log_sum_exp(logits);
  double sum_logp = 0;
  for (Real v : logits) sum_logp += static_cast<double>(v) - lse;
  const double logp_y = static_cast<double>(logits[target]) - lse;
  return -(1.0 - smoothing) * logp_y - smoothing / static_cast<double>(logits.size()) * sum_logp;
}

namespace {

void check_smoothing(double eps) {
  if (!(eps >= 0 && eps < 1)) throw std::invalid_argument("label smoothing must be in [0,1)");
}

std::span<const Real> row_span(const Mat& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<size_t>(m.cols())};
}

void add_term(LossBreakdown& out, CellPart part, double loss) {
  switch (part) {
    case CellPart::ar:
      out.ar_part += loss;
      ++out.ar_terms;
      break;
    case CellPart::bridging:
      out.bridging_part += loss;
      ++out.bridging_terms;
      break;
    case CellPart::nar:
      out.nar_part += loss;
      ++out.nar_terms;
      break;
  }
}

// Valid predicting rows of a layout in row order, with their targets.
void supervised_rows(const StreamLayout& layout, std::span<const int> golden, std::vector<int>& rows,
                     std::vector<int>& targets, std::vector<CellPart>& parts) {
  for (int s = 1; s <= layout.n_streams(); ++s) {
    for (int t = s; t <= layout.target_len(); ++t) {
      rows.push_back(layout.row_index(s, t));
      targets.push_back(golden[t - 1]);
      parts.push_back(cell_part(s, t));
    }
  }
}

}  // namespace

LossBreakdown bang_loss(const Mat& logits, std::span<const int> golden, const StreamLayout& layout, double smoothing) {
  check_smoothing(smoothing);
  if (static_cast<int>(golden.size()) != layout.target_len() || logits.rows() != layout.rows())
    throw std::invalid_argument("bang_loss: shape mismatch");
  std::vector<int> rows, targets;
  std::vector<CellPart> parts;
  supervised_rows(layout, golden, rows, targets, parts);
  LossBreakdown out;
  out.valid = validity_mask(layout);
  for (size_t i = 0; i < rows.size(); ++i)
    add_term(out, parts[i], smoothed_cross_entropy(row_span(logits, rows[i]), targets[i], smoothing));
  out.total = out.ar_part + out.bridging_part + out.nar_part;
  return out;
}

double ar_loss(const Mat& logits, std::span<const int> golden, double smoothing) {
  const StreamLayout layout(static_cast<int>(golden.size()), 1);
  return bang_loss(logits, golden, layout, smoothing).total;
}

double nar_loss(const Mat& mask_logits, std::span<const int> golden, double smoothing) {
  check_smoothing(smoothing);
  if (mask_logits.rows() != static_cast<Eigen::Index>(golden.size())) throw std::invalid_argument("nar_loss: shape mismatch");
  double total = 0;
  for (size_t t = 0; t < golden.size(); ++t)
    total += smoothed_cross_entropy(row_span(mask_logits, static_cast<Eigen::Index>(t)), golden[t], smoothing);
  return total;
}

int span_length(int block_len, double ratio, int max_span) {
  const int proportional = static_cast<int>(std::floor(ratio * block_len + 1e-9));
  return std::max(1, std::min(max_span, proportional));
}

SpanMaskStream::SpanMaskStream(const std::vector<std::vector<int>>& documents, SpanMaskOptions options, uint64_t seed)
    : docs_(documents), opt_(options), rng_(seed) {
  if (documents.empty()) throw std::invalid_argument("span masking: empty corpus");
  if (options.block < 1 || options.max_span < 1 || !(options.ratio > 0 && options.ratio <= 1))
    throw std::invalid_argument("span masking: bad options");
}

std::optional<PretrainExample> SpanMaskStream::next() {
  while (doc_ < docs_.size()) {
    const auto& doc = docs_[doc_];
    if (offset_ >= doc.size()) {
      ++doc_;
      offset_ = 0;
      block_ = 0;
      continue;
    }
    const int len = static_cast<int>(std::min<size_t>(opt_.block, doc.size() - offset_));
    const size_t begin = offset_;
    const int block_id = block_++;
    offset_ += static_cast<size_t>(len);
    if (len < std::min(opt_.min_block, opt_.block)) continue;

    const int span = span_length(len, opt_.ratio, opt_.max_span);
    std::uniform_int_distribution<int> pick(0, len - span);
    const int start = pick(rng_);
    PretrainExample ex;
    ex.document = static_cast<int>(doc_);
    ex.block = block_id;
    ex.span_start = start;
    ex.source.assign(doc.begin() + static_cast<long>(begin), doc.begin() + static_cast<long>(begin) + len);
    for (int i = 0; i < span; ++i) {
      ex.target.push_back(ex.source[start + i]);
      ex.source[start + i] = kMask;
    }
    ex.target.push_back(kEos);
    return ex;
  }
  return std::nullopt;
}

std::vector<PretrainExample> span_mask_batches(const std::vector<std::vector<int>>& documents,
                                               const SpanMaskOptions& options, uint64_t seed) {
  SpanMaskStream stream(documents, options, seed);
  std::vector<PretrainExample> out;
  while (auto ex = stream.next()) out.push_back(std::move(*ex));
  if (out.empty()) throw std::invalid_argument("span masking: empty corpus");
  return out;
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::bang:
      return "bang";
    case TrainMode::ar:
      return "ar";
    case TrainMode::nar:
      return "nar";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "bang" || name == "multi") return TrainMode::bang;
  if (name == "ar") return TrainMode::ar;
  if (name == "nar") return TrainMode::nar;
  throw std::invalid_argument("unknown training mode: " + name);
}

Gradients zero_gradients(const Parameters& params) {
  Gradients g;
  g.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const Mat& d = params.tensor(i).data;
    g.push_back(Mat::Zero(d.rows(), d.cols()));
  }
  return g;
}

int supervised_cells(int target_len_with_eos, TrainMode mode, const ModelConfig& config) {
  if (mode == TrainMode::bang)
    return StreamLayout(target_len_with_eos, std::min(config.n_streams, target_len_with_eos)).valid_predicting_cells();
  return target_len_with_eos;
}

LossBreakdown pair_loss(const Parameters& params, const ModelConfig& config, const TrainingPair& pair, TrainMode mode,
                        double smoothing, double weight, Gradients* grads, bool train, uint64_t dropout_seed) {
  check_smoothing(smoothing);
  std::vector<int> golden = pair.target;
  golden.push_back(kEos);
  const int T = static_cast<int>(golden.size());

  Graph g(grads != nullptr);
  if (train && config.dropout > 0) g.enable_dropout(static_cast<Real>(config.dropout), dropout_seed);
  ModelGraph mg(g, params, config);
  const auto enc = mg.encode(pair.source);

  std::vector<int> targets;
  std::vector<CellPart> parts;
  Var logits;
  LossBreakdown out;
  if (mode == TrainMode::nar) {
    const std::vector<int> masks(golden.size(), kMask);
    logits = mg.logits(mg.causal_hidden(masks, enc));
    targets = golden;
    parts.assign(golden.size(), CellPart::nar);
  } else {
    const StreamLayout layout(T, mode == TrainMode::ar ? 1 : std::min(config.n_streams, T));
    std::vector<int> rows;
    supervised_rows(layout, golden, rows, targets, parts);
    Var hidden = mg.nstream_hidden(golden, layout, enc);
    logits = mg.logits(ops::gather_rows(g, hidden, rows));
    out.valid = validity_mask(layout);
  }

  std::vector<double> row_losses;
  Var loss = ops::cross_entropy(g, logits, targets, static_cast<Real>(smoothing), static_cast<Real>(weight), &row_losses);
  for (size_t i = 0; i < row_losses.size(); ++i) add_term(out, parts[i], row_losses[i]);
  out.total = out.ar_part + out.bridging_part + out.nar_part;
  if (!std::isfinite(out.total)) return out;

  if (grads) {
    g.backward(loss);
    const auto& vars = mg.param_vars();
    for (size_t i = 0; i < vars.size(); ++i)
      if (g.has_grad(vars[i])) (*grads)[i] += g.grad(vars[i]);
  }
  return out;
}

double learning_rate(int64_t step, double peak, int warmup) {
  if (warmup <= 0) return peak;
  if (step < warmup) return peak * static_cast<double>(std::max<int64_t>(step, 1)) / warmup;
  return peak * std::sqrt(static_cast<double>(warmup) / static_cast<double>(step));
}

OptimizerState OptimizerState::fresh(const Parameters& params) {
  OptimizerState s;
  s.m = zero_gradients(params);
  s.v = zero_gradients(params);
  return s;
}

StepResult train_step(Parameters& params, const ModelConfig& config, std::span<const TrainingPair> batch,
                      const StepOptions& options, OptimizerState& state) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (state.m.size() != params.size()) state = OptimizerState::fresh(params);

  int cells = 0;
  for (const auto& pair : batch) cells += supervised_cells(static_cast<int>(pair.target.size()) + 1, options.mode, config);
  const double weight = 1.0 / cells;

  Gradients grads = zero_gradients(params);
  StepResult result;
  for (size_t i = 0; i < batch.size(); ++i) {
    const uint64_t seed = derive_seed(options.seed, {static_cast<uint64_t>(state.step), i});
    LossBreakdown l = pair_loss(params, config, batch[i], options.mode, options.smoothing, weight, &grads, true, seed);
    if (!std::isfinite(l.total))
      throw std::runtime_error("non-finite loss at step " + std::to_string(state.step) + ", batch index " +
                               std::to_string(i));
    result.loss += l;
  }

  double sq = 0;
  for (const Mat& g : grads) sq += g.cast<double>().squaredNorm();
  result.grad_norm = std::sqrt(sq);
  if (!std::isfinite(result.grad_norm))
    throw std::runtime_error("non-finite gradient at step " + std::to_string(state.step));
  const double clip = options.clip_norm > 0 && result.grad_norm > options.clip_norm ? options.clip_norm / result.grad_norm : 1.0;

  result.lr = learning_rate(state.step, options.peak_lr, options.warmup_steps);
  ++state.step;
  const double b1 = options.adam.beta1, b2 = options.adam.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const Real step_size = static_cast<Real>(result.lr / c1);
  const Real inv_c2 = static_cast<Real>(1.0 / c2);
  const Real eps = static_cast<Real>(options.adam.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    Mat& w = params.tensor(i).data;
    const Mat g = grads[i] * static_cast<Real>(clip);
    state.m[i] = static_cast<Real>(b1) * state.m[i] + static_cast<Real>(1 - b1) * g;
    state.v[i] = static_cast<Real>(b2) * state.v[i] + static_cast<Real>(1 - b2) * g.cwiseProduct(g);
    w.array() -= step_size * state.m[i].array() / ((state.v[i].array() * inv_c2).sqrt() + eps);
  }
  return result;
}

LossBreakdown evaluate_loss(const Parameters& params, const ModelConfig& config, std::span<const TrainingPair> data,
                            TrainMode mode, double smoothing) {
  LossBreakdown total;
  for (const auto& pair : data) total += pair_loss(params, config, pair, mode, smoothing, 1.0, nullptr, false, 0);
  return total;
}

}  // namespace bang
