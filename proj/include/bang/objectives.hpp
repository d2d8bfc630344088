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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bang/masking.hpp"
#include "bang/model.hpp"

namespace bang {

// Negative log-likelihood split by how much of the golden prefix each
// predicting cell sees. Cell (1, t) is AR (including (1, 1)); (t, t) with
// t >= 2 is NAR; every other valid cell is bridging.
struct LossBreakdown {
  double total = 0;
  double ar_part = 0;
  double bridging_part = 0;
  double nar_part = 0;
  int ar_terms = 0;
  int bridging_terms = 0;
  int nar_terms = 0;
  std::vector<bool> valid;  // per layout row

  int terms() const { return ar_terms + bridging_terms + nar_terms; }
  double per_token() const { return terms() > 0 ? total / terms() : 0.0; }
  // Accumulates counts and parts; `valid` is not merged.
  LossBreakdown& operator+=(const LossBreakdown& other);
};

enum class CellPart { ar, bridging, nar };
CellPart cell_part(int stream, int pos);

// -(1-eps) log p_y - eps/V sum_v log p_v, accumulated in double.
double smoothed_cross_entropy(std::span<const Real> logits, int target, double smoothing);

// Loss over every valid predicting cell of a full n-stream logit matrix.
LossBreakdown bang_loss(const Mat& logits, std::span<const int> golden, const StreamLayout& layout, double smoothing);
// Teacher-forced loss: logits from a one-predicting-stream layout.
double ar_loss(const Mat& logits, std::span<const int> golden, double smoothing);
// Loss of all-[MASK] decoder logits [T x V] against the golden targets.
double nar_loss(const Mat& mask_logits, std::span<const int> golden, double smoothing);

struct PretrainExample {
  std::vector<int> source;  // block with the span replaced by [MASK]s
  std::vector<int> target;  // span tokens followed by [EOS]
  int span_start = 0;
  int document = 0;
  int block = 0;
};

struct SpanMaskOptions {
  int block = 64;
  double ratio = 0.15;
  int max_span = 9;
  int min_block = 16;  // shorter trailing blocks are dropped
};

// min(max_span, floor(ratio * block_len)), at least 1.
int span_length(int block_len, double ratio, int max_span);

// Deterministic stream of span-masked examples over per-document token lists.
class SpanMaskStream {
 public:
  SpanMaskStream(const std::vector<std::vector<int>>& documents, SpanMaskOptions options, uint64_t seed);
  std::optional<PretrainExample> next();

 private:
  const std::vector<std::vector<int>>& docs_;
  SpanMaskOptions opt_;
  std::mt19937_64 rng_;
  size_t doc_ = 0;
  size_t offset_ = 0;
  int block_ = 0;
};

std::vector<PretrainExample> span_mask_batches(const std::vector<std::vector<int>>& documents,
                                               const SpanMaskOptions& options, uint64_t seed);

enum class TrainMode { bang, ar, nar };
std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

// A training pair; [EOS] is appended to the target by the objective.
struct TrainingPair {
  std::vector<int> source;
  std::vector<int> target;
};

using Gradients = std::vector<Mat>;
Gradients zero_gradients(const Parameters& params);

// Predicting cells supervised for one pair under `mode`.
int supervised_cells(int target_len_with_eos, TrainMode mode, const ModelConfig& config);

// Forward + backward for one pair. Adds weight * d(loss)/d(params) into grads
// (when non-null) and returns the unweighted loss breakdown. dropout_seed
// is ignored when the config has no dropout or `train` is false.
LossBreakdown pair_loss(const Parameters& params, const ModelConfig& config, const TrainingPair& pair, TrainMode mode,
                        double smoothing, double weight, Gradients* grads, bool train, uint64_t dropout_seed);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Linear warmup from peak/warmup to peak, then inverse-sqrt decay.
double learning_rate(int64_t step, double peak, int warmup);

struct OptimizerState {
  int64_t step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;

  static OptimizerState fresh(const Parameters& params);
};

struct StepOptions {
  TrainMode mode = TrainMode::bang;
  double smoothing = 0.1;
  double peak_lr = 1e-4;
  int warmup_steps = 1000;
  double clip_norm = 1.0;
  AdamOptions adam;
  uint64_t seed = 1;
};

struct StepResult {
  LossBreakdown loss;  // summed over the batch; per_token() gives the mean
  double lr = 0;
  double grad_norm = 0;
};

// One optimizer step on a batch: mean loss over all supervised cells,
// backward, global-norm clipping, Adam. Throws std::runtime_error naming the
// batch index on a non-finite loss.
StepResult train_step(Parameters& params, const ModelConfig& config, std::span<const TrainingPair> batch,
                      const StepOptions& options, OptimizerState& state);

// Mean per-cell loss over a dataset without dropout.
LossBreakdown evaluate_loss(const Parameters& params, const ModelConfig& config, std::span<const TrainingPair> data,
                            TrainMode mode, double smoothing);

}  // namespace bang
