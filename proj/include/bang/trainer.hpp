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
#include <optional>
#include <vector>

#include <json.hpp>

#include "bang/checkpoint.hpp"
#include "bang/config.hpp"
#include "bang/data.hpp"
#include "bang/objectives.hpp"

namespace bang {

// Deterministic batches: epoch e is a seeded permutation of the examples the
// source yields for e, and step k takes positions [kB, (k+1)B) of the
// concatenated epochs. A batch depends only on (seed, step), so resuming
// reproduces the uninterrupted sequence.
class BatchSampler {
 public:
  using EpochSource = std::function<std::vector<TrainingPair>(int64_t epoch)>;
  BatchSampler(EpochSource source, uint64_t seed, int batch_size);
  std::vector<TrainingPair> batch(int64_t step);

 private:
  void load_epoch(int64_t epoch);

  EpochSource source_;
  uint64_t seed_;
  int batch_size_;
  int64_t epoch_ = -1;
  std::vector<TrainingPair> examples_;
  std::vector<size_t> order_;
};

std::vector<TrainingPair> to_training_pairs(std::span<const ParallelPair> pairs);
// Span-masked pretraining examples for one epoch ([EOS] removed from targets).
std::vector<TrainingPair> pretrain_epoch(const std::vector<std::vector<int>>& documents, const SpanMaskOptions& options,
                                         uint64_t seed, int64_t epoch);

// Per-step JSON line: {step, mode, lr, loss_total, loss_ar, loss_bridge,
// loss_nar, wall_ms}. Losses are per supervised cell; the three parts sum to
// loss_total.
nlohmann::ordered_json step_log(int64_t step, const std::string& mode, const StepResult& result, double wall_ms);

using LogSink = std::function<void(const nlohmann::ordered_json&)>;

struct TrainSummary {
  int64_t steps = 0;
  LossBreakdown last_loss;
  double best_dev_loss = 0;
  int64_t best_step = -1;
};

// Trains `params` in place from state.optimizer.step up to config.max_steps.
// eval() runs every eval_every steps and after the last one; it returns
// whether a new best was recorded. checkpoint() is called after every eval.
struct TrainHooks {
  LogSink log;
  std::function<void(int64_t step)> eval;
  std::function<void(int64_t step)> checkpoint;
};
void train_loop(Parameters& params, const ModelConfig& model, const RunConfig& config, BatchSampler& sampler,
                OptimizerState& state, TrainSummary& summary, const TrainHooks& hooks);

// Pretraining on the plain-text corpus at config.corpus; checkpoint at
// config.checkpoint_dir. With resume, continues from that checkpoint.
TrainSummary run_pretrain(const RunConfig& config, bool resume, const LogSink& log);

// Finetuning on config.train_data with dev-loss selection on
// config.dev_data. Writes <checkpoint_dir>/best and <checkpoint_dir>/last.
// Starts from config.init_checkpoint when set, else from scratch with a
// vocabulary built from the training pairs.
TrainSummary run_finetune(const RunConfig& config, bool resume, const LogSink& log);

// Effective model config when finetuning from a pretrained checkpoint: the
// architecture comes from the checkpoint; n_streams, dropout and seed from the
// run config.
ModelConfig merge_finetune_config(const ModelConfig& checkpoint, const ModelConfig& run);

}  // namespace bang
