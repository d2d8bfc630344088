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

#include "bang/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>

#include "bang/log.hpp"
#include "bang/seeding.hpp"
#include "bang/tokens.hpp"

namespace bang {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr uint64_t kShuffleTag = 0x5348554646ULL;
constexpr uint64_t kSpanTag = 0x5350414eULL;

void check_lengths(std::span<const ParallelPair> pairs, const ModelConfig& config, const std::string& what) {
  for (const auto& p : pairs) {
    if (p.source.empty() || static_cast<int>(p.source.size()) > config.max_positions)
      throw std::invalid_argument(what + " pair " + p.id + ": source length outside [1, max_positions]");
    if (static_cast<int>(p.target.size()) + 1 > config.max_positions)
      throw std::invalid_argument(what + " pair " + p.id + ": target too long for max_positions");
  }
}

}  // namespace

BatchSampler::BatchSampler(EpochSource source, uint64_t seed, int batch_size)
    : source_(std::move(source)), seed_(seed), batch_size_(batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

void BatchSampler::load_epoch(int64_t epoch) {
  if (epoch == epoch_) return;
  examples_ = source_(epoch);
  if (examples_.empty()) throw std::runtime_error("no training examples");
  order_.resize(examples_.size());
  std::iota(order_.begin(), order_.end(), size_t{0});
  std::mt19937_64 rng(derive_seed(seed_, {kShuffleTag, static_cast<uint64_t>(epoch)}));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng() % i]);
  epoch_ = epoch;
}

std::vector<TrainingPair> BatchSampler::batch(int64_t step) {
  std::vector<TrainingPair> out;
  out.reserve(batch_size_);
  if (epoch_ < 0) load_epoch(0);
  // Epoch sizes are constant for every source in this library; the size of
  // epoch 0 fixes the mapping from global position to (epoch, index).
  const int64_t n = static_cast<int64_t>(examples_.size());
  for (int i = 0; i < batch_size_; ++i) {
    const int64_t g = step * batch_size_ + i;
    load_epoch(g / n);
    out.push_back(examples_[order_[g % n]]);
  }
  return out;
}

std::vector<TrainingPair> to_training_pairs(std::span<const ParallelPair> pairs) {
  std::vector<TrainingPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.source, p.target});
  return out;
}

std::vector<TrainingPair> pretrain_epoch(const std::vector<std::vector<int>>& documents, const SpanMaskOptions& options,
                                         uint64_t seed, int64_t epoch) {
  std::vector<TrainingPair> out;
  for (auto& ex : span_mask_batches(documents, options, derive_seed(seed, {kSpanTag, static_cast<uint64_t>(epoch)}))) {
    if (!ex.target.empty() && ex.target.back() == kEos) ex.target.pop_back();
    out.push_back({std::move(ex.source), std::move(ex.target)});
  }
  return out;
}

ordered_json step_log(int64_t step, const std::string& mode, const StepResult& r, double wall_ms) {
  const double n = std::max(1, r.loss.terms());
  ordered_json j;
  j["step"] = step;
  j["mode"] = mode;
  j["lr"] = r.lr;
  j["loss_total"] = r.loss.total / n;
  j["loss_ar"] = r.loss.ar_part / n;
  j["loss_bridge"] = r.loss.bridging_part / n;
  j["loss_nar"] = r.loss.nar_part / n;
  j["wall_ms"] = wall_ms;
  return j;
}

void train_loop(Parameters& params, const ModelConfig& model, const RunConfig& config, BatchSampler& sampler,
                OptimizerState& state, TrainSummary& summary, const TrainHooks& hooks) {
  const StepOptions opt = config.step_options();
  while (state.step < config.max_steps) {
    const auto batch = sampler.batch(state.step);
    const auto t0 = std::chrono::steady_clock::now();
    const StepResult r = train_step(params, model, batch, opt, state);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    summary.last_loss = r.loss;
    summary.steps = state.step;
    if (hooks.log && (state.step % config.log_every == 0 || state.step == config.max_steps))
      hooks.log(step_log(state.step, config.mode, r, ms));
    if (state.step % config.eval_every == 0 || state.step == config.max_steps) {
      if (hooks.eval) hooks.eval(state.step);
      if (hooks.checkpoint) hooks.checkpoint(state.step);
    }
  }
  summary.steps = state.step;
}

TrainSummary run_pretrain(const RunConfig& config, bool resume, const LogSink& log) {
  config.validate();
  if (config.corpus.empty() || !fs::exists(config.corpus))
    throw std::runtime_error("pretrain: corpus not found: " + config.corpus);
  if (config.checkpoint_dir.empty()) throw std::invalid_argument("pretrain: checkpoint_dir is required");
  const fs::path dir = config.checkpoint_dir;
  CheckpointLock lock(dir);

  const auto docs_text = ingest_text(config.corpus);
  if (docs_text.empty()) throw std::runtime_error("pretrain: empty corpus");

  Checkpoint ck;
  OptimizerState state;
  TrainSummary summary;
  if (resume && is_checkpoint(dir)) {
    ck = load_checkpoint(dir);
    if (!ck.trainer) throw std::runtime_error("pretrain: checkpoint has no trainer state to resume from");
    state = std::move(ck.trainer->optimizer);
    log_info("resuming pretraining at step " + std::to_string(state.step));
  } else {
    std::vector<std::string> lines;
    for (const auto& d : docs_text) {
      std::string line;
      for (const auto& t : d) line += t + " ";
      lines.push_back(std::move(line));
    }
    ck.vocab = build_vocab(lines, config.model.vocab_size);
    ck.config = config.model;
    ck.config.vocab_size = ck.vocab.size();
    ck.config.validate();
    ck.params = init_parameters(ck.config);
    state = OptimizerState::fresh(ck.params);
  }
  ck.run_config = to_json(config);
  summary.steps = state.step;

  std::vector<std::vector<int>> docs;
  for (const auto& d : docs_text) {
    std::vector<int> ids;
    for (const auto& t : d) ids.push_back(ck.vocab.id(t));
    docs.push_back(std::move(ids));
  }
  const SpanMaskOptions span = config.span_options();
  if (span.block > ck.config.max_positions) throw std::invalid_argument("pretrain: span_block exceeds max_positions");
  BatchSampler sampler([&](int64_t e) { return pretrain_epoch(docs, span, ck.config.seed, e); }, ck.config.seed,
                       config.batch_size);

  auto save = [&](int64_t) {
    ck.trainer = TrainerState{state, 0, -1};
    save_checkpoint(dir, ck);
  };
  TrainHooks hooks{log, nullptr, save};
  train_loop(ck.params, ck.config, config, sampler, state, summary, hooks);
  save(state.step);
  if (log) {
    ordered_json done;
    done["event"] = "done";
    done["steps"] = state.step;
    done["checkpoint"] = dir.string();
    log(done);
  }
  return summary;
}

ModelConfig merge_finetune_config(const ModelConfig& checkpoint, const ModelConfig& run) {
  ModelConfig c = checkpoint;
  c.n_streams = run.n_streams;
  c.dropout = run.dropout;
  c.seed = run.seed;
  c.validate();
  return c;
}

TrainSummary run_finetune(const RunConfig& config, bool resume, const LogSink& log) {
  config.validate();
  if (config.train_data.empty() || !fs::exists(config.train_data))
    throw std::runtime_error("finetune: train_data not found: " + config.train_data);
  if (config.dev_data.empty() || !fs::exists(config.dev_data))
    throw std::runtime_error("finetune: dev_data not found: " + config.dev_data);
  if (config.checkpoint_dir.empty()) throw std::invalid_argument("finetune: checkpoint_dir is required");
  const fs::path dir = config.checkpoint_dir;
  CheckpointLock lock(dir);
  fs::create_directories(dir);

  const auto train_text = read_dataset(config.train_data);
  const auto dev_text = read_dataset(config.dev_data);
  if (train_text.empty()) throw std::runtime_error("finetune: empty training set");
  if (dev_text.empty()) throw std::runtime_error("finetune: empty dev set");

  Checkpoint ck;
  OptimizerState state;
  TrainSummary summary;
  if (resume && is_checkpoint(dir / "last")) {
    ck = load_checkpoint(dir / "last");
    if (!ck.trainer) throw std::runtime_error("finetune: checkpoint has no trainer state to resume from");
    state = std::move(ck.trainer->optimizer);
    summary.best_dev_loss = ck.trainer->best_dev_loss;
    summary.best_step = ck.trainer->best_step;
    log_info("resuming finetuning at step " + std::to_string(state.step));
  } else if (!config.init_checkpoint.empty()) {
    ck = load_checkpoint(config.init_checkpoint, false);
    ck.config = merge_finetune_config(ck.config, config.model);
    state = OptimizerState::fresh(ck.params);
  } else {
    std::vector<std::string> lines;
    for (const auto& p : train_text) {
      lines.push_back(p.src);
      lines.push_back(p.tgt);
    }
    ck.vocab = build_vocab(lines, config.model.vocab_size);
    ck.config = config.model;
    ck.config.vocab_size = ck.vocab.size();
    ck.config.validate();
    ck.params = init_parameters(ck.config);
    state = OptimizerState::fresh(ck.params);
  }
  ck.run_config = to_json(config);

  std::vector<ParallelPair> train, dev;
  try {
    train = encode_pairs(train_text, ck.vocab);
    dev = encode_pairs(dev_text, ck.vocab);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("finetune: vocabulary mismatch between checkpoint and dataset: ") +
                                e.what());
  }
  check_lengths(train, ck.config, "train");
  check_lengths(dev, ck.config, "dev");
  const auto train_pairs = to_training_pairs(train);
  const auto dev_pairs = to_training_pairs(dev);
  const TrainMode mode = config.train_mode();

  BatchSampler sampler([&](int64_t) { return train_pairs; }, ck.config.seed, config.batch_size);

  auto eval = [&](int64_t step) {
    const double loss = evaluate_loss(ck.params, ck.config, dev_pairs, mode, config.smoothing).per_token();
    const bool best = summary.best_step < 0 || loss < summary.best_dev_loss;
    if (best) {
      summary.best_dev_loss = loss;
      summary.best_step = step;
      Checkpoint b{ck.config, ck.params, ck.vocab, ck.run_config, std::nullopt};
      save_checkpoint(dir / "best", b);
    }
    log_info("step " + std::to_string(step) + " dev_loss " + std::to_string(loss) + (best ? " (best)" : ""));
  };
  auto save_last = [&](int64_t) {
    ck.trainer = TrainerState{state, summary.best_dev_loss, summary.best_step};
    save_checkpoint(dir / "last", ck);
  };
  TrainHooks hooks{log, eval, save_last};
  if (state.step >= config.max_steps) {
    // Nothing to train (0-step run or already finished): still select and save.
    if (summary.best_step < 0) eval(state.step);
    save_last(state.step);
  } else {
    train_loop(ck.params, ck.config, config, sampler, state, summary, hooks);
  }
  if (log) {
    ordered_json done;
    done["event"] = "done";
    done["steps"] = state.step;
    done["best_step"] = summary.best_step;
    done["best_dev_loss"] = summary.best_dev_loss;
    done["checkpoint"] = dir.string();
    log(done);
  }
  return summary;
}

}  // namespace bang
