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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bang/model.hpp"

namespace bang {

struct DecodeResult {
  std::vector<int> tokens;  // specials stripped
  double score = 0;         // total log-probability of the emitted positions
  int forward_passes = 0;
  double latency_ms = 0;
  std::vector<double> per_position_logprobs;
};

// Per-layer keys/values of the main-stream (golden) positions decoded so far.
struct KVCache {
  std::vector<Mat> keys;    // per layer, [len x d_model]
  std::vector<Mat> values;  // per layer, [len x d_model]

  int length() const { return keys.empty() ? 0 : static_cast<int>(keys.front().rows()); }
};

// Incremental decoder over one encoded source. Each step appends golden
// tokens to the main stream and scores [MASK] query rows placed after them;
// the query rows see every cached golden token and the earlier queries of the
// same step. Only golden tokens enter the cache. Copyable (beam search forks).
class DecoderSession {
 public:
  DecoderSession(const Parameters& params, const ModelConfig& config, const EncoderStates& enc);

  // Logits [n_masks x vocab] for positions length()+|golden|+1 ... One
  // decoder forward pass.
  Mat step(std::span<const int> golden, int n_masks);

  int length() const { return cache_.length(); }
  const KVCache& cache() const { return cache_; }

 private:
  struct Shared;
  std::shared_ptr<const Shared> shared_;
  KVCache cache_;
};

struct ArOptions {
  int max_len = 50;
  int min_len = 0;  // [EOS] is suppressed before this many tokens
};

struct BeamOptions {
  int beam = 4;
  double length_penalty = 1.0;
  int max_len = 50;
  int min_len = 0;
};

// Next-token scorer used by greedy and beam search. One call to
// next_logprobs is one decoder forward pass.
class StepModel {
 public:
  struct State {
    virtual ~State() = default;
    virtual std::unique_ptr<State> clone() const = 0;
  };

  virtual ~StepModel() = default;
  virtual std::unique_ptr<State> start() const = 0;
  virtual std::vector<double> next_logprobs(State& state) const = 0;
  virtual void advance(State& state, int token) const = 0;
};

// The transformer as a StepModel: a [MASK] query after the generated prefix.
class TransformerStepModel : public StepModel {
 public:
  TransformerStepModel(const Parameters& params, const ModelConfig& config, const EncoderStates& enc);
  std::unique_ptr<State> start() const override;
  std::vector<double> next_logprobs(State& state) const override;
  void advance(State& state, int token) const override;

 private:
  const Parameters& params_;
  const ModelConfig& config_;
  const EncoderStates& enc_;
};

DecodeResult greedy_search(const StepModel& model, const ArOptions& options);
DecodeResult beam_search(const StepModel& model, const BeamOptions& options);

DecodeResult ar_greedy(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                       const ArOptions& options);
DecodeResult ar_beam(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                     const BeamOptions& options);
// Greedy decoding that recomputes the whole prefix every step (no cache).
DecodeResult ar_greedy_recompute(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                                 const ArOptions& options);

DecodeResult nar_decode(std::span<const int> source, const Parameters& params, const ModelConfig& config, int max_len);

struct SemiNarOptions {
  int n_ar = 5;
  int n_nar = 25;
};
DecodeResult semi_nar_decode(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                             const SemiNarOptions& options);

// Reduces every run of identical adjacent tokens to one token.
std::vector<int> collapse_repeats(std::span<const int> tokens);
// One-shot output from a per-position argmax stream: truncate at the first
// [EOS], collapse repeats, drop specials.
std::vector<int> finish_parallel(std::span<const int> argmax_stream);

// log-softmax of one logit row, in double.
std::vector<double> log_softmax(std::span<const Real> logits);

enum class DecodeMode { ar, nar, semi };
std::string to_string(DecodeMode mode);
DecodeMode parse_decode_mode(const std::string& name);

struct DecodeOptions {
  DecodeMode mode = DecodeMode::ar;
  int beam = 4;
  double length_penalty = 1.0;
  int max_len = 50;
  int min_len = 0;
  int n_ar = 5;
  int n_nar = 25;
};

// Dispatches by mode and fills latency_ms with the wall-clock of the decode
// (encoder included, tokenization excluded).
DecodeResult decode(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                    const DecodeOptions& options);

}  // namespace bang
