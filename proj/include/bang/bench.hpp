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
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bang/config.hpp"
#include "bang/data.hpp"
#include "bang/decoding.hpp"
#include "bang/trainer.hpp"

namespace bang {

using Sequence = std::vector<int>;

// Maps string tokens to dense ids so text corpora can be scored.
class Interner {
 public:
  Sequence intern(std::span<const std::string> tokens);

 private:
  std::map<std::string, int> ids_;
};

struct BleuDetail {
  double score = 0;                // percent
  std::vector<int64_t> matches;    // clipped n-gram matches, n = 1..max_n
  std::vector<int64_t> totals;     // hypothesis n-grams
  std::vector<double> precisions;  // after smoothing
  double brevity_penalty = 1;
  int64_t hyp_length = 0;
  int64_t ref_length = 0;
};

// Corpus BLEU with uniform weights, clipped counts, brevity penalty
// exp(1 - r/c) when c < r, and add-one smoothing of the n >= 2 precisions.
// Throws std::invalid_argument("empty corpus") or on a count mismatch.
BleuDetail bleu_detail(std::span<const Sequence> hyps, std::span<const Sequence> refs, int max_n = 4);
double bleu(std::span<const Sequence> hyps, std::span<const Sequence> refs, int max_n = 4);

int lcs_length(std::span<const int> a, std::span<const int> b);
// Mean LCS F-measure with beta = 1.2, percent. Empty sequences score 0.
double rouge_l(std::span<const Sequence> hyps, std::span<const Sequence> refs);
// Unique n-grams over all n-grams across the set, times 100; 0 when there are none.
double distinct_n(std::span<const Sequence> hyps, int n);
double exact_match(std::span<const Sequence> hyps, std::span<const Sequence> refs);

inline constexpr const char* kBleuSmoothing = "add-one on n>=2 precisions";

// Metric map with keys BLEU-1..BLEU-4, ROUGE-L, Distinct-1, Distinct-2, exact-match.
std::map<std::string, double> score_all(std::span<const Sequence> hyps, std::span<const Sequence> refs);
const std::vector<std::string>& metric_names();

struct LatencyStats {
  double median_ms = 0;
  double p90_ms = 0;
  int warmup = 0;
  int reps = 0;
};

// Times decode_fn(sample index) at batch size 1, cycling over the samples:
// `warmup` calls are discarded, then `reps` calls are timed.
LatencyStats measure_latency(const std::function<DecodeResult(size_t)>& decode_fn, size_t n_samples, int warmup = 5,
                             int reps = 50);
double median(std::vector<double> values);
// Nearest-rank percentile, q in (0, 1].
double percentile(std::vector<double> values, double q);

struct ModeReport {
  std::string mode;
  std::map<std::string, double> metrics;
  LatencyStats latency;
  double mean_forward_passes = 0;
  int max_forward_passes = 0;
  std::vector<int> forward_passes;  // per sample
  std::vector<int> output_lengths;  // per sample
  int samples = 0;
};

struct EvalReport {
  std::vector<ModeReport> modes;
  std::string config_hash;
  uint64_t seed = 0;
  std::string revision;
  std::string bleu_smoothing = kBleuSmoothing;

  const ModeReport* find(const std::string& mode) const;
};

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
std::string format_table(const EvalReport& report);

// FNV-1a of the canonical JSON dump, hex.
std::string config_hash(const nlohmann::ordered_json& config);
std::string build_revision();

struct LatencyOptions {
  bool enabled = true;
  int warmup = 5;
  int reps = 50;
};

// Decodes every pair once for metrics and forward-pass counts, then times
// the decode loop.
ModeReport evaluate_mode(std::span<const ParallelPair> pairs, const Parameters& params, const ModelConfig& config,
                         const DecodeOptions& options, const LatencyOptions& latency);

// Pass/fail lines for a bench gate.
struct GateCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct GateThresholds {
  double ar_exact_match = 95.0;
  double nar_exact_match = 50.0;
  double semi_margin = 2.0;  // semi >= nar - margin
};
// Forward-pass accounting and quality thresholds over an ar/nar/semi report.
std::vector<GateCheck> gate_checks(const EvalReport& report, const DecodeOptions& options,
                                   const GateThresholds& thresholds);

// Pretraining-strategy ablation: (a) no pretraining, (b) AR pretraining,
// (c) all-[MASK] NAR pretraining, (d) full n-stream pretraining; each then
// NAR-finetuned and NAR-decoded identically.
struct AblationOptions {
  SynthOptions task{SynthKind::sort, 32, 4, 8, 5000, 1, 128};
  ModelConfig model = [] {
    ModelConfig m;
    m.dropout = 0.0;
    return m;
  }();
  std::vector<uint64_t> seeds = {1, 2, 3};
  // Per-arm budgets, indexed a..d; pretraining is skipped for arm a.
  std::vector<int> pretrain_steps = {0, 1200, 1200, 1200};
  std::vector<int> finetune_steps = {400, 400, 400, 400};
  int batch_size = 32;
  double pretrain_lr = 1e-3;
  double finetune_lr = 1e-3;
  int warmup_steps = 100;
  double smoothing = 0.1;
  int corpus_docs = 2000;
  int pairs_per_doc = 4;
  SpanMaskOptions span{64, 0.15, 8, 16};  // max_span = model.n_streams
  int eval_samples = 200;
};

struct AblationRow {
  std::string arm;
  uint64_t seed = 0;
  int pretrain_steps = 0;
  int finetune_steps = 0;
  std::map<std::string, double> metrics;
};

struct ArmSummary {
  std::string arm;
  std::map<std::string, std::pair<double, double>> metrics;  // mean, sample stdev
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<ArmSummary> arms;

  const ArmSummary& arm(const std::string& name) const;
  std::string to_csv() const;  // arm,seed,metric,value
  std::string table() const;
};

inline const std::vector<std::string> kAblationArms = {"a_no_pretrain", "b_ar_pretrain", "c_nar_pretrain",
                                                      "d_bang_pretrain"};

// Text corpus shared by the pretraining arms: each document concatenates
// task pairs as "source [SEP] target".
std::vector<std::string> ablation_corpus(const AblationOptions& options, uint64_t seed);
// Throws std::invalid_argument when finetune budgets differ across arms or
// pretraining budgets differ across arms b..d.
void validate_ablation(const AblationOptions& options);
AblationResult ablation_run(const AblationOptions& options, const LogSink& log = nullptr);

}  // namespace bang
