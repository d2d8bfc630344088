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

#include "bang/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bang/log.hpp"
#include "bang/seeding.hpp"
#include "bang/tokens.hpp"

#ifndef BANG_REVISION
#define BANG_REVISION "unknown"
#endif

namespace bang {

using nlohmann::json;
using nlohmann::ordered_json;

Sequence Interner::intern(std::span<const std::string> tokens) {
  Sequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(ids_.try_emplace(t, static_cast<int>(ids_.size())).first->second);
  return out;
}

namespace {

void check_corpus(size_t hyps, size_t refs) {
  if (hyps == 0) throw std::invalid_argument("empty corpus");
  if (hyps != refs) throw std::invalid_argument("hypothesis and reference counts differ");
}

std::map<Sequence, int64_t> ngram_counts(std::span<const int> s, int n) {
  std::map<Sequence, int64_t> counts;
  for (size_t i = 0; i + n <= s.size(); ++i) ++counts[Sequence(s.begin() + i, s.begin() + i + n)];
  return counts;
}

}  // namespace

BleuDetail bleu_detail(std::span<const Sequence> hyps, std::span<const Sequence> refs, int max_n) {
  check_corpus(hyps.size(), refs.size());
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  BleuDetail d;
  d.matches.assign(max_n, 0);
  d.totals.assign(max_n, 0);
  for (size_t i = 0; i < hyps.size(); ++i) {
    d.hyp_length += static_cast<int64_t>(hyps[i].size());
    d.ref_length += static_cast<int64_t>(refs[i].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngram_counts(hyps[i], n);
      const auto r = ngram_counts(refs[i], n);
      for (const auto& [gram, count] : h) {
        d.totals[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) d.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  d.precisions.resize(max_n);
  double log_sum = 0;
  bool zero = d.hyp_length == 0;
  for (int n = 1; n <= max_n; ++n) {
    const double m = static_cast<double>(d.matches[n - 1]);
    const double t = static_cast<double>(d.totals[n - 1]);
    double p;
    if (n == 1) {
      p = t > 0 ? m / t : 0.0;
    } else {
      p = (m + 1.0) / (t + 1.0);
    }
    d.precisions[n - 1] = p;
    if (p <= 0) {
      zero = true;
    } else {
      log_sum += std::log(p) / max_n;
    }
  }
  const double c = static_cast<double>(d.hyp_length);
  const double r = static_cast<double>(d.ref_length);
  if (c == 0) {
    d.brevity_penalty = 0;
  } else if (c < r) {
    d.brevity_penalty = std::exp(1.0 - r / c);
  }
  d.score = zero ? 0.0 : 100.0 * d.brevity_penalty * std::exp(log_sum);
  return d;
}

double bleu(std::span<const Sequence> hyps, std::span<const Sequence> refs, int max_n) {
  return bleu_detail(hyps, refs, max_n).score;
}

int lcs_length(std::span<const int> a, std::span<const int> b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const Sequence> hyps, std::span<const Sequence> refs) {
  check_corpus(hyps.size(), refs.size());
  constexpr double beta2 = 1.2 * 1.2;
  double sum = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (hyps[i].empty() || refs[i].empty()) continue;
    const int lcs = lcs_length(hyps[i], refs[i]);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / hyps[i].size();
    const double r = static_cast<double>(lcs) / refs[i].size();
    sum += (1 + beta2) * p * r / (r + beta2 * p);
  }
  return 100.0 * sum / hyps.size();
}

double distinct_n(std::span<const Sequence> hyps, int n) {
  if (hyps.empty()) throw std::invalid_argument("empty corpus");
  if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
  std::map<Sequence, int64_t> unique;
  int64_t total = 0;
  for (const auto& h : hyps) {
    for (const auto& [gram, count] : ngram_counts(h, n)) {
      unique[gram] += count;
      total += count;
    }
  }
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(unique.size()) / static_cast<double>(total);
}

double exact_match(std::span<const Sequence> hyps, std::span<const Sequence> refs) {
  check_corpus(hyps.size(), refs.size());
  size_t hits = 0;
  for (size_t i = 0; i < hyps.size(); ++i) hits += hyps[i] == refs[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(hyps.size());
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"BLEU-1",     "BLEU-2",     "BLEU-3",     "BLEU-4",
                                                 "ROUGE-L",    "Distinct-1", "Distinct-2", "exact-match"};
  return names;
}

std::map<std::string, double> score_all(std::span<const Sequence> hyps, std::span<const Sequence> refs) {
  std::map<std::string, double> m;
  for (int n = 1; n <= 4; ++n) m["BLEU-" + std::to_string(n)] = bleu(hyps, refs, n);
  m["ROUGE-L"] = rouge_l(hyps, refs);
  m["Distinct-1"] = distinct_n(hyps, 1);
  m["Distinct-2"] = distinct_n(hyps, 2);
  m["exact-match"] = exact_match(hyps, refs);
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile of empty set");
  if (!(q > 0 && q <= 1)) throw std::invalid_argument("percentile: q must be in (0, 1]");
  std::sort(v.begin(), v.end());
  const size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::max<size_t>(rank, 1) - 1];
}

LatencyStats measure_latency(const std::function<DecodeResult(size_t)>& decode_fn, size_t n_samples, int warmup,
                             int reps) {
  if (n_samples == 0) throw std::invalid_argument("measure_latency: no samples");
  if (reps < 1 || warmup < 0) throw std::invalid_argument("measure_latency: bad repetition counts");
  std::vector<double> times;
  times.reserve(reps);
  for (int r = 0; r < warmup + reps; ++r) {
    const size_t sample = static_cast<size_t>(r) % n_samples;
    const auto t0 = std::chrono::steady_clock::now();
    const DecodeResult res = decode_fn(sample);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (res.forward_passes < 1) throw std::logic_error("decode reported no forward pass");
    if (r >= warmup) times.push_back(ms);
  }
  LatencyStats s;
  s.median_ms = median(times);
  s.p90_ms = percentile(times, 0.9);
  s.warmup = warmup;
  s.reps = reps;
  return s;
}

const ModeReport* EvalReport::find(const std::string& mode) const {
  for (const auto& m : modes)
    if (m.mode == mode) return &m;
  return nullptr;
}

ordered_json to_json(const EvalReport& report) {
  ordered_json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["revision"] = report.revision;
  j["bleu_smoothing"] = report.bleu_smoothing;
  j["modes"] = ordered_json::array();
  for (const auto& m : report.modes) {
    ordered_json mj;
    mj["mode"] = m.mode;
    mj["samples"] = m.samples;
    ordered_json metrics;
    for (const auto& name : metric_names())
      if (m.metrics.count(name)) metrics[name] = m.metrics.at(name);
    for (const auto& [k, v] : m.metrics)
      if (!metrics.contains(k)) metrics[k] = v;
    mj["metrics"] = metrics;
    mj["latency"] = {{"median_ms", m.latency.median_ms},
                     {"p90_ms", m.latency.p90_ms},
                     {"warmup", m.latency.warmup},
                     {"reps", m.latency.reps}};
    mj["mean_forward_passes"] = m.mean_forward_passes;
    mj["max_forward_passes"] = m.max_forward_passes;
    mj["forward_passes"] = m.forward_passes;
    mj["output_lengths"] = m.output_lengths;
    j["modes"].push_back(mj);
  }
  return j;
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.revision = j.at("revision").get<std::string>();
  r.bleu_smoothing = j.at("bleu_smoothing").get<std::string>();
  for (const auto& mj : j.at("modes")) {
    ModeReport m;
    m.mode = mj.at("mode").get<std::string>();
    m.samples = mj.at("samples").get<int>();
    for (const auto& [k, v] : mj.at("metrics").items()) m.metrics[k] = v.get<double>();
    const auto& l = mj.at("latency");
    m.latency.median_ms = l.at("median_ms").get<double>();
    m.latency.p90_ms = l.at("p90_ms").get<double>();
    m.latency.warmup = l.at("warmup").get<int>();
    m.latency.reps = l.at("reps").get<int>();
    m.mean_forward_passes = mj.at("mean_forward_passes").get<double>();
    m.max_forward_passes = mj.at("max_forward_passes").get<int>();
    m.forward_passes = mj.at("forward_passes").get<std::vector<int>>();
    m.output_lengths = mj.at("output_lengths").get<std::vector<int>>();
    r.modes.push_back(std::move(m));
  }
  return r;
}

static std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

static std::string render_rows(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) {
      if (i == 0) {
        out << std::left << std::setw(static_cast<int>(width[i])) << r[i];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[i])) << r[i];
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string format_table(const EvalReport& report) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"mode", "BLEU-1", "BLEU-4", "ROUGE-L", "D-1", "D-2", "EM", "median_ms", "p90_ms", "passes"});
  for (const auto& m : report.modes) {
    auto get = [&](const char* k) { return m.metrics.count(k) ? fixed(m.metrics.at(k)) : std::string("-"); };
    rows.push_back({m.mode, get("BLEU-1"), get("BLEU-4"), get("ROUGE-L"), get("Distinct-1"), get("Distinct-2"),
                    get("exact-match"), fixed(m.latency.median_ms, 3), fixed(m.latency.p90_ms, 3),
                    fixed(m.mean_forward_passes)});
  }
  return render_rows(rows);
}

std::string config_hash(const ordered_json& config) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string build_revision() { return BANG_REVISION; }

ModeReport evaluate_mode(std::span<const ParallelPair> pairs, const Parameters& params, const ModelConfig& config,
                         const DecodeOptions& options, const LatencyOptions& latency) {
  if (pairs.empty()) throw std::invalid_argument("empty corpus");
  ModeReport m;
  m.mode = to_string(options.mode);
  m.samples = static_cast<int>(pairs.size());
  std::vector<Sequence> hyps, refs;
  for (const auto& p : pairs) {
    const DecodeResult r = decode(p.source, params, config, options);
    hyps.push_back(r.tokens);
    refs.push_back(p.target);
    m.forward_passes.push_back(r.forward_passes);
    m.output_lengths.push_back(static_cast<int>(r.tokens.size()));
  }
  m.metrics = score_all(hyps, refs);
  m.mean_forward_passes =
      std::accumulate(m.forward_passes.begin(), m.forward_passes.end(), 0.0) / static_cast<double>(pairs.size());
  m.max_forward_passes = *std::max_element(m.forward_passes.begin(), m.forward_passes.end());
  if (latency.enabled) {
    m.latency = measure_latency([&](size_t i) { return decode(pairs[i].source, params, config, options); },
                                pairs.size(), latency.warmup, latency.reps);
  }
  return m;
}

std::vector<GateCheck> gate_checks(const EvalReport& report, const DecodeOptions& options, const GateThresholds& th) {
  std::vector<GateCheck> out;
  const ModeReport* ar = report.find("ar");
  const ModeReport* nar = report.find("nar");
  const ModeReport* semi = report.find("semi");
  if (!ar || !nar || !semi) {
    out.push_back({"modes", false, "report must contain ar, nar and semi"});
    return out;
  }
  bool ar_passes = true;
  const int beam = std::max(1, options.beam);
  for (size_t i = 0; i < ar->forward_passes.size(); ++i) {
    // Greedy: one pass per emitted token plus the one that emitted [EOS],
    // unless max_len was hit. Beam search: at most one pass per live
    // hypothesis per step.
    const int len = ar->output_lengths[i];
    const int passes = ar->forward_passes[i];
    if (beam == 1) {
      ar_passes = ar_passes && (passes == len + 1 || (passes == len && len == options.max_len));
    } else {
      ar_passes = ar_passes && passes >= 1 && passes <= beam * options.max_len;
    }
  }
  out.push_back({"ar_forward_passes", ar_passes,
                 beam == 1 ? "ar passes = output length (+1 for [EOS])" : "ar passes <= beam * max_len"});
  const bool nar_one = std::all_of(nar->forward_passes.begin(), nar->forward_passes.end(), [](int p) { return p == 1; });
  out.push_back({"nar_forward_passes", nar_one, "nar passes = 1"});
  out.push_back({"semi_forward_passes", semi->max_forward_passes <= options.n_ar + 1,
                 "semi max passes " + std::to_string(semi->max_forward_passes) +
                     " <= n_ar+1 = " + std::to_string(options.n_ar + 1)});
  const double ar_em = ar->metrics.at("exact-match");
  const double nar_em = nar->metrics.at("exact-match");
  const double semi_em = semi->metrics.at("exact-match");
  out.push_back({"ar_exact_match", ar_em >= th.ar_exact_match,
                 fixed(ar_em) + " >= " + fixed(th.ar_exact_match)});
  out.push_back({"nar_exact_match", nar_em >= th.nar_exact_match,
                 fixed(nar_em) + " >= " + fixed(th.nar_exact_match)});
  out.push_back({"semi_exact_match", semi_em >= nar_em - th.semi_margin,
                 fixed(semi_em) + " >= " + fixed(nar_em) + " - " + fixed(th.semi_margin)});
  if (ar->latency.reps > 0 && nar->latency.reps > 0) {
    out.push_back({"nar_faster_than_ar", nar->latency.median_ms < ar->latency.median_ms,
                   "median " + fixed(nar->latency.median_ms, 3) + " ms < " + fixed(ar->latency.median_ms, 3) + " ms"});
  }
  return out;
}

const ArmSummary& AblationResult::arm(const std::string& name) const {
  for (const auto& a : arms)
    if (a.arm == name) return a;
  throw std::out_of_range("no ablation arm " + name);
}

std::string AblationResult::to_csv() const {
  std::ostringstream out;
  out << "arm,seed,metric,value\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    for (const auto& [k, v] : r.metrics) out << r.arm << ',' << r.seed << ',' << k << ',' << v << '\n';
  return out.str();
}

std::string AblationResult::table() const {
  std::vector<std::vector<std::string>> out;
  out.push_back({"arm", "BLEU-4", "ROUGE-L", "exact-match"});
  for (const auto& a : arms) {
    auto cell = [&](const char* k) {
      const auto& [m, s] = a.metrics.at(k);
      return fixed(m) + " +- " + fixed(s);
    };
    out.push_back({a.arm, cell("BLEU-4"), cell("ROUGE-L"), cell("exact-match")});
  }
  return render_rows(out);
}

std::vector<std::string> ablation_corpus(const AblationOptions& o, uint64_t seed) {
  SynthOptions so = o.task;
  so.n_pairs = o.corpus_docs * o.pairs_per_doc;
  so.seed = derive_seed(seed, {0xC0A9});
  const SynthDataset ds = synth_task(so);
  std::vector<const ParallelPair*> all;
  for (const auto* split : {&ds.splits.train, &ds.splits.dev, &ds.splits.test})
    for (const auto& p : *split) all.push_back(&p);
  std::vector<std::string> docs;
  for (int d = 0; d < o.corpus_docs; ++d) {
    std::string line;
    for (int k = 0; k < o.pairs_per_doc; ++k) {
      const ParallelPair& p = *all[static_cast<size_t>(d) * o.pairs_per_doc + k];
      if (!line.empty()) line += ' ';
      line += ds.vocab.decode(p.source) + " [SEP] " + ds.vocab.decode(p.target);
    }
    docs.push_back(std::move(line));
  }
  return docs;
}

void validate_ablation(const AblationOptions& o) {
  if (o.pretrain_steps.size() != 4 || o.finetune_steps.size() != 4)
    throw std::invalid_argument("ablation: budgets must list four arms");
  for (int i = 1; i < 4; ++i)
    if (o.finetune_steps[i] != o.finetune_steps[0]) throw std::invalid_argument("ablation: mismatched finetune budgets");
  for (int i = 2; i < 4; ++i)
    if (o.pretrain_steps[i] != o.pretrain_steps[1]) throw std::invalid_argument("ablation: mismatched pretrain budgets");
  if (o.seeds.empty()) throw std::invalid_argument("ablation: no seeds");
  if (o.eval_samples < 1) throw std::invalid_argument("ablation: eval_samples must be >= 1");
}

AblationResult ablation_run(const AblationOptions& o, const LogSink& log) {
  validate_ablation(o);
  const SynthDataset data = synth_task(o.task);
  const auto train_pairs = to_training_pairs(data.splits.train);
  std::vector<ParallelPair> test(data.splits.test.begin(),
                                 data.splits.test.begin() + std::min<size_t>(o.eval_samples, data.splits.test.size()));

  // Ids of the corpus text under the task vocabulary ([SEP] maps to its special id).
  std::vector<std::vector<int>> docs;
  for (const auto& line : ablation_corpus(o, o.task.seed)) docs.push_back(data.vocab.encode(line));

  const TrainMode pretrain_modes[4] = {TrainMode::nar, TrainMode::ar, TrainMode::nar, TrainMode::bang};
  AblationResult result;
  for (uint64_t seed : o.seeds) {
    ModelConfig model = o.model;
    model.seed = seed;
    model.vocab_size = data.vocab.size();
    model.validate();
    for (int arm = 0; arm < 4; ++arm) {
      Parameters params = init_parameters(model);
      TrainSummary summary;
      if (arm > 0 && o.pretrain_steps[arm] > 0) {
        RunConfig rc;
        rc.model = model;
        rc.mode = to_string(pretrain_modes[arm]);
        rc.lr = o.pretrain_lr;
        rc.warmup_steps = o.warmup_steps;
        rc.smoothing = o.smoothing;
        rc.batch_size = o.batch_size;
        rc.max_steps = o.pretrain_steps[arm];
        rc.eval_every = rc.max_steps;
        rc.log_every = 50;
        BatchSampler sampler([&](int64_t e) { return pretrain_epoch(docs, o.span, seed, e); }, seed, o.batch_size);
        OptimizerState state = OptimizerState::fresh(params);
        train_loop(params, model, rc, sampler, state, summary, TrainHooks{log, nullptr, nullptr});
      }
      RunConfig rc;
      rc.model = model;
      rc.mode = "nar";
      rc.lr = o.finetune_lr;
      rc.warmup_steps = o.warmup_steps;
      rc.smoothing = o.smoothing;
      rc.batch_size = o.batch_size;
      rc.max_steps = o.finetune_steps[arm];
      rc.eval_every = rc.max_steps;
      rc.log_every = 50;
      BatchSampler sampler([&](int64_t) { return train_pairs; }, derive_seed(seed, {0xF1E7}), o.batch_size);
      OptimizerState state = OptimizerState::fresh(params);
      train_loop(params, model, rc, sampler, state, summary, TrainHooks{log, nullptr, nullptr});

      std::vector<Sequence> hyps, refs;
      for (const auto& p : test) {
        hyps.push_back(nar_decode(p.source, params, model, o.task.max_len + 1).tokens);
        refs.push_back(p.target);
      }
      AblationRow row{kAblationArms[arm], seed, arm > 0 ? o.pretrain_steps[arm] : 0, o.finetune_steps[arm],
                      score_all(hyps, refs)};
      log_info("ablation " + row.arm + " seed " + std::to_string(seed) + " BLEU-4 " + fixed(row.metrics["BLEU-4"]) +
               " exact-match " + fixed(row.metrics["exact-match"]));
      result.rows.push_back(std::move(row));
    }
  }
  for (const auto& name : kAblationArms) {
    ArmSummary s{name, {}};
    for (const auto& metric : metric_names()) {
      std::vector<double> v;
      for (const auto& r : result.rows)
        if (r.arm == name) v.push_back(r.metrics.at(metric));
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      s.metrics[metric] = {mean, v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0};
    }
    result.arms.push_back(std::move(s));
  }
  return result;
}

}  // namespace bang
