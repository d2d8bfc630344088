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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bang/bench.hpp"
#include "common/oracles.hpp"

using namespace bang;

namespace {

Sequence words(Interner& in, const std::string& text) {
  const auto w = split_whitespace(text);
  return in.intern(w);
}

ModeReport mode_report(const std::string& name, double em, std::vector<int> passes, std::vector<int> lengths,
                       double median_ms) {
  ModeReport m;
  m.mode = name;
  m.metrics["exact-match"] = em;
  m.forward_passes = passes;
  m.output_lengths = lengths;
  m.max_forward_passes = *std::max_element(passes.begin(), passes.end());
  m.samples = static_cast<int>(passes.size());
  m.latency = {median_ms, median_ms, 5, 50};
  return m;
}

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("worked metric examples") {
    Interner in;
    const std::vector<Sequence> h1 = {words(in, "the the the the")};
    const std::vector<Sequence> r1 = {words(in, "the cat")};
    const auto d = bleu_detail(h1, r1, 1);
    CHECK(d.matches[0] == 1);
    CHECK(d.totals[0] == 4);
    CHECK(d.score == doctest::Approx(25.0));

    const std::vector<Sequence> same = {words(in, "a b c d e")};
    CHECK(bleu(same, same) == doctest::Approx(100.0));
    CHECK(rouge_l(same, same) == doctest::Approx(100.0));
    CHECK(exact_match(same, same) == 100.0);

    const std::vector<Sequence> h2 = {words(in, "a b c d")};
    const std::vector<Sequence> r2 = {words(in, "a c d e")};
    CHECK(lcs_length(h2[0], r2[0]) == 3);
    CHECK(rouge_l(h2, r2) == doctest::Approx(75.0));

    const std::vector<Sequence> h3 = {words(in, "a a b")};
    CHECK(distinct_n(h3, 1) == doctest::Approx(200.0 / 3));
    CHECK(distinct_n(h3, 2) == doctest::Approx(100.0));
    CHECK(distinct_n(std::vector<Sequence>{Sequence{}}, 2) == 0.0);

    // Short hypotheses pay the brevity penalty.
    const std::vector<Sequence> h4 = {words(in, "a b")};
    const std::vector<Sequence> r4 = {words(in, "a b c d")};
    const auto d4 = bleu_detail(h4, r4, 2);
    CHECK(d4.brevity_penalty == doctest::Approx(std::exp(-1.0)));
    CHECK(d4.precisions[1] == doctest::Approx(1.0));
  }

  TEST_CASE("empty corpora are rejected") {
    const std::vector<Sequence> none;
    CHECK_THROWS_WITH(bleu(none, none), "empty corpus");
    CHECK_THROWS_WITH(rouge_l(none, none), "empty corpus");
    CHECK_THROWS_WITH(distinct_n(none, 1), "empty corpus");
    CHECK_THROWS_WITH(exact_match(none, none), "empty corpus");
    const std::vector<Sequence> one = {{1}};
    const std::vector<Sequence> two = {{1}, {2}};
    CHECK_THROWS_AS(bleu(one, two), std::invalid_argument);
  }

  TEST_CASE("metrics agree with independent oracles on random corpora") {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      const int docs = 1 + rng() % 5;
      const int alphabet = 2 + rng() % 6;
      std::vector<Sequence> hyps, refs;
      for (int i = 0; i < docs; ++i) {
        Sequence h(rng() % 9), r(1 + rng() % 9);
        for (auto& t : h) t = rng() % alphabet;
        for (auto& t : r) t = rng() % alphabet;
        hyps.push_back(h);
        refs.push_back(r);
      }
      for (int n = 1; n <= 4; ++n) CHECK(bleu(hyps, refs, n) == doctest::Approx(oracle::bleu(hyps, refs, n)).epsilon(1e-9));
      CHECK(rouge_l(hyps, refs) == doctest::Approx(oracle::rouge_l(hyps, refs)).epsilon(1e-9));
      CHECK(distinct_n(hyps, 1) == doctest::Approx(oracle::distinct(hyps, 1)).epsilon(1e-9));
      CHECK(distinct_n(hyps, 2) == doctest::Approx(oracle::distinct(hyps, 2)).epsilon(1e-9));
    }
  }

  TEST_CASE("score_all keys") {
    const std::vector<Sequence> h = {{1, 2, 3}};
    const auto m = score_all(h, h);
    for (const auto& name : metric_names()) CHECK(m.count(name) == 1);
    CHECK(m.size() == metric_names().size());
  }

  TEST_CASE("median and nearest-rank percentile") {
    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    std::vector<double> v;
    for (int i = 1; i <= 10; ++i) v.push_back(i);
    CHECK(percentile(v, 0.9) == 9);
    CHECK(percentile(v, 1.0) == 10);
    CHECK(percentile(v, 0.01) == 1);
    CHECK_THROWS(percentile({}, 0.5));
    CHECK_THROWS(percentile(v, 0.0));
  }

  TEST_CASE("latency harness discards warmup") {
    int calls = 0;
    std::vector<size_t> seen;
    const auto stats = measure_latency(
        [&](size_t i) {
          ++calls;
          seen.push_back(i);
          DecodeResult r;
          r.forward_passes = 1;
          return r;
        },
        3, 5, 20);
    CHECK(calls == 25);
    CHECK(seen[4] == 1);
    CHECK(stats.reps == 20);
    CHECK(stats.warmup == 5);
    CHECK(stats.p90_ms >= stats.median_ms);
    CHECK_THROWS(measure_latency([](size_t) { return DecodeResult{}; }, 1, 0, 1));
  }

  TEST_CASE("report JSON round trip and table") {
    EvalReport r;
    r.config_hash = config_hash(nlohmann::ordered_json{{"a", 1}});
    r.seed = 7;
    r.revision = build_revision();
    r.modes.push_back(mode_report("ar", 97.5, {3, 4}, {2, 3}, 2.0));
    r.modes.back().metrics["BLEU-4"] = 88.25;
    const auto back = eval_report_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(to_json(back).dump() == to_json(r).dump());
    CHECK(back.bleu_smoothing == kBleuSmoothing);
    CHECK(format_table(r).find("ar") != std::string::npos);
    CHECK(config_hash(nlohmann::ordered_json{{"a", 1}}) == r.config_hash);
    CHECK(config_hash(nlohmann::ordered_json{{"a", 2}}) != r.config_hash);
  }

  TEST_CASE("bench gate checks") {
    DecodeOptions o;
    o.beam = 1;
    o.max_len = 4;
    o.n_ar = 2;
    EvalReport r;
    r.modes.push_back(mode_report("ar", 96, {3, 4, 4}, {2, 3, 4}, 5.0));
    r.modes.push_back(mode_report("nar", 60, {1, 1, 1}, {2, 3, 3}, 1.0));
    r.modes.push_back(mode_report("semi", 59, {3, 1, 2}, {2, 3, 3}, 2.0));
    auto checks = gate_checks(r, o, GateThresholds{});
    for (const auto& c : checks) CHECK_MESSAGE(c.pass, c.name);
    CHECK(checks.size() == 7);

    r.modes[0].forward_passes[0] = 7;
    r.modes[1].forward_passes[2] = 2;
    r.modes[2].max_forward_passes = 4;
    r.modes[2].metrics["exact-match"] = 50;
    r.modes[1].latency.median_ms = 9;
    checks = gate_checks(r, o, GateThresholds{});
    for (const auto& c : checks)
      if (c.name != "ar_exact_match" && c.name != "nar_exact_match") CHECK_FALSE_MESSAGE(c.pass, c.name);

    EvalReport missing;
    missing.modes.push_back(mode_report("ar", 96, {1}, {0}, 1));
    CHECK_FALSE(gate_checks(missing, o, GateThresholds{}).front().pass);
  }

  TEST_CASE("ablation budgets and CSV") {
    AblationOptions o;
    o.finetune_steps = {600, 600, 500, 600};
    CHECK_THROWS_WITH(validate_ablation(o), "ablation: mismatched finetune budgets");
    o.finetune_steps = {600, 600, 600, 600};
    o.pretrain_steps = {0, 600, 600, 300};
    CHECK_THROWS_WITH(validate_ablation(o), "ablation: mismatched pretrain budgets");
    o.pretrain_steps = {0, 600, 600, 600};
    CHECK_NOTHROW(validate_ablation(o));

    const auto docs = ablation_corpus(o, 1);
    CHECK(docs.size() == 2000);
    CHECK(docs[0].find("[SEP]") != std::string::npos);
    CHECK(docs == ablation_corpus(o, 1));
  }

  TEST_CASE("tiny ablation run") {
    AblationOptions o;
    o.task.n_pairs = 200;
    o.task.payload_size = 8;
    o.model.d_model = 16;
    o.model.n_heads = 2;
    o.model.d_ffn = 32;
    o.model.enc_layers = 1;
    o.model.dec_layers = 1;
    o.seeds = {1, 2};
    o.pretrain_steps = {0, 2, 2, 2};
    o.finetune_steps = {2, 2, 2, 2};
    o.batch_size = 4;
    o.corpus_docs = 20;
    o.eval_samples = 5;
    const auto res = ablation_run(o);
    CHECK(res.rows.size() == 8);
    CHECK(res.arms.size() == 4);
    const auto csv = res.to_csv();
    CHECK(csv.rfind("arm,seed,metric,value\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8 * static_cast<int>(metric_names().size()));
    CHECK(res.table().find("d_bang_pretrain") != std::string::npos);
    CHECK_NOTHROW(res.arm("c_nar_pretrain"));
  }
}
