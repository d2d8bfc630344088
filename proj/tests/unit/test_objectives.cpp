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
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "bang/data.hpp"
#include "bang/objectives.hpp"
#include "bang/tokens.hpp"

using namespace bang;

namespace {

ModelConfig small_config(uint64_t seed = 1) {
  ModelConfig c;
  c.vocab_size = 40;
  c.dropout = 0;
  c.seed = seed;
  return c;
}

std::vector<TrainingPair> copy_pairs(int n, uint64_t seed, int min_len = 3, int max_len = 6) {
  SynthOptions o;
  o.kind = SynthKind::copy;
  o.payload_size = 20;
  o.min_len = min_len;
  o.max_len = max_len;
  o.n_pairs = n;
  o.seed = seed;
  const auto ds = synth_task(o);
  std::vector<TrainingPair> out;
  for (const auto* split : {&ds.splits.train, &ds.splits.dev, &ds.splits.test})
    for (const auto& p : *split) out.push_back({p.source, p.target});
  return out;
}

// Average ranks (ties share their mean rank).
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j) + 1;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("cell partition") {
    CHECK(cell_part(1, 1) == CellPart::ar);
    CHECK(cell_part(1, 5) == CellPart::ar);
    CHECK(cell_part(3, 3) == CellPart::nar);
    CHECK(cell_part(2, 4) == CellPart::bridging);
  }

  TEST_CASE("term counts and uniform logits") {
    const double lnV = std::log(40.0);
    {
      StreamLayout L(4, 4);
      const Mat logits = Mat::Zero(L.rows(), 40);
      const auto lb = bang_loss(logits, std::vector<int>{7, 8, 9, 10}, L, 0.0);
      CHECK(lb.ar_terms == 4);
      CHECK(lb.nar_terms == 3);
      CHECK(lb.bridging_terms == 3);
      CHECK(lb.terms() == 10);
      CHECK(lb.total == doctest::Approx(10 * lnV).epsilon(1e-12));
    }
    {
      StreamLayout L(4, 2);
      const auto lb = bang_loss(Mat::Zero(L.rows(), 40), std::vector<int>{7, 8, 9, 10}, L, 0.0);
      CHECK(lb.ar_terms == 4);
      CHECK(lb.nar_terms == 1);
      CHECK(lb.bridging_terms == 2);
    }
    StreamLayout L1(3, 1);
    CHECK(ar_loss(Mat::Zero(L1.rows(), 40), std::vector<int>{7, 8, 9}, 0.0) == doctest::Approx(3 * lnV));
    CHECK(nar_loss(Mat::Zero(5, 40), std::vector<int>{7, 8, 9, 10, kEos}, 0.0) == doctest::Approx(5 * lnV));
  }

  TEST_CASE("decomposition identity for all small layouts") {
    std::mt19937 rng(11);
    std::normal_distribution<float> nd(0, 2);
    for (int T = 1; T <= 12; ++T)
      for (int n = 1; n <= T; ++n) {
        StreamLayout L(T, n);
        Mat logits(L.rows(), 40);
        for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = nd(rng);
        std::vector<int> y;
        for (int t = 0; t < T; ++t) y.push_back(6 + rng() % 30);
        const auto lb = bang_loss(logits, y, L, 0.1);
        CHECK(lb.total == lb.ar_part + lb.bridging_part + lb.nar_part);
        int expect = 0;
        for (int t = 1; t <= T; ++t) expect += std::min(t, n);
        CHECK(lb.terms() == expect);
      }
  }

  TEST_CASE("bang_loss preconditions") {
    StreamLayout L(3, 2);
    CHECK_THROWS_AS(bang_loss(Mat::Zero(L.rows(), 40), std::vector<int>{7, 8}, L, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(bang_loss(Mat::Zero(L.rows() - 1, 40), std::vector<int>{7, 8, 9}, L, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(bang_loss(Mat::Zero(L.rows(), 40), std::vector<int>{7, 8, 9}, L, 1.0), std::invalid_argument);
  }

  TEST_CASE("ar_loss equals bang_loss with one stream and the causal reference") {
    const auto c = small_config(2);
    const auto p = init_parameters(c);
    const auto enc = encode(std::vector<int>{7, 8, 9}, p, c);
    const std::vector<int> y = {10, 11, 12, kEos};
    StreamLayout L(4, 1);
    const Mat logits = nstream_decoder_forward(y, enc, L, p, c);
    const double a = ar_loss(logits, y, 0.1);
    CHECK(a == bang_loss(logits, y, L, 0.1).total);
    double ref = 0;
    for (int t = 1; t <= 4; ++t) {
      std::vector<int> pre(y.begin(), y.begin() + t - 1);
      pre.push_back(kMask);
      const Mat o = oracle_forward(pre, enc, p, c);
      ref += smoothed_cross_entropy(std::span<const Real>(o.data(), o.cols()), y[t - 1], 0.1);
    }
    CHECK(a == doctest::Approx(ref).epsilon(1e-5));
  }

  TEST_CASE("nar_loss equals the diagonal of an all-mask n-stream pass") {
    const auto c = small_config(3);
    const auto p = init_parameters(c);
    const auto enc = encode(std::vector<int>{7, 8, 9}, p, c);
    const std::vector<int> y = {10, 11, 12, 13, kEos};
    const int T = 5;
    const std::vector<int> masks(T, kMask);
    const Mat causal = causal_decoder_forward(masks, enc, p, c);
    const double nar = nar_loss(causal, y, 0.1);
    StreamLayout L(T, T);
    const Mat full = nstream_decoder_forward(masks, enc, L, p, c);
    double diag = 0;
    for (int t = 1; t <= T; ++t) {
      const Mat row = full.row(L.row_index(t, t));
      diag += smoothed_cross_entropy(std::span<const Real>(row.data(), row.cols()), y[t - 1], 0.1);
    }
    CHECK(nar == doctest::Approx(diag).epsilon(1e-5));
    // The logits do not depend on the targets.
    std::vector<int> z = y;
    z[0] = 20;
    CHECK(nar_loss(causal, z, 0.1) != nar);
  }

  TEST_CASE("label smoothing") {
    std::mt19937 rng(4);
    std::normal_distribution<float> nd(0, 3);
    std::vector<Real> logits(40);
    for (auto& l : logits) l = nd(rng);
    double lse = 0, mx = *std::max_element(logits.begin(), logits.end());
    for (Real l : logits) lse += std::exp(double(l) - mx);
    lse = mx + std::log(lse);
    CHECK(smoothed_cross_entropy(logits, 9, 0.0) == doctest::Approx(lse - logits[9]).epsilon(1e-9));
    for (double eps : {0.05, 0.1, 0.3}) {
      const double q_hot = 1 - eps + eps / 40, q_other = eps / 40;
      const double entropy = -q_hot * std::log(q_hot) - 39 * q_other * std::log(q_other);
      CHECK(smoothed_cross_entropy(logits, 9, eps) >= entropy);
    }
  }

  TEST_CASE("span lengths and masking") {
    CHECK(span_length(64, 0.15, 9) == 9);
    CHECK(span_length(20, 0.15, 9) == 3);
    CHECK(span_length(3, 0.15, 9) == 1);
    std::vector<std::vector<int>> docs;
    std::mt19937 rng(5);
    for (int d = 0; d < 20; ++d) {
      std::vector<int> doc(10 + rng() % 150);
      for (auto& t : doc) t = 6 + rng() % 30;
      docs.push_back(doc);
    }
    const auto a = span_mask_batches(docs, SpanMaskOptions{}, 7);
    const auto b = span_mask_batches(docs, SpanMaskOptions{}, 7);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      const auto& ex = a[i];
      CHECK(ex.source == b[i].source);
      CHECK(ex.span_start == b[i].span_start);
      const auto& doc = docs[ex.document];
      const int start = ex.block * 64;
      const int len = std::min<int>(64, static_cast<int>(doc.size()) - start);
      CHECK(len >= 16);
      CHECK(static_cast<int>(ex.source.size()) == len);
      const int span = span_length(len, 0.15, 9);
      CHECK(static_cast<int>(ex.target.size()) == span + 1);
      CHECK(ex.target.back() == kEos);
      CHECK(ex.span_start >= 0);
      CHECK(ex.span_start <= len - span);
      std::vector<int> rebuilt = ex.source;
      for (int k = 0; k < span; ++k) {
        CHECK(rebuilt[ex.span_start + k] == kMask);
        CHECK(ex.target[k] != kMask);
        rebuilt[ex.span_start + k] = ex.target[k];
      }
      CHECK(std::equal(rebuilt.begin(), rebuilt.end(), doc.begin() + start));
    }
    CHECK_THROWS_AS(span_mask_batches({}, SpanMaskOptions{}, 1), std::invalid_argument);
  }

  TEST_CASE("block of 20 tokens masks 3 with offsets in range") {
    std::vector<std::vector<int>> docs = {std::vector<int>(20, 9)};
    std::set<int> offsets;
    for (uint64_t s = 0; s < 300; ++s) {
      const auto ex = span_mask_batches(docs, SpanMaskOptions{}, s);
      REQUIRE(ex.size() == 1);
      CHECK(ex[0].target.size() == 4);
      offsets.insert(ex[0].span_start);
    }
    CHECK(*offsets.begin() == 0);
    CHECK(*offsets.rbegin() == 17);
  }

  TEST_CASE("learning-rate schedule") {
    CHECK(learning_rate(0, 1e-4, 1000) == doctest::Approx(1e-7));
    CHECK(learning_rate(1000, 1e-4, 1000) == doctest::Approx(1e-4));
    CHECK(learning_rate(500, 1e-4, 1000) == doctest::Approx(5e-5));
    CHECK(learning_rate(4000, 1e-4, 1000) == doctest::Approx(5e-5));
  }

  TEST_CASE("bang parts are positive on random init") {
    auto c = small_config(6);
    c.dropout = 0.1;
    auto p = init_parameters(c);
    auto state = OptimizerState::fresh(p);
    StepOptions o;
    o.mode = TrainMode::bang;
    const auto batch = copy_pairs(8, 3);
    const auto r = train_step(p, c, batch, o, state);
    CHECK(r.loss.ar_part > 0);
    CHECK(r.loss.bridging_part > 0);
    CHECK(r.loss.nar_part > 0);
    CHECK(state.step == 1);
  }

  TEST_CASE("non-finite loss names the batch index") {
    auto c = small_config(7);
    auto p = init_parameters(c);
    p.at("decoder.ln_final.gain").data(0, 0) = std::numeric_limits<Real>::quiet_NaN();
    auto state = OptimizerState::fresh(p);
    const auto batch = copy_pairs(4, 4);
    CHECK_THROWS_WITH_AS(train_step(p, c, batch, StepOptions{}, state), doctest::Contains("batch index 0"),
                         std::runtime_error);
  }

  TEST_CASE("AR training on copy drives loss below ln(V)/4") {
    auto c = small_config(8);
    c.dropout = 0;
    auto p = init_parameters(c);
    auto state = OptimizerState::fresh(p);
    StepOptions o;
    o.mode = TrainMode::ar;
    o.peak_lr = 2e-3;
    o.warmup_steps = 20;
    o.smoothing = 0.0;
    const auto data = copy_pairs(2000, 9);
    std::mt19937 rng(1);
    for (int step = 0; step < 200; ++step) {
      std::vector<TrainingPair> batch;
      for (int i = 0; i < 16; ++i) batch.push_back(data[rng() % data.size()]);
      train_step(p, c, batch, o, state);
    }
    std::vector<TrainingPair> held(data.end() - 100, data.end());
    const double loss = evaluate_loss(p, c, held, TrainMode::ar, 0.0).per_token();
    MESSAGE("per-token AR loss after 200 steps: " << loss);
    CHECK(loss < std::log(40.0) / 4);
  }

  TEST_CASE("mean per-cell loss rises with the number of masked predecessors") {
    // Chain task: each target token continues the previous one (+1) with
    // probability 0.8, so golden context carries most of the information and
    // the source carries none.
    auto c = small_config(10);
    c.n_streams = 4;
    c.dropout = 0;
    std::mt19937 rng(2);
    auto chain = [&]() {
      TrainingPair p{{7}, {}};
      int tok = rng() % 30;
      for (int t = 0; t < 6; ++t) {
        if (t > 0) tok = (rng() % 10 < 8) ? (tok + 1) % 30 : static_cast<int>(rng() % 30);
        p.target.push_back(6 + tok);
      }
      return p;
    };
    auto p = init_parameters(c);
    auto state = OptimizerState::fresh(p);
    StepOptions o;
    o.mode = TrainMode::bang;
    o.peak_lr = 2e-3;
    o.warmup_steps = 20;
    for (int step = 0; step < 150; ++step) {
      std::vector<TrainingPair> batch;
      for (int i = 0; i < 16; ++i) batch.push_back(chain());
      train_step(p, c, batch, o, state);
    }
    // Positions t >= n so every stream is averaged over the same positions.
    std::vector<double> sum(c.n_streams + 1, 0.0), count(c.n_streams + 1, 0.0);
    for (int i = 0; i < 100; ++i) {
      const auto pair = chain();
      const auto enc = encode(pair.source, p, c);
      std::vector<int> y = pair.target;
      y.push_back(kEos);
      const int T = static_cast<int>(y.size());
      StreamLayout L(T, c.n_streams);
      const Mat lg = nstream_decoder_forward(y, enc, L, p, c);
      for (int s = 1; s <= c.n_streams; ++s)
        for (int t = c.n_streams; t < T; ++t) {
          const Mat row = lg.row(L.row_index(s, t));
          sum[s] += smoothed_cross_entropy(std::span<const Real>(row.data(), row.cols()), y[t - 1], 0.0);
          count[s] += 1;
        }
    }
    std::vector<double> xs, ys;
    for (int s = 1; s <= c.n_streams; ++s) {
      xs.push_back(s);
      ys.push_back(sum[s] / count[s]);
      MESSAGE("stream " << s << " mean loss " << ys.back());
    }
    const double rho = spearman(xs, ys);
    MESSAGE("spearman(stream, mean loss) = " << rho);
    CHECK(rho > 0);
  }
}
