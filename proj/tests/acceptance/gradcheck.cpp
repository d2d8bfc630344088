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

// Central finite-difference check of the analytic gradients, built in double
// precision. Prints one summary line; exit code 0 on success.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "bang/objectives.hpp"
#include "bang/tokens.hpp"

using namespace bang;

namespace {

constexpr double kStep = 1e-3;
constexpr double kAbsTol = 1e-4;
constexpr double kRelTol = 1e-2;
constexpr int kBatches = 5;
constexpr int kEntriesPerTensor = 40;

double batch_loss(const Parameters& p, const ModelConfig& c, const std::vector<TrainingPair>& batch, TrainMode mode,
                  Gradients* grads) {
  double total = 0;
  for (const auto& pair : batch) total += pair_loss(p, c, pair, mode, 0.1, 1.0, grads, false, 0).total;
  return total;
}

}  // namespace

int main() {
  static_assert(sizeof(Real) == sizeof(double), "gradcheck must be built with double precision");
  ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ffn = 32;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.max_positions = 16;
  c.n_streams = 4;
  c.rel_buckets = 8;
  c.rel_max_distance = 16;
  c.dropout = 0;
  c.seed = 5;

  std::mt19937_64 rng(2024);
  const TrainMode modes[kBatches] = {TrainMode::bang, TrainMode::bang, TrainMode::ar, TrainMode::nar, TrainMode::bang};
  double worst_abs = 0, worst_rel = 0;
  long checked = 0, failed = 0;
  std::vector<std::string> tensors_seen;

  for (int b = 0; b < kBatches; ++b) {
    c.seed = 5 + b;
    Parameters p = init_parameters(c);
    // Perturb the unit gains and zero biases so every path carries signal.
    std::normal_distribution<double> nd(0, 0.1);
    for (size_t i = 0; i < p.size(); ++i)
      for (Eigen::Index k = 0; k < p.tensor(i).data.size(); ++k) p.tensor(i).data.data()[k] += nd(rng);

    std::vector<TrainingPair> batch;
    for (int k = 0; k < 2; ++k) {
      TrainingPair pair;
      const int slen = 2 + rng() % 5, tlen = 1 + rng() % 5;
      for (int i = 0; i < slen; ++i) pair.source.push_back(kNumSpecials + rng() % (c.vocab_size - kNumSpecials));
      for (int i = 0; i < tlen; ++i) pair.target.push_back(kNumSpecials + rng() % (c.vocab_size - kNumSpecials));
      batch.push_back(pair);
    }

    Gradients g = zero_gradients(p);
    batch_loss(p, c, batch, modes[b], &g);
    for (size_t t = 0; t < p.size(); ++t) {
      if (b == 0) tensors_seen.push_back(p.name(t));
      Mat& w = p.tensor(t).data;
      std::vector<Eigen::Index> entries(w.size());
      for (Eigen::Index k = 0; k < w.size(); ++k) entries[k] = k;
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(std::min<size_t>(entries.size(), kEntriesPerTensor));
      for (Eigen::Index k : entries) {
        const double orig = w.data()[k];
        w.data()[k] = orig + kStep;
        const double up = batch_loss(p, c, batch, modes[b], nullptr);
        w.data()[k] = orig - kStep;
        const double down = batch_loss(p, c, batch, modes[b], nullptr);
        w.data()[k] = orig;
        const double numeric = (up - down) / (2 * kStep);
        const double analytic = g[t].data()[k];
        const double abs_err = std::abs(numeric - analytic);
        const double rel_err = abs_err / std::max(std::abs(numeric) + std::abs(analytic), 1e-12);
        ++checked;
        if (abs_err > kAbsTol && rel_err > kRelTol) {
          ++failed;
          if (failed <= 10)
            std::fprintf(stderr, "mismatch batch %d %s[%ld]: analytic %.8g numeric %.8g\n", b, p.name(t).c_str(),
                         static_cast<long>(k), analytic, numeric);
        }
        worst_abs = std::max(worst_abs, abs_err);
        if (abs_err > kAbsTol) worst_rel = std::max(worst_rel, rel_err);
      }
    }
  }
  std::printf("%s gradcheck: %ld entries over %zu tensors, %ld failures, max abs err %.3g, max rel err above abs tol %.3g\n",
              failed == 0 ? "PASS" : "FAIL", checked, tensors_seen.size(), failed, worst_abs, worst_rel);
  return failed == 0 ? 0 : 1;
}
