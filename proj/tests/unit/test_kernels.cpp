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

#include <cmath>
#include <random>

#include "bang/graph.hpp"
#include "bang/kernels.hpp"
#include "bang/masking.hpp"
#include "bang/model.hpp"

using namespace bang;

namespace {

Mat random_mat(int r, int c, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(nd(rng));
  return m;
}

// softmax(q k^T / sqrt(d) + bias) v with plain loops in double.
std::vector<std::vector<double>> scalar_attention(const Mat& q, const Mat& k, const Mat& v, const Mat& bias) {
  const int m = q.rows(), n = k.rows(), d = q.cols();
  std::vector<std::vector<double>> out(m, std::vector<double>(v.cols(), 0.0));
  for (int i = 0; i < m; ++i) {
    std::vector<double> s(n);
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      double dot = 0;
      for (int c = 0; c < d; ++c) dot += double(q(i, c)) * double(k(j, c));
      s[j] = dot / std::sqrt(double(d)) + double(bias(i, j));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (int j = 0; j < n; ++j) z += std::exp(s[j] - mx);
    for (int j = 0; j < n; ++j) {
      const double p = std::exp(s[j] - mx) / z;
      for (int c = 0; c < v.cols(); ++c) out[i][c] += p * double(v(j, c));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("attention with one visible key returns that value row") {
    std::mt19937 rng(3);
    const Mat q = random_mat(3, 4, rng), k = random_mat(5, 4, rng), v = random_mat(5, 4, rng);
    Mat bias = Mat::Constant(3, 5, kMaskedScore);
    bias(0, 2) = 0;
    bias(1, 4) = 0;
    bias(2, 0) = 0;
    const Mat o = attention(q, k, v, bias);
    CHECK((o.row(0) - v.row(2)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((o.row(1) - v.row(4)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((o.row(2) - v.row(0)).cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("zero queries average the values") {
    std::mt19937 rng(4);
    const Mat q = Mat::Zero(2, 4), k = random_mat(6, 4, rng), v = random_mat(6, 3, rng);
    const Mat o = attention(q, k, v, Mat::Zero(2, 6));
    const RowVec mean = v.colwise().mean();
    for (int i = 0; i < 2; ++i) CHECK((o.row(i) - mean).cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("attention matches a scalar reference") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      const Mat q = random_mat(3, 4, rng), k = random_mat(4, 4, rng), v = random_mat(4, 4, rng);
      const Mat bias = random_mat(3, 4, rng, 0.5);
      const Mat o = attention(q, k, v, bias);
      const auto ref = scalar_attention(q, k, v, bias);
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 4; ++c) CHECK(std::abs(o(i, c) - ref[i][c]) <= 1e-6);
    }
  }

  TEST_CASE("multi-head attention with mask, relative bias and blocks matches per-head reference") {
    std::mt19937 rng(6);
    const int T = 3, n = 2, heads = 2, dh = 3, rows = (n + 1) * T;
    StreamLayout L(T, n);
    auto mask = std::make_shared<Mat>(build_mask(L).bias);
    auto buckets = std::make_shared<IndexMat>(rows, rows);
    std::uniform_int_distribution<int> bd(0, 3);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j) (*buckets)(i, j) = bd(rng);
    const Mat table = random_mat(heads, 4, rng);
    const Mat q = random_mat(rows, heads * dh, rng), k = random_mat(rows, heads * dh, rng),
              v = random_mat(rows, heads * dh, rng);
    Graph g(false);
    AttentionBias ab{mask, buckets, g.constant(table), T};
    const Mat out = g.value(ops::multi_head_attention(g, g.constant(q), g.constant(k), g.constant(v), heads, ab));
    for (int h = 0; h < heads; ++h) {
      Mat bias(rows, rows);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < rows; ++j) {
          const bool cached = j < (i / T + 1) * T;
          bias(i, j) = cached ? (*mask)(i, j) + table(h, (*buckets)(i, j)) : kMaskedScore;
        }
      const auto ref = scalar_attention(q.middleCols(h * dh, dh), k.middleCols(h * dh, dh),
                                        v.middleCols(h * dh, dh), bias);
      for (int i = 0; i < rows; ++i) {
        if (!L.valid_row(i)) continue;
        for (int c = 0; c < dh; ++c) CHECK(std::abs(out(i, h * dh + c) - ref[i][c]) <= 1e-5);
      }
    }
  }

  TEST_CASE("layer norm") {
    std::mt19937 rng(7);
    const Mat x = random_mat(4, 8, rng, 3.0);
    const RowVec gain = random_mat(1, 8, rng), bias = random_mat(1, 8, rng);
    Mat y;
    kernels::layer_norm(x, gain, bias, y);
    for (int i = 0; i < 4; ++i) {
      double mean = 0, var = 0;
      for (int c = 0; c < 8; ++c) mean += x(i, c);
      mean /= 8;
      for (int c = 0; c < 8; ++c) var += (x(i, c) - mean) * (x(i, c) - mean);
      var /= 8;
      for (int c = 0; c < 8; ++c) {
        const double ref = (x(i, c) - mean) / std::sqrt(var + 1e-5) * gain(c) + bias(c);
        CHECK(std::abs(y(i, c) - ref) <= 1e-5);
      }
    }
  }

  TEST_CASE("softmax rows and log-sum-exp") {
    Mat s(2, 3);
    s << 1, 2, 3, 1000, 1000, 1000;
    kernels::softmax_rows(s);
    CHECK(s.row(0).sum() == doctest::Approx(1.0));
    CHECK(s(1, 0) == doctest::Approx(1.0 / 3));
    const std::vector<Real> big = {Real(1000), Real(1000)};
    CHECK(kernels::log_sum_exp(big) == doctest::Approx(1000 + std::log(2.0)));
  }

  TEST_CASE("gelu derivative agrees with central differences") {
    for (double x = -4; x <= 4; x += 0.37) {
      const double h = 1e-3;
      const double fd = (kernels::gelu(Real(x + h)) - kernels::gelu(Real(x - h))) / (2 * h);
      CHECK(std::abs(kernels::gelu_grad(Real(x)) - fd) <= 2e-3);
    }
    CHECK(kernels::gelu(0) == 0);
  }
}
