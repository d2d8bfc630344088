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

#include "bang/kernels.hpp"

#include <algorithm>
#include <limits>

namespace bang::kernels {

void layer_norm(const Mat& x, const RowVec& gain, const RowVec& bias, Mat& y, Mat* xhat,
                Eigen::Matrix<Real, Eigen::Dynamic, 1>* rstd) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  y.resize(rows, cols);
  if (xhat) xhat->resize(rows, cols);
  if (rstd) rstd->resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = x.row(r);
    const Real mean = row.mean();
    const Real var = (row.array() - mean).square().mean();
    const Real inv = Real(1) / std::sqrt(var + kLayerNormEps);
    if (xhat) {
      xhat->row(r) = (row.array() - mean) * inv;
      y.row(r) = xhat->row(r).cwiseProduct(gain) + bias;
    } else {
      y.row(r) = ((row.array() - mean) * inv).matrix().cwiseProduct(gain) + bias;
    }
    if (rstd) (*rstd)(r) = inv;
  }
}

void softmax_rows(Mat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const Real mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

double log_sum_exp(std::span<const Real> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Real v : row) mx = std::max(mx, static_cast<double>(v));
  double sum = 0;
  for (Real v : row) sum += std::exp(static_cast<double>(v) - mx);
  return mx + std::log(sum);
}

}  // namespace bang::kernels
