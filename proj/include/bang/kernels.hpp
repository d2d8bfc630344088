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

#include <cmath>
#include <span>

#include "bang/real.hpp"

// Dense row kernels shared by the differentiable graph and the incremental
// inference path.
namespace bang::kernels {

inline constexpr Real kLayerNormEps = Real(1e-5);

// y = (x - mean) * rstd * gain + bias per row. xhat/rstd are saved when given.
void layer_norm(const Mat& x, const RowVec& gain, const RowVec& bias, Mat& y, Mat* xhat = nullptr,
                Eigen::Matrix<Real, Eigen::Dynamic, 1>* rstd = nullptr);

inline Real gelu(Real x) {
  constexpr Real k = Real(0.7978845608028654);
  return Real(0.5) * x * (Real(1) + std::tanh(k * (x + Real(0.044715) * x * x * x)));
}

inline Real gelu_grad(Real x) {
  constexpr Real k = Real(0.7978845608028654);
  const Real inner = k * (x + Real(0.044715) * x * x * x);
  const Real th = std::tanh(inner);
  const Real dinner = k * (Real(1) + Real(3 * 0.044715) * x * x);
  return Real(0.5) * (Real(1) + th) + Real(0.5) * x * (Real(1) - th * th) * dinner;
}

// In-place numerically stable softmax over each row.
void softmax_rows(Mat& s);

// log-sum-exp of one row, accumulated in double.
double log_sum_exp(std::span<const Real> row);

}  // namespace bang::kernels
