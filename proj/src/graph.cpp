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

#include "bang/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "bang/kernels.hpp"

namespace bang {

Var Graph::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), nullptr, Mat(), false, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(const Mat& value) {
  nodes_.push_back(Node{Mat(), &value, Mat(), record_, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Graph::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Mat& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Mat& val = n.external ? *n.external : n.value;
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Var Graph::push(Mat value, bool needs_grad, Backward back) {
  needs_grad = needs_grad && record_;
  nodes_.push_back(Node{std::move(value), nullptr, Mat(), needs_grad, needs_grad ? std::move(back) : nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var scalar) {
  if (!record_) throw std::logic_error("backward on a non-recording graph");
  const Mat& v = value(scalar);
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  grad(scalar)(0, 0) += Real(1);
  for (int id = scalar.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && n.grad.size() > 0) n.back(*this, Var{id});
  }
}

void Graph::enable_dropout(Real rate, uint64_t seed) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate must be in [0,1)");
  dropout_ = record_ ? rate : Real(0);
  rng_.seed(seed);
}

namespace ops {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Entries are 1/(1-rate) with probability 1-rate, else 0.
void fill_dropout_mask(Mat& mask, Real rate, std::mt19937_64& rng) {
  const auto threshold = static_cast<uint64_t>(static_cast<long double>(rate) * 18446744073709551616.0L);
  const Real scale = Real(1) / (Real(1) - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng() >= threshold ? scale : Real(0);
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require(A.cols() == B.rows(), "matmul: shape mismatch");
  Mat out = A * B;
  return g.push(std::move(out), g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    if (g.needs_grad(a)) g.grad(a).noalias() += dO * g.value(b).transpose();
    if (g.needs_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * dO;
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require(A.cols() == B.cols(), "matmul_nt: shape mismatch");
  Mat out = A * B.transpose();
  return g.push(std::move(out), g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    if (g.needs_grad(a)) g.grad(a).noalias() += dO * g.value(b);
    if (g.needs_grad(b)) g.grad(b).noalias() += dO.transpose() * g.value(a);
  });
}

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Mat& X = g.value(x);
  const Mat& W = g.value(weight);
  const Mat& B = g.value(bias);
  require(X.cols() == W.rows() && B.rows() == 1 && B.cols() == W.cols(), "linear: shape mismatch");
  Mat out = X * W;
  out.rowwise() += B.row(0);
  const bool ng = g.needs_grad(x) || g.needs_grad(weight) || g.needs_grad(bias);
  return g.push(std::move(out), ng, [x, weight, bias](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    if (g.needs_grad(x)) g.grad(x).noalias() += dO * g.value(weight).transpose();
    if (g.needs_grad(weight)) g.grad(weight).noalias() += g.value(x).transpose() * dO;
    if (g.needs_grad(bias)) g.grad(bias).row(0) += dO.colwise().sum();
  });
}

Var add(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  Mat out = A + B;
  return g.push(std::move(out), g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    if (g.needs_grad(a)) g.grad(a) += dO;
    if (g.needs_grad(b)) g.grad(b) += dO;
  });
}

Var gelu(Graph& g, Var x) {
  Mat out = g.value(x).unaryExpr([](Real v) { return kernels::gelu(v); });
  return g.push(std::move(out), g.needs_grad(x), [x](Graph& g, Var o) {
    const Mat& X = g.value(x);
    g.grad(x).array() += g.grad(o).array() * X.unaryExpr([](Real v) { return kernels::gelu_grad(v); }).array();
  });
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias) {
  const Mat& X = g.value(x);
  require(g.value(gain).cols() == X.cols() && g.value(bias).cols() == X.cols(), "layer_norm: shape mismatch");
  Mat out;
  auto xhat = std::make_shared<Mat>();
  auto rstd = std::make_shared<Eigen::Matrix<Real, Eigen::Dynamic, 1>>();
  const bool ng = g.needs_grad(x) || g.needs_grad(gain) || g.needs_grad(bias);
  kernels::layer_norm(X, g.value(gain).row(0), g.value(bias).row(0), out, ng && g.recording() ? xhat.get() : nullptr,
                      ng && g.recording() ? rstd.get() : nullptr);
  return g.push(std::move(out), ng, [x, gain, bias, xhat, rstd](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    if (g.needs_grad(gain)) g.grad(gain).row(0) += dO.cwiseProduct(*xhat).colwise().sum();
    if (g.needs_grad(bias)) g.grad(bias).row(0) += dO.colwise().sum();
    if (g.needs_grad(x)) {
      const Mat dxhat = dO.array().rowwise() * g.value(gain).row(0).array();
      Mat& dX = g.grad(x);
      const Real inv_n = Real(1) / static_cast<Real>(dO.cols());
      for (Eigen::Index r = 0; r < dO.rows(); ++r) {
        const Real mean_d = dxhat.row(r).sum() * inv_n;
        const Real mean_dx = dxhat.row(r).dot(xhat->row(r)) * inv_n;
        dX.row(r).array() += (*rstd)(r) * (dxhat.row(r).array() - mean_d - xhat->row(r).array() * mean_dx);
      }
    }
  });
}

Var embedding(Graph& g, Var table, std::span<const int> ids) {
  const Mat& E = g.value(table);
  Mat out(static_cast<Eigen::Index>(ids.size()), E.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < E.rows(), "embedding: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = E.row(ids[i]);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return g.push(std::move(out), g.needs_grad(table), [table, saved = std::move(saved)](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    Mat& dE = g.grad(table);
    for (size_t i = 0; i < saved.size(); ++i) dE.row(saved[i]) += dO.row(static_cast<Eigen::Index>(i));
  });
}

Var gather_rows(Graph& g, Var x, std::span<const int> rows) {
  const Mat& X = g.value(x);
  Mat out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < X.rows(), "gather_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  }
  std::vector<int> saved(rows.begin(), rows.end());
  return g.push(std::move(out), g.needs_grad(x), [x, saved = std::move(saved)](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    Mat& dX = g.grad(x);
    for (size_t i = 0; i < saved.size(); ++i) dX.row(saved[i]) += dO.row(static_cast<Eigen::Index>(i));
  });
}

Var dropout(Graph& g, Var x) {
  const Real rate = g.dropout_rate();
  if (rate <= 0) return x;
  const Mat& X = g.value(x);
  auto keep = std::make_shared<Mat>(X.rows(), X.cols());
  fill_dropout_mask(*keep, rate, g.rng());
  Mat out = X.cwiseProduct(*keep);
  return g.push(std::move(out), g.needs_grad(x),
                [x, keep](Graph& g, Var o) { g.grad(x) += g.grad(o).cwiseProduct(*keep); });
}

Var multi_head_attention(Graph& g, Var q, Var k, Var v, int heads, const AttentionBias& bias) {
  const Mat& Q = g.value(q);
  const Mat& K = g.value(k);
  const Mat& V = g.value(v);
  require(heads > 0 && Q.cols() % heads == 0, "attention: d_model not divisible by heads");
  require(K.cols() == Q.cols() && V.cols() == Q.cols() && K.rows() == V.rows(), "attention: shape mismatch");
  const Eigen::Index m = Q.rows();
  const Eigen::Index n_keys = K.rows();
  if (bias.mask) require(bias.mask->rows() == m && bias.mask->cols() == n_keys, "attention: mask shape mismatch");
  if (bias.buckets) {
    require(bias.table.valid(), "attention: bucket ids without a bias table");
    require(bias.buckets->rows() == m && bias.buckets->cols() == n_keys, "attention: bucket shape mismatch");
    require(g.value(bias.table).rows() == heads, "attention: bias table must have one row per head");
  }
  const Eigen::Index dh = Q.cols() / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

  struct Block {
    Eigen::Index r0, rows, keys;
  };
  std::vector<Block> blocks;
  if (bias.block_rows > 0) {
    for (Eigen::Index r0 = 0; r0 < m; r0 += bias.block_rows) {
      const Eigen::Index rows = std::min<Eigen::Index>(bias.block_rows, m - r0);
      blocks.push_back({r0, rows, std::min<Eigen::Index>(n_keys, r0 + bias.block_rows)});
    }
  } else {
    blocks.push_back({0, m, n_keys});
  }

  const Real rate = g.dropout_rate();
  const bool ng = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v) ||
                  (bias.buckets && g.needs_grad(bias.table));
  const bool save = ng && g.recording();
  auto probs = std::make_shared<std::vector<Mat>>();
  auto drops = std::make_shared<std::vector<Mat>>();

  Mat out = Mat::Zero(m, Q.cols());
  for (int h = 0; h < heads; ++h) {
    for (const Block& b : blocks) {
      Mat S = (Q.block(b.r0, h * dh, b.rows, dh) * K.block(0, h * dh, b.keys, dh).transpose()) * scale;
      if (bias.mask) S += bias.mask->block(b.r0, 0, b.rows, b.keys);
      if (bias.buckets) {
        const Mat& table = g.value(bias.table);
        for (Eigen::Index i = 0; i < b.rows; ++i)
          for (Eigen::Index j = 0; j < b.keys; ++j) S(i, j) += table(h, (*bias.buckets)(b.r0 + i, j));
      }
      kernels::softmax_rows(S);
      if (rate > 0) {
        Mat D(S.rows(), S.cols());
        fill_dropout_mask(D, rate, g.rng());
        out.block(b.r0, h * dh, b.rows, dh).noalias() = S.cwiseProduct(D) * V.block(0, h * dh, b.keys, dh);
        if (save) drops->push_back(std::move(D));
      } else {
        out.block(b.r0, h * dh, b.rows, dh).noalias() = S * V.block(0, h * dh, b.keys, dh);
      }
      if (save) probs->push_back(std::move(S));
    }
  }

  return g.push(std::move(out), ng, [=](Graph& g, Var o) {
    const Mat& dO = g.grad(o);
    const Mat& Qv = g.value(q);
    const Mat& Kv = g.value(k);
    const Mat& Vv = g.value(v);
    const bool gq = g.needs_grad(q), gk = g.needs_grad(k), gv = g.needs_grad(v);
    const bool gt = bias.buckets && g.needs_grad(bias.table);
    Mat* dQ = gq ? &g.grad(q) : nullptr;
    Mat* dK = gk ? &g.grad(k) : nullptr;
    Mat* dV = gv ? &g.grad(v) : nullptr;
    Mat* dT = gt ? &g.grad(bias.table) : nullptr;
    size_t idx = 0;
    for (int h = 0; h < heads; ++h) {
      for (const Block& b : blocks) {
        const Mat& P = (*probs)[idx];
        const auto dOb = dO.block(b.r0, h * dh, b.rows, dh);
        Mat dP = dOb * Vv.block(0, h * dh, b.keys, dh).transpose();
        if (rate > 0) {
          const Mat& D = (*drops)[idx];
          if (dV) dV->block(0, h * dh, b.keys, dh).noalias() += P.cwiseProduct(D).transpose() * dOb;
          dP = dP.cwiseProduct(D);
        } else if (dV) {
          dV->block(0, h * dh, b.keys, dh).noalias() += P.transpose() * dOb;
        }
        const Eigen::Matrix<Real, Eigen::Dynamic, 1> dot = P.cwiseProduct(dP).rowwise().sum();
        Mat dS = P.cwiseProduct(dP.colwise() - dot);
        if (dT) {
          for (Eigen::Index i = 0; i < b.rows; ++i)
            for (Eigen::Index j = 0; j < b.keys; ++j) (*dT)(h, (*bias.buckets)(b.r0 + i, j)) += dS(i, j);
        }
        dS *= scale;
        if (dQ) dQ->block(b.r0, h * dh, b.rows, dh).noalias() += dS * Kv.block(0, h * dh, b.keys, dh);
        if (dK) dK->block(0, h * dh, b.keys, dh).noalias() += dS.transpose() * Qv.block(b.r0, h * dh, b.rows, dh);
        ++idx;
      }
    }
  });
}

Var cross_entropy(Graph& g, Var logits, std::span<const int> targets, Real smoothing, Real weight,
                  std::vector<double>* row_losses) {
  const Mat& Z = g.value(logits);
  require(static_cast<size_t>(Z.rows()) == targets.size(), "cross_entropy: target count mismatch");
  require(smoothing >= 0 && smoothing < 1, "cross_entropy: smoothing must be in [0,1)");
  const Eigen::Index vocab = Z.cols();
  const double eps = smoothing;
  auto probs = std::make_shared<Mat>(Z.rows(), vocab);
  if (row_losses) row_losses->assign(targets.size(), 0.0);
  double total = 0;
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    const int y = targets[r];
    require(y >= 0 && y < vocab, "cross_entropy: target out of range");
    std::span<const Real> row(Z.data() + r * vocab, static_cast<size_t>(vocab));
    const double lse = kernels::log_sum_exp(row);
    double sum_logp = 0;
    for (Eigen::Index c = 0; c < vocab; ++c) {
      const double logp = static_cast<double>(row[c]) - lse;
      sum_logp += logp;
      (*probs)(r, c) = static_cast<Real>(std::exp(logp));
    }
    const double logp_y = static_cast<double>(row[y]) - lse;
    const double loss = -(1.0 - eps) * logp_y - eps / static_cast<double>(vocab) * sum_logp;
    if (row_losses) (*row_losses)[r] = loss;
    total += loss;
  }
  Mat out(1, 1);
  out(0, 0) = static_cast<Real>(total * weight);
  std::vector<int> saved(targets.begin(), targets.end());
  return g.push(std::move(out), g.needs_grad(logits),
                [logits, probs, saved = std::move(saved), smoothing, weight](Graph& g, Var o) {
                  const Real scale = g.grad(o)(0, 0) * weight;
                  Mat& dZ = g.grad(logits);
                  const Real uniform = smoothing / static_cast<Real>(dZ.cols());
                  for (Eigen::Index r = 0; r < dZ.rows(); ++r) {
                    dZ.row(r).array() += scale * (probs->row(r).array() - uniform);
                    dZ(r, saved[r]) -= scale * (Real(1) - smoothing);
                  }
                });
}

}  // namespace ops
}  // namespace bang
