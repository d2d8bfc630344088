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

#include "bang/decoding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bang/kernels.hpp"
#include "bang/tokens.hpp"

namespace bang {

struct DecoderSession::Shared {
  const Parameters* params;
  const ModelConfig* config;
  ModelIndex idx;
  std::vector<Mat> cross_keys;    // per layer
  std::vector<Mat> cross_values;  // per layer
  RowVec cross_mask;              // additive, per source position
  bool any_pad = false;
};

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const Mat& P(const Parameters& p, int i) { return p.tensor(i).data; }

Mat affine(const Mat& x, const Parameters& p, int w, int b) {
  Mat out = x * P(p, w);
  out.rowwise() += P(p, b).row(0);
  return out;
}

Mat norm(const Mat& x, const Parameters& p, const ModelIndex::Norm& n) {
  Mat y;
  kernels::layer_norm(x, P(p, n.gain).row(0), P(p, n.bias).row(0), y);
  return y;
}

// Specials that are never emitted as content.
bool never_emitted(int id) { return id == kPad || id == kBos || id == kMask; }

int argmax_allowed(std::span<const Real> row, bool allow_eos) {
  int best = -1;
  Real best_v = -std::numeric_limits<Real>::infinity();
  for (int v = 0; v < static_cast<int>(row.size()); ++v) {
    if (never_emitted(v) || (!allow_eos && v == kEos)) continue;
    if (best < 0 || row[v] > best_v) {
      best = v;
      best_v = row[v];
    }
  }
  return best;
}

std::span<const Real> row_span(const Mat& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<size_t>(m.cols())};
}

std::vector<int> strip_specials(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int t : tokens)
    if (t != kEos && !never_emitted(t)) out.push_back(t);
  return out;
}

}  // namespace

DecoderSession::DecoderSession(const Parameters& params, const ModelConfig& config, const EncoderStates& enc) {
  auto shared = std::make_shared<Shared>();
  shared->params = &params;
  shared->config = &config;
  shared->idx = ModelIndex::build(params, config);
  for (const auto& layer : shared->idx.dec) {
    shared->cross_keys.push_back(affine(enc.states, params, layer.cross_attn.k_w, layer.cross_attn.k_b));
    shared->cross_values.push_back(affine(enc.states, params, layer.cross_attn.v_w, layer.cross_attn.v_b));
  }
  shared->cross_mask = RowVec::Zero(static_cast<Eigen::Index>(enc.pad.size()));
  for (size_t j = 0; j < enc.pad.size(); ++j) {
    if (enc.pad[j]) {
      shared->cross_mask(static_cast<Eigen::Index>(j)) = kMaskedScore;
      shared->any_pad = true;
    }
  }
  cache_.keys.assign(config.dec_layers, Mat(0, config.d_model));
  cache_.values.assign(config.dec_layers, Mat(0, config.d_model));
  shared_ = std::move(shared);
}

Mat DecoderSession::step(std::span<const int> golden, int n_masks) {
  const Shared& sh = *shared_;
  const Parameters& p = *sh.params;
  const ModelConfig& cfg = *sh.config;
  const int cached = length();
  const int n_golden = static_cast<int>(golden.size());
  const int rows = n_golden + n_masks;
  if (n_masks < 1) throw std::invalid_argument("decoder step: need at least one query row");
  if (cached + rows > cfg.max_positions) throw std::invalid_argument("decoder step: exceeds max_positions");

  const Mat& tok = P(p, sh.idx.tokens);
  const Mat& pos = P(p, sh.idx.dec_positions);
  Mat x(rows, cfg.d_model);
  for (int i = 0; i < rows; ++i) {
    const int id = i < n_golden ? golden[i] : kMask;
    if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("decoder step: token id out of range");
    x.row(i) = tok.row(id) + pos.row(cached + i);
  }

  const int heads = cfg.n_heads;
  const int dh = cfg.d_head();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const Mat& rel = P(p, sh.idx.rel_bias);
  const int total = cached + rows;
  // Relative bias depends only on key - query; positions are 1..total.
  std::vector<int> bucket_of_distance(2 * total + 1);
  for (int d = -total; d <= total; ++d)
    bucket_of_distance[d + total] = relative_bucket(d, cfg.rel_buckets, cfg.rel_max_distance);

  for (size_t l = 0; l < sh.idx.dec.size(); ++l) {
    const auto& layer = sh.idx.dec[l];
    // Self-attention over [cache; new rows], causal by position.
    Mat h = norm(x, p, layer.ln_self);
    const Mat q = affine(h, p, layer.self_attn.q_w, layer.self_attn.q_b);
    const Mat k = affine(h, p, layer.self_attn.k_w, layer.self_attn.k_b);
    const Mat v = affine(h, p, layer.self_attn.v_w, layer.self_attn.v_b);
    Mat keys(total, cfg.d_model), values(total, cfg.d_model);
    keys.topRows(cached) = cache_.keys[l];
    keys.bottomRows(rows) = k;
    values.topRows(cached) = cache_.values[l];
    values.bottomRows(rows) = v;

    Mat ctx(rows, cfg.d_model);
    for (int hd = 0; hd < heads; ++hd) {
      Mat s = (q.middleCols(hd * dh, dh) * keys.middleCols(hd * dh, dh).transpose()) * scale;
      for (int i = 0; i < rows; ++i) {
        const int qpos = cached + i + 1;
        for (int j = 0; j < total; ++j) {
          if (j + 1 > qpos) {
            s(i, j) += kMaskedScore;
          } else {
            s(i, j) += rel(hd, bucket_of_distance[(j + 1) - qpos + total]);
          }
        }
      }
      kernels::softmax_rows(s);
      ctx.middleCols(hd * dh, dh).noalias() = s * values.middleCols(hd * dh, dh);
    }
    x += affine(ctx, p, layer.self_attn.o_w, layer.self_attn.o_b);

    cache_.keys[l] = keys.topRows(cached + n_golden);
    cache_.values[l] = values.topRows(cached + n_golden);

    // Cross-attention to the encoder.
    h = norm(x, p, layer.ln_cross);
    const Mat cq = affine(h, p, layer.cross_attn.q_w, layer.cross_attn.q_b);
    const Mat& ck = sh.cross_keys[l];
    const Mat& cv = sh.cross_values[l];
    for (int hd = 0; hd < heads; ++hd) {
      Mat s = (cq.middleCols(hd * dh, dh) * ck.middleCols(hd * dh, dh).transpose()) * scale;
      if (sh.any_pad) s.rowwise() += sh.cross_mask;
      kernels::softmax_rows(s);
      ctx.middleCols(hd * dh, dh).noalias() = s * cv.middleCols(hd * dh, dh);
    }
    x += affine(ctx, p, layer.cross_attn.o_w, layer.cross_attn.o_b);

    h = norm(x, p, layer.ln_ffn);
    Mat f = affine(h, p, layer.ffn.in_w, layer.ffn.in_b);
    f = f.unaryExpr([](Real v) { return kernels::gelu(v); });
    x += affine(f, p, layer.ffn.out_w, layer.ffn.out_b);
  }

  const Mat out = norm(x.bottomRows(n_masks), p, sh.idx.dec_final);
  return out * tok.transpose();
}

std::vector<double> log_softmax(std::span<const Real> logits) {
  const double lse = kernels::log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

namespace {

struct SessionState : StepModel::State {
  DecoderSession session;
  std::vector<int> pending;

  explicit SessionState(DecoderSession s) : session(std::move(s)) {}
  std::unique_ptr<State> clone() const override { return std::make_unique<SessionState>(*this); }
};

}  // namespace

TransformerStepModel::TransformerStepModel(const Parameters& params, const ModelConfig& config, const EncoderStates& enc)
    : params_(params), config_(config), enc_(enc) {}

std::unique_ptr<StepModel::State> TransformerStepModel::start() const {
  return std::make_unique<SessionState>(DecoderSession(params_, config_, enc_));
}

std::vector<double> TransformerStepModel::next_logprobs(State& state) const {
  auto& st = static_cast<SessionState&>(state);
  const Mat logits = st.session.step(st.pending, 1);
  st.pending.clear();
  return log_softmax(row_span(logits, 0));
}

void TransformerStepModel::advance(State& state, int token) const {
  static_cast<SessionState&>(state).pending.assign(1, token);
}

namespace {

void mask_disallowed(std::vector<double>& lp, bool allow_eos) {
  for (int v = 0; v < static_cast<int>(lp.size()); ++v)
    if (never_emitted(v) || (!allow_eos && v == kEos)) lp[v] = kNegInf;
}

int argmax(const std::vector<double>& lp) {
  int best = 0;
  for (int v = 1; v < static_cast<int>(lp.size()); ++v)
    if (lp[v] > lp[best]) best = v;
  return best;
}

}  // namespace

DecodeResult greedy_search(const StepModel& model, const ArOptions& options) {
  if (options.max_len < 1) throw std::invalid_argument("ar decode: max_len must be >= 1");
  DecodeResult r;
  auto state = model.start();
  for (int step = 0; step < options.max_len; ++step) {
    std::vector<double> lp = model.next_logprobs(*state);
    ++r.forward_passes;
    const std::vector<double> raw = lp;
    mask_disallowed(lp, static_cast<int>(r.tokens.size()) >= options.min_len);
    const int tok = argmax(lp);
    r.score += raw[tok];
    r.per_position_logprobs.push_back(raw[tok]);
    if (tok == kEos) break;
    r.tokens.push_back(tok);
    model.advance(*state, tok);
  }
  return r;
}

DecodeResult beam_search(const StepModel& model, const BeamOptions& options) {
  if (options.beam < 1) throw std::invalid_argument("beam search: beam must be >= 1");
  if (options.max_len < 1) throw std::invalid_argument("ar decode: max_len must be >= 1");

  struct Hyp {
    std::unique_ptr<StepModel::State> state;
    std::vector<int> tokens;
    std::vector<double> logprobs;
    double score = 0;
  };
  struct Finished {
    std::vector<int> tokens;
    std::vector<double> logprobs;
    double score;
    double normalized;
    int step;
    int beam_index;
  };
  struct Candidate {
    double score;
    int beam;
    int token;
    double logprob;
  };
  auto normalize = [&](double score, size_t len) {
    return score / std::pow(static_cast<double>(std::max<size_t>(len, 1)), options.length_penalty);
  };

  std::vector<Hyp> live;
  live.push_back(Hyp{model.start(), {}, {}, 0});
  std::vector<Finished> finished;
  int passes = 0;

  for (int step = 1; step <= options.max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (int b = 0; b < static_cast<int>(live.size()); ++b) {
      std::vector<double> lp = model.next_logprobs(*live[b].state);
      ++passes;
      const std::vector<double> raw = lp;
      mask_disallowed(lp, static_cast<int>(live[b].tokens.size()) >= options.min_len);
      for (int v = 0; v < static_cast<int>(lp.size()); ++v)
        if (lp[v] != kNegInf) cands.push_back({live[b].score + raw[v], b, v, raw[v]});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });
    if (cands.size() > static_cast<size_t>(options.beam)) cands.resize(options.beam);

    std::vector<Hyp> next;
    for (const Candidate& c : cands) {
      const Hyp& parent = live[c.beam];
      std::vector<double> lps = parent.logprobs;
      lps.push_back(c.logprob);
      if (c.token == kEos) {
        finished.push_back({parent.tokens, lps, c.score, normalize(c.score, parent.tokens.size() + 1), step, c.beam});
        continue;
      }
      Hyp h{parent.state->clone(), parent.tokens, std::move(lps), c.score};
      h.tokens.push_back(c.token);
      model.advance(*h.state, c.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);
    if (static_cast<int>(finished.size()) >= options.beam) break;
  }

  DecodeResult r;
  r.forward_passes = passes;
  if (!finished.empty()) {
    const Finished* best = &finished.front();
    for (const Finished& f : finished) {
      if (f.normalized > best->normalized ||
          (f.normalized == best->normalized &&
           (f.step < best->step || (f.step == best->step && f.beam_index < best->beam_index))))
        best = &f;
    }
    r.tokens = best->tokens;
    r.per_position_logprobs = best->logprobs;
    r.score = best->score;
  } else if (!live.empty()) {
    const Hyp* best = &live.front();
    for (const Hyp& h : live)
      if (normalize(h.score, h.tokens.size()) > normalize(best->score, best->tokens.size())) best = &h;
    r.tokens = best->tokens;
    r.per_position_logprobs = best->logprobs;
    r.score = best->score;
  }
  return r;
}

namespace {

void check_max_len(int max_len, const ModelConfig& config) {
  if (max_len < 1) throw std::invalid_argument("decode: max_len must be >= 1");
  if (max_len > config.max_positions) throw std::invalid_argument("decode: max_len exceeds max_positions");
}

// Single-stream scorer that rebuilds the full decoder input every step.
class RecomputeStepModel : public StepModel {
 public:
  RecomputeStepModel(const Parameters& p, const ModelConfig& c, const EncoderStates& e) : p_(p), c_(c), e_(e) {}

  struct Prefix : State {
    std::vector<int> tokens;
    std::unique_ptr<State> clone() const override { return std::make_unique<Prefix>(*this); }
  };

  std::unique_ptr<State> start() const override { return std::make_unique<Prefix>(); }
  std::vector<double> next_logprobs(State& state) const override {
    std::vector<int> input = static_cast<Prefix&>(state).tokens;
    input.push_back(kMask);
    const Mat logits = oracle_forward(input, e_, p_, c_);
    return log_softmax(row_span(logits, 0));
  }
  void advance(State& state, int token) const override { static_cast<Prefix&>(state).tokens.push_back(token); }

 private:
  const Parameters& p_;
  const ModelConfig& c_;
  const EncoderStates& e_;
};

}  // namespace

DecodeResult ar_greedy(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                       const ArOptions& options) {
  check_max_len(options.max_len, config);
  const EncoderStates enc = encode(source, params, config);
  return greedy_search(TransformerStepModel(params, config, enc), options);
}

DecodeResult ar_greedy_recompute(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                                 const ArOptions& options) {
  check_max_len(options.max_len, config);
  const EncoderStates enc = encode(source, params, config);
  return greedy_search(RecomputeStepModel(params, config, enc), options);
}

DecodeResult ar_beam(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                     const BeamOptions& options) {
  check_max_len(options.max_len, config);
  const EncoderStates enc = encode(source, params, config);
  return beam_search(TransformerStepModel(params, config, enc), options);
}

std::vector<int> collapse_repeats(std::span<const int> tokens) {
  std::vector<int> out;
  for (int t : tokens)
    if (out.empty() || out.back() != t) out.push_back(t);
  return out;
}

std::vector<int> finish_parallel(std::span<const int> argmax_stream) {
  std::vector<int> kept;
  for (int t : argmax_stream) {
    if (t == kEos) break;
    kept.push_back(t);
  }
  return strip_specials(collapse_repeats(kept));
}

namespace {

// Argmax over parallel mask rows, truncated at the first [EOS]. Returns the
// chosen tokens (without [EOS]) and appends their log-probs.
std::vector<int> parallel_argmax(const Mat& logits, DecodeResult& r) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = row_span(logits, i);
    const int tok = argmax_allowed(row, true);
    const double lp = log_softmax(row)[tok];
    r.score += lp;
    r.per_position_logprobs.push_back(lp);
    if (tok == kEos) break;
    out.push_back(tok);
  }
  return out;
}

}  // namespace

DecodeResult nar_decode(std::span<const int> source, const Parameters& params, const ModelConfig& config, int max_len) {
  check_max_len(max_len, config);
  const EncoderStates enc = encode(source, params, config);
  DecoderSession session(params, config, enc);
  DecodeResult r;
  const Mat logits = session.step({}, max_len);
  r.forward_passes = 1;
  r.tokens = finish_parallel(parallel_argmax(logits, r));
  return r;
}

DecodeResult semi_nar_decode(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                             const SemiNarOptions& options) {
  if (options.n_ar < 0 || options.n_nar < 1) throw std::invalid_argument("semi-nar: need n_ar >= 0 and n_nar >= 1");
  if (options.n_ar + options.n_nar > config.max_positions)
    throw std::invalid_argument("semi-nar: n_ar + n_nar exceeds max_positions");
  const EncoderStates enc = encode(source, params, config);
  DecoderSession session(params, config, enc);
  DecodeResult r;
  std::vector<int> pending;
  for (int i = 0; i < options.n_ar; ++i) {
    const Mat logits = session.step(pending, 1);
    ++r.forward_passes;
    const auto row = row_span(logits, 0);
    const int tok = argmax_allowed(row, true);
    const double lp = log_softmax(row)[tok];
    r.score += lp;
    r.per_position_logprobs.push_back(lp);
    if (tok == kEos) return r;
    r.tokens.push_back(tok);
    pending.assign(1, tok);
  }

  const Mat logits = session.step(pending, options.n_nar);
  ++r.forward_passes;
  std::vector<int> tail = parallel_argmax(logits, r);
  // Merge repeats inside the parallel part and across its boundary with the
  // sequential prefix, without touching the prefix itself.
  if (!r.tokens.empty()) tail.insert(tail.begin(), r.tokens.back());
  tail = collapse_repeats(tail);
  if (!r.tokens.empty()) tail.erase(tail.begin());
  for (int t : strip_specials(tail)) r.tokens.push_back(t);
  return r;
}

std::string to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::ar:
      return "ar";
    case DecodeMode::nar:
      return "nar";
    case DecodeMode::semi:
      return "semi";
  }
  return "?";
}

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "ar") return DecodeMode::ar;
  if (name == "nar") return DecodeMode::nar;
  if (name == "semi") return DecodeMode::semi;
  throw std::invalid_argument("unknown decode mode: " + name);
}

DecodeResult decode(std::span<const int> source, const Parameters& params, const ModelConfig& config,
                    const DecodeOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  DecodeResult r;
  switch (options.mode) {
    case DecodeMode::ar:
      if (options.beam <= 1) {
        r = ar_greedy(source, params, config, ArOptions{options.max_len, options.min_len});
      } else {
        r = ar_beam(source, params, config,
                    BeamOptions{options.beam, options.length_penalty, options.max_len, options.min_len});
      }
      break;
    case DecodeMode::nar:
      r = nar_decode(source, params, config, options.max_len);
      break;
    case DecodeMode::semi:
      r = semi_nar_decode(source, params, config, SemiNarOptions{options.n_ar, options.n_nar});
      break;
  }
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace bang
