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

#include "bang/config.hpp"

#include <charconv>
#include <functional>
#include <stdexcept>
#include <variant>

#include "bang/checkpoint.hpp"

namespace bang {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using Ref = std::variant<int*, uint64_t*, double*, std::string*>;

struct Binding {
  ConfigField field;
  std::function<Ref(RunConfig&)> ref;
};

#define BANG_FIELD(kind, name, expr) \
  Binding { ConfigField{name, ConfigField::Kind::kind}, [](RunConfig& c) -> Ref { return &(expr); } }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      BANG_FIELD(integer, "enc_layers", c.model.enc_layers),
      BANG_FIELD(integer, "dec_layers", c.model.dec_layers),
      BANG_FIELD(integer, "d_model", c.model.d_model),
      BANG_FIELD(integer, "n_heads", c.model.n_heads),
      BANG_FIELD(integer, "d_ffn", c.model.d_ffn),
      BANG_FIELD(integer, "vocab_size", c.model.vocab_size),
      BANG_FIELD(integer, "max_positions", c.model.max_positions),
      BANG_FIELD(integer, "n_streams", c.model.n_streams),
      BANG_FIELD(integer, "rel_buckets", c.model.rel_buckets),
      BANG_FIELD(integer, "rel_max_distance", c.model.rel_max_distance),
      BANG_FIELD(real, "dropout", c.model.dropout),
      BANG_FIELD(unsigned_integer, "seed", c.model.seed),
      BANG_FIELD(text, "mode", c.mode),
      BANG_FIELD(real, "lr", c.lr),
      BANG_FIELD(integer, "warmup_steps", c.warmup_steps),
      BANG_FIELD(real, "smoothing", c.smoothing),
      BANG_FIELD(real, "clip_norm", c.clip_norm),
      BANG_FIELD(integer, "batch_size", c.batch_size),
      BANG_FIELD(integer, "max_steps", c.max_steps),
      BANG_FIELD(integer, "eval_every", c.eval_every),
      BANG_FIELD(integer, "log_every", c.log_every),
      BANG_FIELD(integer, "span_block", c.span_block),
      BANG_FIELD(real, "span_ratio", c.span_ratio),
      BANG_FIELD(integer, "max_span", c.max_span),
      BANG_FIELD(text, "corpus", c.corpus),
      BANG_FIELD(text, "train_data", c.train_data),
      BANG_FIELD(text, "dev_data", c.dev_data),
      BANG_FIELD(text, "checkpoint_dir", c.checkpoint_dir),
      BANG_FIELD(text, "init_checkpoint", c.init_checkpoint),
      BANG_FIELD(text, "decode_mode", c.decode_mode),
      BANG_FIELD(integer, "beam", c.beam),
      BANG_FIELD(real, "length_penalty", c.length_penalty),
      BANG_FIELD(integer, "max_len", c.max_len),
      BANG_FIELD(integer, "min_len", c.min_len),
      BANG_FIELD(integer, "n_ar", c.n_ar),
      BANG_FIELD(integer, "n_nar", c.n_nar),
  };
  return b;
}

#undef BANG_FIELD

const Binding& find_binding(const std::string& name) {
  for (const auto& b : bindings())
    if (b.field.name == name) return b;
  throw std::invalid_argument("unknown config key: " + name);
}

template <class T>
T parse_number(const std::string& field, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config " + field + ": bad value '" + text + "'");
  return value;
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    for (const auto& b : bindings()) f.push_back(b.field);
    return f;
  }();
  return fields;
}

std::string kebab_case(const std::string& snake) {
  std::string out = snake;
  for (char& c : out)
    if (c == '_') c = '-';
  return out;
}

ordered_json to_json(const RunConfig& config) {
  RunConfig copy = config;
  ordered_json j;
  for (const auto& b : bindings())
    std::visit([&](auto* p) { j[b.field.name] = *p; }, b.ref(copy));
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config: expected a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    const Binding& b = find_binding(key);
    try {
      std::visit([&](auto* p) { *p = value.get<std::remove_pointer_t<decltype(p)>>(); }, b.ref(c));
    } catch (const json::exception& e) {
      throw std::invalid_argument("config " + key + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(RunConfig& config, const std::string& field, const std::string& value) {
  const Binding& b = find_binding(field);
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else {
          *p = parse_number<T>(field, value);
        }
      },
      b.ref(config));
}

StepOptions RunConfig::step_options() const {
  StepOptions o;
  o.mode = train_mode();
  o.smoothing = smoothing;
  o.peak_lr = lr;
  o.warmup_steps = warmup_steps;
  o.clip_norm = clip_norm;
  o.seed = model.seed;
  return o;
}

DecodeOptions RunConfig::decode_options() const {
  DecodeOptions o;
  o.mode = parse_decode_mode(decode_mode);
  o.beam = beam;
  o.length_penalty = length_penalty;
  o.max_len = max_len;
  o.min_len = min_len;
  o.n_ar = n_ar;
  o.n_nar = n_nar;
  return o;
}

SpanMaskOptions RunConfig::span_options() const {
  SpanMaskOptions o;
  o.block = span_block;
  o.ratio = span_ratio;
  o.max_span = effective_max_span();
  return o;
}

void RunConfig::validate() const {
  model.validate();
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  train_mode();
  parse_decode_mode(decode_mode);
  require(lr > 0, "lr must be positive");
  require(warmup_steps >= 1, "warmup_steps must be >= 1");
  require(smoothing >= 0 && smoothing < 1, "smoothing must be in [0, 1)");
  require(clip_norm > 0, "clip_norm must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_steps >= 0, "max_steps must be >= 0");
  require(eval_every >= 1, "eval_every must be >= 1");
  require(log_every >= 1, "log_every must be >= 1");
  require(span_block >= 1, "span_block must be >= 1");
  require(span_ratio > 0 && span_ratio <= 1, "span_ratio must be in (0, 1]");
  require(max_span >= 0, "max_span must be >= 0");
  require(effective_max_span() <= model.n_streams, "max_span must not exceed n_streams");
  require(beam >= 1, "beam must be >= 1");
  require(length_penalty >= 0, "length_penalty must be >= 0");
  require(max_len >= 1, "max_len must be >= 1");
  require(min_len >= 0, "min_len must be >= 0");
  require(n_ar >= 0, "n_ar must be >= 0");
  require(n_nar >= 1, "n_nar must be >= 1");
  require(max_len <= model.max_positions && n_ar + n_nar <= model.max_positions,
          "decode lengths must not exceed max_positions");
}

}  // namespace bang
