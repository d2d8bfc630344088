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

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bang/decoding.hpp"
#include "bang/model.hpp"
#include "bang/objectives.hpp"

namespace bang {

// Everything a subcommand needs. JSON keys are the snake_case field names;
// command-line flags are the same names in --kebab-case.
struct RunConfig {
  ModelConfig model;

  // "bang", "ar", "nar", or "multi" (same objective as bang)
  std::string mode = "bang";
  double lr = 1e-4;
  int warmup_steps = 1000;
  double smoothing = 0.1;
  double clip_norm = 1.0;
  int batch_size = 32;
  int max_steps = 1000;
  int eval_every = 200;
  int log_every = 1;
  int span_block = 64;
  double span_ratio = 0.15;
  int max_span = 0;  // 0: n_streams

  std::string corpus;
  std::string train_data;
  std::string dev_data;
  std::string checkpoint_dir;
  std::string init_checkpoint;

  std::string decode_mode = "ar";
  int beam = 4;
  double length_penalty = 1.0;
  int max_len = 50;
  int min_len = 0;
  int n_ar = 5;
  int n_nar = 25;

  TrainMode train_mode() const { return parse_train_mode(mode); }
  int effective_max_span() const { return max_span > 0 ? max_span : model.n_streams; }
  StepOptions step_options() const;
  DecodeOptions decode_options() const;
  SpanMaskOptions span_options() const;

  // Throws std::invalid_argument naming the field.
  void validate() const;
};

struct ConfigField {
  enum class Kind { integer, unsigned_integer, real, text };
  std::string name;
  Kind kind;
};
const std::vector<ConfigField>& config_fields();
std::string kebab_case(const std::string& snake);

nlohmann::ordered_json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Sets one field from its textual command-line value.
void apply_override(RunConfig& config, const std::string& field, const std::string& value);

}  // namespace bang
