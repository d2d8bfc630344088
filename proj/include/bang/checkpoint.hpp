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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "bang/data.hpp"
#include "bang/model.hpp"
#include "bang/objectives.hpp"

namespace bang {

nlohmann::ordered_json config_to_json(const ModelConfig& config);
// Every field required; unknown keys rejected.
ModelConfig config_from_json(const nlohmann::json& j);

// Training progress carried by resumable checkpoints.
struct TrainerState {
  OptimizerState optimizer;
  double best_dev_loss = 0;  // per-token; meaningful when best_step >= 0
  int64_t best_step = -1;
};

// Directory layout: config.json, manifest.json, weights.bin (little-endian
// f32 in manifest order), vocab.txt; optionally run_config.json, and
// trainer.json + optimizer.bin for resume.
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  Vocabulary vocab;
  nlohmann::ordered_json run_config;  // null when absent
  std::optional<TrainerState> trainer;
};

// Writes into a staging directory, then swaps it into place with renames.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir, bool with_trainer = true);
bool is_checkpoint(const std::filesystem::path& dir);

// Exclusive advisory lock on "<dir>.lock", held for the object's lifetime.
// Throws std::runtime_error when another process holds it.
class CheckpointLock {
 public:
  explicit CheckpointLock(const std::filesystem::path& dir);
  ~CheckpointLock();
  CheckpointLock(const CheckpointLock&) = delete;
  CheckpointLock& operator=(const CheckpointLock&) = delete;

 private:
  int fd_ = -1;
};

// Writes bytes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace bang
