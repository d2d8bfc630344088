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

#include "bang/checkpoint.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bang {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "weights.bin is written in native byte order");

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ffn"] = c.d_ffn;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["n_streams"] = c.n_streams;
  j["rel_buckets"] = c.rel_buckets;
  j["rel_max_distance"] = c.rel_max_distance;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_from_json(const json& j) {
  static const std::set<std::string> keys = {"enc_layers",    "dec_layers", "d_model",     "n_heads",
                                             "d_ffn",         "vocab_size", "max_positions", "n_streams",
                                             "rel_buckets",   "rel_max_distance", "dropout", "seed"};
  if (!j.is_object()) throw std::invalid_argument("config.json: expected an object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw std::invalid_argument("config.json: unknown key " + k);
  ModelConfig c;
  try {
    c.enc_layers = j.at("enc_layers").get<int>();
    c.dec_layers = j.at("dec_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.n_streams = j.at("n_streams").get<int>();
    c.rel_buckets = j.at("rel_buckets").get<int>();
    c.rel_max_distance = j.at("rel_max_distance").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config.json: ") + e.what());
  }
  c.validate();
  return c;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

static void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  write_file(tmp, bytes);
  fs::rename(tmp, path);
}

static void append_f32(std::string& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
  }
}

static void read_f32(const std::string& bytes, size_t& offset, Mat& m, const std::string& what) {
  const size_t n = static_cast<size_t>(m.size()) * 4;
  if (offset + n > bytes.size()) throw std::runtime_error(what + ": truncated");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + offset + 4 * i, 4);
    m.data()[i] = static_cast<Real>(f);
  }
  offset += n;
}

static ordered_json manifest_json(const Parameters& params) {
  ordered_json arr = ordered_json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    ordered_json e;
    e["name"] = params.name(i);
    e["shape"] = params.tensor(i).shape;
    e["dtype"] = "f32";
    arr.push_back(e);
  }
  return arr;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  ck.config.validate();
  if (ck.vocab.size() > ck.config.vocab_size) throw std::invalid_argument("checkpoint: vocabulary larger than vocab_size");
  fs::path staging = dir;
  staging += ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging);

  write_file(staging / "config.json", config_to_json(ck.config).dump(2) + "\n");
  std::string weights;
  weights.reserve(ck.params.element_count() * 4);
  for (size_t i = 0; i < ck.params.size(); ++i) append_f32(weights, ck.params.tensor(i).data);
  write_file(staging / "weights.bin", weights);
  write_file(staging / "vocab.txt", ck.vocab.to_text());
  if (!ck.run_config.is_null()) write_file(staging / "run_config.json", ck.run_config.dump(2) + "\n");
  if (ck.trainer) {
    const auto& t = *ck.trainer;
    ordered_json tj;
    tj["step"] = t.optimizer.step;
    tj["best_step"] = t.best_step;
    tj["best_dev_loss"] = t.best_dev_loss;
    write_file(staging / "trainer.json", tj.dump(2) + "\n");
    std::string opt;
    for (const auto& m : t.optimizer.m) append_f32(opt, m);
    for (const auto& v : t.optimizer.v) append_f32(opt, v);
    write_file(staging / "optimizer.bin", opt);
  }
  // The manifest goes last: a directory with a manifest is complete.
  write_file(staging / "manifest.json", manifest_json(ck.params).dump(2) + "\n");

  fs::path old = dir;
  old += ".old";
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(staging, dir);
  fs::remove_all(old);
}

bool is_checkpoint(const fs::path& dir) { return fs::exists(dir / "manifest.json") && fs::exists(dir / "config.json"); }

Checkpoint load_checkpoint(const fs::path& dir, bool with_trainer) {
  if (!is_checkpoint(dir)) throw std::runtime_error("not a checkpoint directory: " + dir.string());
  Checkpoint ck;
  ck.config = config_from_json(json::parse(read_file(dir / "config.json")));
  ck.vocab = Vocabulary::from_text(read_file(dir / "vocab.txt"));
  if (ck.vocab.size() > ck.config.vocab_size) throw std::runtime_error("checkpoint: vocab.txt larger than vocab_size");

  const json manifest = json::parse(read_file(dir / "manifest.json"));
  const Parameters reference = init_parameters(ck.config);
  if (manifest.size() != reference.size()) throw std::runtime_error("manifest: tensor count does not match config");
  const std::string weights = read_file(dir / "weights.bin");
  size_t offset = 0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const auto& e = manifest.at(i);
    const std::string name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<int64_t>>();
    if (e.at("dtype").get<std::string>() != "f32") throw std::runtime_error("manifest: unsupported dtype for " + name);
    if (name != reference.name(i) || shape != reference.tensor(i).shape)
      throw std::runtime_error("manifest: unexpected tensor " + name);
    Mat m(reference.tensor(i).data.rows(), reference.tensor(i).data.cols());
    read_f32(weights, offset, m, "weights.bin");
    ck.params.add(name, shape, std::move(m));
  }
  if (offset != weights.size()) throw std::runtime_error("weights.bin: trailing bytes");

  if (fs::exists(dir / "run_config.json")) ck.run_config = ordered_json::parse(read_file(dir / "run_config.json"));
  if (with_trainer && fs::exists(dir / "trainer.json")) {
    const json tj = json::parse(read_file(dir / "trainer.json"));
    TrainerState t;
    t.optimizer = OptimizerState::fresh(ck.params);
    t.optimizer.step = tj.at("step").get<int64_t>();
    t.best_step = tj.at("best_step").get<int64_t>();
    t.best_dev_loss = tj.at("best_dev_loss").get<double>();
    const std::string opt = read_file(dir / "optimizer.bin");
    size_t off = 0;
    for (auto& m : t.optimizer.m) read_f32(opt, off, m, "optimizer.bin");
    for (auto& v : t.optimizer.v) read_f32(opt, off, v, "optimizer.bin");
    if (off != opt.size()) throw std::runtime_error("optimizer.bin: trailing bytes");
    ck.trainer = std::move(t);
  }
  return ck;
}

CheckpointLock::CheckpointLock(const fs::path& dir) {
  fs::path lock = dir;
  lock += ".lock";
  if (lock.has_parent_path()) fs::create_directories(lock.parent_path());
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open lock file " + lock.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw std::runtime_error("checkpoint directory in use by another process: " + dir.string());
  }
}

CheckpointLock::~CheckpointLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace bang
