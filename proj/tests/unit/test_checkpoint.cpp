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

#include <cstring>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "bang/checkpoint.hpp"
#include "bang/config.hpp"

using namespace bang;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bang_ckpt_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Checkpoint sample_checkpoint() {
  ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ffn = 24;
  Checkpoint ck{c, init_parameters(c), synthetic_vocab(14), nlohmann::ordered_json{{"lr", 0.5}}, std::nullopt};
  return ck;
}

bool bitwise_equal(const Parameters& a, const Parameters& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const Mat& x = a.tensor(i).data;
    const Mat& y = b.tensor(i).data;
    if (a.name(i) != b.name(i) || x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(Real) * x.size()) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("model config JSON") {
    ModelConfig c;
    c.d_model = 32;
    c.seed = 99;
    const auto j = config_to_json(c);
    CHECK(config_from_json(nlohmann::json::parse(j.dump())) == c);
    auto extra = nlohmann::json::parse(j.dump());
    extra["colour"] = "red";
    CHECK_THROWS_WITH(config_from_json(extra), doctest::Contains("colour"));
    auto missing = nlohmann::json::parse(j.dump());
    missing.erase("n_heads");
    CHECK_THROWS(config_from_json(missing));
    auto invalid = nlohmann::json::parse(j.dump());
    invalid["n_heads"] = 5;
    CHECK_THROWS(config_from_json(invalid));
  }

  TEST_CASE("save and load round trip") {
    const auto dir = temp_dir("roundtrip");
    auto ck = sample_checkpoint();
    TrainerState ts;
    ts.optimizer = OptimizerState::fresh(ck.params);
    ts.optimizer.step = 17;
    ts.optimizer.m[0](0, 0) = 0.25f;
    ts.best_dev_loss = 1.5;
    ts.best_step = 12;
    ck.trainer = ts;
    save_checkpoint(dir / "ck", ck);
    CHECK(is_checkpoint(dir / "ck"));
    CHECK_FALSE(fs::exists(dir / "ck.staging"));
    CHECK_FALSE(fs::exists(dir / "ck.old"));

    const auto back = load_checkpoint(dir / "ck");
    CHECK(back.config == ck.config);
    CHECK(back.vocab == ck.vocab);
    CHECK(back.run_config == ck.run_config);
    CHECK(bitwise_equal(back.params, ck.params));
    REQUIRE(back.trainer.has_value());
    CHECK(back.trainer->optimizer.step == 17);
    CHECK(back.trainer->optimizer.m[0](0, 0) == 0.25f);
    CHECK(back.trainer->best_step == 12);
    CHECK_FALSE(load_checkpoint(dir / "ck", false).trainer.has_value());

    // Overwriting keeps a single valid directory.
    ck.params.tensor(0).data(0, 0) += 1;
    ck.trainer.reset();
    save_checkpoint(dir / "ck", ck);
    const auto again = load_checkpoint(dir / "ck");
    CHECK(bitwise_equal(again.params, ck.params));
    CHECK_FALSE(again.trainer.has_value());
    CHECK_FALSE(fs::exists(dir / "ck.old"));
    fs::remove_all(dir);
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    const auto dir = temp_dir("corrupt");
    save_checkpoint(dir / "ck", sample_checkpoint());
    const auto weights = dir / "ck" / "weights.bin";
    const auto size = fs::file_size(weights);
    fs::resize_file(weights, size - 4);
    CHECK_THROWS(load_checkpoint(dir / "ck"));
    fs::resize_file(weights, size + 4);
    CHECK_THROWS(load_checkpoint(dir / "ck"));
    CHECK_FALSE(is_checkpoint(dir / "absent"));
    CHECK_THROWS(load_checkpoint(dir / "absent"));
    fs::remove(dir / "ck" / "manifest.json");
    CHECK_FALSE(is_checkpoint(dir / "ck"));
    fs::remove_all(dir);
  }

  TEST_CASE("lock excludes a second holder") {
    const auto dir = temp_dir("lock");
    {
      CheckpointLock first(dir / "ck");
      CHECK_THROWS_WITH(CheckpointLock(dir / "ck"), doctest::Contains("in use by another process"));
    }
    CHECK_NOTHROW(CheckpointLock(dir / "ck"));
    fs::remove_all(dir);
  }

  TEST_CASE("atomic file writes") {
    const auto dir = temp_dir("atomic");
    write_file_atomic(dir / "f.txt", "one");
    write_file_atomic(dir / "f.txt", "two");
    CHECK(read_file(dir / "f.txt") == "two");
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("run config JSON and overrides") {
    RunConfig c;
    CHECK(c.mode == "bang");
    CHECK(c.effective_max_span() == c.model.n_streams);
    const auto j = to_json(c);
    CHECK(j.contains("warmup_steps"));
    CHECK(j.size() == config_fields().size());
    CHECK(to_json(run_config_from_json(nlohmann::json::parse(j.dump()))) == j);

    const auto partial = run_config_from_json(nlohmann::json{{"lr", 0.01}, {"mode", "ar"}});
    CHECK(partial.lr == 0.01);
    CHECK(partial.train_mode() == TrainMode::ar);
    CHECK(partial.batch_size == 32);
    CHECK_THROWS_WITH(run_config_from_json(nlohmann::json{{"learning_rate", 1}}), doctest::Contains("learning_rate"));

    RunConfig o;
    apply_override(o, "n_streams", "3");
    apply_override(o, "lr", "2.5e-4");
    apply_override(o, "decode_mode", "semi");
    apply_override(o, "seed", "18446744073709551615");
    CHECK(o.model.n_streams == 3);
    CHECK(o.lr == 2.5e-4);
    CHECK(o.decode_options().mode == DecodeMode::semi);
    CHECK(o.model.seed == 18446744073709551615ull);
    CHECK_THROWS(apply_override(o, "n_streams", "three"));
    CHECK_THROWS(apply_override(o, "bogus", "1"));
    CHECK(kebab_case("warmup_steps") == "warmup-steps");

    RunConfig bad;
    bad.max_span = bad.model.n_streams + 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    RunConfig bad_mode;
    bad_mode.mode = "gan";
    CHECK_THROWS(bad_mode.validate());
    RunConfig multi;
    multi.mode = "multi";
    CHECK(multi.train_mode() == TrainMode::bang);

    const auto dir = temp_dir("runcfg");
    std::ofstream(dir / "c.json") << R"({"max_steps": 7, "corpus": "x.txt"})";
    const auto loaded = load_run_config(dir / "c.json");
    CHECK(loaded.max_steps == 7);
    CHECK(loaded.corpus == "x.txt");
    fs::remove_all(dir);
  }
}
