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

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include "bang/data.hpp"
#include "bang/tokens.hpp"

using namespace bang;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bang_data_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("specials occupy the first ids") {
    Vocabulary v;
    CHECK(v.size() == kNumSpecials);
    CHECK(v.token(kPad) == "[PAD]");
    CHECK(v.token(kEos) == "[EOS]");
    CHECK(v.token(kMask) == "[MASK]");
    CHECK(v.id("nothing") == kUnk);
    CHECK(v.add("x") == 6);
    CHECK(v.add("x") == 6);
    CHECK_THROWS(v.add(""));
    CHECK_THROWS(v.add("a b"));
  }

  TEST_CASE("build_vocab ranks by frequency then lexicographically") {
    const std::vector<std::string> lines = {"b a a", "c b"};
    const auto v = build_vocab(lines, 100);
    CHECK(v.id("a") == 6);
    CHECK(v.id("b") == 7);
    CHECK(v.id("c") == 8);
    const auto capped = build_vocab(lines, 7);
    CHECK(capped.size() == 7);
    CHECK(capped.id("b") == kUnk);
    CHECK_THROWS_AS(build_vocab(std::vector<std::string>{"  ", ""}, 10), std::invalid_argument);
  }

  TEST_CASE("encode and decode round trip") {
    std::mt19937 rng(3);
    const auto v = synthetic_vocab(20);
    for (int i = 0; i < 200; ++i) {
      std::vector<std::string> words;
      for (int k = 0, n = 1 + rng() % 10; k < n; ++k) words.push_back(v.token(6 + rng() % 20));
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : std::string(1 + rng() % 3, ' ')) + w;
      const auto ids = v.encode(text);
      CHECK(v.decode(ids) == normalize_whitespace(text));
      CHECK(v.encode(v.decode(ids)) == ids);
    }
    CHECK(v.decode(std::vector<int>{6, kEos, kPad, kSep, kUnk, 7}) == "w00 [SEP] [UNK] w01");
  }

  TEST_CASE("vocabulary text round trip and validation") {
    auto v = build_vocab(std::vector<std::string>{"x y z y"}, 50);
    CHECK(Vocabulary::from_text(v.to_text()) == v);
    const auto dir = temp_dir("vocab");
    v.save(dir / "vocab.txt");
    CHECK(Vocabulary::load(dir / "vocab.txt") == v);
    CHECK_THROWS(Vocabulary::from_text("[UNK]\n[PAD]\n[BOS]\n[EOS]\n[MASK]\n[SEP]\n"));
    CHECK_THROWS(Vocabulary::from_text("[PAD]\n[UNK]\n[BOS]\n[EOS]\n[MASK]\n[SEP]\na\na\n"));
    fs::remove_all(dir);
  }

  TEST_CASE("whitespace helpers") {
    CHECK(split_whitespace("  a\tb  c\n") == std::vector<std::string>{"a", "b", "c"});
    CHECK(normalize_whitespace(" a   b ") == "a b");
  }

  TEST_CASE("synthetic task targets") {
    const std::vector<int> src = {9, 7, 8, 7};
    CHECK(synth_target(SynthKind::copy, src) == src);
    CHECK(synth_target(SynthKind::reverse, src) == std::vector<int>{7, 8, 7, 9});
    CHECK(synth_target(SynthKind::sort, src) == std::vector<int>{7, 7, 8, 9});
    CHECK(parse_synth_kind("reverse") == SynthKind::reverse);
    CHECK(to_string(SynthKind::sort) == "sort");
    CHECK_THROWS(parse_synth_kind("shuffle"));
  }

  TEST_CASE("synthetic dataset splits") {
    SynthOptions o;
    o.n_pairs = 1000;
    o.payload_size = 16;
    o.min_len = 2;
    o.max_len = 9;
    const auto a = synth_task(o);
    const auto b = synth_task(o);
    CHECK(a.splits.train.size() == 800);
    CHECK(a.splits.dev.size() == 100);
    CHECK(a.splits.test.size() == 100);
    CHECK(a.vocab.size() == 6 + 16);
    std::set<std::string> ids;
    std::set<int> lengths;
    for (const auto* split : {&a.splits.train, &a.splits.dev, &a.splits.test})
      for (const auto& p : *split) {
        CHECK(ids.insert(p.id).second);
        CHECK(p.target == p.source);
        lengths.insert(static_cast<int>(p.source.size()));
        for (int t : p.source) CHECK((t >= 6 && t < 22));
      }
    CHECK(*lengths.begin() == 2);
    CHECK(*lengths.rbegin() == 9);
    CHECK(a.splits.test.back().source == b.splits.test.back().source);
    o.seed = 2;
    CHECK(synth_task(o).splits.train.front().source != a.splits.train.front().source);
    o.max_len = 200;
    CHECK_THROWS_AS(synth_task(o), std::invalid_argument);
  }

  TEST_CASE("text ingestion") {
    const auto docs = ingest_text_buffer("a b\r\n\r\n  c  \n\nd e f");
    REQUIRE(docs.size() == 3);
    CHECK(docs[0] == std::vector<std::string>{"a", "b"});
    CHECK(docs[1] == std::vector<std::string>{"c"});
    CHECK(docs[2].size() == 3);
    CHECK(ingest_text_buffer("caf\xc3\xa9 \xe2\x82\xac \xf0\x9f\x98\x80").front().size() == 3);
    CHECK_THROWS_WITH(ingest_text_buffer("ok\n\xff rest"), doctest::Contains("byte offset 3"));
  }

  TEST_CASE("invalid UTF-8 detection") {
    CHECK_FALSE(find_invalid_utf8("plain ascii").has_value());
    CHECK(find_invalid_utf8("ab\xc0\xaf") == size_t{2});          // overlong
    CHECK(find_invalid_utf8("\xed\xa0\x80") == size_t{0});        // surrogate
    CHECK(find_invalid_utf8("x\xf4\x90\x80\x80") == size_t{1});   // above U+10FFFF
    CHECK(find_invalid_utf8("xyz\xe2\x82") == size_t{3});         // truncated
    CHECK(find_invalid_utf8("\x80") == size_t{0});                // stray continuation
  }

  TEST_CASE("dataset files") {
    const auto dir = temp_dir("jsonl");
    const std::vector<TextPair> pairs = {{"p1", "a b", "b a"}, {"p2", "c", "c c"}};
    write_dataset(dir / "d.jsonl", pairs);
    const auto back = read_dataset(dir / "d.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[1].id == "p2");
    CHECK(back[1].tgt == "c c");

    auto v = build_vocab(std::vector<std::string>{"a b c"}, 20);
    const auto enc = encode_pairs(back, v);
    CHECK(enc[0].source == std::vector<int>{v.id("a"), v.id("b")});
    const std::vector<TextPair> bad = {{"q7", "a zzz", "b"}};
    CHECK_THROWS_WITH_AS(encode_pairs(bad, v), doctest::Contains("q7"), std::invalid_argument);
    const auto text = to_text_pairs(enc, v);
    CHECK(text[0].src == "a b");

    std::ofstream(dir / "broken.jsonl") << "{\"id\": \"x\", \"tgt\": \"a\"}\n";
    CHECK_THROWS(read_dataset(dir / "broken.jsonl"));
    fs::remove_all(dir);
  }
}
