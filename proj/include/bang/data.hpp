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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bang {

// Token <-> id bijection; ids 0..5 are always [PAD] [UNK] [BOS] [EOS] [MASK] [SEP].
class Vocabulary {
 public:
  Vocabulary();

  // Appends a token if absent; returns its id.
  int add(const std::string& token);
  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;  // [UNK] when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  // Space-joined tokens; specials except [UNK] and [SEP] are skipped.
  std::string decode(std::span<const int> ids) const;

  // One token per line, line number = id.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_whitespace(std::string_view text);
std::string normalize_whitespace(std::string_view text);

// Whitespace tokens ranked by frequency (ties lexicographic), truncated to
// max_size - 6, after the specials. Throws on an empty corpus.
Vocabulary build_vocab(std::span<const std::string> lines, int max_size);

struct ParallelPair {
  std::string id;
  std::vector<int> source;
  std::vector<int> target;
};

struct Splits {
  std::vector<ParallelPair> train;
  std::vector<ParallelPair> dev;
  std::vector<ParallelPair> test;
};

enum class SynthKind { copy, reverse, sort };
std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& name);

struct SynthOptions {
  SynthKind kind = SynthKind::copy;
  int payload_size = 32;
  int min_len = 4;
  int max_len = 12;
  int n_pairs = 5000;
  uint64_t seed = 1;
  int max_positions = 128;
};

struct SynthDataset {
  Vocabulary vocab;
  Splits splits;
};

// Payload tokens are w00, w01, ... at ids 6, 7, ...
Vocabulary synthetic_vocab(int payload_size);
std::vector<int> synth_target(SynthKind kind, std::span<const int> source);
// Uniform lengths and tokens, deterministic by seed; 80/10/10 split by index.
SynthDataset synth_task(const SynthOptions& options);

// One document per non-blank line, CRLF normalized. Throws
// std::runtime_error naming the byte offset of the first invalid UTF-8 byte.
std::vector<std::vector<std::string>> ingest_text(const std::filesystem::path& path);
std::vector<std::vector<std::string>> ingest_text_buffer(std::string_view bytes);
// Byte offset of the first invalid UTF-8 sequence, if any.
std::optional<size_t> find_invalid_utf8(std::string_view bytes);

// JSON-lines dataset: {"id": ..., "src": "...", "tgt": "..."}.
struct TextPair {
  std::string id;
  std::string src;
  std::string tgt;
};
std::vector<TextPair> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const TextPair> pairs);
std::vector<TextPair> to_text_pairs(std::span<const ParallelPair> pairs, const Vocabulary& vocab);
// Throws std::invalid_argument naming the pair when a token is outside the vocabulary.
std::vector<ParallelPair> encode_pairs(std::span<const TextPair> pairs, const Vocabulary& vocab);

}  // namespace bang
