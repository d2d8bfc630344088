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

#include "bang/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bang/tokens.hpp"

namespace bang {

Vocabulary::Vocabulary() {
  for (std::string_view s : kSpecialTokens) add(std::string(s));
}

int Vocabulary::add(const std::string& token) {
  if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos)
    throw std::invalid_argument("vocabulary: token must be non-empty without whitespace");
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& tok : split_whitespace(text)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (is_special(i) && i != kUnk && i != kSep) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(i);
  }
  return out;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  Vocabulary v;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < kNumSpecials) {
      if (line != kSpecialTokens[line_no]) throw std::invalid_argument("vocabulary: specials missing or out of order");
    } else {
      if (v.find(line)) throw std::invalid_argument("vocabulary: duplicate token " + line);
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < kNumSpecials) throw std::invalid_argument("vocabulary: specials missing or out of order");
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    size_t j = i;
    while (j < text.size() && !space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (const auto& t : split_whitespace(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocabulary build_vocab(std::span<const std::string> lines, int max_size) {
  std::map<std::string, int64_t> counts;
  for (const auto& line : lines)
    for (auto& tok : split_whitespace(line)) ++counts[tok];
  if (counts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= max_size) break;
    if (v.find(tok)) continue;  // a literal special in the corpus keeps its reserved id
    v.add(tok);
  }
  return v;
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::copy:
      return "copy";
    case SynthKind::reverse:
      return "reverse";
    case SynthKind::sort:
      return "sort";
  }
  return "?";
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "copy") return SynthKind::copy;
  if (name == "reverse") return SynthKind::reverse;
  if (name == "sort") return SynthKind::sort;
  throw std::invalid_argument("unknown synthetic task: " + name);
}

Vocabulary synthetic_vocab(int payload_size) {
  if (payload_size < 1) throw std::invalid_argument("synthetic vocab: payload_size must be positive");
  Vocabulary v;
  const int width = payload_size <= 100 ? 2 : static_cast<int>(std::to_string(payload_size - 1).size());
  for (int i = 0; i < payload_size; ++i) {
    std::string num = std::to_string(i);
    v.add("w" + std::string(width - std::min<int>(width, num.size()), '0') + num);
  }
  return v;
}

std::vector<int> synth_target(SynthKind kind, std::span<const int> source) {
  std::vector<int> out(source.begin(), source.end());
  if (kind == SynthKind::reverse) std::reverse(out.begin(), out.end());
  if (kind == SynthKind::sort) std::sort(out.begin(), out.end());
  return out;
}

SynthDataset synth_task(const SynthOptions& o) {
  if (o.min_len < 1 || o.max_len < o.min_len) throw std::invalid_argument("synth_task: bad length range");
  if (o.max_len + 1 > o.max_positions) throw std::invalid_argument("synth_task: length range exceeds max_positions");
  if (o.n_pairs < 1) throw std::invalid_argument("synth_task: n_pairs must be positive");
  SynthDataset ds;
  ds.vocab = synthetic_vocab(o.payload_size);
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<int> len_dist(o.min_len, o.max_len);
  std::uniform_int_distribution<int> tok_dist(kNumSpecials, kNumSpecials + o.payload_size - 1);
  const int n_train = o.n_pairs * 8 / 10;
  const int n_dev = o.n_pairs / 10;
  const int width = static_cast<int>(std::to_string(o.n_pairs - 1).size());
  for (int i = 0; i < o.n_pairs; ++i) {
    ParallelPair p;
    std::string num = std::to_string(i);
    p.id = to_string(o.kind) + "-" + std::string(width - num.size(), '0') + num;
    const int len = len_dist(rng);
    for (int j = 0; j < len; ++j) p.source.push_back(tok_dist(rng));
    p.target = synth_target(o.kind, p.source);
    if (i < n_train) {
      ds.splits.train.push_back(std::move(p));
    } else if (i < n_train + n_dev) {
      ds.splits.dev.push_back(std::move(p));
    } else {
      ds.splits.test.push_back(std::move(p));
    }
  }
  return ds;
}

std::optional<size_t> find_invalid_utf8(std::string_view s) {
  size_t i = 0;
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    const unsigned char c = b[i];
    int extra;
    uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + extra >= s.size()) return i;  // truncated sequence
    for (int k = 1; k <= extra; ++k) {
      if ((b[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (b[i + k] & 0x3F);
    }
    // Overlong encodings, surrogates, out of range.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF))
      return i;
    i += static_cast<size_t>(extra) + 1;
  }
  return std::nullopt;
}

std::vector<std::vector<std::string>> ingest_text_buffer(std::string_view bytes) {
  if (auto bad = find_invalid_utf8(bytes))
    throw std::runtime_error("invalid UTF-8 at byte offset " + std::to_string(*bad));
  std::vector<std::vector<std::string>> docs;
  size_t start = 0;
  while (start <= bytes.size()) {
    size_t end = bytes.find('\n', start);
    if (end == std::string_view::npos) end = bytes.size();
    std::string_view line = bytes.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto toks = split_whitespace(line);
    if (!toks.empty()) docs.push_back(std::move(toks));
    start = end + 1;
  }
  return docs;
}

std::vector<std::vector<std::string>> ingest_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ingest_text_buffer(ss.str());
}

std::vector<TextPair> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<TextPair> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("src").get<std::string>(), j.value("tgt", std::string())});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const TextPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["src"] = p.src;
    j["tgt"] = p.tgt;
    out << j.dump() << '\n';
  }
}

std::vector<TextPair> to_text_pairs(std::span<const ParallelPair> pairs, const Vocabulary& vocab) {
  std::vector<TextPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.id, vocab.decode(p.source), vocab.decode(p.target)});
  return out;
}

std::vector<ParallelPair> encode_pairs(std::span<const TextPair> pairs, const Vocabulary& vocab) {
  std::vector<ParallelPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    ParallelPair e{p.id, {}, {}};
    for (const auto* side : {&p.src, &p.tgt}) {
      auto& dst = side == &p.src ? e.source : e.target;
      for (const auto& tok : split_whitespace(*side)) {
        auto id = vocab.find(tok);
        if (!id) throw std::invalid_argument("pair " + p.id + ": token '" + tok + "' not in vocabulary");
        dst.push_back(*id);
      }
    }
    if (e.source.empty()) throw std::invalid_argument("pair " + p.id + ": empty source");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace bang
