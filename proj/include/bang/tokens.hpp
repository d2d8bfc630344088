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

#include <array>
#include <string_view>

namespace bang {

// Reserved ids, fixed in every vocabulary.
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kMask = 4;
inline constexpr int kSep = 5;
inline constexpr int kNumSpecials = 6;

inline constexpr std::array<std::string_view, kNumSpecials> kSpecialTokens = {"[PAD]", "[UNK]", "[BOS]",
                                                                              "[EOS]", "[MASK]", "[SEP]"};

inline constexpr bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

}  // namespace bang
