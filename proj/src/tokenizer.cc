// Copyright 2026 The ESCI Rank Authors.
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

#include "esci/tokenizer.h"

#include <algorithm>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/text.h"
#include "utf8.h"

namespace esci {
namespace {

// Byte offsets of code point boundaries in `word`, including word.size().
// Malformed bytes count as one unit each.
std::vector<std::size_t> code_point_offsets(std::string_view word) {
  std::vector<std::size_t> offsets;
  std::size_t i = 0;
  while (i < word.size()) {
    offsets.push_back(i);
    char32_t cp = 0;
    const std::size_t len = internal::decode_utf8(word, i, &cp);
    i += len == 0 ? 1 : len;
  }
  offsets.push_back(word.size());
  return offsets;
}

void emit_word_tokens(std::string_view word, const TokenizerConfig& cfg,
                      std::vector<TokenId>& out) {
  out.push_back(hashed_id(word, cfg));
  const auto offsets = code_point_offsets(word);
  const std::size_t units = offsets.size() - 1;
  for (std::size_t n : cfg.ngram_orders) {
    if (n == 0 || n > units) continue;
    for (std::size_t s = 0; s + n <= units; ++s) {
      out.push_back(hashed_id(word.substr(offsets[s], offsets[s + n] - offsets[s]), cfg));
    }
  }
}

void emit_plain(std::string_view segment, const TokenizerConfig& cfg, std::vector<TokenId>& out) {
  const std::string lowered = ascii_lower(segment);
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && (lowered[i] == ' ' || lowered[i] == '\t' || lowered[i] == '\n'))
      ++i;
    std::size_t j = i;
    while (j < lowered.size() && lowered[j] != ' ' && lowered[j] != '\t' && lowered[j] != '\n')
      ++j;
    if (j > i) emit_word_tokens(std::string_view(lowered).substr(i, j - i), cfg, out);
    i = j;
  }
}

}  // namespace

void TokenizerConfig::validate() const {
  if (reserved.size() < 3 || reserved[0] != "[CLS]" || reserved[1] != "[SEP]" ||
      reserved[2] != "[PAD]") {
    throw ConfigError("tokenizer: reserved tokens must start with [CLS], [SEP], [PAD]");
  }
  if (vocab_size <= reserved.size()) {
    throw ConfigError(fmt::format("tokenizer: vocab_size {} must exceed the {} reserved ids",
                                  vocab_size, reserved.size()));
  }
  for (const auto& token : reserved) {
    if (token.empty() || token.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigError(fmt::format("tokenizer: reserved token '{}' is empty or has whitespace",
                                    token));
    }
  }
  if (max_len < 2) throw ConfigError("tokenizer: max_len must be at least 2");
  for (std::size_t n : ngram_orders) {
    if (n == 0) throw ConfigError("tokenizer: n-gram orders must be positive");
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

TokenId hashed_id(std::string_view token, const TokenizerConfig& cfg) {
  const std::uint64_t reserved = cfg.reserved.size();
  return static_cast<TokenId>(reserved + fnv1a64(token) % (cfg.vocab_size - reserved));
}

TokenizedInput tokenize(std::string_view text, const TokenizerConfig& cfg) {
  std::vector<TokenId> ids;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    // Earliest reserved token at or after pos; longest wins on ties.
    std::size_t best_at = std::string_view::npos;
    std::size_t best_id = 0;
    for (std::size_t r = 0; r < cfg.reserved.size(); ++r) {
      const std::size_t at = text.find(cfg.reserved[r], pos);
      if (at == std::string_view::npos) continue;
      if (at < best_at || (at == best_at && cfg.reserved[r].size() > cfg.reserved[best_id].size())) {
        best_at = at;
        best_id = r;
      }
    }
    const std::size_t stop = best_at == std::string_view::npos ? text.size() : best_at;
    emit_plain(text.substr(pos, stop - pos), cfg, ids);
    if (best_at == std::string_view::npos) break;
    ids.push_back(static_cast<TokenId>(best_id));
    pos = best_at + cfg.reserved[best_id].size();
  }

  if (ids.empty() || ids.front() != cfg.cls_id()) ids.insert(ids.begin(), cfg.cls_id());
  if (ids.size() > cfg.max_len) {
    ids.resize(cfg.max_len);
    ids.back() = cfg.sep_id();
  }
  TokenizedInput out;
  out.attention_len = ids.size();
  out.ids = std::move(ids);
  out.ids.resize(cfg.max_len, cfg.pad_id());
  return out;
}

}  // namespace esci
