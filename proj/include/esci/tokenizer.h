#ifndef ESCI_TOKENIZER_H_
#define ESCI_TOKENIZER_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace esci {

using TokenId = std::uint32_t;

struct TokenizerConfig {
  std::size_t vocab_size = 1u << 16;
  // Character n-gram orders, counted in code points. Whole words are always
  // emitted as well.
  std::vector<std::size_t> ngram_orders = {3, 4};
  std::size_t max_len = 128;
  // Literal special tokens; the i-th one gets id i. The first three must be
  // [CLS], [SEP] and [PAD].
  std::vector<std::string> reserved = {"[CLS]",   "[SEP]",    "[PAD]",     "[Brand]", "[/Brand]",
                                       "[Color]", "[/Color]", "[Product]", "[/Product]"};

  TokenId cls_id() const { return 0; }
  TokenId sep_id() const { return 1; }
  TokenId pad_id() const { return 2; }

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

struct TokenizedInput {
  std::vector<TokenId> ids;  // exactly max_len entries
  std::size_t attention_len = 0;

  friend bool operator==(const TokenizedInput&, const TokenizedInput&) = default;
};

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// Hashed id of an ordinary (non-reserved) token.
TokenId hashed_id(std::string_view token, const TokenizerConfig& cfg);

// Special tokens map to their reserved ids; everything else is lowercased
// (ASCII), split on spaces, and each word contributes its own id followed by
// its n-gram ids. Long sequences keep their head and end in [SEP].
TokenizedInput tokenize(std::string_view text, const TokenizerConfig& cfg);

}  // namespace esci

#endif  // ESCI_TOKENIZER_H_
