// SPDX-License-Identifier: Apache-2.0
//
// Byte pair encoding over a character alphabet.
//
// The base vocabulary holds one symbol per alphabet character (its UTF-8 byte
// string) plus two special symbols marking the end of a word and the end of
// an artefact. Token ids are positions in the vocabulary:
//
//   0                 EndOfWord
//   1                 EndOfArtefact
//   2 .. 2+|A|-1      base symbols, in code point order
//   2+|A| ..          merged symbols, in merge order
//
// The one-hot encoding maps token id k to the standard basis vector e_k.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "minigpt/tensor.hpp"

namespace minigpt {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kEndOfWord = 0;
inline constexpr TokenId kEndOfArtefact = 1;
inline constexpr std::size_t kSpecialCount = 2;

enum class SpecialKind { EndOfWord, EndOfArtefact };

struct BaseSymbol {
  char32_t character;
  std::string bytes;  // UTF-8 encoding of `character`
  friend bool operator==(const BaseSymbol&, const BaseSymbol&) = default;
};

struct SpecialSymbol {
  SpecialKind kind;
  friend bool operator==(const SpecialSymbol&, const SpecialSymbol&) = default;
};

struct MergedSymbol {
  TokenId left;
  TokenId right;
  friend bool operator==(const MergedSymbol&, const MergedSymbol&) = default;
};

using Symbol = std::variant<SpecialSymbol, BaseSymbol, MergedSymbol>;

struct MergeRule {
  TokenId left;
  TokenId right;
  TokenId result;
  std::size_t ordinal;  // 1-based, contiguous
  friend bool operator==(const MergeRule&, const MergeRule&) = default;
};

class BpeModel {
 public:
  // Validates the alphabet (no duplicates, no separator whitespace) and every
  // merge (ids in range at the time of the merge, no special symbols).
  // The alphabet is stored sorted by code point.
  static BpeModel create(std::vector<char32_t> alphabet, const std::vector<std::pair<TokenId, TokenId>>& merges);

  const std::vector<char32_t>& alphabet() const { return alphabet_; }
  const std::vector<Symbol>& symbols() const { return symbols_; }
  const std::vector<MergeRule>& merges() const { return merges_; }
  std::size_t n_vocab() const { return symbols_.size(); }
  std::size_t base_size() const { return kSpecialCount + alphabet_.size(); }

  bool in_alphabet(char32_t cp) const;
  std::optional<TokenId> base_id(char32_t cp) const;

  // UTF-8 text of a token with merged symbols fully expanded. Specials render
  // as "<eow>" and "<eoa>".
  std::string symbol_text(TokenId id) const;

  // Sequence of base/special ids a token expands to.
  std::vector<TokenId> expand(TokenId id) const;

  friend bool operator==(const BpeModel&, const BpeModel&) = default;

 private:
  std::vector<char32_t> alphabet_;
  std::vector<Symbol> symbols_;
  std::vector<MergeRule> merges_;
  std::vector<std::string> text_;  // expanded UTF-8 per id
};

struct TrainOptions {
  // Merging stops once the most frequent pair occurs fewer times than this.
  std::size_t min_pair_count = 1;
};

// Greedy BPE: repeatedly merges the most frequent adjacent pair of non-special
// symbols, ties broken by the earliest first occurrence in the corpus stream.
// Words (whitespace-separated) each end in EndOfWord and artefacts are
// separated by EndOfArtefact, so merges never cross word boundaries. Stops at
// `n_vocab` symbols or when no eligible pair remains.
BpeModel train_bpe(const std::vector<std::string>& corpus, std::vector<char32_t> alphabet, std::size_t n_vocab,
                   const TrainOptions& options = {});

// Every non-separator character appearing in the corpus, sorted.
std::vector<char32_t> collect_alphabet(const std::vector<std::string>& corpus);

// The symbol stream the trainer starts from: base ids per word followed by
// EndOfWord, with EndOfArtefact between consecutive artefacts.
TokenSeq corpus_stream(const BpeModel& base, const std::vector<std::string>& corpus);

TokenSeq tokenize(const BpeModel& model, std::string_view text);

struct DetokenizeOptions {
  std::string artefact_separator = "★";
};

// EndOfWord renders as a single space between words (nothing when trailing);
// EndOfArtefact renders as the artefact separator.
std::string detokenize(const BpeModel& model, const TokenSeq& tokens, const DetokenizeOptions& options = {});

// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

// A context as a matrix whose rows are one-hot token vectors.
class TokenMatrix {
 public:
  TokenMatrix(TokenSeq ids, std::size_t width);

  std::size_t n() const { return ids_.size(); }
  std::size_t width() const { return width_; }
  const TokenSeq& ids() const { return ids_; }
  const Matrix& dense() const { return dense_; }

 private:
  TokenSeq ids_;
  std::size_t width_;
  Matrix dense_;
};

TokenMatrix encode_matrix(const BpeModel& model, const TokenSeq& tokens, std::size_t n_ctx);

}  // namespace minigpt
