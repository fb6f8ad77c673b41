// SPDX-License-Identifier: Apache-2.0
#include "minigpt/tokenizer.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <set>
#include <tuple>
#include <unordered_map>

#include "minigpt/errors.hpp"
#include "minigpt/utf8.hpp"

namespace minigpt {

namespace {

std::uint64_t pair_key(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(left) << 32) | right;
}

// Whitespace-separated words of `text`, as code points.
std::vector<std::u32string> split_words(const std::vector<char32_t>& chars) {
  std::vector<std::u32string> words;
  std::u32string current;
  for (char32_t cp : chars) {
    if (utf8::is_separator(cp)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

// Replaces every non-overlapping occurrence of (left,right), scanning left to right.
void apply_merge(std::vector<TokenId>& word, TokenId left, TokenId right, TokenId result) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < word.size();) {
    if (i + 1 < word.size() && word[i] == left && word[i + 1] == right) {
      word[out++] = result;
      i += 2;
    } else {
      word[out++] = word[i++];
    }
  }
  word.resize(out);
}

}  // namespace

BpeModel BpeModel::create(std::vector<char32_t> alphabet, const std::vector<std::pair<TokenId, TokenId>>& merges) {
  std::sort(alphabet.begin(), alphabet.end());
  if (std::adjacent_find(alphabet.begin(), alphabet.end()) != alphabet.end()) {
    throw ConfigError("alphabet contains a duplicate character");
  }
  for (char32_t cp : alphabet) {
    if (utf8::is_separator(cp)) throw ConfigError("alphabet may not contain the word separator " + utf8::describe(cp));
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw ConfigError("alphabet contains an invalid code point " + utf8::describe(cp));
    }
  }

  BpeModel m;
  m.alphabet_ = std::move(alphabet);
  m.symbols_.push_back(SpecialSymbol{SpecialKind::EndOfWord});
  m.symbols_.push_back(SpecialSymbol{SpecialKind::EndOfArtefact});
  m.text_.push_back("<eow>");
  m.text_.push_back("<eoa>");
  for (char32_t cp : m.alphabet_) {
    m.symbols_.push_back(BaseSymbol{cp, utf8::encode(cp)});
    m.text_.push_back(utf8::encode(cp));
  }
  for (std::size_t i = 0; i < merges.size(); ++i) {
    const auto [left, right] = merges[i];
    const auto next = static_cast<TokenId>(m.symbols_.size());
    if (left >= next || right >= next) {
      throw RangeError("merge " + std::to_string(i + 1) + " references id " + std::to_string(std::max(left, right)) +
                       " but only " + std::to_string(next) + " symbols exist");
    }
    if (left < kSpecialCount || right < kSpecialCount) {
      throw ConfigError("merge " + std::to_string(i + 1) + " involves a special symbol");
    }
    m.symbols_.push_back(MergedSymbol{left, right});
    m.text_.push_back(m.text_[left] + m.text_[right]);
    m.merges_.push_back(MergeRule{left, right, next, i + 1});
  }
  return m;
}

bool BpeModel::in_alphabet(char32_t cp) const {
  return std::binary_search(alphabet_.begin(), alphabet_.end(), cp);
}

std::optional<TokenId> BpeModel::base_id(char32_t cp) const {
  auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), cp);
  if (it == alphabet_.end() || *it != cp) return std::nullopt;
  return static_cast<TokenId>(kSpecialCount + (it - alphabet_.begin()));
}

std::string BpeModel::symbol_text(TokenId id) const {
  if (id >= symbols_.size()) throw RangeError("token id " + std::to_string(id) + " out of range");
  return text_[id];
}

std::vector<TokenId> BpeModel::expand(TokenId id) const {
  if (id >= symbols_.size()) throw RangeError("token id " + std::to_string(id) + " out of range");
  std::vector<TokenId> out;
  std::vector<TokenId> stack{id};
  while (!stack.empty()) {
    const TokenId top = stack.back();
    stack.pop_back();
    if (const auto* merged = std::get_if<MergedSymbol>(&symbols_[top])) {
      stack.push_back(merged->right);
      stack.push_back(merged->left);
    } else {
      out.push_back(top);
    }
  }
  return out;
}

std::vector<char32_t> collect_alphabet(const std::vector<std::string>& corpus) {
  std::set<char32_t> seen;
  for (std::size_t a = 0; a < corpus.size(); ++a) {
    std::vector<char32_t> chars;
    try {
      chars = utf8::decode(corpus[a]);
    } catch (const DomainError& e) {
      throw IngestionError("artefact " + std::to_string(a) + ": " + e.what());
    }
    for (char32_t cp : chars)
      if (!utf8::is_separator(cp)) seen.insert(cp);
  }
  return {seen.begin(), seen.end()};
}

namespace {

// Words of every artefact, as base ids, validating characters against the alphabet.
std::vector<std::vector<TokenId>> ingest_words(const BpeModel& base, const std::vector<std::string>& corpus,
                                               std::vector<std::size_t>* artefact_word_counts) {
  std::vector<std::vector<TokenId>> words;
  for (std::size_t a = 0; a < corpus.size(); ++a) {
    std::vector<char32_t> chars;
    try {
      chars = utf8::decode(corpus[a]);
    } catch (const DomainError& e) {
      throw IngestionError("artefact " + std::to_string(a) + ": " + e.what());
    }
    std::size_t count = 0;
    for (const auto& w : split_words(chars)) {
      std::vector<TokenId> ids;
      ids.reserve(w.size());
      for (char32_t cp : w) {
        const auto id = base.base_id(cp);
        if (!id) {
          throw IngestionError("character " + utf8::describe(cp) + " in artefact " + std::to_string(a) +
                               " is not in the alphabet");
        }
        ids.push_back(*id);
      }
      words.push_back(std::move(ids));
      ++count;
    }
    if (artefact_word_counts) artefact_word_counts->push_back(count);
  }
  return words;
}

}  // namespace

TokenSeq corpus_stream(const BpeModel& base, const std::vector<std::string>& corpus) {
  std::vector<std::size_t> per_artefact;
  const auto words = ingest_words(base, corpus, &per_artefact);
  TokenSeq stream;
  std::size_t w = 0;
  for (std::size_t a = 0; a < corpus.size(); ++a) {
    if (a > 0) stream.push_back(kEndOfArtefact);
    for (std::size_t k = 0; k < per_artefact[a]; ++k, ++w) {
      stream.insert(stream.end(), words[w].begin(), words[w].end());
      stream.push_back(kEndOfWord);
    }
  }
  return stream;
}

BpeModel train_bpe(const std::vector<std::string>& corpus, std::vector<char32_t> alphabet, std::size_t n_vocab,
                   const TrainOptions& options) {
  const BpeModel base = BpeModel::create(std::move(alphabet), {});
  if (n_vocab < base.n_vocab()) {
    throw ConfigError("n_vocab " + std::to_string(n_vocab) + " is smaller than the base vocabulary (" +
                      std::to_string(base.n_vocab()) + ")");
  }
  if (n_vocab > std::numeric_limits<TokenId>::max()) throw ConfigError("n_vocab exceeds the token id range");

  // Distinct words in order of first appearance, with multiplicities. Since a
  // word's first occurrence precedes all later ones, (word index, offset)
  // orders pair occurrences the same way the flat stream does.
  struct Word {
    std::vector<TokenId> symbols;
    std::size_t count;
  };
  std::vector<Word> words;
  {
    std::unordered_map<std::u32string, std::size_t> index;
    for (auto& ids : ingest_words(base, corpus, nullptr)) {
      std::u32string key(ids.begin(), ids.end());
      auto [it, inserted] = index.emplace(std::move(key), words.size());
      if (inserted) {
        words.push_back(Word{std::move(ids), 1});
      } else {
        ++words[it->second].count;
      }
    }
  }

  struct PairStats {
    std::size_t count = 0;
    std::size_t first_word = 0;
    std::size_t first_pos = 0;
  };

  std::vector<std::pair<TokenId, TokenId>> merges;
  std::size_t vocab_size = base.n_vocab();
  while (vocab_size < n_vocab) {
    std::unordered_map<std::uint64_t, PairStats> stats;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& s = words[w].symbols;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        auto [it, inserted] = stats.try_emplace(pair_key(s[i], s[i + 1]));
        if (inserted) {
          it->second.first_word = w;
          it->second.first_pos = i;
        }
        it->second.count += words[w].count;
      }
    }

    const PairStats* best = nullptr;
    std::uint64_t best_key = 0;
    for (const auto& [key, st] : stats) {
      if (!best || st.count > best->count ||
          (st.count == best->count &&
           std::tie(st.first_word, st.first_pos) < std::tie(best->first_word, best->first_pos))) {
        best = &st;
        best_key = key;
      }
    }
    if (!best || best->count < std::max<std::size_t>(options.min_pair_count, 1)) break;

    const auto left = static_cast<TokenId>(best_key >> 32);
    const auto right = static_cast<TokenId>(best_key & 0xFFFFFFFFu);
    const auto result = static_cast<TokenId>(vocab_size);
    for (auto& w : words) apply_merge(w.symbols, left, right, result);
    merges.emplace_back(left, right);

    const std::size_t before = vocab_size;
    vocab_size = base.n_vocab() + merges.size();
    assert(vocab_size == before + 1);
    (void)before;
  }
  return BpeModel::create(base.alphabet(), merges);
}

TokenSeq tokenize(const BpeModel& model, std::string_view text) {
  std::vector<char32_t> chars;
  try {
    chars = utf8::decode(text);
  } catch (const DomainError& e) {
    throw TokenizationError(e.what());
  }
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (!utf8::is_separator(chars[i]) && !model.in_alphabet(chars[i])) {
      throw TokenizationError("character " + utf8::describe(chars[i]) + " at position " + std::to_string(i) +
                              " is not in the alphabet");
    }
  }

  std::unordered_map<std::uint64_t, const MergeRule*> rank;
  rank.reserve(model.merges().size());
  for (const auto& r : model.merges()) rank.emplace(pair_key(r.left, r.right), &r);

  // Applying the lowest-ordinal applicable merge until none remain is the same
  // as applying every merge in ordinal order: a merge's result id exceeds the
  // ids of all earlier merges' operands, so an applied rule never reappears.
  TokenSeq out;
  for (const auto& w : split_words(chars)) {
    std::vector<TokenId> ids;
    ids.reserve(w.size());
    for (char32_t cp : w) ids.push_back(*model.base_id(cp));
    for (;;) {
      const MergeRule* next = nullptr;
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        auto it = rank.find(pair_key(ids[i], ids[i + 1]));
        if (it != rank.end() && (!next || it->second->ordinal < next->ordinal)) next = it->second;
      }
      if (!next) break;
      apply_merge(ids, next->left, next->right, next->result);
    }
    out.insert(out.end(), ids.begin(), ids.end());
    out.push_back(kEndOfWord);
  }
  return out;
}

std::string detokenize(const BpeModel& model, const TokenSeq& tokens, const DetokenizeOptions& options) {
  std::string out;
  bool pending_space = false;
  for (TokenId id : tokens) {
    for (TokenId base : model.expand(id)) {
      if (base == kEndOfWord) {
        pending_space = true;
      } else if (base == kEndOfArtefact) {
        pending_space = false;
        out += options.artefact_separator;
      } else {
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        out += model.symbol_text(base);
      }
    }
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool gap = false;
  for (char c : text) {
    if (c == ' ' || (c >= '\t' && c <= '\r')) {
      gap = true;
    } else {
      if (gap && !out.empty()) out += ' ';
      gap = false;
      out += c;
    }
  }
  return out;
}

TokenMatrix::TokenMatrix(TokenSeq ids, std::size_t width) : ids_(std::move(ids)), width_(width) {
  Matrix m(ids_.size(), width_);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] >= width_) {
      throw RangeError("token id " + std::to_string(ids_[i]) + " at position " + std::to_string(i) +
                       " is outside the vocabulary of size " + std::to_string(width_));
    }
    m(i, ids_[i]) = 1.0;
  }
  dense_ = std::move(m);
}

TokenMatrix encode_matrix(const BpeModel& model, const TokenSeq& tokens, std::size_t n_ctx) {
  if (tokens.empty()) throw DimensionError("encode_matrix: empty token sequence");
  if (tokens.size() > n_ctx) {
    throw DimensionError("encode_matrix: " + std::to_string(tokens.size()) + " tokens exceed n_ctx = " +
                         std::to_string(n_ctx));
  }
  return TokenMatrix(tokens, model.n_vocab());
}

}  // namespace minigpt
