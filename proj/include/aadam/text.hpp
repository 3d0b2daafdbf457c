#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aadam/corpus.hpp"

namespace aadam {

struct TokenizeOptions {
  bool lowercase = true;
  bool strip_punct = false;
};

/// Splits on ASCII whitespace after the configured normalizations. Case
/// folding and punctuation stripping act on ASCII only; other bytes pass
/// through untouched.
std::vector<std::string> tokenize(std::string_view text, const TokenizeOptions& options = {});

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kMask = 4;
inline constexpr int kCount = 5;
}  // namespace special

/// Token <-> id map. Ids 0..4 are PAD, UNK, CLS, SEP, MASK.
class Vocabulary {
 public:
  /// Specials only.
  Vocabulary();
  /// Specials followed by the given corpus tokens, in order.
  explicit Vocabulary(std::vector<std::string> corpus_tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line; the line number is the id.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

const std::vector<std::string>& special_token_strings();
bool is_special(int id);

/// Tokens with frequency >= min_freq ranked by (frequency desc, token asc),
/// truncated to max_size - 5 after the specials.
Vocabulary build_vocab(std::span<const Corpus> corpora, std::size_t min_freq, std::size_t max_size,
                       const TokenizeOptions& options = {});

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;

  std::size_t length() const { return ids.size(); }
  /// Number of leading positions up to and including the last non-PAD one.
  std::size_t active_length() const;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// [CLS] s1 [SEP] s2 [SEP] padded to max_len. When too long, the longer
/// sentence loses tokens from its right end first (s2 on ties).
TokenSequence encode_pair(std::string_view s1, std::string_view s2, const Vocabulary& vocab, std::size_t max_len,
                          const TokenizeOptions& options = {});

/// [CLS] s [SEP] padded to max_len, truncating s from the right.
TokenSequence encode_single(std::string_view s, const Vocabulary& vocab, std::size_t max_len,
                            const TokenizeOptions& options = {});

/// Union of tokenize() over every sentence of the corpus.
std::set<std::string> token_set(const Corpus& corpus, const TokenizeOptions& options = {});

}  // namespace aadam
