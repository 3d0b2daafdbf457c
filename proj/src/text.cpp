#include "aadam/text.hpp"

#include <algorithm>
#include <map>

#include "aadam/error.hpp"

namespace aadam {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && ((u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126));
}

std::vector<int> to_ids(std::string_view s, const Vocabulary& vocab, const TokenizeOptions& options) {
  std::vector<int> ids;
  for (const auto& tok : tokenize(s, options)) {
    // Text that spells a special token is still just text.
    const int id = vocab.id(tok);
    ids.push_back(is_special(id) ? special::kUnk : id);
  }
  return ids;
}

TokenSequence finish(std::vector<int> ids, std::size_t max_len) {
  TokenSequence seq;
  seq.attention_mask.assign(ids.size(), 1);
  seq.ids = std::move(ids);
  seq.ids.resize(max_len, special::kPad);
  seq.attention_mask.resize(max_len, 0);
  return seq;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizeOptions& options) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::string tok;
    while (i < text.size() && !is_space(text[i])) {
      char c = text[i++];
      if (options.strip_punct && is_ascii_punct(c)) continue;
      if (options.lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      tok.push_back(c);
    }
    if (!tok.empty()) out.push_back(std::move(tok));
  }
  return out;
}

const std::vector<std::string>& special_token_strings() {
  static const std::vector<std::string> specials{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return specials;
}

bool is_special(int id) { return id >= 0 && id < special::kCount; }

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> corpus_tokens) {
  tokens_ = special_token_strings();
  tokens_.insert(tokens_.end(), std::make_move_iterator(corpus_tokens.begin()),
                 std::make_move_iterator(corpus_tokens.end()));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("vocabulary: empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary: duplicate token '" + tokens_[i] + "' at id " + std::to_string(i));
    }
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? special::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) out += t + '\n';
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  const auto& specials = special_token_strings();
  if (lines.size() < specials.size() || !std::equal(specials.begin(), specials.end(), lines.begin())) {
    throw DataError("vocabulary file must start with the special tokens [PAD] [UNK] [CLS] [SEP] [MASK]");
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + static_cast<std::ptrdiff_t>(specials.size()), lines.end()));
}

Vocabulary build_vocab(std::span<const Corpus> corpora, std::size_t min_freq, std::size_t max_size,
                       const TokenizeOptions& options) {
  if (max_size <= static_cast<std::size_t>(special::kCount)) {
    throw UsageError("build_vocab: max_size must exceed the 5 special tokens");
  }
  std::map<std::string, std::size_t> counts;
  auto count = [&](std::string_view s) {
    for (auto& t : tokenize(s, options)) ++counts[std::move(t)];
  };
  for (const Corpus& c : corpora) {
    for (const auto& p : c.pairs) {
      count(p.sentence1);
      count(p.sentence2);
    }
    for (const auto& s : c.sentences) count(s);
  }
  const auto& specials = special_token_strings();
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n < min_freq) continue;
    if (std::find(specials.begin(), specials.end(), tok) != specials.end()) continue;
    ranked.emplace_back(tok, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t keep = std::min(ranked.size(), max_size - special::kCount);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(std::move(ranked[i].first));
  return Vocabulary(std::move(tokens));
}

std::size_t TokenSequence::active_length() const {
  std::size_t n = attention_mask.size();
  while (n > 0 && attention_mask[n - 1] == 0) --n;
  return n;
}

TokenSequence encode_pair(std::string_view s1, std::string_view s2, const Vocabulary& vocab, std::size_t max_len,
                          const TokenizeOptions& options) {
  if (max_len < 4) throw UsageError("encode_pair: max_len must be at least 4");
  std::vector<int> a = to_ids(s1, vocab, options);
  std::vector<int> b = to_ids(s2, vocab, options);
  const std::size_t budget = max_len - 3;
  while (a.size() + b.size() > budget) {
    if (a.size() > b.size()) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }
  std::vector<int> ids;
  ids.reserve(max_len);
  ids.push_back(special::kCls);
  ids.insert(ids.end(), a.begin(), a.end());
  ids.push_back(special::kSep);
  ids.insert(ids.end(), b.begin(), b.end());
  ids.push_back(special::kSep);
  return finish(std::move(ids), max_len);
}

TokenSequence encode_single(std::string_view s, const Vocabulary& vocab, std::size_t max_len,
                            const TokenizeOptions& options) {
  if (max_len < 3) throw UsageError("encode_single: max_len must be at least 3");
  std::vector<int> a = to_ids(s, vocab, options);
  if (a.size() > max_len - 2) a.resize(max_len - 2);
  std::vector<int> ids;
  ids.reserve(max_len);
  ids.push_back(special::kCls);
  ids.insert(ids.end(), a.begin(), a.end());
  ids.push_back(special::kSep);
  return finish(std::move(ids), max_len);
}

std::set<std::string> token_set(const Corpus& corpus, const TokenizeOptions& options) {
  std::set<std::string> out;
  auto add = [&](std::string_view s) {
    for (auto& t : tokenize(s, options)) out.insert(std::move(t));
  };
  for (const auto& p : corpus.pairs) {
    add(p.sentence1);
    add(p.sentence2);
  }
  for (const auto& s : corpus.sentences) add(s);
  return out;
}

}  // namespace aadam
