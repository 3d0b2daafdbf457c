#include "aadam/augmentation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <future>
#include <numeric>

#include "aadam/error.hpp"
#include "aadam/random.hpp"
#include "aadam/text.hpp"

namespace aadam {

MockTranslator::MockTranslator(std::uint64_t seed, std::vector<std::string> tokens, std::string pivot,
                               std::size_t max_batch)
    : seed_(seed), tokens_(std::move(tokens)), pivot_(std::move(pivot)), max_batch_(max_batch) {
  if (max_batch_ == 0) throw UsageError("mock translator: max_batch must be positive");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw UsageError("mock translator: duplicate token '" + tokens_[i] + "'");
    }
  }
}

bool MockTranslator::supports(const std::string& source, const std::string& target) const {
  if (languages_.empty()) return true;
  return languages_.count(source) && languages_.count(target);
}

const std::vector<std::size_t>& MockTranslator::permutation(const std::string& language) {
  auto it = perms_.find(language);
  if (it != perms_.end()) return it->second;
  std::vector<std::size_t> perm(tokens_.size());
  std::iota(perm.begin(), perm.end(), 0);
  if (language != pivot_) {
    Rng rng(derive_seed(seed_, string_seed(language)));
    rng.shuffle(std::span(perm));
  }
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  inverses_[language] = std::move(inv);
  return perms_.emplace(language, std::move(perm)).first->second;
}

const std::vector<std::size_t>& MockTranslator::inverse(const std::string& language) {
  permutation(language);
  return inverses_.at(language);
}

std::string MockTranslator::translate_token(const std::string& token, const std::string& source,
                                            const std::string& target) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(token);
  if (it == index_.end() || source == target) return token;
  const std::size_t canonical = inverse(source)[it->second];
  return tokens_[permutation(target)[canonical]];
}

std::vector<TranslationResult> MockTranslator::translate(const std::vector<std::string>& texts,
                                                         const std::string& source, const std::string& target) {
  if (!supports(source, target)) {
    throw TranslationError("mock translator does not support " + source + " -> " + target);
  }
  if (texts.size() > max_batch_) {
    throw TranslationError("batch of " + std::to_string(texts.size()) + " exceeds mock max batch " +
                           std::to_string(max_batch_));
  }
  ++calls_;
  std::vector<TranslationResult> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    if (failing_.count(text)) {
      out.push_back({std::nullopt, "mock failure for '" + text + "'"});
      continue;
    }
    std::string result;
    for (const auto& tok : tokenize(text, {false, false})) {
      if (!result.empty()) result += ' ';
      result += translate_token(tok, source, target);
    }
    out.push_back({std::move(result), ""});
  }
  return out;
}

std::vector<TranslationResult> translate_batch(TranslationClient& client, const std::vector<std::string>& texts,
                                               const std::string& source, const std::string& target,
                                               std::size_t in_flight) {
  if (!client.supports(source, target)) {
    throw TranslationError("unsupported language pair " + source + " -> " + target);
  }
  if (in_flight == 0) in_flight = 1;
  const std::size_t chunk = std::max<std::size_t>(1, client.max_batch());
  std::vector<TranslationResult> out(texts.size());
  std::deque<std::pair<std::size_t, std::future<std::vector<TranslationResult>>>> pending;

  auto collect = [&] {
    auto [start, fut] = std::move(pending.front());
    pending.pop_front();
    auto results = fut.get();
    const std::size_t expected = std::min(chunk, texts.size() - start);
    if (results.size() != expected) {
      throw TranslationError("translator returned " + std::to_string(results.size()) + " results for " +
                             std::to_string(expected) + " texts");
    }
    std::move(results.begin(), results.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  };

  try {
    for (std::size_t start = 0; start < texts.size(); start += chunk) {
      if (pending.size() == in_flight) collect();
      const std::size_t end = std::min(texts.size(), start + chunk);
      std::vector<std::string> part(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                    texts.begin() + static_cast<std::ptrdiff_t>(end));
      pending.emplace_back(start, std::async(std::launch::async, [&client, part = std::move(part), &source, &target] {
                             return client.translate(part, source, target);
                           }));
    }
    while (!pending.empty()) collect();
  } catch (...) {
    // Outstanding requests reference caller state; let them finish first.
    for (auto& [s, f] : pending) {
      if (f.valid()) f.wait();
    }
    throw;
  }
  return out;
}

namespace {

std::vector<std::string> translate_all(TranslationClient& client, const std::vector<std::string>& texts,
                                       const std::vector<std::string>& ids, const std::string& field,
                                       const std::string& target, std::size_t in_flight) {
  auto results = translate_batch(client, texts, "eng", target, in_flight);
  std::vector<std::string> out;
  std::string failures;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].ok()) {
      if (++failed <= 5) failures += "\n  pair '" + ids[i] + "' " + field + ": " + results[i].error;
      continue;
    }
    out.push_back(std::move(*results[i].text));
  }
  if (failed) {
    throw TranslationError("translation to " + target + " failed for " + std::to_string(failed) + " item(s):" +
                           failures);
  }
  return out;
}

std::map<std::string, Corpus> augment_pairs(const std::vector<RawPair>& pairs, const std::vector<std::string>& targets,
                                            TranslationClient& client, std::size_t in_flight, Provenance provenance,
                                            double divisor) {
  const std::string tag(to_string(provenance));
  std::vector<std::string> s1, s2, ids;
  for (const auto& p : pairs) {
    s1.push_back(p.sentence1);
    s2.push_back(p.sentence2);
    ids.push_back(p.id);
  }
  std::map<std::string, Corpus> out;
  for (const auto& target : targets) {
    const auto t1 = translate_all(client, s1, ids, "sentence1", target, in_flight);
    const auto t2 = translate_all(client, s2, ids, "sentence2", target, in_flight);
    Corpus c{tag + "-" + target, target, Split::Train, {}, {}};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      c.pairs.push_back({tag + "/" + pairs[i].id, t1[i], t2[i], pairs[i].score / divisor, provenance});
    }
    validate(c);
    out.emplace(target, std::move(c));
  }
  return out;
}

}  // namespace

std::map<std::string, Corpus> augment_semrel(const Corpus& english, const std::vector<std::string>& targets,
                                             TranslationClient& client, std::size_t in_flight) {
  if (english.language != "eng") {
    throw DataError("augment_semrel needs an English corpus, got language '" + english.language + "'");
  }
  if (!english.labeled()) throw DataError("augment_semrel needs a labeled corpus");
  std::vector<RawPair> raw;
  for (const auto& p : english.pairs) raw.push_back({p.id, p.sentence1, p.sentence2, p.score});
  return augment_pairs(raw, targets, client, in_flight, Provenance::SemrelMt, 1.0);
}

std::map<std::string, Corpus> augment_stsb(const std::vector<RawPair>& stsb, const std::vector<std::string>& targets,
                                           TranslationClient& client, std::size_t in_flight) {
  for (const auto& p : stsb) {
    if (!(p.score >= 0.0 && p.score <= 5.0)) {
      throw DataError("STS-B pair '" + p.id + "': score " + std::to_string(p.score) + " not in [0, 5]");
    }
  }
  return augment_pairs(stsb, targets, client, in_flight, Provenance::StsbMt, 5.0);
}

std::vector<RawPair> parse_stsb(std::string_view text) {
  if (auto off = find_invalid_utf8(text); off != std::string_view::npos) {
    throw DataError("invalid UTF-8 at byte offset " + std::to_string(off));
  }
  std::vector<RawPair> out;
  std::size_t start = 0, line_no = 0;
  bool header = true;
  std::map<std::string, std::size_t> seen;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    std::vector<std::string_view> f;
    std::size_t s = 0;
    while (true) {
      std::size_t e = line.find('\t', s);
      f.push_back(line.substr(s, e == std::string_view::npos ? std::string_view::npos : e - s));
      if (e == std::string_view::npos) break;
      s = e + 1;
    }
    if (header) {
      if (f.size() != 4 || f[0] != "id" || f[1] != "sentence1" || f[2] != "sentence2" || f[3] != "score") {
        throw DataError("bad header, line " + std::to_string(line_no) +
                        ": expected 'id<TAB>sentence1<TAB>sentence2<TAB>score'");
      }
      header = false;
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (f.size() != 4) {
      throw DataError("malformed row, " + where + ": expected 4 columns, found " + std::to_string(f.size()));
    }
    RawPair p{std::string(f[0]), std::string(f[1]), std::string(f[2]), 0.0};
    const auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), p.score);
    if (res.ec != std::errc() || res.ptr != f[3].data() + f[3].size() || !std::isfinite(p.score)) {
      throw DataError("non-numeric score, " + where + ": '" + std::string(f[3]) + "'");
    }
    if (!(p.score >= 0.0 && p.score <= 5.0)) {
      throw DataError("score out of range, " + where + ": " + std::string(f[3]) + " not in [0, 5]");
    }
    if (p.sentence1.find_first_not_of(" \t") == std::string::npos ||
        p.sentence2.find_first_not_of(" \t") == std::string::npos) {
      throw DataError("empty sentence, " + where);
    }
    if (auto [it, fresh] = seen.emplace(p.id, line_no); !fresh) {
      throw DataError("duplicate id '" + p.id + "', lines " + std::to_string(it->second) + " and " +
                      std::to_string(line_no));
    }
    out.push_back(std::move(p));
  }
  if (header) throw DataError("missing header, line 1");
  return out;
}

std::vector<RawPair> load_stsb(const std::string& path) {
  try {
    return parse_stsb(read_text(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace aadam
