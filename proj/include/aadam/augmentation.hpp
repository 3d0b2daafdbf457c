#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "aadam/corpus.hpp"

namespace aadam {

/// Outcome of translating one text.
struct TranslationResult {
  std::optional<std::string> text;
  std::string error;

  bool ok() const { return text.has_value(); }
};

/// Machine translation backend. translate() returns one result per input,
/// in input order, and throws TranslationError on transport failure.
class TranslationClient {
 public:
  virtual ~TranslationClient() = default;

  virtual bool supports(const std::string& source, const std::string& target) const = 0;
  virtual std::size_t max_batch() const = 0;
  virtual std::vector<TranslationResult> translate(const std::vector<std::string>& texts, const std::string& source,
                                                   const std::string& target) = 0;
};

/// Offline translator: every language L owns a seeded permutation s_L of a
/// shared token list, and A->B maps t to s_B(s_A^-1(t)). Tokens outside the
/// list pass through. Output tokens are joined by single spaces.
class MockTranslator : public TranslationClient {
 public:
  /// `pivot` is the language whose permutation is the identity.
  MockTranslator(std::uint64_t seed, std::vector<std::string> tokens, std::string pivot = "eng",
                 std::size_t max_batch = 64);

  bool supports(const std::string& source, const std::string& target) const override;
  std::size_t max_batch() const override { return max_batch_; }
  std::vector<TranslationResult> translate(const std::vector<std::string>& texts, const std::string& source,
                                           const std::string& target) override;

  /// Restricts supported languages; empty means all.
  void set_languages(std::set<std::string> languages) { languages_ = std::move(languages); }
  /// Items equal to `text` fail with a per-item error.
  void fail_on(std::string text) { failing_.insert(std::move(text)); }

  std::string translate_token(const std::string& token, const std::string& source, const std::string& target);
  std::size_t calls() const { return calls_; }

 private:
  const std::vector<std::size_t>& permutation(const std::string& language);
  const std::vector<std::size_t>& inverse(const std::string& language);

  std::uint64_t seed_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string pivot_;
  std::size_t max_batch_;
  std::set<std::string> languages_;
  std::set<std::string> failing_;
  std::map<std::string, std::vector<std::size_t>> perms_;
  std::map<std::string, std::vector<std::size_t>> inverses_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
};

struct RetryPolicy {
  int retries = 3;
  std::chrono::milliseconds initial_backoff{200};
};

/// Client for POST /translate with JSON
///   request  {"source_lang": str, "target_lang": str, "texts": [str]}
///   response {"translations": [str]} and optionally "errors": [str|null]
/// Non-2xx responses and connection failures are retried with exponential
/// backoff; the last failure becomes a TranslationError.
class HttpTranslator : public TranslationClient {
 public:
  /// endpoint like "http://127.0.0.1:8080".
  explicit HttpTranslator(std::string endpoint, std::size_t max_batch = 32, RetryPolicy retry = {},
                          std::chrono::seconds timeout = std::chrono::seconds(30));

  bool supports(const std::string& source, const std::string& target) const override;
  std::size_t max_batch() const override { return max_batch_; }
  std::vector<TranslationResult> translate(const std::vector<std::string>& texts, const std::string& source,
                                           const std::string& target) override;

 private:
  std::string endpoint_;
  std::size_t max_batch_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

/// Splits texts into client-sized chunks, keeps at most `in_flight` chunks
/// outstanding, and reassembles results in submission order.
std::vector<TranslationResult> translate_batch(TranslationClient& client, const std::vector<std::string>& texts,
                                               const std::string& source, const std::string& target,
                                               std::size_t in_flight = 4);

/// Translates both sentences of every pair into each target; scores copied,
/// provenance semrel-mt, ids prefixed "semrel-mt/".
std::map<std::string, Corpus> augment_semrel(const Corpus& english, const std::vector<std::string>& targets,
                                             TranslationClient& client, std::size_t in_flight = 4);

/// STS-B pairs with raw scores in [0,5].
struct RawPair {
  std::string id;
  std::string sentence1;
  std::string sentence2;
  double score = 0.0;
};

/// TSV with header "id sentence1 sentence2 score"; scores must lie in [0,5].
std::vector<RawPair> parse_stsb(std::string_view text);
std::vector<RawPair> load_stsb(const std::string& path);

/// As augment_semrel with scores divided by 5 and provenance stsb-mt.
std::map<std::string, Corpus> augment_stsb(const std::vector<RawPair>& stsb, const std::vector<std::string>& targets,
                                           TranslationClient& client, std::size_t in_flight = 4);

}  // namespace aadam
