#include "aadam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/random.hpp"

namespace aadam {

namespace {

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::size_t draw_length(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

// k distinct draws from pool.
std::vector<std::size_t> sample(Rng& rng, std::vector<std::size_t> pool, std::size_t k) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::string pair_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%05zu", i);
  return buf;
}

double noisy_score(Rng& rng, double clean, double noise) {
  return std::clamp(clean + noise * rng.normal(), 0.0, 1.0);
}

}  // namespace

std::vector<std::string> synthetic_words(std::size_t n, const std::string& prefix) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    out.push_back(prefix + buf);
  }
  return out;
}

double relatedness_curve(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Corpus make_overlap_corpus(const OverlapSpec& spec) {
  if (spec.min_len == 0 || spec.max_len < spec.min_len || 2 * spec.max_len > spec.vocab) {
    throw UsageError("overlap corpus: need 0 < min_len <= max_len <= vocab / 2");
  }
  const auto words = synthetic_words(spec.vocab, spec.prefix);
  Rng rng(spec.seed);
  std::vector<std::size_t> all(spec.vocab);
  std::iota(all.begin(), all.end(), 0);

  Corpus c;
  c.name = "overlap";
  c.language = spec.language;
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    const std::size_t n1 = draw_length(rng, spec.min_len, spec.max_len);
    const std::size_t n2 = draw_length(rng, spec.min_len, spec.max_len);
    const auto s1 = sample(rng, all, n1);
    const double share = rng.uniform();
    const std::size_t keep = std::min<std::size_t>(n2, static_cast<std::size_t>(std::lround(share * n2)));
    auto s2 = sample(rng, s1, keep);
    std::set<std::size_t> used(s1.begin(), s1.end());
    std::vector<std::size_t> fresh;
    for (std::size_t w : all) {
      if (!used.count(w)) fresh.push_back(w);
    }
    for (std::size_t w : sample(rng, fresh, n2 - s2.size())) s2.push_back(w);
    rng.shuffle(std::span<std::size_t>(s2));

    std::vector<std::string> t1, t2;
    for (std::size_t w : s1) t1.push_back(words[w]);
    for (std::size_t w : s2) t2.push_back(words[w]);
    SentencePair p;
    p.id = pair_id(i);
    p.sentence1 = join(t1);
    p.sentence2 = join(t2);
    p.score = noisy_score(rng, relatedness_curve(dice(p.sentence1, p.sentence2)), spec.noise);
    p.provenance = spec.provenance;
    c.pairs.push_back(std::move(p));
  }
  return c;
}

std::size_t topic_of(const TopicSpec& spec, std::size_t word_index) { return word_index / spec.words_per_topic; }

namespace {

void check(const TopicSpec& spec) {
  if (spec.topics < 2 || spec.min_len == 0 || spec.max_len < spec.min_len ||
      2 * spec.max_len > spec.words_per_topic) {
    throw UsageError("topic corpus: need >= 2 topics and 0 < min_len <= max_len <= words_per_topic / 2");
  }
}

std::vector<std::size_t> topic_words(const TopicSpec& spec, std::size_t topic) {
  std::vector<std::size_t> out(spec.words_per_topic);
  std::iota(out.begin(), out.end(), topic * spec.words_per_topic);
  return out;
}

}  // namespace

Corpus make_topic_corpus(const TopicSpec& spec) {
  check(spec);
  const auto words = synthetic_words(spec.topics * spec.words_per_topic, spec.prefix);
  Rng rng(spec.seed);
  Corpus c;
  c.name = "topics";
  c.language = spec.language;
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    const std::size_t a = rng.below(spec.topics);
    std::size_t b = rng.below(spec.topics - 1);
    if (b >= a) ++b;
    const std::size_t n1 = draw_length(rng, spec.min_len, spec.max_len);
    const std::size_t n2 = draw_length(rng, spec.min_len, spec.max_len);
    const auto s1 = sample(rng, topic_words(spec, a), n1);
    const std::size_t same = static_cast<std::size_t>(rng.below(n2 + 1));
    std::set<std::size_t> used(s1.begin(), s1.end());
    std::vector<std::size_t> rest;
    for (std::size_t w : topic_words(spec, a)) {
      if (!used.count(w)) rest.push_back(w);
    }
    auto s2 = sample(rng, rest, same);
    for (std::size_t w : sample(rng, topic_words(spec, b), n2 - same)) s2.push_back(w);
    rng.shuffle(std::span<std::size_t>(s2));

    std::vector<std::string> t1, t2;
    for (std::size_t w : s1) t1.push_back(words[w]);
    for (std::size_t w : s2) t2.push_back(words[w]);
    SentencePair p;
    p.id = pair_id(i);
    p.sentence1 = join(t1);
    p.sentence2 = join(t2);
    p.score = noisy_score(rng, relatedness_curve(static_cast<double>(same) / static_cast<double>(n2)), spec.noise);
    c.pairs.push_back(std::move(p));
  }
  return c;
}

Corpus make_topic_unlabeled(const TopicSpec& spec) {
  check(spec);
  const auto words = synthetic_words(spec.topics * spec.words_per_topic, spec.prefix);
  Rng rng(derive_seed(spec.seed, 1));
  Corpus c;
  c.name = "topics-unlabeled";
  c.language = spec.language;
  c.split = Split::Unlabeled;
  for (std::size_t i = 0; i < spec.sentences; ++i) {
    const std::size_t t = rng.below(spec.topics);
    std::vector<std::string> s;
    for (std::size_t w : sample(rng, topic_words(spec, t), draw_length(rng, spec.min_len, spec.max_len))) {
      s.push_back(words[w]);
    }
    c.sentences.push_back(join(s));
  }
  return c;
}

Corpus translate_corpus(const Corpus& corpus, TranslationClient& client, const std::string& target) {
  std::vector<std::string> texts;
  if (corpus.labeled()) {
    for (const auto& p : corpus.pairs) {
      texts.push_back(p.sentence1);
      texts.push_back(p.sentence2);
    }
  } else {
    texts = corpus.sentences;
  }
  const auto out = translate_batch(client, texts, corpus.language, target);
  auto text_at = [&](std::size_t i) -> std::string {
    if (!out[i].ok()) throw TranslationError("translation of item " + std::to_string(i) + " failed: " + out[i].error);
    return *out[i].text;
  };
  Corpus c = corpus;
  c.language = target;
  c.name = corpus.name + "-" + target;
  if (corpus.labeled()) {
    for (std::size_t i = 0; i < c.pairs.size(); ++i) {
      c.pairs[i].sentence1 = text_at(2 * i);
      c.pairs[i].sentence2 = text_at(2 * i + 1);
    }
  } else {
    for (std::size_t i = 0; i < c.sentences.size(); ++i) c.sentences[i] = text_at(i);
  }
  return c;
}

}  // namespace aadam
