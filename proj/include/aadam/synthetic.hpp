#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aadam/augmentation.hpp"
#include "aadam/corpus.hpp"

namespace aadam {

/// Word list "<prefix>000", "<prefix>001", ...
std::vector<std::string> synthetic_words(std::size_t n, const std::string& prefix = "w");

/// Smoothstep 3x^2 - 2x^3 on [0,1], clamped outside.
double relatedness_curve(double x);

/// Pairs whose gold score is relatedness_curve(dice(s1, s2)) plus N(0, noise),
/// clamped to [0,1]. The second sentence keeps a uniformly drawn share of
/// the first sentence's words and fills up with fresh ones, so overlaps
/// cover [0,1].
struct OverlapSpec {
  std::size_t vocab = 200;
  std::size_t pairs = 2000;
  std::size_t min_len = 5;
  std::size_t max_len = 10;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string language = "syn";
  std::string prefix = "w";
  Provenance provenance = Provenance::Original;
};

Corpus make_overlap_corpus(const OverlapSpec& spec);

/// Words split into topics of equal size. Sentence 1 draws from one topic;
/// sentence 2 takes a share r of its words from the same topic and the rest
/// from another, never repeating a word of sentence 1. The score is
/// relatedness_curve(r) plus N(0, noise), clamped.
struct TopicSpec {
  std::size_t topics = 8;
  std::size_t words_per_topic = 25;
  std::size_t pairs = 1000;
  std::size_t sentences = 2000;  // unlabeled
  std::size_t min_len = 5;
  std::size_t max_len = 10;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string language = "syn";
  std::string prefix = "w";
};

std::size_t topic_of(const TopicSpec& spec, std::size_t word_index);
Corpus make_topic_corpus(const TopicSpec& spec);
/// Single-topic sentences for MLM training.
Corpus make_topic_unlabeled(const TopicSpec& spec);

/// Re-expresses every sentence of the corpus in `target` through the client,
/// keeping ids, scores, split and provenance.
Corpus translate_corpus(const Corpus& corpus, TranslationClient& client, const std::string& target);

}  // namespace aadam
