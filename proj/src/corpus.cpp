#include "aadam/corpus.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "aadam/error.hpp"
#include "aadam/random.hpp"

namespace aadam {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Original: return "original";
    case Provenance::SemrelMt: return "semrel-mt";
    case Provenance::StsbMt: return "stsb-mt";
  }
  return "original";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "original") return Provenance::Original;
  if (text == "semrel-mt") return Provenance::SemrelMt;
  if (text == "stsb-mt") return Provenance::StsbMt;
  throw DataError("unknown provenance '" + std::string(text) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::Unlabeled: return "unlabeled";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "dev") return Split::Dev;
  if (text == "test") return Split::Test;
  if (text == "unlabeled") return Split::Unlabeled;
  throw DataError("unknown split '" + std::string(text) + "'");
}

std::map<std::string, std::size_t> Corpus::provenance_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pairs) ++counts[std::string(to_string(p.provenance))];
  return counts;
}

namespace {

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\f\v") == std::string_view::npos;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find('\t', start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\f\v");
  return s.substr(b, e - b + 1);
}

std::string line_tag(std::size_t line) { return "line " + std::to_string(line); }

void check_utf8(std::string_view text) {
  if (auto off = find_invalid_utf8(text); off != std::string_view::npos) {
    throw DataError("invalid UTF-8 at byte offset " + std::to_string(off));
  }
}

std::string format_score(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::size_t find_invalid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return i;
    }
    i += len;
  }
  return std::string_view::npos;
}

void validate(const Corpus& corpus) {
  if (!corpus.labeled()) {
    if (!corpus.pairs.empty()) throw DataError("unlabeled corpus '" + corpus.name + "' carries labeled pairs");
    return;
  }
  if (!corpus.sentences.empty()) throw DataError("labeled corpus '" + corpus.name + "' carries unlabeled sentences");
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& p = corpus.pairs[i];
    if (!(p.score >= 0.0 && p.score <= 1.0)) {
      throw DataError("pair '" + p.id + "': score out of range [0, 1]");
    }
    if (is_blank(p.sentence1) || is_blank(p.sentence2)) throw DataError("pair '" + p.id + "': empty sentence");
    if (!seen.emplace(p.id, i).second) throw DataError("duplicate id '" + p.id + "' in corpus '" + corpus.name + "'");
  }
}

Corpus parse_labeled(std::string_view text, std::string language, std::string name, Split split) {
  if (split == Split::Unlabeled) throw UsageError("parse_labeled: split must be train, dev or test");
  check_utf8(text);
  Corpus corpus{std::move(name), std::move(language), split, {}, {}};
  const auto lines = split_lines(text);
  if (lines.empty() || is_blank(lines[0])) throw DataError("missing header, line 1");

  const auto header = split_tabs(lines[0]);
  const bool with_provenance = header.size() == 5;
  const std::vector<std::string_view> expected{"id", "sentence1", "sentence2", "score", "provenance"};
  if (header.size() < 4 || header.size() > 5 ||
      !std::equal(header.begin(), header.end(), expected.begin(),
                  [](std::string_view a, std::string_view b) { return trim(a) == b; })) {
    throw DataError("bad header, line 1: expected 'id<TAB>sentence1<TAB>sentence2<TAB>score[<TAB>provenance]'");
  }

  std::unordered_map<std::string, std::size_t> first_line;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    if (is_blank(lines[ln])) continue;
    const auto fields = split_tabs(lines[ln]);
    if (fields.size() != header.size()) {
      throw DataError("malformed row, " + line_tag(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns, found " + std::to_string(fields.size()));
    }
    SentencePair pair;
    pair.id = std::string(trim(fields[0]));
    if (pair.id.empty()) throw DataError("empty id, " + line_tag(line_no));
    pair.sentence1 = std::string(fields[1]);
    pair.sentence2 = std::string(fields[2]);
    if (is_blank(pair.sentence1) || is_blank(pair.sentence2)) {
      throw DataError("empty sentence, " + line_tag(line_no));
    }
    const std::string_view score_text = trim(fields[3]);
    double score = 0.0;
    auto res = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
    if (score_text.empty() || res.ec != std::errc() || res.ptr != score_text.data() + score_text.size()) {
      throw DataError("non-numeric score, " + line_tag(line_no) + ": '" + std::string(score_text) + "'");
    }
    if (!(score >= 0.0 && score <= 1.0)) {
      throw DataError("score out of range, " + line_tag(line_no) + ": " + std::string(score_text) +
                      " not in [0, 1]");
    }
    pair.score = score;
    if (with_provenance) {
      try {
        pair.provenance = parse_provenance(trim(fields[4]));
      } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + ", " + line_tag(line_no));
      }
    }
    if (auto [it, inserted] = first_line.emplace(pair.id, line_no); !inserted) {
      throw DataError("duplicate id '" + pair.id + "', " + line_tag(line_no) + " (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

std::string serialize_labeled(const Corpus& corpus) {
  if (!corpus.labeled()) throw UsageError("serialize_labeled: corpus '" + corpus.name + "' is unlabeled");
  std::string out = "id\tsentence1\tsentence2\tscore\tprovenance\n";
  for (const auto& p : corpus.pairs) {
    for (const std::string* field : {&p.id, &p.sentence1, &p.sentence2}) {
      if (field->find_first_of("\t\n") != std::string::npos) {
        throw DataError("pair '" + p.id + "': fields may not contain tabs or newlines");
      }
    }
    out += p.id + '\t' + p.sentence1 + '\t' + p.sentence2 + '\t' + format_score(p.score) + '\t' +
           std::string(to_string(p.provenance)) + '\n';
  }
  return out;
}

Corpus parse_unlabeled(std::string_view text, std::string language, std::string name) {
  check_utf8(text);
  Corpus corpus{std::move(name), std::move(language), Split::Unlabeled, {}, {}};
  for (std::string_view line : split_lines(text)) {
    if (!is_blank(line)) corpus.sentences.emplace_back(line);
  }
  return corpus;
}

std::string serialize_unlabeled(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) out += s + '\n';
  return out;
}

CorpusSplits split(const Corpus& corpus, SplitFractions f, std::uint64_t seed) {
  if (!corpus.labeled()) throw DataError("split: corpus '" + corpus.name + "' is not labeled");
  if (f.train < 0 || f.dev < 0 || f.test < 0 || std::abs(f.train + f.dev + f.test - 1.0) > 1e-9) {
    throw UsageError("split: fractions must be non-negative and sum to 1");
  }
  const std::size_t n = corpus.pairs.size();
  // The small slack keeps products such as 10 * 0.1 from flooring to 0.
  const auto take = [n](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
  };
  const std::size_t n_dev = take(f.dev);
  const std::size_t n_test = take(f.test);
  const std::size_t n_train = n - n_dev - n_test;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));

  CorpusSplits out;
  for (Corpus* c : {&out.train, &out.dev, &out.test}) {
    c->name = corpus.name;
    c->language = corpus.language;
  }
  out.train.split = Split::Train;
  out.dev.split = Split::Dev;
  out.test.split = Split::Test;
  for (std::size_t i = 0; i < n; ++i) {
    Corpus& dst = i < n_train ? out.train : (i < n_train + n_dev ? out.dev : out.test);
    dst.pairs.push_back(corpus.pairs[order[i]]);
  }
  return out;
}

Corpus merge(std::span<const Corpus> corpora) {
  if (corpora.empty()) throw UsageError("merge: no corpora given");
  Corpus out;
  out.language = corpora[0].language;
  out.split = corpora[0].split;
  for (const Corpus& c : corpora) {
    if (c.language != out.language) {
      throw DataError("merge: mixed languages '" + out.language + "' and '" + c.language + "' (corpus '" + c.name +
                      "')");
    }
    if (c.split != out.split) throw DataError("merge: mixed splits in corpus '" + c.name + "'");
    out.name += (out.name.empty() ? "" : "+") + c.name;
    for (SentencePair p : c.pairs) {
      p.id = c.name + "/" + p.id;
      out.pairs.push_back(std::move(p));
    }
    out.sentences.insert(out.sentences.end(), c.sentences.begin(), c.sentences.end());
  }
  validate(out);
  return out;
}

std::string read_text(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, std::string_view content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

Corpus load_labeled(const std::string& path, std::string language, Split split) {
  try {
    return parse_labeled(read_text(path), std::move(language), std::filesystem::path(path).stem().string(), split);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

Corpus load_unlabeled(const std::string& path, std::string language) {
  try {
    return parse_unlabeled(read_text(path), std::move(language), std::filesystem::path(path).stem().string());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace aadam
