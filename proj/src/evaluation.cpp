#include "aadam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "aadam/error.hpp"
#include "aadam/random.hpp"

namespace aadam {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1..j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("correlation needs equal lengths, got " + std::to_string(x.size()) + " and " +
                    std::to_string(y.size()));
  }
  const std::size_t n = x.size();
  if (n < 2) throw DataError("correlation needs at least 2 values, got " + std::to_string(n));
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) {
    throw DataError("spearman needs equal lengths, got " + std::to_string(pred.size()) + " predictions and " +
                    std::to_string(gold.size()) + " gold scores");
  }
  const auto rp = average_ranks(pred);
  const auto rg = average_ranks(gold);
  return pearson(rp, rg);
}

std::optional<double> spearman_present(std::span<const std::optional<double>> pred, std::span<const double> gold) {
  if (pred.size() != gold.size()) throw DataError("spearman needs equal lengths");
  std::vector<double> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i]) {
      p.push_back(*pred[i]);
      g.push_back(gold[i]);
    }
  }
  if (p.size() < 2) return std::nullopt;
  return spearman(p, g);
}

std::vector<double> gold_scores(const Corpus& corpus) {
  std::vector<double> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) out.push_back(p.score);
  return out;
}

double dice(std::string_view s1, std::string_view s2) {
  const TokenizeOptions opts{true, false};
  const auto t1 = tokenize(s1, opts);
  const auto t2 = tokenize(s2, opts);
  const std::set<std::string> a(t1.begin(), t1.end()), b(t2.begin(), t2.end());
  if (a.empty() && b.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& t : a) shared += b.count(t);
  return 2.0 * static_cast<double>(shared) / static_cast<double>(a.size() + b.size());
}

std::vector<double> word_overlap_baseline(const std::vector<SentencePair>& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(dice(p.sentence1, p.sentence2));
  return out;
}

WordVectors parse_word_vectors(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  WordVectors wv;
  std::size_t count = 0;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("word vectors: empty file");
  {
    std::istringstream head(line);
    if (!(head >> count >> wv.dim) || wv.dim == 0) {
      throw DataError("word vectors, line 1: expected 'count dim' header");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    std::vector<double> v;
    double x = 0.0;
    while (row >> x) v.push_back(x);
    if (!row.eof()) throw DataError("word vectors, line " + std::to_string(line_no) + ": non-numeric component");
    if (v.size() != wv.dim) {
      throw DataError("word vectors, line " + std::to_string(line_no) + ": dimension mismatch, expected " +
                      std::to_string(wv.dim) + ", found " + std::to_string(v.size()));
    }
    for (double c : v) {
      if (!std::isfinite(c)) throw DataError("word vectors, line " + std::to_string(line_no) + ": non-finite value");
    }
    wv.vectors[token] = std::move(v);
  }
  if (wv.vectors.size() != count) {
    throw DataError("word vectors: header announces " + std::to_string(count) + " vectors, found " +
                    std::to_string(wv.vectors.size()));
  }
  return wv;
}

WordVectors load_word_vectors(const std::string& path) {
  try {
    return parse_word_vectors(read_text(path));
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw DataError(path + ": " + msg);
  }
}

namespace {

std::optional<std::vector<double>> mean_vector(std::string_view s, const WordVectors& wv,
                                               const TokenizeOptions& options) {
  std::vector<double> sum(wv.dim, 0.0);
  std::size_t hits = 0;
  for (const auto& tok : tokenize(s, options)) {
    auto it = wv.vectors.find(tok);
    if (it == wv.vectors.end()) continue;
    for (std::size_t i = 0; i < wv.dim; ++i) sum[i] += it->second[i];
    ++hits;
  }
  if (hits == 0) return std::nullopt;
  for (double& v : sum) v /= static_cast<double>(hits);
  return sum;
}

std::optional<double> cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<std::optional<double>> static_embedding_baseline(const std::vector<SentencePair>& pairs,
                                                             const WordVectors& vectors,
                                                             const TokenizeOptions& options) {
  std::vector<std::optional<double>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto a = mean_vector(p.sentence1, vectors, options);
    const auto b = mean_vector(p.sentence2, vectors, options);
    out.push_back(a && b ? cosine(*a, *b) : std::nullopt);
  }
  return out;
}

std::vector<double> contextual_zero_shot_baseline(const ModelGraph& model, const std::vector<SentencePair>& pairs,
                                                  const Vocabulary& vocab, const TokenizeOptions& options) {
  std::vector<double> out;
  out.reserve(pairs.size());
  const std::size_t max_len = model.config().max_len;
  for (const auto& p : pairs) {
    Tape tape(false);
    Var a = bi_embedding(tape, model, encode_single(p.sentence1, vocab, max_len, options));
    Var b = bi_embedding(tape, model, encode_single(p.sentence2, vocab, max_len, options));
    out.push_back(ad::cosine_similarity(a, b).value().item());
  }
  return out;
}

std::vector<Band> default_bands() { return {{0.0, 0.25}, {0.25, 0.5}, {0.5, 0.75}, {0.75, 1.0}}; }

std::vector<BandResult> band_analysis(std::span<const double> pred, std::span<const double> gold,
                                      const std::vector<Band>& bands) {
  if (pred.size() != gold.size()) throw DataError("band analysis needs equal lengths");
  if (bands.empty() || bands.front().lo != 0.0 || bands.back().hi != 1.0) {
    throw DataError("bands must cover [0, 1]");
  }
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (!(bands[i].lo < bands[i].hi)) throw DataError("band " + std::to_string(i) + " is empty or reversed");
    if (i + 1 < bands.size() && bands[i].hi != bands[i + 1].lo) {
      throw DataError("bands " + std::to_string(i) + " and " + std::to_string(i + 1) + " are not contiguous");
    }
  }
  std::vector<BandResult> out;
  for (const Band& b : bands) out.push_back({b, 0, std::nullopt, {}});
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const double g = gold[i];
    if (!(g >= 0.0 && g <= 1.0)) throw DataError("gold score " + std::to_string(g) + " outside [0, 1]");
    std::size_t b = 0;
    while (b + 1 < bands.size() && g >= bands[b].hi) ++b;
    out[b].members.push_back(i);
  }
  for (auto& r : out) {
    r.n = r.members.size();
    if (r.n < 2) continue;
    std::vector<double> p, g;
    for (std::size_t i : r.members) {
      p.push_back(pred[i]);
      g.push_back(gold[i]);
    }
    r.spearman = spearman(p, g);
  }
  return out;
}

std::vector<std::vector<std::size_t>> kfold_assign(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("k-fold needs k >= 2");
  if (n < k) throw DataError("corpus of " + std::to_string(n) + " pairs is smaller than k = " + std::to_string(k));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

CvResult kfold_cv(const Corpus& corpus, std::size_t k, std::uint64_t seed, const CvTrainer& trainer) {
  if (!corpus.labeled()) throw DataError("k-fold cross-validation needs a labeled corpus");
  CvResult result;
  result.folds = kfold_assign(corpus.pairs.size(), k, seed);
  std::vector<double> defined;
  for (std::size_t f = 0; f < k; ++f) {
    Corpus train{corpus.name + "-train" + std::to_string(f), corpus.language, Split::Train, {}, {}};
    Corpus held{corpus.name + "-fold" + std::to_string(f), corpus.language, Split::Test, {}, {}};
    std::vector<bool> in_fold(corpus.pairs.size(), false);
    for (std::size_t i : result.folds[f]) in_fold[i] = true;
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) (in_fold[i] ? held : train).pairs.push_back(corpus.pairs[i]);
    const auto pred = trainer(train, held);
    if (pred.size() != held.pairs.size()) {
      throw DataError("fold " + std::to_string(f) + ": trainer returned " + std::to_string(pred.size()) +
                      " predictions for " + std::to_string(held.pairs.size()) + " pairs");
    }
    std::optional<double> rho;
    if (held.pairs.size() >= 2) rho = spearman(pred, gold_scores(held));
    result.per_fold.push_back(rho);
    if (rho) defined.push_back(*rho);
  }
  if (!defined.empty()) {
    const double mean = std::accumulate(defined.begin(), defined.end(), 0.0) / static_cast<double>(defined.size());
    double var = 0.0;
    for (double r : defined) var += (r - mean) * (r - mean);
    result.mean = mean;
    result.stddev = std::sqrt(var / static_cast<double>(defined.size()));
  }
  return result;
}

std::string format_x100(std::optional<double> rho) {
  if (!rho) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", *rho * 100.0);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

namespace {

std::string band_label(const Band& b, bool last) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "[%.2f,%.2f%c", b.lo, b.hi, last ? ']' : ')');
  return buf;
}

}  // namespace

EvalReport make_report(std::string language, std::string system, std::span<const double> pred,
                       std::span<const double> gold) {
  EvalReport r;
  r.language = std::move(language);
  r.system = std::move(system);
  r.n_pairs = gold.size();
  r.spearman = gold.size() >= 2 ? spearman(pred, gold) : std::nullopt;
  r.bands = band_analysis(pred, gold);
  return r;
}

std::string render_tsv(const std::vector<EvalReport>& reports) {
  std::string out = "language\tsystem\tspearman_x100\tn_pairs\tn_missing";
  if (!reports.empty()) {
    const auto& bands = reports.front().bands;
    for (std::size_t i = 0; i < bands.size(); ++i) {
      const std::string label = band_label(bands[i].band, i + 1 == bands.size());
      out += "\t" + label + "_n\t" + label + "_x100";
    }
  }
  out += "\tcheckpoint_hash\tconfig_hash\n";
  for (const auto& r : reports) {
    out += r.language + "\t" + r.system + "\t" + format_x100(r.spearman) + "\t" + std::to_string(r.n_pairs) + "\t" +
           std::to_string(r.n_missing);
    for (const auto& b : r.bands) out += "\t" + std::to_string(b.n) + "\t" + format_x100(b.spearman);
    out += "\t" + (r.checkpoint_hash.empty() ? "-" : r.checkpoint_hash) + "\t" +
           (r.config_hash.empty() ? "-" : r.config_hash) + "\n";
  }
  return out;
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"language", "system", "spearman x100", "n"};
  if (!reports.empty()) {
    const auto& bands = reports.front().bands;
    for (std::size_t i = 0; i < bands.size(); ++i) header.push_back(band_label(bands[i].band, i + 1 == bands.size()));
  }
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row{r.language, r.system, format_x100(r.spearman), std::to_string(r.n_pairs)};
    for (const auto& b : r.bands) row.push_back(format_x100(b.spearman) + " (" + std::to_string(b.n) + ")");
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const std::string& cell = rows[r][c];
      const std::string pad(width[c] - cell.size(), ' ');
      // Text columns flush left, numbers flush right.
      line += c < 2 ? cell + pad : pad + cell;
      if (c + 1 < rows[r].size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 0) out += std::string(line.size(), '-') + "\n";
  }
  return out;
}

}  // namespace aadam
