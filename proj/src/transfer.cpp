#include "aadam/transfer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/training.hpp"

namespace aadam {

void DistanceTable::set(const std::string& a, const std::string& b, const DistanceValues& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] && !(*values[i] >= 0.0 && *values[i] <= 1.0)) {
      throw DataError(std::string("distance ") + kDistanceFeatures[i] + " for " + a + "-" + b + " not in [0, 1]");
    }
  }
  entries_[{a, b}] = values;
  entries_[{b, a}] = values;
}

const DistanceValues* DistanceTable::lookup(const std::string& a, const std::string& b) const {
  auto it = entries_.find({a, b});
  return it == entries_.end() ? nullptr : &it->second;
}

DistanceTable DistanceTable::parse(std::string_view text) {
  DistanceTable table;
  std::size_t start = 0, line_no = 0;
  bool header = true;
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
    const std::string where = "line " + std::to_string(line_no);
    if (header) {
      bool good = f.size() == 8 && f[0] == "lang_a" && f[1] == "lang_b";
      for (std::size_t i = 0; good && i < 6; ++i) good = f[i + 2] == kDistanceFeatures[i];
      if (!good) {
        throw DataError("bad header, " + where +
                        ": expected lang_a lang_b syntactic phonological inventory geographic genetic featural");
      }
      header = false;
      continue;
    }
    if (f.size() != 8) {
      throw DataError("malformed row, " + where + ": expected 8 columns, found " + std::to_string(f.size()));
    }
    DistanceValues values;
    for (std::size_t i = 0; i < 6; ++i) {
      const std::string_view cell = f[i + 2];
      if (cell == "NA") continue;
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw DataError("non-numeric " + std::string(kDistanceFeatures[i]) + " distance, " + where + ": '" +
                        std::string(cell) + "'");
      }
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DataError(std::string(kDistanceFeatures[i]) + " distance out of range, " + where + ": " +
                        std::string(cell) + " not in [0, 1]");
      }
      values[i] = v;
    }
    const std::string a(f[0]), b(f[1]);
    if (const auto* prev = table.lookup(a, b); prev && *prev != values) {
      throw DataError("conflicting distances for " + a + "-" + b + ", " + where);
    }
    table.set(a, b, values);
  }
  if (header) throw DataError("missing header, line 1");
  return table;
}

DistanceTable DistanceTable::load(const std::string& path) {
  try {
    return parse(read_text(path));
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw DataError(path + ": " + msg);
  }
}

DistanceResult linguistic_distance(const std::string& source, const std::string& target, const DistanceTable& table) {
  const DistanceValues* v = table.lookup(source, target);
  if (!v) throw DataError("no distances for language pair " + source + "-" + target);
  DistanceResult r;
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& x : *v) {
    if (x) {
      sum += *x;
      ++present;
    } else {
      ++r.missing;
    }
  }
  if (present == 0) throw DataError("all six distances missing for " + source + "-" + target);
  r.value = sum / static_cast<double>(present);
  return r;
}

double token_overlap(const Corpus& source_train, const Corpus& target_test, const TokenizeOptions& options) {
  const auto src = token_set(source_train, options);
  const auto tgt = token_set(target_test, options);
  if (tgt.empty()) throw DataError("token overlap: target corpus '" + target_test.name + "' has no tokens");
  std::size_t shared = 0;
  for (const auto& t : tgt) shared += src.count(t);
  return static_cast<double>(shared) / static_cast<double>(tgt.size());
}

std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::LinguisticDistance: return "linguistic_distance";
    case SelectionStrategy::TokenOverlap: return "token_overlap";
    case SelectionStrategy::DevPerformance: return "dev_performance";
  }
  return "?";
}

SelectionStrategy parse_selection_strategy(std::string_view text) {
  if (text == "linguistic_distance") return SelectionStrategy::LinguisticDistance;
  if (text == "token_overlap") return SelectionStrategy::TokenOverlap;
  if (text == "dev_performance") return SelectionStrategy::DevPerformance;
  throw UsageError("unknown selection strategy '" + std::string(text) +
                   "' (expected linguistic_distance, token_overlap or dev_performance)");
}

namespace {

void finish(SourceRanking& r, bool ascending) {
  std::stable_sort(r.entries.begin(), r.entries.end(), [&](const RankedSource& a, const RankedSource& b) {
    if (a.value.has_value() != b.value.has_value()) return a.value.has_value();
    if (!a.value) return false;
    return ascending ? *a.value < *b.value : *a.value > *b.value;
  });
  if (r.entries.empty()) throw DataError("source ranking: no candidate could be scored");
  r.chosen = r.entries.front().language;
}

}  // namespace

SourceRanking rank_by_distance(const std::vector<std::string>& sources, const std::string& target,
                               const DistanceTable& table) {
  SourceRanking r;
  r.strategy = SelectionStrategy::LinguisticDistance;
  for (const auto& s : sources) {
    try {
      const auto d = linguistic_distance(s, target, table);
      r.entries.push_back({s, d.value});
      if (d.missing) {
        r.warnings.push_back(s + "-" + target + ": " + std::to_string(d.missing) + " of 6 distances missing");
      }
    } catch (const DataError& e) {
      r.warnings.push_back(std::string("skipped ") + s + ": " + e.what());
    }
  }
  finish(r, true);
  return r;
}

SourceRanking rank_by_overlap(const std::vector<std::pair<std::string, Corpus>>& source_trains,
                              const Corpus& target_test, const TokenizeOptions& options) {
  SourceRanking r;
  r.strategy = SelectionStrategy::TokenOverlap;
  for (const auto& [lang, corpus] : source_trains) r.entries.push_back({lang, token_overlap(corpus, target_test, options)});
  finish(r, false);
  return r;
}

ModelGraph compose_for_target(const ModelGraph& source_model, const AdapterBundle& target_language_adapter) {
  if (!source_model.has_adapter(AdapterKind::Task)) throw UsageError("source model has no task adapter");
  ModelGraph model = source_model;
  if (model.has_adapter(AdapterKind::Language)) {
    swap_language_adapter(model, target_language_adapter);
  } else {
    attach_adapter(model, target_language_adapter);
  }
  return model;
}

std::vector<double> zero_shot_predict(const ModelGraph& model, const std::string& target_language,
                                      const Corpus& pairs, const Vocabulary& vocab, bool allow_source_adapter,
                                      const TokenizeOptions& options) {
  if (!model.has_adapter(AdapterKind::Task)) throw UsageError("zero-shot prediction needs a task adapter");
  const std::string& lang = model.adapters().language_id;
  if (lang != target_language && !allow_source_adapter) {
    throw UsageError("language adapter is '" + (lang.empty() ? std::string("none") : lang) + "' but the target is '" +
                     target_language + "'; swap in the target adapter or allow the source adapter explicitly");
  }
  return predict(model, pairs, vocab, Architecture::Cross, options);
}

SourceRanking dev_performance_ranking(const std::vector<TransferCandidate>& candidates,
                                      const AdapterBundle& target_language_adapter, const Corpus& target_dev,
                                      const Vocabulary& vocab, const TokenizeOptions& options) {
  if (!target_dev.labeled() || target_dev.pairs.size() < 2) {
    throw DataError("dev-performance ranking needs a labeled dev set with at least 2 pairs");
  }
  SourceRanking r;
  r.strategy = SelectionStrategy::DevPerformance;
  const auto gold = gold_scores(target_dev);
  for (const auto& c : candidates) {
    ModelGraph composed;
    try {
      composed = compose_for_target(c.model, target_language_adapter);
    } catch (const Error& e) {
      r.warnings.push_back("skipped " + c.source_language + ": " + e.what());
      continue;
    }
    const auto pred = zero_shot_predict(composed, target_language_adapter.id, target_dev, vocab, false, options);
    r.entries.push_back({c.source_language, spearman(pred, gold)});
  }
  finish(r, false);
  return r;
}

LeakageVerdict leakage_guard(const std::vector<LineageEntry>& lineage, const std::string& target_language) {
  if (lineage.empty()) return {false, "model has no lineage; provenance cannot be established"};
  for (const auto& e : lineage) {
    if (e.objective != "regression") continue;
    if (!e.provenance) {
      return {false, "phase '" + e.stage + "' has no provenance metadata"};
    }
    if (target_language != "eng") continue;
    std::vector<std::string> translated;
    for (const auto& [tag, n] : *e.provenance) {
      if (n > 0 && (tag == "semrel-mt" || tag == "stsb-mt")) translated.push_back(tag);
    }
    if (!translated.empty()) {
      std::string tags;
      for (const auto& t : translated) tags += (tags.empty() ? "" : ", ") + t;
      return {false, "phase '" + e.stage + "' trained on data translated from English (" + tags +
                         "); transfer to eng is not allowed"};
    }
  }
  return {};
}

void enforce_leakage_guard(const std::vector<LineageEntry>& lineage, const std::string& target_language) {
  const auto verdict = leakage_guard(lineage, target_language);
  if (!verdict.ok) throw LeakageError("leakage guard: " + verdict.violation);
}

}  // namespace aadam
