#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aadam/corpus.hpp"
#include "aadam/model.hpp"
#include "aadam/text.hpp"

namespace aadam {

inline constexpr std::array<const char*, 6> kDistanceFeatures{"syntactic", "phonological", "inventory",
                                                               "geographic", "genetic",     "featural"};

using DistanceValues = std::array<std::optional<double>, 6>;

/// Symmetric table of six typological distances per language pair.
class DistanceTable {
 public:
  /// Stores values for both (a,b) and (b,a). Present values must lie in [0,1].
  void set(const std::string& a, const std::string& b, const DistanceValues& values);
  const DistanceValues* lookup(const std::string& a, const std::string& b) const;
  std::size_t size() const { return entries_.size(); }

  /// TSV "lang_a lang_b syntactic phonological inventory geographic genetic
  /// featural" with NA for missing values. Conflicting duplicate rows are errors.
  static DistanceTable parse(std::string_view text);
  static DistanceTable load(const std::string& path);

 private:
  std::map<std::pair<std::string, std::string>, DistanceValues> entries_;
};

struct DistanceResult {
  double value = 0.0;
  std::size_t missing = 0;
};

/// Mean of the present distances. Throws DataError when the pair is absent
/// or all six values are missing.
DistanceResult linguistic_distance(const std::string& source, const std::string& target, const DistanceTable& table);

/// |tokens(source train) n tokens(target test)| / |tokens(target test)|.
double token_overlap(const Corpus& source_train, const Corpus& target_test, const TokenizeOptions& options = {});

enum class SelectionStrategy { LinguisticDistance, TokenOverlap, DevPerformance };

std::string_view to_string(SelectionStrategy s);
SelectionStrategy parse_selection_strategy(std::string_view text);

struct RankedSource {
  std::string language;
  std::optional<double> value;  // NA ranks last
};

/// Sources ordered by the strategy: distance ascending, overlap and dev
/// Spearman descending. Equal values keep candidate order.
struct SourceRanking {
  SelectionStrategy strategy = SelectionStrategy::DevPerformance;
  std::vector<RankedSource> entries;
  std::string chosen;
  std::vector<std::string> warnings;
};

SourceRanking rank_by_distance(const std::vector<std::string>& sources, const std::string& target,
                               const DistanceTable& table);
SourceRanking rank_by_overlap(const std::vector<std::pair<std::string, Corpus>>& source_trains,
                              const Corpus& target_test, const TokenizeOptions& options = {});

/// A model whose task adapter was trained on `source_language`.
struct TransferCandidate {
  std::string source_language;
  ModelGraph model;
};

/// Copy of the source model with the target language adapter in place. The
/// source must carry a task adapter (UsageError otherwise).
ModelGraph compose_for_target(const ModelGraph& source_model, const AdapterBundle& target_language_adapter);

/// Cross-encoder scores for the pairs; never updates parameters. Refuses a
/// model whose language adapter is not the target's unless
/// allow_source_adapter is set.
std::vector<double> zero_shot_predict(const ModelGraph& model, const std::string& target_language,
                                      const Corpus& pairs, const Vocabulary& vocab,
                                      bool allow_source_adapter = false, const TokenizeOptions& options = {});

/// Scores every candidate's task adapter with the target language adapter on
/// the target dev set. Incompatible candidates are skipped with a warning.
SourceRanking dev_performance_ranking(const std::vector<TransferCandidate>& candidates,
                                      const AdapterBundle& target_language_adapter, const Corpus& target_dev,
                                      const Vocabulary& vocab, const TokenizeOptions& options = {});

struct LeakageVerdict {
  bool ok = true;
  std::string violation;
};

/// Transfer to English is refused when any supervised phase in the lineage
/// consumed pairs translated from English. Supervised phases lacking
/// provenance metadata fail closed for every target.
LeakageVerdict leakage_guard(const std::vector<LineageEntry>& lineage, const std::string& target_language);

/// Throws LeakageError carrying the violation.
void enforce_leakage_guard(const std::vector<LineageEntry>& lineage, const std::string& target_language);

}  // namespace aadam
