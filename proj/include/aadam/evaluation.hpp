#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aadam/corpus.hpp"
#include "aadam/model.hpp"
#include "aadam/text.hpp"

namespace aadam {

/// Fractional ranks starting at 1; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation; nullopt when either input is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks. nullopt (NA) when either side is
/// constant. Throws DataError on unequal lengths or fewer than 2 values.
std::optional<double> spearman(std::span<const double> pred, std::span<const double> gold);

/// Spearman over the pairs whose prediction is present; NA when fewer than 2 remain.
std::optional<double> spearman_present(std::span<const std::optional<double>> pred, std::span<const double> gold);

std::vector<double> gold_scores(const Corpus& corpus);

// Baselines without training.

/// Dice coefficient 2|T1 n T2| / (|T1| + |T2|) over lowercase whitespace
/// token sets; 0 when both sets are empty.
double dice(std::string_view s1, std::string_view s2);
std::vector<double> word_overlap_baseline(const std::vector<SentencePair>& pairs);

struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

/// First line "count dim", then "token v1 ... vdim" per line.
WordVectors parse_word_vectors(std::string_view text);
WordVectors load_word_vectors(const std::string& path);

/// Cosine of mean in-vocabulary token vectors. A sentence without any known
/// token gives NA for its pair.
std::vector<std::optional<double>> static_embedding_baseline(const std::vector<SentencePair>& pairs,
                                                             const WordVectors& vectors,
                                                             const TokenizeOptions& options = {});

/// Cosine of bi-encoder embeddings of the untrained model; no parameter changes.
std::vector<double> contextual_zero_shot_baseline(const ModelGraph& model, const std::vector<SentencePair>& pairs,
                                                  const Vocabulary& vocab, const TokenizeOptions& options = {});

// Band analysis.

struct Band {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const Band&, const Band&) = default;
};

/// [0,0.25) [0.25,0.5) [0.5,0.75) [0.75,1]
std::vector<Band> default_bands();

struct BandResult {
  Band band;
  std::size_t n = 0;
  std::optional<double> spearman;
  std::vector<std::size_t> members;  // indices into the input
};

/// Assigns each pair by gold score: bands are left-closed and right-open
/// except the last, which includes 1.0. Throws DataError when the bands do
/// not tile [0,1] or a gold score lies outside it.
std::vector<BandResult> band_analysis(std::span<const double> pred, std::span<const double> gold,
                                      const std::vector<Band>& bands = default_bands());

// Cross-validation.

/// Seeded assignment of n items to k folds; sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_assign(std::size_t n, std::size_t k, std::uint64_t seed);

/// Trains on the first corpus and returns predictions for the second.
using CvTrainer = std::function<std::vector<double>(const Corpus& train, const Corpus& held_out)>;

struct CvResult {
  std::optional<double> mean;
  std::optional<double> stddev;  // population standard deviation over defined folds
  std::vector<std::optional<double>> per_fold;
  std::vector<std::vector<std::size_t>> folds;
};

CvResult kfold_cv(const Corpus& corpus, std::size_t k, std::uint64_t seed, const CvTrainer& trainer);

// Reports.

/// rho x 100 with two decimals; NA renders as "-".
std::string format_x100(std::optional<double> rho);

struct EvalReport {
  std::string language;
  std::string system;
  std::optional<double> spearman;
  std::size_t n_pairs = 0;
  std::size_t n_missing = 0;
  std::vector<BandResult> bands;
  std::string checkpoint_hash;
  std::string config_hash;
};

EvalReport make_report(std::string language, std::string system, std::span<const double> pred,
                       std::span<const double> gold);

/// Aligned plain-text table with one row per report and a column per band.
std::string render_table(const std::vector<EvalReport>& reports);
/// Machine-readable twin of render_table.
std::string render_tsv(const std::vector<EvalReport>& reports);

}  // namespace aadam
