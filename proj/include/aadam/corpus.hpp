#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace aadam {

/// Where a labeled pair came from: task data, or machine-translated English data.
enum class Provenance { Original, SemrelMt, StsbMt };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view text);  // throws DataError

enum class Split { Train, Dev, Test, Unlabeled };

std::string_view to_string(Split s);
Split parse_split(std::string_view text);

struct SentencePair {
  std::string id;
  std::string sentence1;
  std::string sentence2;
  double score = 0.0;  // relatedness in [0, 1]
  Provenance provenance = Provenance::Original;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

/// Language-tagged collection of labeled pairs or unlabeled sentences.
struct Corpus {
  std::string name;
  std::string language;
  Split split = Split::Train;
  std::vector<SentencePair> pairs;
  std::vector<std::string> sentences;

  bool labeled() const { return split != Split::Unlabeled; }
  std::size_t size() const { return labeled() ? pairs.size() : sentences.size(); }
  /// Count of pairs per provenance tag.
  std::map<std::string, std::size_t> provenance_counts() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Checks the Corpus invariants (score range, non-empty sentences, unique ids).
void validate(const Corpus& corpus);

/// Parses the labeled TSV format:
///   id<TAB>sentence1<TAB>sentence2<TAB>score[<TAB>provenance]
/// The header row is mandatory. Errors carry 1-based line numbers.
Corpus parse_labeled(std::string_view text, std::string language, std::string name = "corpus",
                     Split split = Split::Train);

/// Writes the labeled TSV format, always including the provenance column.
std::string serialize_labeled(const Corpus& corpus);

/// One sentence per line; blank lines dropped. Invalid UTF-8 is rejected with
/// its byte offset.
Corpus parse_unlabeled(std::string_view text, std::string language, std::string name = "unlabeled");

std::string serialize_unlabeled(const Corpus& corpus);

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct CorpusSplits {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Seeded partition of a labeled corpus. Dev and test receive floor(n * f)
/// pairs; the remainder goes to train.
CorpusSplits split(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

/// Concatenates corpora of one language and split; ids become "<name>/<id>".
Corpus merge(std::span<const Corpus> corpora);

/// Returns the byte offset of the first invalid UTF-8 sequence, or npos.
std::size_t find_invalid_utf8(std::string_view text);

/// Reads a whole file; "-" reads standard input. Throws DataError naming the path.
std::string read_text(const std::string& path);
void write_text(const std::string& path, std::string_view content);

Corpus load_labeled(const std::string& path, std::string language, Split split = Split::Train);
Corpus load_unlabeled(const std::string& path, std::string language);

}  // namespace aadam
