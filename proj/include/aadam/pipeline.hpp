#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aadam/config.hpp"
#include "aadam/corpus.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/model.hpp"
#include "aadam/text.hpp"
#include "aadam/training.hpp"

namespace aadam {

/// Exit status for an exception: 1 usage, 2 data (translation failures
/// included), 3 numeric, 4 leakage.
int exit_code_for(const std::exception& e);

struct StageRecord {
  std::string name;
  std::string hash;
  double seconds = 0.0;
};

/// Run manifest: identity, status and per-stage model hashes with wall-clock
/// times. Serialized as "key<TAB>value..." lines.
struct RunManifest {
  std::string command;
  std::string run_id;
  std::string config_hash;
  std::string status = "running";  // running | complete | incomplete
  std::vector<StageRecord> stages;
  std::string error;

  std::string serialize() const;
  static RunManifest parse(std::string_view text);
};

/// Exclusive owner of a run directory for the lifetime of the object. The
/// lock file is created atomically; a second owner gets UsageError.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// "<command>-<16 hex>" from the command, the configuration (minus
/// global.run_root) and the bytes of every file the configuration names.
std::string run_id(const std::string& command, const Config& config);

struct CommandOptions {
  bool force = false;
};

/// Data files of one language: data.<lang>.<split>.
std::optional<Corpus> load_split(const Config& config, const std::string& language, Split split);
/// Tokens of every data.*.train and data.*.unlabeled file plus augmented
/// corpora, unless model.vocab names a fixed vocabulary file.
Vocabulary experiment_vocab(const Config& config);
EncoderConfig encoder_config(const Config& config, std::size_t vocab_size);
TokenizeOptions tokenize_options(const Config& config);
std::vector<Band> parse_bands(const std::vector<std::string>& edges);

// Subcommands. Each writes its artifacts under global.run_root and a
// summary to `out`; the returned value is the process exit status.
int cmd_ingest(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_augment(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_tapt(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_train(const Config& config, const CommandOptions& options, std::ostream& out);
/// The TAPT x warmup{none, semrel, stsb} grid: six train runs and one summary table.
int cmd_train_grid(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_transfer(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_baseline(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_evaluate(const Config& config, const CommandOptions& options, std::ostream& out);
int cmd_report(const Config& config, const CommandOptions& options, std::ostream& out);

}  // namespace aadam
