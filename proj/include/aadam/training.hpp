#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aadam/corpus.hpp"
#include "aadam/model.hpp"
#include "aadam/random.hpp"
#include "aadam/text.hpp"

namespace aadam {

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = 5e-5;
  std::size_t epochs = 6;
  TrainMode mode = TrainMode::Full;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double weight_decay = 0.0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

/// Batch 16, lr 5e-5, 6 epochs, full.
TrainConfig finetune_defaults();
/// Batch 16, lr 1e-4, 15 epochs, task_adapter_only.
TrainConfig adapter_defaults();
/// Batch 16, lr 5e-5, 10 epochs, full.
TrainConfig mlm_defaults();
/// Learning rates {2e-5, 5e-5} at 6 epochs.
std::vector<TrainConfig> finetune_grid();
/// Learning rates {1e-4, 2e-4, 5e-5} at 15 epochs.
std::vector<TrainConfig> adapter_grid();

struct MaskPolicy {
  double mask_prob = 0.15;
  double replace_mask = 0.8;
  double replace_random = 0.1;
  double keep = 0.1;
};

void validate(const MaskPolicy& policy);

struct MaskedSequence {
  TokenSequence seq;
  std::vector<int> labels;  // original id at selected positions, ad::kIgnoreLabel elsewhere
};

/// Selects non-special positions with probability mask_prob; each selected
/// token becomes MASK, a uniformly random non-special id below vocab_size,
/// or stays, per the policy fractions.
MaskedSequence mask_tokens(const TokenSequence& seq, const MaskPolicy& policy, std::size_t vocab_size, Rng& rng);

enum class Architecture { Cross, Bi };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view text);

struct EpochRecord {
  std::string phase;
  std::size_t epoch = 0;  // 1-based within the phase
  double loss = 0.0;      // mean per-example loss over the epoch
  std::optional<double> dev_spearman;
};

struct PhaseRecord {
  std::string name;
  std::string objective;  // regression | mlm
  std::string corpus;
  std::string language;
  std::string start_hash;
  std::string end_hash;
  std::size_t steps = 0;
  std::map<std::string, std::size_t> provenance;
};

/// Provenance counts of the examples in one optimizer step.
struct BatchRecord {
  std::string phase;
  std::size_t epoch = 0;
  std::size_t index = 0;
  std::map<std::string, std::size_t> provenance;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::vector<PhaseRecord> phases;
  std::vector<BatchRecord> batches;
  std::vector<std::string> warnings;
  std::string final_hash;

  /// "phase<TAB>epoch<TAB>loss<TAB>dev_spearman" lines after a header; NA when absent.
  std::string serialize() const;
  void append(const TrainLog& other);
};

struct RegressionOptions {
  Architecture architecture = Architecture::Cross;
  std::string phase = "final";
  TokenizeOptions tokenize;
  /// Worker threads for dev predictions (0 = hardware concurrency).
  std::size_t eval_threads = 0;
};

/// MSE regression of the model output onto gold scores. The model is
/// trained in place under config.mode; the phase is appended to its lineage.
/// Throws NumericError naming the step when the loss becomes non-finite.
TrainLog train_regression(ModelGraph& model, const Corpus& train, const Corpus* dev, const Vocabulary& vocab,
                          const TrainConfig& config, const RegressionOptions& options = {});

/// Masked-language-model training on unlabeled sentences.
TrainLog tapt(ModelGraph& model, const Corpus& unlabeled, const Vocabulary& vocab, const TrainConfig& config,
              const MaskPolicy& policy = {}, const std::string& phase = "tapt", const TokenizeOptions& tokenize = {});

/// Warmup on translated pairs, then final training on original pairs. An
/// empty phase corpus skips that phase with a warning.
TrainLog two_phase_train(ModelGraph& model, const Corpus& augmented, const Corpus& original, const Corpus* dev,
                         const Vocabulary& vocab, const TrainConfig& warmup, const TrainConfig& final_config,
                         const RegressionOptions& options = {});

/// Violations of the two-phase provenance contract found in a log. The
/// regression phases must be [warmup, final] or [final] alone, final must
/// start from the warmup end state, warmup batches hold translated pairs only
/// and final batches original pairs only. MLM phases are ignored.
std::vector<std::string> audit_two_phase(const TrainLog& log);

/// Predictions for every pair of a corpus.
std::vector<double> predict(const ModelGraph& model, const Corpus& corpus, const Vocabulary& vocab,
                            Architecture architecture = Architecture::Cross, const TokenizeOptions& tokenize = {},
                            std::size_t threads = 0);

struct GridRow {
  TrainConfig config;
  std::optional<double> dev_spearman;
  bool diverged = false;
  std::string message;
  std::string final_hash;
};

struct GridResult {
  ModelGraph best;
  std::size_t best_index = 0;
  std::vector<GridRow> table;
  TrainLog best_log;
};

/// Trains one model per configuration from model_factory() and keeps the
/// best dev Spearman; ties go to the lower learning rate, then grid order.
/// Diverged runs are recorded and skipped; if all diverge, NumericError.
GridResult grid_search(const std::function<ModelGraph()>& model_factory, const std::vector<TrainConfig>& grid,
                       const Corpus& train, const Corpus& dev, const Vocabulary& vocab,
                       const RegressionOptions& options = {}, std::size_t threads = 1);

}  // namespace aadam
