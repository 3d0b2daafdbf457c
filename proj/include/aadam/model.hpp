#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aadam/autodiff.hpp"
#include "aadam/parameters.hpp"
#include "aadam/text.hpp"

namespace aadam {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t max_len = 64;
  std::size_t adapter_bottleneck = 16;
  std::uint64_t seed = 0;
  double dropout = 0.0;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Throws UsageError naming the violated invariant.
void validate(const EncoderConfig& config);

enum class TrainMode { Full, TaskAdapterOnly, LanguageAdapterOnly };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);  // full | task_adapter_only | language_adapter_only

enum class AdapterKind { Language, Task };

std::string_view to_string(AdapterKind kind);
/// Parameter-name prefix of an adapter kind: "adapter.lang." or "adapter.task.".
std::string adapter_prefix(AdapterKind kind);

/// One step of a model's history. Training phases record the provenance
/// counts of the corpus they consumed; build and swap entries carry none.
struct LineageEntry {
  std::string stage;      // build, tapt, warmup, final, swap, ...
  std::string hash;       // model hash after the stage
  std::string parent;     // model hash before the stage ("" for build)
  std::string objective;  // build | regression | mlm | swap
  std::string language;
  std::optional<std::map<std::string, std::size_t>> provenance;

  friend bool operator==(const LineageEntry&, const LineageEntry&) = default;
};

/// Identifiers of the attached adapters; empty when absent.
struct AdapterStack {
  std::string language_id;
  std::string task_id;

  friend bool operator==(const AdapterStack&, const AdapterStack&) = default;
};

/// Standalone adapter parameters under their full model names.
struct AdapterBundle {
  AdapterKind kind = AdapterKind::Language;
  std::string id;
  std::vector<Parameter> params;
};

/// Parameters of the toy encoder, its heads, the attached adapters and an
/// append-only lineage.
///
/// Names:
///   embed.token, embed.position, embed.segment, embed.ln.{gain,bias}
///   layer.{i}.attn.{wq,bq,wk,wv,bv,wo,bo}, layer.{i}.ln1.{gain,bias}
///   layer.{i}.ffn.{w1,b1,w2,b2}, layer.{i}.ln2.{gain,bias}
///   head.reg.{w,b}, head.mlm.{w,b}
///   adapter.{lang,task}.layer.{i}.{down,up}.{w,b}
class ModelGraph {
 public:
  ModelGraph() = default;
  explicit ModelGraph(EncoderConfig config) : config_(std::move(config)) {}

  const EncoderConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  AdapterStack& adapters() { return adapters_; }
  const AdapterStack& adapters() const { return adapters_; }
  const std::vector<LineageEntry>& lineage() const { return lineage_; }
  void append_lineage(LineageEntry entry) { lineage_.push_back(std::move(entry)); }
  /// Hash of the experiment configuration that produced the model, if any.
  const std::string& config_hash() const { return config_hash_; }
  void set_config_hash(std::string hash) { config_hash_ = std::move(hash); }

  bool has_adapter(AdapterKind kind) const;

 private:
  EncoderConfig config_;
  ParameterStore params_;
  AdapterStack adapters_;
  std::vector<LineageEntry> lineage_;
  std::string config_hash_;
};

/// Deterministic initialization: Xavier-uniform matrices, U(+-sqrt(3/d))
/// token embeddings, position and segment embeddings at a fifth of that
/// range, key projections equal to query projections, zero biases, unit
/// layer-norm gains. No adapters attached.
ModelGraph build_encoder(const EncoderConfig& config);

/// Closed-form parameter count of build_encoder(config).
std::size_t expected_parameter_count(const EncoderConfig& config);
std::size_t adapter_parameter_count(const EncoderConfig& config);

/// Fresh adapter: Xavier down-projection, zero up-projection and biases.
AdapterBundle make_adapter(const EncoderConfig& config, AdapterKind kind, std::string id, std::uint64_t seed);

/// Attaches a bundle; throws UsageError if that kind is already attached and
/// DataError if a tensor shape does not fit the config.
void attach_adapter(ModelGraph& model, const AdapterBundle& bundle);
void detach_adapter(ModelGraph& model, AdapterKind kind);
AdapterBundle extract_adapter(const ModelGraph& model, AdapterKind kind);

/// Replaces the language adapter tensors in place and records a swap.
/// Every other parameter is left bitwise untouched.
void swap_language_adapter(ModelGraph& model, const AdapterBundle& bundle);

/// Trainable sets:
///   full                   every parameter
///   task_adapter_only      adapter.task.* and head.reg.*
///   language_adapter_only  adapter.lang.* and head.mlm.*
void set_trainable(ModelGraph& model, TrainMode mode);

/// Truncated SHA-256 (16 hex digits) over names, shapes and float32-rounded
/// values in name order. Doubles as the checkpoint hash.
std::string model_hash(const ModelGraph& model);

/// Throws DataError when the sequence does not fit the model.
void check_sequence(const ModelGraph& model, const TokenSequence& seq);

// Taped forwards. Computation runs over the active prefix of the sequence;
// with key masking that prefix is bitwise identical to the padded run.
// A non-null rng enables dropout at config.dropout.

/// Relatedness score sigmoid(w . mean(h) + b) over unmasked positions, shape (1,1).
Var cross_score(Tape& tape, const ModelGraph& model, const TokenSequence& seq, Rng* rng = nullptr);
/// Masked mean of final token representations, shape (1,d).
Var bi_embedding(Tape& tape, const ModelGraph& model, const TokenSequence& seq, Rng* rng = nullptr);
/// MLM logits over the active prefix, shape (active_length, vocab).
Var mlm_logits(Tape& tape, const ModelGraph& model, const TokenSequence& seq, Rng* rng = nullptr);
/// Final hidden states over the first `length` positions, shape (length, d).
Var encode(Tape& tape, const ModelGraph& model, const TokenSequence& seq, std::size_t length, Rng* rng = nullptr);

// Inference without a recorded tape.
double forward_cross(const ModelGraph& model, const TokenSequence& pair);
Tensor forward_bi(const ModelGraph& model, const TokenSequence& sentence);
/// Logits for every position, PAD included: shape (length, vocab).
Tensor forward_mlm(const ModelGraph& model, const TokenSequence& masked);

/// forward_cross over many pairs using up to `threads` workers (0 = hardware).
std::vector<double> predict_cross(const ModelGraph& model, const std::vector<TokenSequence>& pairs,
                                  std::size_t threads = 0);

}  // namespace aadam
