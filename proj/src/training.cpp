#include "aadam/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numeric>
#include <thread>

#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/optim.hpp"

namespace aadam {

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kMaskStream = 3;

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Zero gradients for trainable parameters the loss did not reach.
void complete_gradients(const ParameterStore& params, Gradients& grads) {
  for (const auto& p : params) {
    if (p.trainable && !grads.count(p.name)) grads.emplace(p.name, Tensor(p.tensor.shape()));
  }
}

struct Encoded {
  TokenSequence a;
  TokenSequence b;  // bi-encoder second sentence
  double score = 0.0;
  std::string provenance;
};

std::vector<Encoded> encode_corpus(const Corpus& corpus, const Vocabulary& vocab, std::size_t max_len,
                                   Architecture arch, const TokenizeOptions& opts) {
  std::vector<Encoded> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    Encoded e;
    if (arch == Architecture::Cross) {
      e.a = encode_pair(p.sentence1, p.sentence2, vocab, max_len, opts);
    } else {
      e.a = encode_single(p.sentence1, vocab, max_len, opts);
      e.b = encode_single(p.sentence2, vocab, max_len, opts);
    }
    e.score = p.score;
    e.provenance = std::string(to_string(p.provenance));
    out.push_back(std::move(e));
  }
  return out;
}

Var example_output(Tape& tape, const ModelGraph& model, const Encoded& e, Architecture arch, Rng* rng) {
  if (arch == Architecture::Cross) return cross_score(tape, model, e.a, rng);
  return ad::cosine_similarity(bi_embedding(tape, model, e.a, rng), bi_embedding(tape, model, e.b, rng));
}

std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) rng.shuffle(std::span(order));
  return order;
}

void step(ModelGraph& model, Tape& tape, Var loss, AdamWState& state, const AdamWHyper& hyper,
          const std::string& where) {
  if (!std::isfinite(loss.value().item())) throw NumericError("non-finite loss at " + where);
  Gradients grads = tape.backward(loss);
  complete_gradients(model.params(), grads);
  try {
    adamw_step(model.params(), grads, state, hyper);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at " + where);
  }
}

std::string where(const std::string& phase, std::size_t epoch, std::size_t global_step) {
  return "step " + std::to_string(global_step) + " (phase " + phase + ", epoch " + std::to_string(epoch) + ")";
}

AdamWHyper hyper_of(const TrainConfig& c) {
  AdamWHyper h;
  h.learning_rate = c.learning_rate;
  h.weight_decay = c.weight_decay;
  return h;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw UsageError("training config: batch_size must be at least 1");
  if (c.epochs < 1) throw UsageError("training config: epochs must be at least 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw UsageError("training config: learning_rate must be positive");
  }
  if (!(c.weight_decay >= 0.0)) throw UsageError("training config: weight_decay must be non-negative");
}

TrainConfig finetune_defaults() { return TrainConfig{16, 5e-5, 6, TrainMode::Full, 0, true, 0.0}; }
TrainConfig adapter_defaults() { return TrainConfig{16, 1e-4, 15, TrainMode::TaskAdapterOnly, 0, true, 0.0}; }
TrainConfig mlm_defaults() { return TrainConfig{16, 5e-5, 10, TrainMode::Full, 0, true, 0.0}; }

std::vector<TrainConfig> finetune_grid() {
  std::vector<TrainConfig> grid;
  for (double lr : {2e-5, 5e-5}) {
    TrainConfig c = finetune_defaults();
    c.learning_rate = lr;
    grid.push_back(c);
  }
  return grid;
}

std::vector<TrainConfig> adapter_grid() {
  std::vector<TrainConfig> grid;
  for (double lr : {1e-4, 2e-4, 5e-5}) {
    TrainConfig c = adapter_defaults();
    c.learning_rate = lr;
    grid.push_back(c);
  }
  return grid;
}

void validate(const MaskPolicy& p) {
  if (!(p.mask_prob >= 0.0 && p.mask_prob <= 1.0)) {
    throw UsageError("mask policy: mask_prob must lie in [0, 1]");
  }
  for (double f : {p.replace_mask, p.replace_random, p.keep}) {
    if (!(f >= 0.0 && f <= 1.0)) throw UsageError("mask policy: fractions must lie in [0, 1]");
  }
  if (std::abs(p.replace_mask + p.replace_random + p.keep - 1.0) > 1e-12) {
    throw UsageError("mask policy: mask, random and keep fractions must sum to 1");
  }
}

MaskedSequence mask_tokens(const TokenSequence& seq, const MaskPolicy& policy, std::size_t vocab_size, Rng& rng) {
  validate(policy);
  if (vocab_size <= static_cast<std::size_t>(special::kCount)) {
    throw UsageError("mask_tokens: vocabulary has no non-special tokens");
  }
  MaskedSequence out{seq, std::vector<int>(seq.ids.size(), ad::kIgnoreLabel)};
  const std::uint64_t n_regular = vocab_size - special::kCount;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const int id = seq.ids[i];
    if (is_special(id) || seq.attention_mask[i] == 0) continue;
    if (!rng.bernoulli(policy.mask_prob)) continue;
    out.labels[i] = id;
    const double u = rng.uniform();
    if (u < policy.replace_mask) {
      out.seq.ids[i] = special::kMask;
    } else if (u < policy.replace_mask + policy.replace_random) {
      out.seq.ids[i] = special::kCount + static_cast<int>(rng.below(n_regular));
    }
  }
  return out;
}

std::string_view to_string(Architecture a) { return a == Architecture::Cross ? "cross" : "bi"; }

Architecture parse_architecture(std::string_view text) {
  if (text == "cross") return Architecture::Cross;
  if (text == "bi") return Architecture::Bi;
  throw UsageError("unknown architecture '" + std::string(text) + "' (expected cross or bi)");
}

std::string TrainLog::serialize() const {
  std::string out = "phase\tepoch\tloss\tdev_spearman\n";
  for (const auto& e : epochs) {
    out += e.phase + "\t" + std::to_string(e.epoch) + "\t" + format_real(e.loss) + "\t" +
           (e.dev_spearman ? format_real(*e.dev_spearman) : "NA") + "\n";
  }
  return out;
}

void TrainLog::append(const TrainLog& other) {
  epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
  phases.insert(phases.end(), other.phases.begin(), other.phases.end());
  batches.insert(batches.end(), other.batches.begin(), other.batches.end());
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
  if (!other.final_hash.empty()) final_hash = other.final_hash;
}

std::vector<double> predict(const ModelGraph& model, const Corpus& corpus, const Vocabulary& vocab,
                            Architecture architecture, const TokenizeOptions& tokenize, std::size_t threads) {
  const auto data = encode_corpus(corpus, vocab, model.config().max_len, architecture, tokenize);
  std::vector<double> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Tape tape(false);
    out[i] = example_output(tape, model, data[i], architecture, nullptr).value().item();
  });
  return out;
}

TrainLog train_regression(ModelGraph& model, const Corpus& train, const Corpus* dev, const Vocabulary& vocab,
                          const TrainConfig& config, const RegressionOptions& options) {
  validate(config);
  if (!train.labeled()) throw DataError("train_regression needs a labeled corpus");
  if (train.pairs.empty()) throw DataError("train_regression: corpus '" + train.name + "' is empty");
  if (vocab.size() > model.config().vocab_size) {
    throw DataError("vocabulary of " + std::to_string(vocab.size()) + " tokens exceeds model vocab_size " +
                    std::to_string(model.config().vocab_size));
  }
  set_trainable(model, config.mode);
  const Architecture arch = options.architecture;
  const auto data = encode_corpus(train, vocab, model.config().max_len, arch, options.tokenize);

  TrainLog log;
  PhaseRecord phase{options.phase, "regression", train.name, train.language, model_hash(model), "", 0,
                    train.provenance_counts()};
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  Rng dropout_rng(derive_seed(config.seed, kDropoutStream));
  Rng* drop = model.config().dropout > 0.0 ? &dropout_rng : nullptr;
  AdamWState state;
  const AdamWHyper hyper = hyper_of(config);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), config.shuffle, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      std::vector<Var> losses;
      BatchRecord rec{options.phase, epoch, batch_index, {}};
      for (std::size_t j = start; j < end; ++j) {
        const Encoded& e = data[order[j]];
        Var out = example_output(tape, model, e, arch, drop);
        losses.push_back(ad::mse_loss(out, Tensor(out.value().shape(), e.score)));
        ++rec.provenance[e.provenance];
      }
      Var loss = ad::scale(ad::sum(losses), 1.0 / static_cast<double>(losses.size()));
      loss_sum += loss.value().item() * static_cast<double>(losses.size());
      ++phase.steps;
      step(model, tape, loss, state, hyper, where(options.phase, epoch, phase.steps));
      log.batches.push_back(std::move(rec));
    }
    EpochRecord er{options.phase, epoch, loss_sum / static_cast<double>(data.size()), std::nullopt};
    if (dev && dev->pairs.size() >= 2) {
      er.dev_spearman = spearman(predict(model, *dev, vocab, arch, options.tokenize, options.eval_threads),
                                 gold_scores(*dev));
    }
    log.epochs.push_back(er);
  }
  phase.end_hash = model_hash(model);
  model.append_lineage({options.phase, phase.end_hash, phase.start_hash, "regression", train.language,
                        phase.provenance});
  log.final_hash = phase.end_hash;
  log.phases.push_back(std::move(phase));
  return log;
}

TrainLog tapt(ModelGraph& model, const Corpus& unlabeled, const Vocabulary& vocab, const TrainConfig& config,
              const MaskPolicy& policy, const std::string& phase_name, const TokenizeOptions& tokenize) {
  validate(config);
  validate(policy);
  if (unlabeled.labeled()) throw DataError("tapt needs an unlabeled corpus");
  if (unlabeled.sentences.empty()) throw DataError("tapt: corpus '" + unlabeled.name + "' is empty");
  set_trainable(model, config.mode);
  const std::size_t V = model.config().vocab_size;
  std::vector<TokenSequence> data;
  data.reserve(unlabeled.sentences.size());
  for (const auto& s : unlabeled.sentences) data.push_back(encode_single(s, vocab, model.config().max_len, tokenize));

  TrainLog log;
  PhaseRecord phase{phase_name, "mlm", unlabeled.name, unlabeled.language, model_hash(model), "", 0,
                    {{"unlabeled", data.size()}}};
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  Rng dropout_rng(derive_seed(config.seed, kDropoutStream));
  Rng mask_rng(derive_seed(config.seed, kMaskStream));
  Rng* drop = model.config().dropout > 0.0 ? &dropout_rng : nullptr;
  AdamWState state;
  const AdamWHyper hyper = hyper_of(config);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), config.shuffle, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      std::vector<Var> losses;
      for (std::size_t j = start; j < end; ++j) {
        MaskedSequence m = mask_tokens(data[order[j]], policy, V, mask_rng);
        const std::size_t n = m.seq.active_length();
        Var logits = mlm_logits(tape, model, m.seq, drop);
        losses.push_back(ad::masked_cross_entropy(logits, std::span<const int>(m.labels.data(), n)));
      }
      Var loss = ad::scale(ad::sum(losses), 1.0 / static_cast<double>(losses.size()));
      loss_sum += loss.value().item() * static_cast<double>(losses.size());
      ++phase.steps;
      step(model, tape, loss, state, hyper, where(phase_name, epoch, phase.steps));
      log.batches.push_back({phase_name, epoch, batch_index, {{"unlabeled", end - start}}});
    }
    log.epochs.push_back({phase_name, epoch, loss_sum / static_cast<double>(data.size()), std::nullopt});
  }
  phase.end_hash = model_hash(model);
  model.append_lineage({phase_name, phase.end_hash, phase.start_hash, "mlm", unlabeled.language, phase.provenance});
  log.final_hash = phase.end_hash;
  log.phases.push_back(std::move(phase));
  return log;
}

TrainLog two_phase_train(ModelGraph& model, const Corpus& augmented, const Corpus& original, const Corpus* dev,
                         const Vocabulary& vocab, const TrainConfig& warmup, const TrainConfig& final_config,
                         const RegressionOptions& options) {
  if (!augmented.labeled() || !original.labeled()) throw DataError("two-phase training needs labeled corpora");
  if (!augmented.pairs.empty() && !original.pairs.empty() && augmented.language != original.language) {
    throw DataError("two-phase training: augmented corpus is '" + augmented.language + "' but original is '" +
                    original.language + "'");
  }
  for (const auto& p : augmented.pairs) {
    if (p.provenance == Provenance::Original) {
      throw DataError("warmup corpus '" + augmented.name + "' holds original pair '" + p.id + "'");
    }
  }
  for (const auto& p : original.pairs) {
    if (p.provenance != Provenance::Original) {
      throw DataError("final corpus '" + original.name + "' holds translated pair '" + p.id + "'");
    }
  }
  TrainLog log;
  RegressionOptions opts = options;
  if (augmented.pairs.empty()) {
    log.warnings.push_back("warmup skipped: corpus '" + augmented.name + "' is empty");
  } else {
    opts.phase = "warmup";
    log.append(train_regression(model, augmented, dev, vocab, warmup, opts));
  }
  if (original.pairs.empty()) {
    log.warnings.push_back("final skipped: corpus '" + original.name + "' is empty");
  } else {
    opts.phase = "final";
    log.append(train_regression(model, original, dev, vocab, final_config, opts));
  }
  if (log.final_hash.empty()) log.final_hash = model_hash(model);
  return log;
}

std::vector<std::string> audit_two_phase(const TrainLog& log) {
  std::vector<std::string> problems;
  std::vector<const PhaseRecord*> supervised;
  for (const auto& ph : log.phases) {
    if (ph.objective == "regression") supervised.push_back(&ph);
  }
  std::vector<std::string> seen;
  for (const auto* ph : supervised) seen.push_back(ph->name);
  const bool two = seen == std::vector<std::string>{"warmup", "final"};
  if (!two && seen != std::vector<std::string>{"final"}) {
    std::string got;
    for (const auto& s : seen) got += (got.empty() ? "" : ",") + s;
    problems.push_back("supervised phase order is [" + got + "], expected [warmup,final] or [final]");
  }
  if (two && supervised[1]->start_hash != supervised[0]->end_hash) {
    problems.push_back("final phase starts from " + supervised[1]->start_hash + ", not the warmup checkpoint " +
                       supervised[0]->end_hash);
  }
  bool in_final = false;
  for (const auto& b : log.batches) {
    if (b.phase == "final") in_final = true;
    if (b.phase == "warmup" && in_final) problems.push_back("warmup batch after the final phase began");
    for (const auto& [prov, n] : b.provenance) {
      const bool original = prov == "original";
      if ((b.phase == "warmup" && original) || (b.phase == "final" && !original)) {
        problems.push_back(b.phase + " epoch " + std::to_string(b.epoch) + " batch " + std::to_string(b.index) +
                           " holds " + std::to_string(n) + " " + prov + " pairs");
      }
    }
  }
  return problems;
}

GridResult grid_search(const std::function<ModelGraph()>& model_factory, const std::vector<TrainConfig>& grid,
                       const Corpus& train, const Corpus& dev, const Vocabulary& vocab,
                       const RegressionOptions& options, std::size_t threads) {
  if (grid.empty()) throw UsageError("grid search needs at least one configuration");
  if (dev.pairs.empty()) throw DataError("grid search needs a non-empty dev set");
  std::vector<ModelGraph> models;
  for (std::size_t i = 0; i < grid.size(); ++i) models.push_back(model_factory());
  std::vector<GridRow> table(grid.size());
  std::vector<TrainLog> logs(grid.size());
  RegressionOptions opts = options;
  if (threads != 1) opts.eval_threads = 1;
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    table[i].config = grid[i];
    TrainConfig run = grid[i];
    run.seed = derive_seed(grid[i].seed, i);
    try {
      logs[i] = train_regression(models[i], train, nullptr, vocab, run, opts);
      table[i].dev_spearman = spearman(predict(models[i], dev, vocab, opts.architecture, opts.tokenize,
                                               opts.eval_threads),
                                       gold_scores(dev));
      table[i].final_hash = logs[i].final_hash;
    } catch (const NumericError& e) {
      table[i].diverged = true;
      table[i].message = e.what();
    }
  });
  std::optional<std::size_t> best;
  auto better = [&](std::size_t a, std::size_t b) {
    const auto& ra = table[a];
    const auto& rb = table[b];
    if (ra.dev_spearman.has_value() != rb.dev_spearman.has_value()) return ra.dev_spearman.has_value();
    if (ra.dev_spearman && *ra.dev_spearman != *rb.dev_spearman) return *ra.dev_spearman > *rb.dev_spearman;
    if (ra.config.learning_rate != rb.config.learning_rate) return ra.config.learning_rate < rb.config.learning_rate;
    return a < b;
  };
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (table[i].diverged) continue;
    if (!best || better(i, *best)) best = i;
  }
  if (!best) {
    std::string msg = "grid search: every configuration diverged:";
    for (const auto& r : table) msg += "\n  lr " + format_real(r.config.learning_rate) + ": " + r.message;
    throw NumericError(msg);
  }
  GridResult result{std::move(models[*best]), *best, std::move(table), std::move(logs[*best])};
  return result;
}

}  // namespace aadam
