#include "aadam/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <thread>

#include "aadam/error.hpp"
#include "aadam/hashing.hpp"
#include "aadam/random.hpp"

namespace aadam {

namespace {

constexpr double kMaskedScore = -1e9;
// Position and segment embeddings start small next to token embeddings.
constexpr double kPositionScale = 0.2;

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor embedding_init(std::size_t rows, std::size_t d, Rng& rng, double scale = 1.0) {
  const double limit = scale * std::sqrt(3.0 / static_cast<double>(d));
  Tensor t({rows, d});
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

// Each tensor draws from its own stream so initial values do not depend on
// construction order.
Rng stream_for(std::uint64_t seed, const std::string& name) { return Rng(derive_seed(seed, string_seed(name))); }

void add_matrix(ParameterStore& ps, std::uint64_t seed, const std::string& name, std::size_t in, std::size_t out) {
  Rng rng = stream_for(seed, name);
  ps.add(name, xavier(in, out, rng));
}

void add_layer_norm(ParameterStore& ps, const std::string& prefix, std::size_t d) {
  ps.add(prefix + ".gain", Tensor({d}, 1.0));
  ps.add(prefix + ".bias", Tensor({d}, 0.0));
}

std::string layer_prefix(std::size_t i) { return "layer." + std::to_string(i) + "."; }

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

Var param(Tape& tape, const ModelGraph& model, const std::string& name) {
  return tape.parameter(model.params().get(name));
}

Var linear(Tape& tape, const ModelGraph& model, Var x, const std::string& w, const std::string& b) {
  return ad::add_bias(ad::matmul(x, param(tape, model, w)), param(tape, model, b));
}

Var maybe_dropout(Var x, double rate, Rng* rng) {
  return (rng && rate > 0.0) ? ad::dropout(x, rate, *rng) : x;
}

Var attention(Tape& tape, const ModelGraph& model, Var h, const std::string& p, std::span<const int> mask) {
  const EncoderConfig& c = model.config();
  const std::size_t n = h.value().rows();
  const std::size_t dh = c.d_model / c.n_heads;
  Var q = linear(tape, model, h, p + "attn.wq", p + "attn.bq");
  Var k = ad::matmul(h, param(tape, model, p + "attn.wk"));
  Var v = linear(tape, model, h, p + "attn.wv", p + "attn.bv");

  std::optional<Var> key_mask;
  if (std::any_of(mask.begin(), mask.end(), [](int m) { return m == 0; })) {
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) m.at(i, j) = mask[j] ? 0.0 : kMaskedScore;
    }
    key_mask = tape.constant(std::move(m));
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(c.n_heads);
  for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
    Var qh = ad::slice_cols(q, hd * dh, dh);
    Var kh = ad::slice_cols(k, hd * dh, dh);
    Var vh = ad::slice_cols(v, hd * dh, dh);
    Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (key_mask) scores = ad::add(scores, *key_mask);
    heads.push_back(ad::matmul(ad::softmax(scores), vh));
  }
  Var merged = c.n_heads == 1 ? heads.front() : ad::concat_cols(heads);
  return linear(tape, model, merged, p + "attn.wo", p + "attn.bo");
}

Var adapter(Tape& tape, const ModelGraph& model, Var h, const std::string& p) {
  Var down = ad::relu(linear(tape, model, h, p + "down.w", p + "down.b"));
  return ad::add(h, linear(tape, model, down, p + "up.w", p + "up.b"));
}

std::vector<std::pair<std::string, Shape>> adapter_shapes(const EncoderConfig& c, AdapterKind kind) {
  std::vector<std::pair<std::string, Shape>> out;
  const std::string base = adapter_prefix(kind);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const std::string p = base + layer_prefix(i);
    out.push_back({p + "down.w", {c.d_model, c.adapter_bottleneck}});
    out.push_back({p + "down.b", {c.adapter_bottleneck}});
    out.push_back({p + "up.w", {c.adapter_bottleneck, c.d_model}});
    out.push_back({p + "up.b", {c.d_model}});
  }
  return out;
}

void check_bundle(const ModelGraph& model, const AdapterBundle& bundle) {
  const auto shapes = adapter_shapes(model.config(), bundle.kind);
  if (bundle.params.size() != shapes.size()) {
    throw DataError("adapter '" + bundle.id + "': expected " + std::to_string(shapes.size()) + " tensors, found " +
                    std::to_string(bundle.params.size()));
  }
  std::map<std::string, const Parameter*> by_name;
  for (const auto& p : bundle.params) by_name[p.name] = &p;
  for (const auto& [name, shape] : shapes) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("adapter '" + bundle.id + "': missing tensor " + name);
    if (it->second->tensor.shape() != shape) {
      throw DataError("adapter '" + bundle.id + "': shape mismatch for " + name + ": expected " +
                      shape_to_string(shape) + ", found " + shape_to_string(it->second->tensor.shape()));
    }
  }
}

std::string& adapter_id(AdapterStack& s, AdapterKind kind) {
  return kind == AdapterKind::Language ? s.language_id : s.task_id;
}

}  // namespace

void validate(const EncoderConfig& c) {
  if (c.vocab_size <= static_cast<std::size_t>(special::kCount)) {
    throw UsageError("encoder config: vocab_size must exceed the 5 special tokens");
  }
  if (c.d_model == 0 || c.n_layers == 0 || c.n_heads == 0 || c.d_ff == 0 || c.adapter_bottleneck == 0) {
    throw UsageError("encoder config: dimensions must be positive");
  }
  if (c.d_model % c.n_heads != 0) {
    throw UsageError("encoder config: d_model " + std::to_string(c.d_model) + " not divisible by n_heads " +
                     std::to_string(c.n_heads));
  }
  if (c.adapter_bottleneck >= c.d_model) {
    throw UsageError("encoder config: adapter_bottleneck must be smaller than d_model");
  }
  if (c.max_len < 4) throw UsageError("encoder config: max_len must be at least 4");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw UsageError("encoder config: dropout must be in [0, 1)");
}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Full: return "full";
    case TrainMode::TaskAdapterOnly: return "task_adapter_only";
    case TrainMode::LanguageAdapterOnly: return "language_adapter_only";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "full") return TrainMode::Full;
  if (text == "task_adapter_only") return TrainMode::TaskAdapterOnly;
  if (text == "language_adapter_only") return TrainMode::LanguageAdapterOnly;
  throw UsageError("unknown training mode '" + std::string(text) +
                   "' (expected full, task_adapter_only or language_adapter_only)");
}

std::string_view to_string(AdapterKind kind) { return kind == AdapterKind::Language ? "language" : "task"; }

std::string adapter_prefix(AdapterKind kind) {
  return kind == AdapterKind::Language ? "adapter.lang." : "adapter.task.";
}

bool ModelGraph::has_adapter(AdapterKind kind) const {
  return !(kind == AdapterKind::Language ? adapters_.language_id : adapters_.task_id).empty();
}

ModelGraph build_encoder(const EncoderConfig& config) {
  validate(config);
  const std::size_t d = config.d_model, f = config.d_ff, V = config.vocab_size;
  const std::uint64_t seed = config.seed;
  ModelGraph model(config);
  ParameterStore& ps = model.params();
  {
    Rng rng = stream_for(seed, "embed.token");
    ps.add("embed.token", embedding_init(V, d, rng));
  }
  {
    Rng rng = stream_for(seed, "embed.position");
    ps.add("embed.position", embedding_init(config.max_len, d, rng, kPositionScale));
  }
  {
    Rng rng = stream_for(seed, "embed.segment");
    ps.add("embed.segment", embedding_init(2, d, rng, kPositionScale));
  }
  add_layer_norm(ps, "embed.ln", d);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      add_matrix(ps, seed, p + "attn." + w, d, d);
      // No key bias: it shifts a whole score row, which softmax ignores.
      if (std::string_view(w) != "wk") ps.add(p + "attn.b" + std::string(w + 1), Tensor({d}));
    }
    // Keys start equal to queries, so equal tokens attend to each other.
    ps.get(p + "attn.wk").tensor = ps.get(p + "attn.wq").tensor;
    add_layer_norm(ps, p + "ln1", d);
    add_matrix(ps, seed, p + "ffn.w1", d, f);
    ps.add(p + "ffn.b1", Tensor({f}));
    add_matrix(ps, seed, p + "ffn.w2", f, d);
    ps.add(p + "ffn.b2", Tensor({d}));
    add_layer_norm(ps, p + "ln2", d);
  }
  add_matrix(ps, seed, "head.reg.w", d, 1);
  ps.add("head.reg.b", Tensor({1}));
  add_matrix(ps, seed, "head.mlm.w", d, V);
  ps.add("head.mlm.b", Tensor({V}));
  model.append_lineage({"build", model_hash(model), "", "build", "", std::nullopt});
  return model;
}

std::size_t expected_parameter_count(const EncoderConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff, V = c.vocab_size, L = c.max_len;
  const std::size_t per_layer = 4 * d * d + 3 * d + 2 * d + (d * f + f) + (f * d + d) + 2 * d;
  return V * d + L * d + 2 * d + 2 * d + c.n_layers * per_layer + (d + 1) + (d * V + V);
}

std::size_t adapter_parameter_count(const EncoderConfig& c) {
  const std::size_t d = c.d_model, b = c.adapter_bottleneck;
  return c.n_layers * (d * b + b + b * d + d);
}

AdapterBundle make_adapter(const EncoderConfig& config, AdapterKind kind, std::string id, std::uint64_t seed) {
  validate(config);
  if (id.empty()) throw UsageError("adapter id must not be empty");
  AdapterBundle bundle{kind, std::move(id), {}};
  const std::uint64_t adapter_seed = derive_seed(seed, string_seed(bundle.id));
  for (const auto& [name, shape] : adapter_shapes(config, kind)) {
    if (name.ends_with("down.w")) {
      Rng rng = stream_for(adapter_seed, name);
      bundle.params.push_back({name, xavier(shape[0], shape[1], rng), true});
    } else {
      bundle.params.push_back({name, Tensor(shape), true});
    }
  }
  return bundle;
}

void attach_adapter(ModelGraph& model, const AdapterBundle& bundle) {
  if (model.has_adapter(bundle.kind)) {
    throw UsageError(std::string("a ") + std::string(to_string(bundle.kind)) + " adapter is already attached ('" +
                     adapter_id(model.adapters(), bundle.kind) + "')");
  }
  if (bundle.id.empty()) throw UsageError("adapter id must not be empty");
  check_bundle(model, bundle);
  for (const auto& p : bundle.params) model.params().add(p.name, p.tensor, p.trainable);
  adapter_id(model.adapters(), bundle.kind) = bundle.id;
}

void detach_adapter(ModelGraph& model, AdapterKind kind) {
  model.params().remove_prefix(adapter_prefix(kind));
  adapter_id(model.adapters(), kind).clear();
}

AdapterBundle extract_adapter(const ModelGraph& model, AdapterKind kind) {
  if (!model.has_adapter(kind)) {
    throw UsageError(std::string("no ") + std::string(to_string(kind)) + " adapter attached");
  }
  AdapterBundle bundle{kind, kind == AdapterKind::Language ? model.adapters().language_id : model.adapters().task_id,
                       {}};
  const std::string prefix = adapter_prefix(kind);
  for (const auto& p : model.params()) {
    if (starts_with(p.name, prefix)) bundle.params.push_back(p);
  }
  return bundle;
}

void swap_language_adapter(ModelGraph& model, const AdapterBundle& bundle) {
  if (bundle.kind != AdapterKind::Language) throw UsageError("swap_language_adapter needs a language adapter bundle");
  if (!model.has_adapter(AdapterKind::Language)) throw UsageError("swap_language_adapter: no language adapter attached");
  check_bundle(model, bundle);
  const std::string parent = model_hash(model);
  for (const auto& p : bundle.params) model.params().get(p.name).tensor = p.tensor;
  model.adapters().language_id = bundle.id;
  model.append_lineage({"swap", model_hash(model), parent, "swap", bundle.id, std::nullopt});
}

void set_trainable(ModelGraph& model, TrainMode mode) {
  std::string adapter, head;
  if (mode == TrainMode::TaskAdapterOnly) {
    if (!model.has_adapter(AdapterKind::Task)) throw UsageError("task_adapter_only mode needs a task adapter attached");
    adapter = adapter_prefix(AdapterKind::Task);
    head = "head.reg.";
  } else if (mode == TrainMode::LanguageAdapterOnly) {
    if (!model.has_adapter(AdapterKind::Language)) {
      throw UsageError("language_adapter_only mode needs a language adapter attached");
    }
    adapter = adapter_prefix(AdapterKind::Language);
    head = "head.mlm.";
  }
  for (auto& p : model.params()) {
    p.trainable = mode == TrainMode::Full || starts_with(p.name, adapter) || starts_with(p.name, head);
  }
}

std::string model_hash(const ModelGraph& model) {
  std::vector<const Parameter*> sorted;
  for (const auto& p : model.params()) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  Sha256 h;
  for (const Parameter* p : sorted) {
    h.update(p->name);
    h.update_u64(p->tensor.rank());
    for (std::size_t dim : p->tensor.shape()) h.update_u64(dim);
    for (double v : p->tensor.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      const unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                   static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      h.update(std::span<const unsigned char>(le, 4));
    }
  }
  return short_hash(h.hex());
}

void check_sequence(const ModelGraph& model, const TokenSequence& seq) {
  const EncoderConfig& c = model.config();
  if (seq.ids.empty()) throw DataError("empty token sequence");
  if (seq.ids.size() > c.max_len) {
    throw DataError("sequence length " + std::to_string(seq.ids.size()) + " exceeds model max_len " +
                    std::to_string(c.max_len));
  }
  if (seq.attention_mask.size() != seq.ids.size()) {
    throw DataError("attention mask length " + std::to_string(seq.attention_mask.size()) + " differs from " +
                    std::to_string(seq.ids.size()) + " ids");
  }
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.ids[i] < 0 || static_cast<std::size_t>(seq.ids[i]) >= c.vocab_size) {
      throw DataError("token id " + std::to_string(seq.ids[i]) + " at position " + std::to_string(i) +
                      " outside model vocabulary of " + std::to_string(c.vocab_size));
    }
  }
  if (seq.active_length() == 0) throw DataError("sequence has no unmasked positions");
}

Var encode(Tape& tape, const ModelGraph& model, const TokenSequence& seq, std::size_t length, Rng* rng) {
  check_sequence(model, seq);
  const EncoderConfig& c = model.config();
  const double rate = c.dropout;
  std::span<const int> ids(seq.ids.data(), length);
  std::span<const int> mask(seq.attention_mask.data(), length);
  std::vector<int> positions(length);
  std::iota(positions.begin(), positions.end(), 0);
  std::vector<int> segments(length, 0);
  for (std::size_t i = 0, seg = 0; i < length; ++i) {
    segments[i] = static_cast<int>(seg);
    if (ids[i] == special::kSep) seg = 1;
  }

  Var h = ad::add(ad::add(ad::embedding(param(tape, model, "embed.token"), ids),
                          ad::embedding(param(tape, model, "embed.position"), positions)),
                  ad::embedding(param(tape, model, "embed.segment"), segments));
  h = ad::layer_norm(h, param(tape, model, "embed.ln.gain"), param(tape, model, "embed.ln.bias"));
  h = maybe_dropout(h, rate, rng);

  const bool lang = model.has_adapter(AdapterKind::Language);
  const bool task = model.has_adapter(AdapterKind::Task);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    Var a = maybe_dropout(attention(tape, model, h, p, mask), rate, rng);
    h = ad::layer_norm(ad::add(h, a), param(tape, model, p + "ln1.gain"), param(tape, model, p + "ln1.bias"));
    Var f = ad::gelu(linear(tape, model, h, p + "ffn.w1", p + "ffn.b1"));
    f = maybe_dropout(linear(tape, model, f, p + "ffn.w2", p + "ffn.b2"), rate, rng);
    h = ad::layer_norm(ad::add(h, f), param(tape, model, p + "ln2.gain"), param(tape, model, p + "ln2.bias"));
    if (lang) h = adapter(tape, model, h, adapter_prefix(AdapterKind::Language) + p);
    if (task) h = adapter(tape, model, h, adapter_prefix(AdapterKind::Task) + p);
  }
  return h;
}

Var cross_score(Tape& tape, const ModelGraph& model, const TokenSequence& seq, Rng* rng) {
  const std::size_t n = seq.active_length();
  Var h = encode(tape, model, seq, n, rng);
  Var pooled = ad::mean_pool(h, std::span<const int>(seq.attention_mask.data(), n));
  return ad::sigmoid(linear(tape, model, pooled, "head.reg.w", "head.reg.b"));
}

Var bi_embedding(Tape& tape, const ModelGraph& model, const TokenSequence& seq, Rng* rng) {
  const std::size_t n = seq.active_length();
  Var h = encode(tape, model, seq, n, rng);
  return ad::mean_pool(h, std::span<const int>(seq.attention_mask.data(), n));
}

Var mlm_logits(Tape& tape, const ModelGraph& model, const TokenSequence& seq, Rng* rng) {
  Var h = encode(tape, model, seq, seq.active_length(), rng);
  return linear(tape, model, h, "head.mlm.w", "head.mlm.b");
}

double forward_cross(const ModelGraph& model, const TokenSequence& pair) {
  Tape tape(false);
  return cross_score(tape, model, pair).value().item();
}

Tensor forward_bi(const ModelGraph& model, const TokenSequence& sentence) {
  Tape tape(false);
  return bi_embedding(tape, model, sentence).value();
}

Tensor forward_mlm(const ModelGraph& model, const TokenSequence& masked) {
  Tape tape(false);
  Var h = encode(tape, model, masked, masked.length());
  return linear(tape, model, h, "head.mlm.w", "head.mlm.b").value();
}

std::vector<double> predict_cross(const ModelGraph& model, const std::vector<TokenSequence>& pairs,
                                  std::size_t threads) {
  std::vector<double> out(pairs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, pairs.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = forward_cross(model, pairs[i]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < pairs.size(); i += threads) out[i] = forward_cross(model, pairs[i]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace aadam
