// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aadam/augmentation.hpp"
#include "aadam/checkpoint.hpp"
#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/model.hpp"
#include "aadam/optim.hpp"
#include "aadam/random.hpp"
#include "aadam/synthetic.hpp"
#include "aadam/training.hpp"
#include "aadam/transfer.hpp"
#include "../oracles.hpp"

using namespace aadam;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

int failures = 0;

void run(int id, const std::string& title, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.note(std::string("exception: ") + e.what());
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s (%.1fs)%s%s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), since(t),
              o.detail.empty() ? "" : ": ", o.detail.c_str());
  std::fflush(stdout);
}

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Inputs bounded away from the relu kink by more than the difference step.
Tensor off_kink(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.01, 1.0);
  return t;
}

// --- 1 -----------------------------------------------------------------------

using Primitive = std::function<Var(Tape&, const std::vector<Var>&, Rng&)>;

struct PrimitiveCase {
  std::string name;
  // Builds the inputs for one seed; the primitive maps them to an output
  // scored by MSE against a fixed target.
  std::function<std::vector<Parameter>(Rng&)> inputs;
  Primitive op;
};

double check_primitive(const PrimitiveCase& pc, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Parameter> params = pc.inputs(rng);
  const std::uint64_t op_seed = rng.next();
  Tensor target;
  {
    Tape probe(false);
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(probe.parameter(p));
    Rng op_rng(op_seed);
    // Target offsets bounded away from zero keep every upstream gradient O(1).
    target = pc.op(probe, vars, op_rng).value();
    for (double& v : target.values()) v -= (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.5, 1.0);
  }
  ScalarFunction f = [&](Tape& tape, const std::vector<Parameter>& ps) {
    std::vector<Var> vars;
    for (const auto& p : ps) vars.push_back(tape.parameter(p));
    Rng op_rng(op_seed);
    Var out = pc.op(tape, vars, op_rng);
    return ad::mse_loss(out, target);
  };
  return grad_check(f, params);
}

std::vector<PrimitiveCase> primitive_cases() {
  auto dims = [](Rng& r) { return 1 + static_cast<std::size_t>(r.below(4)); };
  std::vector<PrimitiveCase> cs;
  cs.push_back({"matmul", [&](Rng& r) {
                  const auto n = dims(r), k = dims(r), m = dims(r);
                  return std::vector<Parameter>{{"a", random_tensor(r, {n, k})}, {"b", random_tensor(r, {k, m})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::matmul(v[0], v[1]); }});
  cs.push_back({"add", [&](Rng& r) {
                  const auto n = dims(r), m = dims(r);
                  return std::vector<Parameter>{{"a", random_tensor(r, {n, m})}, {"b", random_tensor(r, {n, m})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::add(v[0], v[1]); }});
  cs.push_back({"add_bias", [&](Rng& r) {
                  const auto n = dims(r), m = dims(r);
                  return std::vector<Parameter>{{"x", random_tensor(r, {n, m})}, {"b", random_tensor(r, {m})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::add_bias(v[0], v[1]); }});
  cs.push_back({"scale", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::scale(v[0], -1.7); }});
  cs.push_back({"relu", [&](Rng& r) { return std::vector<Parameter>{{"x", off_kink(r, {dims(r), dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::relu(v[0]); }});
  cs.push_back({"gelu", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), dims(r)}, -3, 3)}}; },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::gelu(v[0]); }});
  cs.push_back({"sigmoid", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), dims(r)}, -3, 3)}}; },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::sigmoid(v[0]); }});
  cs.push_back({"softmax", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), 1 + dims(r)}, -2, 2)}}; },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::softmax(v[0]); }});
  cs.push_back({"layer_norm", [&](Rng& r) {
                  // Two-column rows normalize to +-1 whatever the input; their
                  // gradient is only the epsilon term.
                  const auto n = dims(r), m = 2 + dims(r);
                  return std::vector<Parameter>{{"x", random_tensor(r, {n, m}, -2, 2)},
                                                {"g", random_tensor(r, {m}, 0.5, 1.5)},
                                                {"b", random_tensor(r, {m})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::layer_norm(v[0], v[1], v[2]); }});
  cs.push_back({"embedding", [&](Rng& r) { return std::vector<Parameter>{{"table", random_tensor(r, {5, dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng& r) {
                  std::vector<int> ids(1 + r.below(6));
                  for (int& i : ids) i = static_cast<int>(r.below(5));
                  return ad::embedding(v[0], ids);
                }});
  cs.push_back({"mean_pool", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {1 + dims(r), dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng& r) {
                  std::vector<int> mask(v[0].value().rows(), 1);
                  for (std::size_t i = 1; i < mask.size(); ++i) mask[i] = r.bernoulli(0.7) ? 1 : 0;
                  return ad::mean_pool(v[0], mask);
                }});
  cs.push_back({"cosine_similarity", [&](Rng& r) {
                  const auto n = 1 + dims(r);
                  return std::vector<Parameter>{{"a", random_tensor(r, {1, n})}, {"b", random_tensor(r, {1, n})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::cosine_similarity(v[0], v[1]); }});
  cs.push_back({"mse_loss", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), dims(r)})}}; },
                [](Tape& t, const std::vector<Var>& v, Rng& r) {
                  return ad::mse_loss(v[0], random_tensor(r, v[0].value().shape()));
                  (void)t;
                }});
  cs.push_back({"masked_cross_entropy", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {1 + dims(r), 2 + dims(r)}, -2, 2)}}; },
                [](Tape&, const std::vector<Var>& v, Rng& r) {
                  std::vector<int> labels(v[0].value().rows());
                  for (int& l : labels) l = static_cast<int>(r.below(v[0].value().cols()));
                  labels[0] = ad::kIgnoreLabel;
                  return ad::masked_cross_entropy(v[0], labels);
                }});
  cs.push_back({"transpose", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng&) { return ad::transpose(v[0]); }});
  cs.push_back({"slice_cols", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), 1 + dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng& r) {
                  const std::size_t c = v[0].value().cols();
                  const std::size_t start = r.below(c);
                  return ad::slice_cols(v[0], start, 1 + r.below(c - start));
                }});
  cs.push_back({"concat_cols", [&](Rng& r) {
                  const auto n = dims(r);
                  return std::vector<Parameter>{{"a", random_tensor(r, {n, dims(r)})}, {"b", random_tensor(r, {n, dims(r)})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) {
                  const std::vector<Var> parts{v[0], v[1], v[0]};
                  return ad::concat_cols(parts);
                }});
  cs.push_back({"row", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {1 + dims(r), dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng& r) { return ad::row(v[0], r.below(v[0].value().rows())); }});
  cs.push_back({"sum", [&](Rng& r) {
                  const auto n = dims(r), m = dims(r);
                  return std::vector<Parameter>{{"a", random_tensor(r, {n, m})}, {"b", random_tensor(r, {n, m})}};
                },
                [](Tape&, const std::vector<Var>& v, Rng&) {
                  const std::vector<Var> terms{v[0], v[1], v[0]};
                  return ad::sum(terms);
                }});
  cs.push_back({"dropout", [&](Rng& r) { return std::vector<Parameter>{{"x", random_tensor(r, {dims(r), dims(r)})}}; },
                [](Tape&, const std::vector<Var>& v, Rng& r) { return ad::dropout(v[0], 0.3, r); }});
  return cs;
}

EncoderConfig tiny_config(std::uint64_t seed, std::size_t vocab = 12) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 12;
  c.max_len = 10;
  c.adapter_bottleneck = 3;
  c.seed = seed;
  return c;
}

TokenSequence random_pair(Rng& rng, std::size_t vocab, std::size_t max_len, std::size_t active) {
  TokenSequence s;
  s.ids.assign(max_len, special::kPad);
  s.attention_mask.assign(max_len, 0);
  s.ids[0] = special::kCls;
  const std::size_t sep = active / 2;
  for (std::size_t i = 1; i < active; ++i) {
    s.ids[i] = (i == sep || i + 1 == active) ? special::kSep : special::kCount + static_cast<int>(rng.below(vocab - special::kCount));
  }
  for (std::size_t i = 0; i < active; ++i) s.attention_mask[i] = 1;
  return s;
}

// Sets every nonzero adapter tensor entry so adapters contribute to outputs.
void perturb_adapters(ModelGraph& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : m.params()) {
    if (p.name.rfind("adapter.", 0) == 0) {
      for (double& v : p.tensor.values()) v = rng.uniform(-0.5, 0.5);
    }
  }
}

double model_grad_check(bool mlm) {
  ModelGraph model = build_encoder(tiny_config(3));
  attach_adapter(model, make_adapter(model.config(), AdapterKind::Language, "xx", 5));
  attach_adapter(model, make_adapter(model.config(), AdapterKind::Task, "str", 6));
  perturb_adapters(model, 8);
  Rng rng(17);
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(random_pair(rng, 12, 10, 6 + 2 * i));
  std::vector<std::vector<int>> labels;
  for (const auto& s : batch) {
    std::vector<int> l(s.active_length(), ad::kIgnoreLabel);
    for (std::size_t i = 1; i < l.size(); i += 2) l[i] = special::kCount + static_cast<int>(rng.below(7));
    labels.push_back(l);
  }
  const std::vector<double> gold{0.2, 0.9};
  std::vector<Parameter> params(model.params().begin(), model.params().end());
  ScalarFunction f = [&](Tape& tape, const std::vector<Parameter>& ps) {
    for (const auto& p : ps) model.params().get(p.name).tensor = p.tensor;
    std::vector<Var> losses;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (mlm) {
        losses.push_back(ad::masked_cross_entropy(mlm_logits(tape, model, batch[i]), labels[i]));
      } else {
        losses.push_back(ad::mse_loss(cross_score(tape, model, batch[i]), Tensor::scalar(gold[i])));
      }
    }
    return ad::scale(ad::sum(losses), 1.0 / static_cast<double>(losses.size()));
  };
  return grad_check(f, params);
}

// --- 3 -----------------------------------------------------------------------

std::map<std::string, Tensor> snapshot(const ModelGraph& m) {
  std::map<std::string, Tensor> out;
  for (const auto& p : m.params()) out[p.name] = p.tensor;
  return out;
}

// --- 7 -----------------------------------------------------------------------

struct TransferResult {
  std::optional<double> retain;
  std::optional<double> swapped;
};

TransferResult transfer_seed(std::uint64_t seed) {
  TopicSpec ts;
  ts.seed = seed;
  ts.language = "syna";
  ts.pairs = 1200;
  ts.sentences = 2000;
  const Corpus a_pairs = make_topic_corpus(ts);
  const Corpus a_text = make_topic_unlabeled(ts);
  const auto words = synthetic_words(ts.topics * ts.words_per_topic);
  MockTranslator mt(derive_seed(seed, 99), words, "syna");
  const Corpus b_text = translate_corpus(a_text, mt, "synb");
  TopicSpec tb = ts;
  tb.seed = derive_seed(seed, 7);
  const Corpus b_dev = translate_corpus(make_topic_corpus(tb), mt, "synb");
  const CorpusSplits sa = split(a_pairs, {0.8, 0.2, 0.0}, seed);
  const Vocabulary vocab(words);

  EncoderConfig ec;
  ec.vocab_size = vocab.size();
  ec.max_len = 24;
  ec.seed = seed;
  ModelGraph base = build_encoder(ec);
  TrainConfig mlm;
  mlm.learning_rate = 1e-3;
  mlm.epochs = 5;
  mlm.seed = seed;
  tapt(base, a_text, vocab, mlm);

  auto language_adapter = [&](const Corpus& text, const std::string& id) {
    ModelGraph m = base;
    attach_adapter(m, make_adapter(ec, AdapterKind::Language, id, seed));
    TrainConfig c = mlm;
    c.mode = TrainMode::LanguageAdapterOnly;
    tapt(m, text, vocab, c);
    return extract_adapter(m, AdapterKind::Language);
  };
  const AdapterBundle la = language_adapter(a_text, "syna");
  const AdapterBundle lb = language_adapter(b_text, "synb");

  ModelGraph task = base;
  attach_adapter(task, la);
  attach_adapter(task, make_adapter(ec, AdapterKind::Task, "str", seed));
  TrainConfig tc;
  tc.mode = TrainMode::TaskAdapterOnly;
  tc.learning_rate = 1e-3;
  tc.epochs = 5;
  tc.seed = seed;
  RegressionOptions ro;
  ro.eval_threads = 1;
  train_regression(task, sa.train, &sa.dev, vocab, tc, ro);

  const auto gold = gold_scores(b_dev);
  TransferResult r;
  r.retain = spearman(zero_shot_predict(task, "synb", b_dev, vocab, true), gold);
  r.swapped = spearman(zero_shot_predict(compose_for_target(task, lb), "synb", b_dev, vocab), gold);
  return r;
}

}  // namespace

int main() {
  run(1, "gradient correctness", [](Outcome& o) {
    const auto t = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    std::size_t checks = 0;
    for (const auto& pc : primitive_cases()) {
      double w = 0.0;
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        w = std::max(w, check_primitive(pc, derive_seed(seed, string_seed(pc.name))));
        ++checks;
      }
      if (w > worst) {
        worst = w;
        worst_name = pc.name;
      }
    }
    o.require(worst < 1e-6, "primitive max rel error " + num(worst) + " (" + worst_name + ")");
    const double cross = model_grad_check(false);
    const double mlm = model_grad_check(true);
    o.require(cross < 1e-4, "cross-encoder rel error " + num(cross));
    o.require(mlm < 1e-4, "MLM rel error " + num(mlm));
    const double secs = since(t);
    o.require(secs < 60.0, "took " + num(secs) + "s");
    o.note(std::to_string(checks) + " primitive checks, worst " + num(worst) + " (" + worst_name + "); cross " +
           num(cross) + ", mlm " + num(mlm));
  });

  run(2, "Spearman against rank-then-Pearson oracle", [](Outcome& o) {
    Rng rng(2024);
    double worst = 0.0;
    std::size_t na_mismatch = 0;
    for (int i = 0; i < 1000; ++i) {
      const std::size_t n = 2 + rng.below(49);
      const bool ties = i % 2 == 0;
      std::vector<double> x(n), y(n);
      for (std::size_t j = 0; j < n; ++j) {
        x[j] = ties ? static_cast<double>(rng.below(5)) : rng.normal();
        y[j] = ties ? static_cast<double>(rng.below(4)) : rng.normal();
      }
      const auto got = spearman(x, y);
      const auto want = oracle::spearman(x, y);
      if (got.has_value() != want.has_value()) {
        ++na_mismatch;
      } else if (got) {
        worst = std::max(worst, std::abs(*got - *want));
      }
    }
    o.require(na_mismatch == 0, std::to_string(na_mismatch) + " NA mismatches");
    o.require(worst < 1e-9, "max |diff| " + num(worst));
    const std::vector<double> a{1, 2, 3, 4, 5};
    const double up = *spearman(a, std::vector<double>{2, 4, 6, 8, 10});
    const double down = *spearman(a, std::vector<double>{10, 8, 6, 4, 2});
    const double mid = *spearman(a, std::vector<double>{3, 1, 2, 5, 4});
    o.require(std::abs(up - 1.0) < 1e-12 && std::abs(down + 1.0) < 1e-12 && std::abs(mid - 0.6) < 1e-12,
              "hand cases " + num(up, 17) + ", " + num(down, 17) + ", " + num(mid, 17));
    o.note("max |diff| " + num(worst));
  });

  run(3, "freeze and swap soundness", [](Outcome& o) {
    for (TrainMode mode : {TrainMode::Full, TrainMode::TaskAdapterOnly, TrainMode::LanguageAdapterOnly}) {
      ModelGraph m = build_encoder(tiny_config(9));
      attach_adapter(m, make_adapter(m.config(), AdapterKind::Language, "aaa", 1));
      attach_adapter(m, make_adapter(m.config(), AdapterKind::Task, "str", 2));
      set_trainable(m, mode);
      const auto before = snapshot(m);
      std::set<std::string> frozen;
      for (const auto& p : m.params()) {
        if (!p.trainable) frozen.insert(p.name);
      }
      AdamWState state;
      AdamWHyper hyper;
      hyper.learning_rate = 1e-2;
      hyper.weight_decay = 0.01;
      Rng rng(31);
      for (int step = 0; step < 50; ++step) {
        Tape tape;
        const TokenSequence s = random_pair(rng, 12, 10, 8);
        Var loss;
        if (mode == TrainMode::LanguageAdapterOnly) {
          std::vector<int> labels(s.active_length(), ad::kIgnoreLabel);
          labels[2] = s.ids[2];
          labels[5] = s.ids[5];
          loss = ad::masked_cross_entropy(mlm_logits(tape, m, s), labels);
        } else {
          loss = ad::mse_loss(cross_score(tape, m, s), Tensor::scalar(rng.uniform()));
        }
        Gradients g = tape.backward(loss);
        for (auto& p : m.params()) {
          if (p.trainable && !g.count(p.name)) g[p.name] = Tensor(p.tensor.shape());
        }
        adamw_step(m.params(), g, state, hyper);
      }
      std::size_t changed_frozen = 0, changed_trainable = 0;
      for (const auto& p : m.params()) {
        const bool same = p.tensor == before.at(p.name);
        if (frozen.count(p.name) && !same) ++changed_frozen;
        if (!frozen.count(p.name) && !same) ++changed_trainable;
      }
      const std::string label(to_string(mode));
      o.require(changed_frozen == 0, label + ": " + std::to_string(changed_frozen) + " frozen tensors changed");
      o.require(changed_trainable > 0, label + ": nothing trained");
      o.require(mode != TrainMode::Full || frozen.empty(), "full mode froze parameters");
    }

    ModelGraph m = build_encoder(tiny_config(4));
    const AdapterBundle a = [&] {
      AdapterBundle b = make_adapter(m.config(), AdapterKind::Language, "aaa", 1);
      Rng r(5);
      for (auto& p : b.params) for (double& v : p.tensor.values()) v = r.uniform(-0.5, 0.5);
      return b;
    }();
    const AdapterBundle b = [&] {
      AdapterBundle x = make_adapter(m.config(), AdapterKind::Language, "bbb", 2);
      Rng r(6);
      for (auto& p : x.params) for (double& v : p.tensor.values()) v = r.uniform(-0.5, 0.5);
      return x;
    }();
    attach_adapter(m, a);
    attach_adapter(m, make_adapter(m.config(), AdapterKind::Task, "str", 3));
    Rng rng(8);
    std::vector<TokenSequence> probes;
    for (int i = 0; i < 8; ++i) probes.push_back(random_pair(rng, 12, 10, 4 + static_cast<std::size_t>(i % 6)));
    std::vector<double> out_a;
    for (const auto& s : probes) out_a.push_back(forward_cross(m, s));
    const auto before = snapshot(m);
    swap_language_adapter(m, b);
    std::size_t outside = 0, inside = 0;
    for (const auto& p : m.params()) {
      if (p.tensor == before.at(p.name)) continue;
      (p.name.rfind("adapter.lang.", 0) == 0 ? inside : outside) += 1;
    }
    o.require(outside == 0, std::to_string(outside) + " tensors outside adapter.lang.* changed by swap");
    o.require(inside > 0, "swap changed nothing");
    o.require(m.params().size() == before.size(), "swap changed the parameter set");
    swap_language_adapter(m, a);
    double worst = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) worst = std::max(worst, std::abs(forward_cross(m, probes[i]) - out_a[i]));
    o.require(worst < 1e-12, "A->B->A output diff " + num(worst));
    o.note("A->B->A diff " + num(worst));
  });

  run(4, "MLM masking statistics", [](Outcome& o) {
    Rng rng(42);
    const std::size_t vocab = 1000;
    std::size_t candidates = 0, selected = 0, masked = 0, randomized = 0, kept = 0, special_selected = 0;
    MaskPolicy policy;
    while (candidates < 10000) {
      TokenSequence s;
      const std::size_t len = 32;
      s.ids.assign(len, special::kPad);
      s.attention_mask.assign(len, 0);
      const std::size_t active = 10 + rng.below(20);
      for (std::size_t i = 0; i < active; ++i) {
        s.attention_mask[i] = 1;
        s.ids[i] = special::kCount + static_cast<int>(rng.below(vocab - special::kCount));
      }
      s.ids[0] = special::kCls;
      s.ids[active / 2] = special::kSep;
      s.ids[active - 1] = special::kSep;
      s.ids[1] = special::kUnk;
      s.ids[2] = special::kMask;
      const MaskedSequence ms = mask_tokens(s, policy, vocab, rng);
      for (std::size_t i = 0; i < len; ++i) {
        const bool is_selected = ms.labels[i] != ad::kIgnoreLabel;
        if (is_special(s.ids[i])) {
          if (is_selected) ++special_selected;
          continue;
        }
        ++candidates;
        if (!is_selected) continue;
        ++selected;
        if (ms.seq.ids[i] == special::kMask) ++masked;
        else if (ms.seq.ids[i] == s.ids[i]) ++kept;
        else ++randomized;
      }
    }
    const double frac = static_cast<double>(selected) / static_cast<double>(candidates);
    const double fm = static_cast<double>(masked) / static_cast<double>(selected);
    const double fr = static_cast<double>(randomized) / static_cast<double>(selected);
    const double fk = static_cast<double>(kept) / static_cast<double>(selected);
    o.require(std::abs(frac - 0.15) <= 0.01, "selected " + num(frac));
    o.require(std::abs(fm - 0.8) <= 0.02 && std::abs(fr - 0.1) <= 0.02 && std::abs(fk - 0.1) <= 0.02,
              "splits " + num(fm) + "/" + num(fr) + "/" + num(fk));
    o.require(special_selected == 0, std::to_string(special_selected) + " special tokens selected");
    o.note(std::to_string(candidates) + " tokens, selected " + num(frac) + ", mask/random/keep " + num(fm) + "/" +
           num(fr) + "/" + num(fk));
  });

  run(5, "two-phase lineage", [](Outcome& o) {
    OverlapSpec aug_spec;
    aug_spec.pairs = 80;
    aug_spec.seed = 1;
    aug_spec.provenance = Provenance::SemrelMt;
    OverlapSpec orig_spec;
    orig_spec.pairs = 48;
    orig_spec.seed = 2;
    Corpus augmented = make_overlap_corpus(aug_spec);
    const Corpus original = make_overlap_corpus(orig_spec);
    const std::vector<Corpus> both{augmented, original};
    const Vocabulary vocab = build_vocab(both, 1, 1000);
    EncoderConfig ec = tiny_config(5, vocab.size());
    ec.max_len = 24;
    const ModelGraph start = build_encoder(ec);
    TrainConfig warm;
    warm.epochs = 2;
    warm.learning_rate = 1e-3;
    warm.seed = 11;
    TrainConfig fin = warm;
    fin.seed = 12;
    RegressionOptions ro;
    ro.eval_threads = 1;

    ModelGraph model = start;
    const TrainLog log = two_phase_train(model, augmented, original, nullptr, vocab, warm, fin, ro);
    std::vector<std::string> names;
    for (const auto& p : log.phases) names.push_back(p.name);
    o.require(names == std::vector<std::string>{"warmup", "final"}, "phase order wrong");

    // Phase 1 replayed on its own gives the checkpoint phase 2 must start from.
    ModelGraph replay = start;
    RegressionOptions wro = ro;
    wro.phase = "warmup";
    train_regression(replay, augmented, nullptr, vocab, warm, wro);
    const std::string phase1 = model_hash(to_model(parse_checkpoint(serialize_checkpoint(to_checkpoint(replay)))));
    o.require(log.phases.size() == 2 && log.phases[1].start_hash == phase1,
              "final start hash differs from the phase-1 checkpoint hash");
    const auto& lin = model.lineage();
    o.require(lin.size() >= 3 && lin[lin.size() - 2].stage == "warmup" && lin.back().stage == "final" &&
                  lin.back().parent == lin[lin.size() - 2].hash && lin[lin.size() - 2].hash == phase1,
              "lineage parent chain broken");

    std::size_t warm_batches = 0, final_batches = 0, bad = 0;
    for (const auto& b : log.batches) {
      std::size_t total = 0;
      for (const auto& [tag, n] : b.provenance) total += n;
      const std::size_t orig = b.provenance.count("original") ? b.provenance.at("original") : 0;
      if (b.phase == "warmup") {
        ++warm_batches;
        if (orig != 0 || total == 0) ++bad;
      } else if (b.phase == "final") {
        ++final_batches;
        if (orig != total || total == 0) ++bad;
      } else {
        ++bad;
      }
    }
    const auto expected = [](std::size_t n, const TrainConfig& c) {
      return c.epochs * ((n + c.batch_size - 1) / c.batch_size);
    };
    o.require(bad == 0, std::to_string(bad) + " batches with mixed or wrong provenance");
    o.require(warm_batches == expected(augmented.pairs.size(), warm) &&
                  final_batches == expected(original.pairs.size(), fin),
              "batch counts " + std::to_string(warm_batches) + "/" + std::to_string(final_batches));
    o.require(audit_two_phase(log).empty(), "audit reported violations");
    o.note(std::to_string(warm_batches) + " warmup + " + std::to_string(final_batches) + " final batches audited");
  });

  run(6, "synthetic supervised run", [](Outcome& o) {
    const auto t = Clock::now();
    OverlapSpec spec;
    spec.seed = 1;
    const Corpus corpus = make_overlap_corpus(spec);
    const CorpusSplits s = split(corpus, {0.8, 0.1, 0.1}, 5);
    const std::vector<Corpus> train_only{s.train};
    const Vocabulary vocab = build_vocab(train_only, 1, 1000);
    EncoderConfig ec;
    ec.vocab_size = vocab.size();
    ec.max_len = 24;
    ec.seed = 1;
    ModelGraph model = build_encoder(ec);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.learning_rate = 1e-3;
    tc.epochs = 6;
    tc.seed = 1;
    RegressionOptions ro;
    ro.eval_threads = 1;
    const TrainLog log = train_regression(model, s.train, &s.dev, vocab, tc, ro);
    const auto pred = predict(model, s.test, vocab, Architecture::Cross, {}, 1);
    const auto rho = spearman(pred, gold_scores(s.test));
    const double secs = since(t);
    o.require(rho && *rho >= 0.80, "held-out Spearman " + format_x100(rho));
    o.require(log.epochs.size() == 6, "ran " + std::to_string(log.epochs.size()) + " epochs");
    o.require(secs < 300.0, "took " + num(secs) + "s");
    o.note("vocab " + std::to_string(vocab.size() - special::kCount) + ", " + std::to_string(corpus.pairs.size()) +
           " pairs, held-out Spearman x100 " + format_x100(rho));
  });

  run(7, "synthetic zero-shot transfer", [](Outcome& o) {
    const auto t = Clock::now();
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
      const TransferResult r = transfer_seed(seed);
      const bool win = r.swapped && (!r.retain || *r.swapped > *r.retain);
      wins += win ? 1 : 0;
      detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + ": B " +
                format_x100(r.swapped) + " vs A " + format_x100(r.retain);
    }
    const double secs = since(t);
    o.require(wins >= 2, std::to_string(wins) + "/3 wins");
    o.require(secs < 600.0, "took " + num(secs) + "s");
    o.note(detail);
  });

  run(8, "source selection exactness", [](Outcome& o) {
    OverlapSpec spec;
    spec.pairs = 60;
    spec.seed = 4;
    spec.language = "tgt";
    const Corpus dev = make_overlap_corpus(spec);
    const std::vector<Corpus> cs{dev};
    const Vocabulary vocab = build_vocab(cs, 1, 1000);
    EncoderConfig ec = tiny_config(0, vocab.size());
    ec.max_len = 24;
    const AdapterBundle target = make_adapter(ec, AdapterKind::Language, "tgt", 77);
    std::vector<TransferCandidate> candidates;
    for (std::uint64_t i = 0; i < 4; ++i) {
      ec.seed = 100 + i;
      ModelGraph m = build_encoder(ec);
      attach_adapter(m, make_adapter(ec, AdapterKind::Language, "src" + std::to_string(i), i));
      attach_adapter(m, make_adapter(ec, AdapterKind::Task, "str", i));
      perturb_adapters(m, 500 + i);
      candidates.push_back({"src" + std::to_string(i), std::move(m)});
    }
    const SourceRanking ranking = dev_performance_ranking(candidates, target, dev, vocab);
    std::string best;
    double best_value = -2.0;
    for (const auto& c : candidates) {
      ModelGraph m = c.model;
      detach_adapter(m, AdapterKind::Language);
      attach_adapter(m, target);
      std::vector<double> pred;
      for (const auto& p : dev.pairs) pred.push_back(forward_cross(m, encode_pair(p.sentence1, p.sentence2, vocab, m.config().max_len)));
      const auto rho = oracle::spearman(pred, gold_scores(dev));
      if (rho && *rho > best_value) {
        best_value = *rho;
        best = c.source_language;
      }
    }
    o.require(ranking.chosen == best, "chose " + ranking.chosen + ", oracle argmax " + best);

    DistanceTable table;
    table.set("src", "tgt", {0.2, 0.4, 0.6, 0.0, 1.0, 0.4});
    const double d = linguistic_distance("src", "tgt", table).value;
    const double d_oracle = (0.2 + 0.4 + 0.6 + 0.0 + 1.0 + 0.4) / 6.0;
    o.require(std::abs(d - d_oracle) < 1e-12 && std::abs(d - 13.0 / 30.0) < 1e-12, "distance " + num(d, 17));
    Corpus src_train, tgt_test;
    src_train.pairs.push_back({"1", "a b", "c d", 0.5, Provenance::Original});
    tgt_test.pairs.push_back({"1", "a x", "b y", 0.5, Provenance::Original});
    const double ov = token_overlap(src_train, tgt_test);
    o.require(std::abs(ov - 0.5) < 1e-12, "overlap " + num(ov, 17));
    o.note("chosen " + ranking.chosen + " (oracle rho " + num(best_value) + "), distance " + num(d, 17) +
           ", overlap " + num(ov, 17));
  });

  run(9, "leakage guard", [](Outcome& o) {
    using Prov = std::map<std::string, std::size_t>;
    const LineageEntry build{"build", "h0", "", "build", "", std::nullopt};
    const std::vector<LineageEntry> clean{build, {"final", "h1", "h0", "regression", "amh", Prov{{"original", 10}}}};
    const std::vector<LineageEntry> warmed{build,
                                           {"warmup", "h1", "h0", "regression", "amh", Prov{{"semrel-mt", 40}}},
                                           {"final", "h2", "h1", "regression", "amh", Prov{{"original", 10}}}};
    const auto c1 = leakage_guard(clean, "eng");
    const auto c2 = leakage_guard(warmed, "eng");
    const auto c3 = leakage_guard(warmed, "hau");
    o.require(c1.ok, "clean -> eng rejected: " + c1.violation);
    o.require(!c2.ok && c2.violation.find("'warmup'") != std::string::npos, "warmed -> eng: " + c2.violation);
    o.require(c3.ok, "warmed -> hau rejected: " + c3.violation);
    const std::vector<LineageEntry> unknown{build, {"final", "h1", "h0", "regression", "amh", std::nullopt}};
    o.require(!leakage_guard(unknown, "eng").ok && !leakage_guard(unknown, "hau").ok, "missing provenance accepted");
    o.require(!leakage_guard({}, "hau").ok, "empty lineage accepted");
    bool thrown = false;
    try {
      enforce_leakage_guard(warmed, "eng");
    } catch (const LeakageError&) {
      thrown = true;
    }
    o.require(thrown, "enforce did not throw LeakageError");
  });

  run(10, "baseline oracles", [](Outcome& o) {
    const std::vector<SentencePair> pairs{{"1", "The cat sat", "the cat ran", 0.5, Provenance::Original},
                                          {"2", "a b c d", "e f", 0.1, Provenance::Original},
                                          {"3", "x y", "y x x", 0.9, Provenance::Original}};
    const std::vector<double> dice_hand{2.0 * 2 / 6, 0.0, 1.0};
    const auto d = word_overlap_baseline(pairs);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) worst = std::max(worst, std::abs(d[i] - dice_hand[i]));
    o.require(worst < 1e-9, "Dice diff " + num(worst));

    const WordVectors wv = parse_word_vectors("4 2\nthe 1 0\ncat 0 1\nsat 1 1\nran -1 1\n");
    const std::vector<SentencePair> sp{{"1", "the cat sat", "the cat ran", 0.5, Provenance::Original},
                                       {"2", "cat", "unknown", 0.5, Provenance::Original}};
    const auto st = static_embedding_baseline(sp, wv);
    // mean(the, cat, sat) = (2/3, 2/3); mean(the, cat, ran) = (0, 2/3).
    const double hand = (2.0 / 3 * 0 + 2.0 / 3 * 2.0 / 3) / (std::sqrt(8.0 / 9) * (2.0 / 3));
    o.require(st[0] && std::abs(*st[0] - hand) < 1e-9, "static cosine " + (st[0] ? num(*st[0], 17) : "NA"));
    o.require(!st[1], "pair without known tokens not NA");

    const std::vector<Corpus> cs{[&] {
      Corpus c;
      c.pairs = pairs;
      return c;
    }()};
    const Vocabulary vocab = build_vocab(cs, 1, 100);
    ModelGraph model = build_encoder(tiny_config(1, vocab.size()));
    const auto before = snapshot(model);
    const auto pred = contextual_zero_shot_baseline(model, pairs, vocab);
    bool same = true;
    for (const auto& p : model.params()) same = same && p.tensor == before.at(p.name);
    o.require(same && before.size() == model.params().size(), "contextual baseline changed parameters");
    o.require(pred.size() == pairs.size(), "contextual baseline size");
  });

  run(11, "band analysis and CV structure", [](Outcome& o) {
    const std::vector<double> gold{0.0, 0.1, 0.25, 0.3, 0.49, 0.5, 0.6, 0.74, 0.75, 0.9, 1.0};
    const std::vector<double> pred(gold.size(), 0.5);
    const auto bands = band_analysis(pred, gold);
    std::vector<int> seen(gold.size(), 0);
    std::size_t total = 0;
    bool placement = true;
    for (std::size_t b = 0; b < bands.size(); ++b) {
      total += bands[b].n;
      for (std::size_t i : bands[b].members) {
        ++seen[i];
        const std::size_t want = std::min<std::size_t>(3, static_cast<std::size_t>(gold[i] / 0.25));
        placement = placement && want == b;
      }
    }
    o.require(total == gold.size() && std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }),
              "bands do not partition the pairs");
    o.require(placement, "pair placed in the wrong band");

    // Inside [0.5, 0.75) predictions fall as gold rises; across bands they rise.
    std::vector<double> sg, sp;
    for (int band = 0; band < 4; ++band) {
      for (int j = 0; j < 5; ++j) {
        sg.push_back(0.25 * band + 0.04 * j + 0.02);
        sp.push_back(band + (band == 2 ? 0.1 * (4 - j) : 0.1 * j));
      }
    }
    const auto sb = band_analysis(sp, sg);
    const auto overall = spearman(sp, sg);
    o.require(sb[2].spearman && *sb[2].spearman < 0 && overall && *overall > 0,
              "Simpson pattern: band " + format_x100(sb[2].spearman) + ", overall " + format_x100(overall));

    const std::size_t n = 103;
    const auto folds = kfold_assign(n, 10, 7);
    std::vector<int> hits(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (std::size_t i : f) ++hits[i];
    }
    o.require(folds.size() == 10, "fold count");
    o.require(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }), "folds not disjoint and covering");
    o.require(hi - lo <= 1, "fold sizes " + std::to_string(lo) + ".." + std::to_string(hi));
    o.note("band " + format_x100(sb[2].spearman) + " vs overall " + format_x100(overall) + "; fold sizes " +
           std::to_string(lo) + ".." + std::to_string(hi));
  });

  run(12, "persistence", [](Outcome& o) {
    ModelGraph m = build_encoder(tiny_config(12));
    attach_adapter(m, make_adapter(m.config(), AdapterKind::Language, "yor", 1));
    attach_adapter(m, make_adapter(m.config(), AdapterKind::Task, "str", 2));
    perturb_adapters(m, 3);
    m.set_config_hash("0123456789abcdef");
    const std::string first = serialize_checkpoint(to_checkpoint(m));
    const ModelGraph loaded = to_model(parse_checkpoint(first));
    const std::string second = serialize_checkpoint(to_checkpoint(loaded));
    const std::string third = serialize_checkpoint(to_checkpoint(to_model(parse_checkpoint(second))));
    o.require(second == third, "save-load-save not byte-identical");
    o.require(loaded.lineage() == m.lineage() && loaded.config_hash() == m.config_hash(), "lineage or hash lost");

    const Checkpoint bundle = to_checkpoint(m, adapter_prefix(AdapterKind::Language));
    std::set<std::string> got, want;
    for (const auto& p : bundle.tensors) got.insert(p.name);
    for (const auto& p : m.params()) {
      if (p.name.rfind("adapter.lang.", 0) == 0) want.insert(p.name);
    }
    o.require(got == want && !want.empty(), "adapter bundle filter");

    std::string corrupt = first;
    corrupt.erase(corrupt.size() - 7, 1);
    std::string message;
    try {
      parse_checkpoint(corrupt);
    } catch (const DataError& e) {
      message = e.what();
    }
    o.require(message.find("offset") != std::string::npos, "corruption diagnostic: '" + message + "'");
    o.require(format_x100(0.8431) == "84.31" && format_x100(-0.0775) == "-7.75",
              "formatting " + format_x100(0.8431) + " " + format_x100(-0.0775));
    o.note("corruption: " + message);
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
