#include <doctest.h>

#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/random.hpp"
#include "aadam/synthetic.hpp"
#include "aadam/training.hpp"

using namespace aadam;

namespace {

struct Fixture {
  Corpus train, dev, unlabeled;
  Vocabulary vocab;
  EncoderConfig config;

  Fixture() {
    OverlapSpec spec;
    spec.vocab = 40;
    spec.pairs = 64;
    spec.min_len = 3;
    spec.max_len = 6;
    spec.seed = 9;
    const CorpusSplits s = split(make_overlap_corpus(spec), {0.75, 0.25, 0.0}, 1);
    train = s.train;
    dev = s.dev;
    unlabeled.split = Split::Unlabeled;
    unlabeled.language = "syn";
    for (const auto& p : train.pairs) unlabeled.sentences.push_back(p.sentence1);
    vocab = Vocabulary(synthetic_words(40));
    config.vocab_size = vocab.size();
    config.d_model = 16;
    config.n_layers = 1;
    config.n_heads = 2;
    config.d_ff = 32;
    config.max_len = 16;
    config.adapter_bottleneck = 4;
    config.seed = 2;
  }

  TrainConfig quick(double lr = 1e-3, std::size_t epochs = 2) const {
    TrainConfig c;
    c.learning_rate = lr;
    c.epochs = epochs;
    c.batch_size = 8;
    c.seed = 5;
    return c;
  }
};

RegressionOptions single_thread() {
  RegressionOptions o;
  o.eval_threads = 1;
  return o;
}

}  // namespace

TEST_CASE("default hyperparameters") {
  CHECK(finetune_defaults().learning_rate == 5e-5);
  CHECK(finetune_defaults().epochs == 6);
  CHECK(adapter_defaults().learning_rate == 1e-4);
  CHECK(adapter_defaults().epochs == 15);
  CHECK(adapter_defaults().mode == TrainMode::TaskAdapterOnly);
  CHECK(mlm_defaults().epochs == 10);
  CHECK(finetune_grid().size() == 2);
  CHECK(adapter_grid().size() == 3);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), UsageError);
}

TEST_CASE("masking leaves padding and specials alone") {
  Rng rng(1);
  TokenSequence s;
  s.ids = {special::kCls, 7, 8, 9, special::kSep, special::kPad, special::kPad};
  s.attention_mask = {1, 1, 1, 1, 1, 0, 0};
  MaskPolicy all;
  all.mask_prob = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const MaskedSequence m = mask_tokens(s, all, 30, rng);
    CHECK(m.labels[0] == ad::kIgnoreLabel);
    CHECK(m.labels[4] == ad::kIgnoreLabel);
    CHECK(m.labels[5] == ad::kIgnoreLabel);
    CHECK(m.labels[1] == 7);
    for (std::size_t i = 1; i <= 3; ++i) CHECK((!is_special(m.seq.ids[i]) || m.seq.ids[i] == special::kMask));
    CHECK(m.seq.attention_mask == s.attention_mask);
  }
  MaskPolicy bad;
  bad.keep = 0.5;
  CHECK_THROWS_AS(validate(bad), UsageError);
}

TEST_CASE("regression training is deterministic and lowers the loss") {
  Fixture f;
  ModelGraph a = build_encoder(f.config), b = build_encoder(f.config);
  const TrainLog la = train_regression(a, f.train, &f.dev, f.vocab, f.quick(1e-3, 4), single_thread());
  const TrainLog lb = train_regression(b, f.train, &f.dev, f.vocab, f.quick(1e-3, 4), single_thread());
  CHECK(model_hash(a) == model_hash(b));
  CHECK(la.final_hash == model_hash(a));
  REQUIRE(la.epochs.size() == 4);
  CHECK(la.epochs.back().loss < la.epochs.front().loss);
  CHECK(la.epochs.front().dev_spearman.has_value());
  CHECK(la.batches.size() == 4 * 6);
  CHECK(a.lineage().back().stage == "final");
  CHECK(a.lineage().back().provenance->at("original") == f.train.pairs.size());
  CHECK(la.serialize().rfind("phase\tepoch\tloss\tdev_spearman\n", 0) == 0);
}

TEST_CASE("bi-encoder architecture trains through the cosine head") {
  Fixture f;
  ModelGraph m = build_encoder(f.config);
  RegressionOptions o = single_thread();
  o.architecture = Architecture::Bi;
  const std::string before = model_hash(m);
  const TrainLog log = train_regression(m, f.train, nullptr, f.vocab, f.quick(), o);
  CHECK(model_hash(m) != before);
  CHECK(m.params().get("head.reg.w").tensor == build_encoder(f.config).params().get("head.reg.w").tensor);
  CHECK(predict(m, f.dev, f.vocab, Architecture::Bi, {}, 1).size() == f.dev.pairs.size());
  CHECK(parse_architecture("bi") == Architecture::Bi);
  (void)log;
}

TEST_CASE("divergence is reported as a numeric error") {
  Fixture f;
  ModelGraph m = build_encoder(f.config);
  CHECK_THROWS_AS(train_regression(m, f.train, nullptr, f.vocab, f.quick(1e300, 1), single_thread()), NumericError);
}

TEST_CASE("tapt trains the MLM head and logs an mlm phase") {
  Fixture f;
  ModelGraph m = build_encoder(f.config);
  const TrainLog log = tapt(m, f.unlabeled, f.vocab, f.quick(1e-3, 2));
  CHECK(log.phases.size() == 1);
  CHECK(log.phases[0].objective == "mlm");
  CHECK(m.lineage().back().objective == "mlm");
  CHECK(m.lineage().back().stage == "tapt");
  CHECK_THROWS_AS(tapt(m, f.train, f.vocab, f.quick()), DataError);
}

TEST_CASE("two-phase training enforces phase provenance") {
  Fixture f;
  Corpus augmented = f.train;
  for (auto& p : augmented.pairs) p.provenance = Provenance::StsbMt;
  ModelGraph m = build_encoder(f.config);
  CHECK_THROWS_AS(two_phase_train(m, f.train, f.train, nullptr, f.vocab, f.quick(), f.quick(), single_thread()),
                  DataError);
  CHECK_THROWS_AS(two_phase_train(m, augmented, augmented, nullptr, f.vocab, f.quick(), f.quick(), single_thread()),
                  DataError);

  Corpus empty;
  empty.language = "syn";
  ModelGraph single = build_encoder(f.config);
  const TrainLog log = two_phase_train(single, empty, f.train, nullptr, f.vocab, f.quick(), f.quick(), single_thread());
  CHECK(log.phases.size() == 1);
  CHECK(log.phases[0].name == "final");
  CHECK(!log.warnings.empty());
  CHECK(audit_two_phase(log).empty());
}

TEST_CASE("audit flags a mixed batch") {
  TrainLog log;
  log.phases.push_back({"warmup", "regression", "x", "syn", "a", "b", 1, {{"semrel-mt", 2}}});
  log.phases.push_back({"final", "regression", "y", "syn", "b", "c", 1, {{"original", 2}}});
  log.batches.push_back({"warmup", 1, 0, {{"semrel-mt", 1}, {"original", 1}}});
  log.batches.push_back({"final", 1, 0, {{"original", 2}}});
  const auto v = audit_two_phase(log);
  CHECK(v.size() == 1);
  log.batches[0].provenance = {{"semrel-mt", 2}};
  CHECK(audit_two_phase(log).empty());
  log.phases[1].start_hash = "zz";
  CHECK(!audit_two_phase(log).empty());
}

TEST_CASE("grid search keeps the best dev run and skips divergence") {
  Fixture f;
  std::vector<TrainConfig> grid{f.quick(1e300, 1), f.quick(1e-3, 2), f.quick(1e-6, 2)};
  const GridResult r = grid_search([&] { return build_encoder(f.config); }, grid, f.train, f.dev, f.vocab,
                                   single_thread(), 1);
  CHECK(r.table[0].diverged);
  CHECK(!r.table[0].message.empty());
  REQUIRE(r.table[1].dev_spearman);
  REQUIRE(r.table[2].dev_spearman);
  const std::size_t want = *r.table[1].dev_spearman >= *r.table[2].dev_spearman ? 1 : 2;
  CHECK(r.best_index == want);
  CHECK(model_hash(r.best) == r.table[want].final_hash);

  const std::vector<TrainConfig> all_bad{f.quick(1e300, 1)};
  CHECK_THROWS_AS(grid_search([&] { return build_encoder(f.config); }, all_bad, f.train, f.dev, f.vocab,
                              single_thread(), 1),
                  NumericError);
}
