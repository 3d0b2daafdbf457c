#include <doctest.h>

#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/transfer.hpp"

using namespace aadam;

namespace {

EncoderConfig small(std::size_t vocab) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 8;
  c.max_len = 12;
  c.adapter_bottleneck = 2;
  return c;
}

Corpus pairs(const std::string& lang) {
  Corpus c;
  c.language = lang;
  c.pairs.push_back({"1", "a b", "a b", 0.9, Provenance::Original});
  c.pairs.push_back({"2", "a c", "d", 0.1, Provenance::Original});
  c.pairs.push_back({"3", "b c", "c", 0.5, Provenance::Original});
  return c;
}

}  // namespace

TEST_CASE("distance table parsing and symmetry") {
  const DistanceTable t = DistanceTable::parse(
      "lang_a\tlang_b\tsyntactic\tphonological\tinventory\tgeographic\tgenetic\tfeatural\n"
      "hau\tamh\t0.5\tNA\t0.1\t0.2\t0.3\t0.4\n");
  REQUIRE(t.lookup("amh", "hau"));
  const DistanceResult d = linguistic_distance("amh", "hau", t);
  CHECK(d.missing == 1);
  CHECK(d.value == doctest::Approx((0.5 + 0.1 + 0.2 + 0.3 + 0.4) / 5));
  CHECK_THROWS_AS(linguistic_distance("amh", "yor", t), DataError);
  CHECK_THROWS_AS(DistanceTable::parse("lang_a\tlang_b\tsyntactic\tphonological\tinventory\tgeographic\tgenetic\tfeatural\n"
                                       "a\tb\t1.5\t0\t0\t0\t0\t0\n"),
                  DataError);
  CHECK_THROWS_AS(DistanceTable::parse("lang_a\tlang_b\tsyntactic\tphonological\tinventory\tgeographic\tgenetic\tfeatural\n"
                                       "a\tb\t0.1\t0\t0\t0\t0\t0\nb\ta\t0.2\t0\t0\t0\t0\t0\n"),
                  DataError);
  DistanceTable all_missing;
  all_missing.set("x", "y", {});
  CHECK_THROWS_AS(linguistic_distance("x", "y", all_missing), DataError);
}

TEST_CASE("rankings order by strategy") {
  DistanceTable t;
  t.set("a", "tgt", {0.9, 0.9, 0.9, 0.9, 0.9, 0.9});
  t.set("b", "tgt", {0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  const SourceRanking r = rank_by_distance({"a", "b", "c"}, "tgt", t);
  CHECK(r.chosen == "b");
  CHECK(r.entries[0].language == "b");
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[1].language == "a");
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("skipped c") != std::string::npos);

  Corpus target = pairs("tgt");
  Corpus s1, s2;
  s1.pairs.push_back({"1", "a", "z", 0.5, Provenance::Original});
  s2.pairs.push_back({"1", "a b", "c", 0.5, Provenance::Original});
  const SourceRanking o = rank_by_overlap({{"s1", s1}, {"s2", s2}}, target);
  CHECK(o.chosen == "s2");
  CHECK(*o.entries[0].value == doctest::Approx(3.0 / 4.0));
  CHECK(*o.entries[1].value == doctest::Approx(1.0 / 4.0));
  CHECK(parse_selection_strategy("token_overlap") == SelectionStrategy::TokenOverlap);
}

TEST_CASE("zero-shot prediction checks the adapter and leaves parameters alone") {
  const Vocabulary v(std::vector<std::string>{"a", "b", "c", "d"});
  ModelGraph m = build_encoder(small(v.size()));
  attach_adapter(m, make_adapter(m.config(), AdapterKind::Language, "src", 1));
  attach_adapter(m, make_adapter(m.config(), AdapterKind::Task, "str", 2));
  const std::string before = model_hash(m);
  CHECK_THROWS_AS(zero_shot_predict(m, "tgt", pairs("tgt"), v), UsageError);
  CHECK(zero_shot_predict(m, "tgt", pairs("tgt"), v, true).size() == 3);
  const ModelGraph composed = compose_for_target(m, make_adapter(m.config(), AdapterKind::Language, "tgt", 3));
  CHECK(composed.adapters() == AdapterStack{"tgt", "str"});
  CHECK(zero_shot_predict(composed, "tgt", pairs("tgt"), v).size() == 3);
  CHECK(model_hash(m) == before);

  ModelGraph no_task = build_encoder(small(v.size()));
  CHECK_THROWS(compose_for_target(no_task, make_adapter(m.config(), AdapterKind::Language, "tgt", 3)));
}

TEST_CASE("dev ranking skips incompatible candidates") {
  const Vocabulary v(std::vector<std::string>{"a", "b", "c", "d"});
  std::vector<TransferCandidate> cands;
  ModelGraph good = build_encoder(small(v.size()));
  attach_adapter(good, make_adapter(good.config(), AdapterKind::Language, "src", 1));
  attach_adapter(good, make_adapter(good.config(), AdapterKind::Task, "str", 2));
  cands.push_back({"src", good});
  ModelGraph bare = build_encoder(small(v.size()));
  cands.push_back({"bare", bare});
  const auto target = make_adapter(good.config(), AdapterKind::Language, "tgt", 3);
  const SourceRanking r = dev_performance_ranking(cands, target, pairs("tgt"), v);
  CHECK(r.chosen == "src");
  CHECK(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("bare") != std::string::npos);
}
