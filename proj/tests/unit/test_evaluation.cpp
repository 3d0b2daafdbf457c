#include <doctest.h>

#include <cmath>
#include <set>

#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/random.hpp"
#include "oracles.hpp"

using namespace aadam;

TEST_CASE("average ranks share ties") {
  const std::vector<double> v{10, 20, 20, 5, 20};
  CHECK(average_ranks(v) == std::vector<double>{2, 4, 4, 1, 4});
  CHECK(average_ranks(v) == oracle::ranks(v));
}

TEST_CASE("correlations agree with the oracle and handle degenerate input") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 3 + rng.below(20);
    std::vector<double> x(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = std::round(rng.uniform(0, 4));
      y[j] = rng.normal();
    }
    const auto got = spearman(x, y), want = oracle::spearman(x, y);
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK(std::abs(*got - *want) < 1e-12);
    const auto p = pearson(x, y), q = oracle::pearson(x, y);
    if (p) CHECK(std::abs(*p - *q) < 1e-12);
  }
  const std::vector<double> flat{1, 1, 1}, up{1, 2, 3};
  CHECK(!spearman(flat, up));
  CHECK_THROWS(spearman(std::vector<double>{1}, std::vector<double>{2}));
  CHECK_THROWS(spearman(up, std::vector<double>{1, 2}));
}

TEST_CASE("spearman over present predictions") {
  const std::vector<std::optional<double>> pred{1.0, std::nullopt, 3.0, 2.0};
  const std::vector<double> gold{1, 100, 3, 2};
  CHECK(*spearman_present(pred, gold) == doctest::Approx(1.0));
}

TEST_CASE("dice and the overlap baseline") {
  CHECK(dice("The cat", "the dog") == doctest::Approx(0.5));
  CHECK(dice("", "") == 0.0);
  CHECK(dice("a a b", "b") == doctest::Approx(2.0 / 3.0));
  const std::set<std::string> a{"x", "y", "z"}, b{"z"};
  CHECK(dice("x y z", "z") == doctest::Approx(oracle::dice(a, b)));
}

TEST_CASE("word vectors parsing") {
  const WordVectors wv = parse_word_vectors("2 3\na 1 2 3\nb 0 0 1\n");
  CHECK(wv.dim == 3);
  CHECK(wv.vectors.at("a")[1] == 2.0);
  CHECK_THROWS_AS(parse_word_vectors("2 3\na 1 2\n"), DataError);
  CHECK_THROWS_AS(parse_word_vectors("garbage"), DataError);
  CHECK_THROWS_AS(load_word_vectors("/nonexistent/vectors.txt"), DataError);
}

TEST_CASE("band assignment boundaries and validation") {
  const std::vector<double> gold{0.0, 0.25, 0.5, 0.75, 1.0, 0.2499};
  const std::vector<double> pred{1, 2, 3, 4, 5, 6};
  const auto r = band_analysis(pred, gold);
  CHECK(r[0].members == std::vector<std::size_t>{0, 5});
  CHECK(r[1].members == std::vector<std::size_t>{1});
  CHECK(r[3].members == std::vector<std::size_t>{3, 4});
  CHECK(!r[1].spearman);
  const std::vector<Band> gap{{0, 0.4}, {0.5, 1}};
  CHECK_THROWS_AS(band_analysis(pred, gold, gap), DataError);
  CHECK_THROWS_AS(band_analysis(std::vector<double>{1}, std::vector<double>{1.5}), DataError);
}

TEST_CASE("k-fold assignment") {
  for (std::size_t n : {10, 11, 19, 100}) {
    const auto folds = kfold_assign(n, 10, 3);
    std::vector<int> seen(n, 0);
    for (const auto& f : folds)
      for (auto i : f) ++seen[i];
    for (int s : seen) CHECK(s == 1);
  }
  CHECK(kfold_assign(20, 10, 3) == kfold_assign(20, 10, 3));
  CHECK(kfold_assign(20, 10, 3) != kfold_assign(20, 10, 4));
  CHECK_THROWS(kfold_assign(5, 10, 1));
}

TEST_CASE("k-fold CV trains on the complement") {
  Corpus c;
  for (int i = 0; i < 20; ++i) c.pairs.push_back({std::to_string(i), "a", "b", i / 20.0, Provenance::Original});
  std::size_t calls = 0;
  const CvResult r = kfold_cv(c, 4, 1, [&](const Corpus& train, const Corpus& held) {
    ++calls;
    CHECK(train.pairs.size() + held.pairs.size() == 20);
    for (const auto& h : held.pairs)
      for (const auto& t : train.pairs) CHECK(h.id != t.id);
    std::vector<double> out;
    for (const auto& p : held.pairs) out.push_back(p.score);
    return out;
  });
  CHECK(calls == 4);
  CHECK(*r.mean == doctest::Approx(1.0));
  CHECK(*r.stddev == doctest::Approx(0.0));
}

TEST_CASE("report formatting") {
  CHECK(format_x100(0.8431) == "84.31");
  CHECK(format_x100(-0.0775) == "-7.75");
  CHECK(format_x100(std::nullopt) == "-");
  CHECK(format_x100(1.0) == "100.00");
  const std::vector<double> pred{0.1, 0.2, 0.9, 0.8}, gold{0.1, 0.3, 0.8, 0.9};
  const EvalReport r = make_report("hau", "full", pred, gold);
  CHECK(r.n_pairs == 4);
  CHECK(*r.spearman == doctest::Approx(0.8));
  const std::string table = render_table({r});
  CHECK(table.find("hau") != std::string::npos);
  CHECK(table.find("80.00") != std::string::npos);
  CHECK(render_tsv({r}).find("hau\tfull\t80.00") != std::string::npos);
}
