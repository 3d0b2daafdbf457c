import math

import pytest

import aadam


def rank_then_pearson(pred, gold):
    def ranks(v):
        return [sum(1.0 for u in v if u < x) + (sum(1.0 for u in v if u == x) + 1) / 2 for x in v]

    rp, rg = ranks(pred), ranks(gold)
    mp, mg = sum(rp) / len(rp), sum(rg) / len(rg)
    num = sum((a - mp) * (b - mg) for a, b in zip(rp, rg))
    den = math.sqrt(sum((a - mp) ** 2 for a in rp) * sum((b - mg) ** 2 for b in rg))
    return num / den


def test_tokenize():
    assert aadam.tokenize("The Cat, sat") == ["the", "cat,", "sat"]
    assert aadam.tokenize("The Cat, sat", lowercase=False, strip_punct=True) == ["The", "Cat", "sat"]


def test_spearman_matches_oracle():
    pred = [0.1, 0.4, 0.4, 0.9, 0.3, 0.7]
    gold = [0.2, 0.1, 0.5, 0.8, 0.8, 0.6]
    assert aadam.spearman(pred, gold) == pytest.approx(rank_then_pearson(pred, gold), abs=1e-12)
    assert aadam.average_ranks([3.0, 1.0, 3.0]) == [2.5, 1.0, 2.5]
    with pytest.raises(aadam.Error):
        aadam.spearman([1.0], [2.0])


def test_dice_and_format():
    assert aadam.dice("a b c", "b c d") == pytest.approx(2 * 2 / 6)
    assert aadam.format_x100(0.8431) == "84.31"
    assert aadam.format_x100(-0.0775) == "-7.75"


def test_kfold_structure():
    folds = aadam.kfold_assign(103, 10, 7)
    flat = sorted(i for f in folds for i in f)
    assert flat == list(range(103))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_parameter_count():
    v, d, layers, ff, max_len = 20, 8, 2, 12, 10
    embeddings = v * d + max_len * d + 2 * d + 2 * d
    layer = 4 * d * d + 3 * d + 2 * d + (d * ff + ff) + (ff * d + d) + 2 * d
    heads = (d + 1) + (d * v + v)
    assert aadam.parameter_count(v, d, layers, 2, ff, max_len) == embeddings + layers * layer + heads


def test_model_hash_is_seeded():
    assert aadam.model_hash(30, 1) == aadam.model_hash(30, 1)
    assert aadam.model_hash(30, 1) != aadam.model_hash(30, 2)


def test_config_layering(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[global]\nlanguage = hau\nseed = 5\n")
    values = aadam.load_config(str(ini), ["global.seed=9"])
    assert values["global.language"] == "hau"
    assert values["global.seed"] == "9"
    with pytest.raises(aadam.UsageError):
        aadam.load_config(None, ["no_equals_sign"])


def test_run_command_exit_codes(tmp_path):
    code, output = aadam.run_command("train", ["global.run_root=" + str(tmp_path)])
    assert code == 1
    assert "global.language" in output
    code, _ = aadam.run_command("report", ["global.run_root=" + str(tmp_path)])
    assert code == 0
    code, _ = aadam.run_command("bogus")
    assert code == 1


def test_overlap_corpus_and_distance():
    rows = aadam.overlap_corpus(seed=3, pairs=50, vocab=40)
    assert len(rows) == 50
    assert all(0.0 <= r[3] <= 1.0 for r in rows)
    table = (
        "lang_a\tlang_b\tsyntactic\tphonological\tinventory\tgeographic\tgenetic\tfeatural\n"
        "x\ty\t0.1\t0.2\tNA\t0.4\t0.5\t0.6\n"
    )
    assert aadam.linguistic_distance(table, "y", "x") == pytest.approx((0.1 + 0.2 + 0.4 + 0.5 + 0.6) / 5)
