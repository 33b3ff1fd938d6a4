import numpy as np
import pytest

from drbilstm.analysis import (
    BELIEF_VERBS,
    QUANTIFIERS,
    TAGS,
    annotate,
    categorical_accuracy,
    chi_square,
    chi_square_table,
    export_heatmap,
    overlap_ratio,
    read_heatmap,
)
from drbilstm.data import SentencePair, tokenize
from drbilstm.errors import ContractError

from oracles import chi_square_formula


def pair(premise, hypothesis, label="neutral", pid="x"):
    return SentencePair(tokenize(premise), tokenize(hypothesis), label, pid)


def test_word_lists_are_pinned():
    assert QUANTIFIERS == ("much", "enough", "more", "most", "less", "least", "no", "none", "some",
                           "any", "many", "few", "several", "almost", "nearly")
    assert BELIEF_VERBS == ("know", "believe", "understand", "doubt", "think", "suppose", "recognize",
                            "forget", "remember", "imagine", "mean", "agree", "disagree", "deny", "promise")


def test_overlap_ratio_counts_distinct_hypothesis_words():
    p = pair("A man plays a guitar.", "The man plays music.")
    # hypothesis words {the, man, plays, music}; shared {man, plays}
    assert overlap_ratio(p.premise, p.hypothesis) == 0.5
    assert overlap_ratio(tokenize("A b."), tokenize(".")) == 0.0


def test_overlap_tags_partition():
    high = annotate(pair("A man plays a guitar outside.", "A man plays a guitar."))
    assert high.high_overlap and not high.regular_overlap and not high.low_overlap
    low = annotate(pair("A man plays a guitar.", "Nobody is swimming today."))
    assert low.low_overlap and not low.regular_overlap
    edge = annotate(pair("A man plays.", "The man sleeps quietly now indeed here there today yes."))
    assert overlap_ratio(tokenize("A man plays."), tokenize("The man sleeps quietly now indeed here there today yes.")) == 0.1
    assert edge.low_overlap


def test_overlap_boundaries_are_regular():
    # 3 of 10 distinct hypothesis words shared: exactly 0.3
    p = pair("a b c", "a b c d e f g h i j")
    assert overlap_ratio(p.premise, p.hypothesis) == pytest.approx(0.3)
    assert annotate(p).regular_overlap
    # 7 of 10: exactly 0.7
    p = pair("a b c d e f g", "a b c d e f g h i j")
    assert annotate(p).regular_overlap and not annotate(p).high_overlap


def test_length_tags():
    long_premise = " ".join(["word"] * 21)
    t = annotate(pair(long_premise, "A dog."))
    assert t.long_sentence and t.short_sentence and not t.regular_sentence
    t = annotate(pair("one two three four five", "one two three four five six"))
    assert t.regular_sentence and not t.long_sentence and not t.short_sentence
    t = annotate(pair(" ".join(["w"] * 20), "a b c d"))
    assert t.regular_sentence and t.short_sentence and not t.long_sentence


def test_lexical_tags():
    assert annotate(pair("A man runs.", "The man doesn't run.")).negation
    assert annotate(pair("A man runs.", "Nobody runs.")).negation
    assert annotate(pair("Some men run.", "Men run.")).quantifier
    assert annotate(pair("A man runs.", "People believe he runs.")).belief
    plain = annotate(pair("A man runs.", "A man moves."))
    assert not (plain.negation or plain.quantifier or plain.belief)


def test_categorical_accuracy_fixture():
    pairs = [
        pair("A man plays a guitar.", "A man plays a guitar.", "entailment", "1"),
        pair("A man plays a guitar.", "A man plays.", "entailment", "2"),
        pair("A dog runs.", "No dog runs.", "contradiction", "3"),
        pair("A dog runs.", "A cat sleeps.", "neutral", "4"),
        pair("A dog runs.", "Some dogs think.", "neutral", "5"),
        pair("A dog runs.", "A dog is not running.", "contradiction", "6"),
    ]
    tags = [annotate(p) for p in pairs]
    golds = [p.label for p in pairs]
    preds = {
        "A": ["entailment", "neutral", "contradiction", "neutral", "entailment", "contradiction"],
        "B": golds,
    }
    report = categorical_accuracy(preds, golds, tags)
    assert [r.tag for r in report.rows] == list(TAGS)
    ent = report.row("entailment")
    assert ent.count == 2 and ent.frequency == pytest.approx(2 / 6)
    assert ent.accuracies == [0.5, 1.0]
    neg = report.row("negation")
    assert neg.count == 2 and neg.accuracies == [1.0, 1.0]
    quant = report.row("quantifier")
    # "No" and "Some" are quantifiers
    assert quant.count == 2 and quant.accuracies == [0.5, 1.0]
    assert report.row("belief").count == 1
    assert report.row("long_sentence").empty
    assert report.row("long_sentence").accuracies == [None, None]
    tsv = report.to_tsv().splitlines()
    assert tsv[0] == "tag\tfrequency\tA\tB"
    assert "Long Sentence\t0.0\tempty\tempty" in tsv


def test_categorical_accuracy_alignment():
    t = [annotate(pair("a b", "a b"))]
    with pytest.raises(ContractError):
        categorical_accuracy({"A": ["neutral", "neutral"]}, ["neutral"], t)
    with pytest.raises(ContractError):
        categorical_accuracy({"A": ["neutral"]}, ["neutral", "neutral"], t)


def test_chi_square_matches_closed_form(rng):
    for _ in range(30):
        table = rng.integers(1, 60, size=(2, 2))
        res = chi_square_table(table)
        assert res.statistic == pytest.approx(chi_square_formula(table.tolist()), rel=1e-12)
        assert res.dof == 1 and 0.0 <= res.p_value <= 1.0


def test_chi_square_known_p_value():
    # statistic 3.841459 is the 95th percentile of chi-square with one degree of freedom
    res = chi_square_table([[60, 40], [46.1627, 53.8373]])
    assert res.p_value == pytest.approx(0.05, abs=1e-3)


def test_identical_systems_are_not_different(rng):
    golds = rng.integers(0, 3, size=100)
    preds = rng.integers(0, 3, size=100)
    res = chi_square(preds, preds, golds)
    assert res.statistic == 0.0 and res.p_value == 1.0


def test_chi_square_is_symmetric(rng):
    golds = rng.integers(0, 3, size=80)
    a, b = rng.integers(0, 3, size=80), golds.copy()
    b[:10] = (b[:10] + 1) % 3
    ab, ba = chi_square(a, b, golds), chi_square(b, a, golds)
    assert ab.statistic == pytest.approx(ba.statistic) and ab.p_value == pytest.approx(ba.p_value)


def test_chi_square_flags_small_expected_counts():
    assert chi_square_table([[1, 2], [3, 1]]).low_expected
    assert not chi_square_table([[50, 50], [40, 60]]).low_expected
    with pytest.raises(ContractError):
        chi_square_table([[1, 2, 3], [4, 5, 6]])


def test_heatmap_round_trip(tmp_path, rng):
    premise, hypothesis = ["_FOL_", "a", "dog", "runs"], ["_FOL_", "an", "animal"]
    E = rng.standard_normal((4, 3)) * 3
    weights = export_heatmap(E, premise, hypothesis, tmp_path / "attn")
    got_p, got_h, got = read_heatmap(tmp_path / "attn.csv")
    assert got_p == premise and got_h == hypothesis
    np.testing.assert_allclose(got, weights, atol=1e-6)
    np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-6)
    expected = np.exp(E) / np.exp(E).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(got, expected, atol=1e-12)
    svg = (tmp_path / "attn.svg").read_text()
    assert svg.startswith("<?xml") and "dog" in svg


def test_heatmap_figure_is_deterministic(tmp_path):
    E = np.arange(6.0).reshape(2, 3)
    export_heatmap(E, ["a", "b"], ["x", "y", "z"], tmp_path / "one")
    export_heatmap(E, ["a", "b"], ["x", "y", "z"], tmp_path / "two")
    assert (tmp_path / "one.svg").read_bytes() == (tmp_path / "two.svg").read_bytes()


def test_constant_energy_gives_uniform_rows(tmp_path):
    w = export_heatmap(np.full((3, 4), 2.5), list("abc"), list("wxyz"), tmp_path / "u", figure=False)
    np.testing.assert_allclose(w, 0.25, atol=1e-15)
    assert not (tmp_path / "u.svg").exists()


def test_heatmap_shape_mismatch(tmp_path):
    with pytest.raises(ContractError):
        export_heatmap(np.zeros((2, 2)), ["a"], ["b", "c"], tmp_path / "bad")
