import logging

import numpy as np
import pytest

from drbilstm.embeddings import EOL, FOL, UNK, Vocabulary, build_vocabulary, init_embeddings, load_pretrained
from drbilstm.errors import ConfigError, ContractError, ParseError
from drbilstm.tensor import backward, sum_all

PAIRS = [
    ((FOL, "a", "dog", EOL), (FOL, "a", "cat", EOL), "neutral"),
    ((FOL, "the", "dog", EOL), (FOL, "dog", EOL), "entailment"),
]


def test_vocabulary_is_a_bijection_with_specials():
    vocab = build_vocabulary(PAIRS)
    assert vocab.words() == ["a", "dog", "cat", "the"]
    for tok in (FOL, EOL, UNK):
        assert tok in vocab
    for i, tok in enumerate(vocab.index_to_token):
        assert vocab.index(tok) == i
    assert vocab.counts["dog"] == 3
    assert vocab.encode(["dog", "zebra"]) == [1, vocab.unk_index]


def test_empty_corpus_is_a_config_error():
    with pytest.raises(ConfigError):
        build_vocabulary([])


def test_vocabulary_round_trip(tmp_path):
    vocab = build_vocabulary(PAIRS)
    vocab.dump(tmp_path / "vocab.txt")
    vocab.dump_counts(tmp_path / "counts.tsv")
    again = Vocabulary.load(tmp_path / "vocab.txt", tmp_path / "counts.tsv")
    assert again.index_to_token == vocab.index_to_token
    assert again.counts == vocab.counts


def write_vectors(path, rows):
    path.write_text("".join(" ".join([tok, *map(str, vals)]) + "\n" for tok, vals in rows), encoding="utf-8")


def test_pretrained_rows_and_unk_mean(tmp_path, rng):
    vocab = build_vocabulary(PAIRS)
    write_vectors(tmp_path / "v.txt", [("dog", [1.0, 2.0, 3.0]), ("cat", [3.0, 4.0, 5.0]), ("zebra", [9, 9, 9])])
    table = load_pretrained(tmp_path / "v.txt", vocab, 3, rng, dtype=np.float64)
    E = table.matrix.data
    np.testing.assert_array_equal(E[vocab.index("dog")], [1, 2, 3])
    np.testing.assert_array_equal(E[vocab.unk_index], [2, 3, 4])
    assert np.abs(E[vocab.index("the")]).max() < 0.1
    out = table.embed([vocab.unk_index, vocab.index("dog")])
    backward(sum_all(out))
    table.freeze_gradient()
    np.testing.assert_array_equal(table.matrix.grad[vocab.unk_index], 0.0)
    assert table.matrix.grad[vocab.index("dog")].sum() == 3


def test_pretrained_dimension_mismatch(tmp_path, rng):
    vocab = build_vocabulary(PAIRS)
    write_vectors(tmp_path / "v.txt", [("dog", [1.0, 2.0])])
    with pytest.raises(ConfigError):
        load_pretrained(tmp_path / "v.txt", vocab, 3, rng)
    write_vectors(tmp_path / "w.txt", [("dog", [1.0, 2.0, 3.0]), ("cat", [1.0, 2.0])])
    with pytest.raises(ParseError, match="line 2"):
        load_pretrained(tmp_path / "w.txt", vocab, 3, rng)
    write_vectors(tmp_path / "x.txt", [("dog", [1.0, "x", 3.0])])
    with pytest.raises(ParseError, match="line 1"):
        load_pretrained(tmp_path / "x.txt", vocab, 3, rng)


def test_zero_coverage_warns(tmp_path, rng, caplog):
    vocab = build_vocabulary(PAIRS)
    write_vectors(tmp_path / "v.txt", [("zebra", [1.0, 2.0])])
    with caplog.at_level(logging.WARNING):
        table = load_pretrained(tmp_path / "v.txt", vocab, 2, rng)
    assert "no vocabulary token" in caplog.text
    assert table.matrix.shape == (len(vocab), 2)


def test_embed_empty_and_out_of_range(rng):
    vocab = build_vocabulary(PAIRS)
    table = init_embeddings(vocab, 4, rng)
    assert table.embed([]).shape == (0, 4)
    with pytest.raises(ContractError):
        table.embed([len(vocab)])
