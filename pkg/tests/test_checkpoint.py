import struct

import numpy as np
import pytest

from drbilstm.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from drbilstm.config import ModelConfig, TrainConfig
from drbilstm.data import load_pairs
from drbilstm.embeddings import build_vocabulary
from drbilstm.errors import FormatError, VersionError
from drbilstm.model import build_model
from drbilstm.trainer import encode_pairs, evaluate, train

CFG = ModelConfig(r=6, d=4, dropout_rate=0.1, projection_activation="tanh")


@pytest.fixture(scope="module")
def trained(toy_path):
    pairs = load_pairs(toy_path)
    vocab = build_vocabulary(pairs)
    encoded = encode_pairs(pairs, vocab)
    params = build_model(CFG, vocab, np.random.default_rng(3))
    result = train(params, CFG, encoded[:48], encoded[48:], TrainConfig(epochs=2, batch_size=16, seed=3))
    return result, encoded[48:]


def save(path, result):
    save_checkpoint(path, result.params, CFG, result.optimizer, result.best_dev_acc, seed=3)


def test_save_load_save_is_byte_identical(tmp_path, trained):
    result, _ = trained
    save(tmp_path / "a.ckpt", result)
    ck = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(tmp_path / "b.ckpt", ck.to_params(), ck.config, ck.optimizer, ck.best_dev_accuracy, ck.seed)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_parameters_and_optimizer_survive(tmp_path, trained):
    result, _ = trained
    save(tmp_path / "a.ckpt", result)
    ck = load_checkpoint(tmp_path / "a.ckpt")
    assert ck.config == CFG
    assert ck.best_dev_accuracy == result.best_dev_acc and ck.seed == 3
    restored = ck.to_params()
    for name, t in result.params.all_tensors().items():
        np.testing.assert_array_equal(restored.all_tensors()[name].data, t.data)
    np.testing.assert_array_equal(restored.embedding.frozen_rows, result.params.embedding.frozen_rows)
    assert ck.optimizer.t == result.optimizer.t
    for name, m in result.optimizer.m.items():
        np.testing.assert_array_equal(ck.optimizer.m[name], m.astype(np.float32))


def test_loaded_model_reproduces_predictions(tmp_path, trained):
    result, dev = trained
    save(tmp_path / "a.ckpt", result)
    restored = load_checkpoint(tmp_path / "a.ckpt").to_params()
    before, after = evaluate(result.params, CFG, dev), evaluate(restored, CFG, dev)
    assert after.accuracy == before.accuracy == result.best_dev_acc
    np.testing.assert_array_equal(after.probs(), before.probs())


def test_corrupt_files_are_rejected(tmp_path, trained):
    result, _ = trained
    save(tmp_path / "a.ckpt", result)
    raw = (tmp_path / "a.ckpt").read_bytes()
    (tmp_path / "short.ckpt").write_bytes(raw[:-7])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "short.ckpt")
    (tmp_path / "magic.ckpt").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "magic.ckpt")
    (tmp_path / "extra.ckpt").write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "extra.ckpt")
    (tmp_path / "version.ckpt").write_bytes(MAGIC + struct.pack("<I", 99) + raw[8:])
    with pytest.raises(VersionError):
        load_checkpoint(tmp_path / "version.ckpt")
