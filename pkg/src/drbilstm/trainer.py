"""Adam optimisation, the epoch loop with best-dev selection, and evaluation."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .config import ModelConfig, TrainConfig
from .data import LABEL_INDEX, LABELS, SentencePair
from .embeddings import Vocabulary
from .errors import ConfigError, ContractError, NumericError
from .model import ModelParams, Prediction, forward, loss
from .tensor import backward, scale

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 0.0004
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "AdamState":
        return cls(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)


def adam_step(params: dict, state: AdamState) -> None:
    """One bias-corrected Adam update of every tensor in ``params`` (in place).

    Tensors without a gradient are treated as having a zero gradient, so
    their moments still decay.
    """
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in {name}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.data.dtype)


def clip_global_norm(params: dict, max_norm: float) -> float:
    grads = [p.grad for p in params.values() if p.grad is not None]
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if norm > max_norm > 0:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


@dataclass
class EncodedPair:
    premise: List[int]
    hypothesis: List[int]
    label: int
    pair_id: str = ""


def encode_pairs(pairs: Sequence[SentencePair], vocab: Vocabulary) -> List[EncodedPair]:
    return [
        EncodedPair(vocab.encode(p.premise), vocab.encode(p.hypothesis), LABEL_INDEX[p.label], p.pair_id)
        for p in pairs
    ]


def accuracy(predicted: Sequence, gold: Sequence) -> float:
    if len(predicted) != len(gold):
        raise ContractError(f"{len(predicted)} predictions for {len(gold)} gold labels")
    if not gold:
        raise ContractError("accuracy of an empty set")
    return sum(int(p == g) for p, g in zip(predicted, gold)) / len(gold)


@dataclass
class EvalResult:
    accuracy: float
    predictions: List[Prediction]

    @property
    def labels(self) -> List[str]:
        return [p.label for p in self.predictions]

    def probs(self) -> np.ndarray:
        return np.array([p.probs for p in self.predictions])


def predict(params: ModelParams, config: ModelConfig, pairs: Sequence[EncodedPair], threads: int = 1) -> List[Prediction]:
    def one(ex):
        return forward(params, config, ex.premise, ex.hypothesis, training=False).prediction

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, pairs))
    return [one(ex) for ex in pairs]


def evaluate(params: ModelParams, config: ModelConfig, pairs: Sequence[EncodedPair], threads: int = 1) -> EvalResult:
    """Inference-mode accuracy and per-pair predictions, in input order."""
    preds = predict(params, config, pairs, threads)
    gold = [LABELS[ex.label] for ex in pairs]
    return EvalResult(accuracy([p.label for p in preds], gold), preds)


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    dev_acc: float
    mean_loss: float


@dataclass
class TrainResult:
    params: ModelParams
    history: List[EpochRecord]
    best_dev_acc: float
    best_epoch: int
    optimizer: AdamState


def _snapshot(params: ModelParams) -> dict:
    return {k: t.data.copy() for k, t in params.all_tensors().items()}


def _restore(params: ModelParams, snap: dict) -> None:
    for k, t in params.all_tensors().items():
        t.data[...] = snap[k]


def train(
    params: ModelParams,
    config: ModelConfig,
    train_pairs: Sequence[EncodedPair],
    dev_pairs: Sequence[EncodedPair],
    tcfg: TrainConfig,
    on_epoch: Optional[Callable[[EpochRecord], Optional[bool]]] = None,
    optimizer: Optional[AdamState] = None,
    threads: int = 1,
) -> TrainResult:
    """Mini-batch training; the returned parameters are those of the best dev epoch.

    ``on_epoch`` sees every epoch record and may return True to stop early.
    """
    if not train_pairs or not dev_pairs:
        raise ConfigError("training needs non-empty train and dev sets")
    shuffle_rng = np.random.default_rng([tcfg.seed, 0])
    dropout_rng = np.random.default_rng([tcfg.seed, 1])
    opt = optimizer if optimizer is not None else AdamState.from_config(tcfg)
    named = params.named_parameters()

    history: List[EpochRecord] = []
    best_acc, best_epoch, best = -1.0, 0, None
    stale = 0
    for epoch in range(1, tcfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_pairs))
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), tcfg.batch_size):
            batch = [train_pairs[i] for i in order[start:start + tcfg.batch_size]]
            params.zero_grad()
            for ex in batch:
                out = forward(params, config, ex.premise, ex.hypothesis, training=True, rng=dropout_rng)
                ex_loss = loss(out.probs, ex.label)
                backward(scale(ex_loss, 1.0 / len(batch)), named.values())
                total_loss += ex_loss.item()
                correct += int(np.argmax(out.probs.data) == ex.label)
            params.embedding.freeze_gradient()
            if tcfg.clip_norm:
                clip_global_norm(named, tcfg.clip_norm)
            adam_step(named, opt)

        dev_acc = evaluate(params, config, dev_pairs, threads).accuracy
        record = EpochRecord(epoch, correct / len(train_pairs), dev_acc, total_loss / len(train_pairs))
        history.append(record)
        logger.info("epoch %d: loss %.4f train %.4f dev %.4f", epoch, record.mean_loss, record.train_acc, dev_acc)
        if dev_acc > best_acc:
            best_acc, best_epoch, best = dev_acc, epoch, _snapshot(params)
            stale = 0
        if on_epoch is not None and on_epoch(record):
            break
        if best_epoch != epoch:
            stale += 1
            if tcfg.patience is not None and stale >= tcfg.patience:
                logger.info("no dev improvement for %d epochs; stopping", stale)
                break
    _restore(params, best)
    return TrainResult(params, history, best_acc, best_epoch, opt)


HISTORY_HEADER = ("epoch", "train_acc", "dev_acc", "mean_loss")


def write_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for r in history:
            writer.writerow([r.epoch, repr(r.train_acc), repr(r.dev_acc), repr(r.mean_loss)])


def read_history(path) -> List[EpochRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EpochRecord(int(row["epoch"]), float(row["train_acc"]), float(row["dev_acc"]), float(row["mean_loss"]))
            for row in csv.DictReader(fh)
        ]
