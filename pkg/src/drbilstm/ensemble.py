"""Ensembles of trained members: weighted probability averaging and majority voting."""

from __future__ import annotations

import csv
import itertools
from math import comb
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import LABELS
from .errors import ConfigError, ContractError, DataError, ParseError

GRID_STEP = 0.05
EXHAUSTIVE_LIMIT = 2000
STRATEGIES = ("weighted_average", "majority_vote", "average")
PREDICTION_HEADER = ("pair_id", "p_entailment", "p_neutral", "p_contradiction")


@dataclass
class MemberOutput:
    member_id: str
    dev_ids: List[str]
    dev_probs: np.ndarray
    test_ids: Optional[List[str]] = None
    test_probs: Optional[np.ndarray] = None
    dev_accuracy: Optional[float] = None


@dataclass
class EnsembleConfig:
    weights: Sequence[float]
    strategy: str = "weighted_average"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown ensemble strategy {self.strategy!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("ensemble weights must be non-negative with a positive sum")
        self.weights = w / w.sum()


def _stack(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    if len(member_probs) == 0:
        raise ContractError("an ensemble needs at least one member")
    shapes = {np.shape(p) for p in member_probs}
    if len(shapes) != 1:
        raise DataError(f"members cover different pair sets: shapes {sorted(shapes)}")
    stack = np.asarray(member_probs, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[2] != len(LABELS):
        raise DataError(f"member outputs must be pairs x {len(LABELS)} distributions, got {stack.shape[1:]}")
    return stack


def check_coverage(members: Sequence[MemberOutput], split: str = "dev") -> List[str]:
    """Pair ids shared by all members; raises when any member differs."""
    ids = [getattr(m, f"{split}_ids") for m in members]
    for m, other in zip(members[1:], ids[1:]):
        if list(other) != list(ids[0]):
            raise DataError(f"member {m.member_id} covers different {split} pairs than {members[0].member_id}")
    return list(ids[0])


def weighted_average(member_probs: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Per pair, sum_k w_k * probs_k."""
    stack = _stack(member_probs)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (stack.shape[0],):
        raise ContractError(f"{w.size} weights for {stack.shape[0]} members")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ContractError("weights must be non-negative and sum to 1")
    return np.tensordot(w, stack, axes=1)


def average(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    k = len(member_probs)
    return weighted_average(member_probs, np.full(k, 1.0 / k))


def accuracy_weights(dev_accuracies: Sequence[float]) -> np.ndarray:
    """Weights proportional to each member's dev accuracy."""
    acc = np.asarray(dev_accuracies, dtype=np.float64)
    if acc.sum() <= 0:
        return np.full(acc.size, 1.0 / acc.size)
    return acc / acc.sum()


def _accuracy(stack: np.ndarray, golds: np.ndarray, units: Sequence[int], total: int) -> float:
    combined = np.tensordot(np.asarray(units, dtype=np.float64) / total, stack, axes=1)
    return float(np.mean(np.argmax(combined, axis=1) == golds))


def _key(acc: float, units: Tuple[int, ...]) -> tuple:
    # higher accuracy first, then the more uniform vector, then lexicographic
    return (-acc, sum(u * u for u in units), units)


def _compositions(total: int, k: int):
    for cuts in itertools.combinations(range(total + k - 1), k - 1):
        prev, parts = -1, []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(total + k - 2 - prev)
        yield tuple(parts)


def _grid_size(total: int, k: int) -> int:
    return comb(total + k - 1, k - 1)


def _ascend(stack, golds, start: Tuple[int, ...], total: int) -> Tuple[float, Tuple[int, ...]]:
    current = start
    current_key = _key(_accuracy(stack, golds, current, total), current)
    k = len(start)
    while True:
        best_key, best = current_key, None
        for i, j in itertools.permutations(range(k), 2):
            for amount in range(1, current[j] + 1):
                cand = list(current)
                cand[i] += amount
                cand[j] -= amount
                cand = tuple(cand)
                key = _key(_accuracy(stack, golds, cand, total), cand)
                if key < best_key:
                    best_key, best = key, cand
        if best is None:
            return -current_key[0], current
        current, current_key = best, best_key


def learn_weights(
    member_probs: Sequence[np.ndarray],
    golds: Sequence[int],
    step: float = GRID_STEP,
    init: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, float]:
    """Weights on the simplex grid that maximise dev accuracy.

    Small grids are searched exhaustively. Otherwise coordinate ascent runs
    from every vertex, the most uniform grid point, and ``init`` if given.
    Returns (weights, dev accuracy).
    """
    stack = _stack(member_probs)
    golds = np.asarray(golds)
    if golds.shape != (stack.shape[1],):
        raise ContractError(f"{golds.size} gold labels for {stack.shape[1]} pairs")
    k = stack.shape[0]
    total = int(round(1.0 / step))
    if abs(total * step - 1.0) > 1e-9:
        raise ConfigError("grid step must divide 1")

    if _grid_size(total, k) <= EXHAUSTIVE_LIMIT:
        best = min(_key(_accuracy(stack, golds, u, total), u) for u in _compositions(total, k))
        return np.asarray(best[2], dtype=np.float64) / total, -best[0]

    starts = [tuple(total if i == j else 0 for i in range(k)) for j in range(k)]
    base, extra = divmod(total, k)
    starts.append(tuple(base + (1 if i < extra else 0) for i in range(k)))
    if init is not None:
        w = np.asarray(init, dtype=np.float64)
        units = np.floor(w / w.sum() * total).astype(int)
        units[np.argmax(w)] += total - units.sum()
        starts.append(tuple(int(u) for u in units))
    best = None
    for start in starts:
        acc, units = _ascend(stack, golds, start, total)
        key = _key(acc, units)
        if best is None or key < best:
            best = key
    return np.asarray(best[2], dtype=np.float64) / total, -best[0]


@dataclass
class SelectionStep:
    n: int
    members: List[int]
    weights: np.ndarray
    dev_accuracy: float
    test_accuracy: Optional[float] = None


@dataclass
class Selection:
    steps: List[SelectionStep] = field(default_factory=list)

    @property
    def best(self) -> SelectionStep:
        return max(self.steps, key=lambda s: (s.dev_accuracy, -s.n))


def greedy_select(
    dev_probs: Sequence[np.ndarray],
    dev_golds: Sequence[int],
    max_n: int,
    test_probs: Optional[Sequence[np.ndarray]] = None,
    test_golds: Optional[Sequence[int]] = None,
    step: float = GRID_STEP,
    strategy: str = "weighted_average",
) -> Selection:
    """Grow the ensemble one member at a time.

    With weighted averaging the weights are re-learned at every size, seeded
    with the previous optimum, so the dev curve cannot decrease. The other
    strategies use uniform weights and may dip.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown ensemble strategy {strategy!r}")
    stack = _stack(dev_probs)
    if not 1 <= max_n <= stack.shape[0]:
        raise ConfigError(f"max_n={max_n} but only {stack.shape[0]} candidates")
    golds = np.asarray(dev_golds)

    def score(probs, members, weights, gold):
        labels = combine(EnsembleConfig(weights, strategy), [probs[i] for i in members])
        return float(np.mean(labels == np.asarray(gold)))

    def test_acc(members, weights):
        if test_probs is None or test_golds is None:
            return None
        return score(test_probs, members, weights, test_golds)

    singles = [float(np.mean(np.argmax(p, axis=1) == golds)) for p in stack]
    first = int(np.argmax(singles))
    chosen, weights = [first], np.array([1.0])
    selection = Selection([SelectionStep(1, [first], weights, singles[first], test_acc([first], weights))])
    for n in range(2, max_n + 1):
        best = None
        for cand in range(stack.shape[0]):
            if cand in chosen:
                continue
            members = chosen + [cand]
            if strategy == "weighted_average":
                w, acc = learn_weights(stack[members], golds, step, init=np.append(weights, 0.0))
            else:
                w = np.full(n, 1.0 / n)
                acc = score(stack, members, w, golds)
            if best is None or acc > best[2]:
                best = (members, w, acc)
        chosen, weights, acc = best
        selection.steps.append(SelectionStep(n, list(chosen), weights, acc, test_acc(chosen, weights)))
    return selection


def majority_vote(member_labels: Sequence[Sequence[int]], member_probs: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Most frequent label per pair; ties go to the tied label with the highest mean probability."""
    labels = np.asarray(member_labels)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise ContractError("majority vote needs a members x pairs label matrix")
    mean_probs = None
    if member_probs is not None:
        stack = _stack(member_probs)
        if stack.shape[:2] != labels.shape:
            raise DataError("label and probability coverage differ")
        mean_probs = stack.mean(axis=0)
    n_labels = len(LABELS)
    counts = np.stack([(labels == c).sum(axis=0) for c in range(n_labels)], axis=1)
    out = np.empty(labels.shape[1], dtype=np.int64)
    for i, row in enumerate(counts):
        tied = np.flatnonzero(row == row.max())
        if len(tied) > 1 and mean_probs is not None:
            tied = tied[mean_probs[i, tied] == mean_probs[i, tied].max()]
        out[i] = tied[0]
    return out


def combine(config: EnsembleConfig, member_probs: Sequence[np.ndarray]) -> np.ndarray:
    """Predicted label indices under ``config``."""
    if config.strategy == "majority_vote":
        labels = [np.argmax(p, axis=1) for p in member_probs]
        return majority_vote(labels, member_probs)
    if config.strategy == "average":
        return np.argmax(average(member_probs), axis=1)
    return np.argmax(weighted_average(member_probs, config.weights), axis=1)


def write_predictions(path, pair_ids: Sequence[str], probs: np.ndarray) -> None:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(pair_ids), len(LABELS)):
        raise ContractError(f"{len(pair_ids)} ids for probability matrix {probs.shape}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_HEADER)
        for pid, row in zip(pair_ids, probs):
            writer.writerow([pid, *(repr(float(x)) for x in row)])


def read_predictions(path) -> Tuple[List[str], np.ndarray]:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_HEADER:
            raise ParseError(f"expected header {','.join(PREDICTION_HEADER)}", 1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(PREDICTION_HEADER):
                raise ParseError(f"expected {len(PREDICTION_HEADER)} fields, found {len(rec)}", lineno)
            try:
                rows.append([float(x) for x in rec[1:]])
            except ValueError:
                raise ParseError("non-numeric probability", lineno) from None
            ids.append(rec[0])
    return ids, np.array(rows, dtype=np.float64).reshape(-1, len(LABELS))
