"""Annotation tags, categorical accuracy, significance testing and attention export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaincc

from .data import LABELS, SentencePair, content_tokens
from .errors import ContractError, ParseError

QUANTIFIERS = (
    "much", "enough", "more", "most", "less", "least", "no", "none", "some",
    "any", "many", "few", "several", "almost", "nearly",
)
BELIEF_VERBS = (
    "know", "believe", "understand", "doubt", "think", "suppose", "recognize",
    "forget", "remember", "imagine", "mean", "agree", "disagree", "deny", "promise",
)
NEGATIONS = ("not", "n't", "no", "never", "none", "nobody", "nothing", "neither", "nor", "nowhere", "cannot")

HIGH_OVERLAP = 0.7
LOW_OVERLAP = 0.3
LONG_SENTENCE = 20
SHORT_SENTENCE = 5
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class TagSet:
    gold: str
    high_overlap: bool
    regular_overlap: bool
    low_overlap: bool
    long_sentence: bool
    regular_sentence: bool
    short_sentence: bool
    negation: bool
    quantifier: bool
    belief: bool

    def has(self, tag: str) -> bool:
        if tag in LABELS:
            return self.gold == tag
        return bool(getattr(self, tag))


TAGS = (*LABELS, *(f.name for f in fields(TagSet) if f.name != "gold"))
TAG_TITLES = {
    "entailment": "Entailment",
    "neutral": "Neutral",
    "contradiction": "Contradiction",
    "high_overlap": "High Overlap",
    "regular_overlap": "Reg. Overlap",
    "low_overlap": "Low Overlap",
    "long_sentence": "Long Sentence",
    "regular_sentence": "Reg. Sentence",
    "short_sentence": "Short Sentence",
    "negation": "Negation",
    "quantifier": "Quantifier",
    "belief": "Belief",
}


def overlap_ratio(premise: Sequence[str], hypothesis: Sequence[str]) -> float:
    """Share of the hypothesis's distinct words that also occur in the premise."""
    hyp = {t.lower() for t in content_tokens(hypothesis)}
    if not hyp:
        return 0.0
    prem = {t.lower() for t in content_tokens(premise)}
    return len(hyp & prem) / len(hyp)


def _is_negation(token: str) -> bool:
    return token in NEGATIONS or token.endswith("n't")


def annotate(pair: SentencePair) -> TagSet:
    prem, hyp = content_tokens(pair.premise), content_tokens(pair.hypothesis)
    ratio = overlap_ratio(pair.premise, pair.hypothesis)
    lengths = (len(prem), len(hyp))
    words = {t.lower() for t in (*prem, *hyp)}
    return TagSet(
        gold=pair.label,
        high_overlap=ratio > HIGH_OVERLAP,
        regular_overlap=LOW_OVERLAP <= ratio <= HIGH_OVERLAP,
        low_overlap=ratio < LOW_OVERLAP,
        long_sentence=any(n > LONG_SENTENCE for n in lengths),
        regular_sentence=any(SHORT_SENTENCE <= n <= LONG_SENTENCE for n in lengths),
        short_sentence=any(n < SHORT_SENTENCE for n in lengths),
        negation=any(_is_negation(w) for w in words),
        quantifier=any(w in QUANTIFIERS for w in words),
        belief=any(w in BELIEF_VERBS for w in words),
    )


@dataclass
class CategoryRow:
    tag: str
    count: int
    frequency: float
    accuracies: List[Optional[float]]

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass
class CategoryReport:
    systems: List[str]
    rows: List[CategoryRow]
    total: int

    def row(self, tag: str) -> CategoryRow:
        for r in self.rows:
            if r.tag == tag:
                return r
        raise KeyError(tag)

    def to_tsv(self) -> str:
        lines = ["\t".join(["tag", "frequency", *self.systems])]
        for r in self.rows:
            accs = ["empty" if a is None else f"{100 * a:.1f}" for a in r.accuracies]
            lines.append("\t".join([TAG_TITLES[r.tag], f"{100 * r.frequency:.1f}", *accs]))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def categorical_accuracy(
    predictions: Dict[str, Sequence[str]],
    golds: Sequence[str],
    tagsets: Sequence[TagSet],
) -> CategoryReport:
    """Frequency of every tag and each system's accuracy within it.

    ``predictions`` maps a system name to its predicted labels, aligned with
    ``golds`` and ``tagsets``. Categories with no members report None.
    """
    if len(golds) != len(tagsets):
        raise ContractError(f"{len(golds)} gold labels for {len(tagsets)} tag sets")
    for name, preds in predictions.items():
        if len(preds) != len(golds):
            raise ContractError(f"system {name} has {len(preds)} predictions for {len(golds)} pairs")
    systems = list(predictions)
    golds = np.asarray(golds)
    correct = {name: np.asarray(predictions[name]) == golds for name in systems}
    rows = []
    for tag in TAGS:
        members = np.array([t.has(tag) for t in tagsets], dtype=bool)
        count = int(members.sum())
        accs = [float(correct[name][members].mean()) if count else None for name in systems]
        rows.append(CategoryRow(tag, count, count / len(golds) if len(golds) else 0.0, accs))
    return CategoryReport(systems, rows, len(golds))


@dataclass
class ChiSquareResult:
    statistic: float
    p_value: float
    table: np.ndarray
    expected: np.ndarray
    low_expected: bool
    dof: int = 1


def chi_square_table(table) -> ChiSquareResult:
    """Pearson chi-square test of independence on a 2x2 table (no continuity correction)."""
    table = np.asarray(table, dtype=np.float64)
    if table.shape != (2, 2) or np.any(table < 0):
        raise ContractError("chi-square needs a 2x2 table of non-negative counts")
    total = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / total if total else np.zeros((2, 2))
    nonzero = expected > 0
    statistic = float(np.sum((table[nonzero] - expected[nonzero]) ** 2 / expected[nonzero]))
    p_value = float(gammaincc(0.5, statistic / 2.0))
    return ChiSquareResult(statistic, p_value, table, expected, bool(np.any(expected < MIN_EXPECTED)))


def chi_square(outputs_a: Sequence, outputs_b: Sequence, golds: Sequence) -> ChiSquareResult:
    """Do systems A and B differ in how often they are correct?

    Rows are the two systems, columns are (correct, incorrect) counts.
    """
    if not len(outputs_a) == len(outputs_b) == len(golds):
        raise ContractError("chi-square needs aligned output and gold sequences")
    golds = np.asarray(golds)
    a = int(np.sum(np.asarray(outputs_a) == golds))
    b = int(np.sum(np.asarray(outputs_b) == golds))
    n = len(golds)
    return chi_square_table([[a, n - a], [b, n - b]])


def row_softmax(E: np.ndarray) -> np.ndarray:
    shifted = E - E.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=1, keepdims=True)


def export_heatmap(E, premise: Sequence[str], hypothesis: Sequence[str], path, figure: bool = True) -> np.ndarray:
    """Write row-normalised attention as ``<path>.csv`` and a grayscale ``<path>.svg``.

    Returns the normalised weights.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.shape != (len(premise), len(hypothesis)):
        raise ContractError(f"energy {E.shape} does not match {len(premise)} x {len(hypothesis)} tokens")
    weights = row_softmax(E)
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    with open(base.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["", *hypothesis])
        for tok, row in zip(premise, weights):
            writer.writerow([tok, *(repr(float(x)) for x in row)])
    if figure:
        from .plotting import plot_heatmap

        plot_heatmap(weights, premise, hypothesis, base.with_suffix(".svg"))
    return weights


def read_heatmap(path) -> Tuple[List[str], List[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ParseError("missing header row", 1)
        hypothesis, premise, rows = header[1:], [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(rec)}", lineno)
            premise.append(rec[0])
            try:
                rows.append([float(x) for x in rec[1:]])
            except ValueError:
                raise ParseError("non-numeric weight", lineno) from None
    return premise, hypothesis, np.array(rows, dtype=np.float64).reshape(len(premise), len(hypothesis))
