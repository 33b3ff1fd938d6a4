"""SNLI ingestion and tokenization."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from .embeddings import EOL, FOL
from .errors import ContractError, DataError, ParseError

logger = logging.getLogger(__name__)

LABELS = ("entailment", "neutral", "contradiction")
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}
NO_CONSENSUS = "-"
TERMINAL_PUNCT = ".,!?;"


@dataclass(frozen=True)
class SentencePair:
    premise: Tuple[str, ...]
    hypothesis: Tuple[str, ...]
    label: str
    pair_id: str

    @property
    def label_index(self) -> int:
        return LABEL_INDEX[self.label]


def label_index(label: str) -> int:
    try:
        return LABEL_INDEX[label]
    except KeyError:
        raise ContractError(f"unknown label {label!r}") from None


def parse_leaves(parse: str) -> List[str]:
    """Leaf tokens of a bracketed binary parse."""
    return [tok for tok in parse.replace("(", " ( ").replace(")", " ) ").split() if tok not in ("(", ")")]


def _split_punct(word: str) -> List[str]:
    trailing = []
    while len(word) > 1 and word[-1] in TERMINAL_PUNCT:
        trailing.append(word[-1])
        word = word[:-1]
    return [word] + trailing[::-1]


def tokenize(sentence: str, parse: Optional[str] = None) -> Tuple[str, ...]:
    """Tokens wrapped in the sentence markers.

    Parse leaves are used when a parse is supplied; otherwise the sentence is
    split on whitespace with terminal punctuation detached.
    """
    if parse:
        tokens = parse_leaves(parse)
    else:
        if not sentence or not sentence.strip():
            raise ContractError("cannot tokenize an empty sentence")
        tokens = [piece for word in sentence.split() for piece in _split_punct(word)]
    if not tokens:
        raise ContractError("sentence has no tokens")
    return (FOL, *tokens, EOL)


def content_tokens(tokens: Iterable[str]) -> List[str]:
    """Tokens without markers and stand-alone punctuation."""
    return [t for t in tokens if t not in (FOL, EOL) and not all(ch in TERMINAL_PUNCT for ch in t)]


def read_snli(path, use_parse: bool = True) -> Tuple[List[SentencePair], int]:
    """Parse an SNLI jsonl file. Returns the pairs and the number of no-consensus records dropped."""
    pairs, dropped = [], 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid record: {exc.msg}", lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno)
            try:
                label = rec["gold_label"]
                s1, s2 = rec["sentence1"], rec["sentence2"]
            except KeyError as exc:
                raise ParseError(f"missing field {exc.args[0]}", lineno) from None
            if label == NO_CONSENSUS:
                dropped += 1
                continue
            if label not in LABEL_INDEX:
                raise DataError(f"line {lineno}: unknown label {label!r}")
            p1 = rec.get("sentence1_binary_parse") if use_parse else None
            p2 = rec.get("sentence2_binary_parse") if use_parse else None
            try:
                premise, hypothesis = tokenize(s1, p1), tokenize(s2, p2)
            except ContractError as exc:
                raise ParseError(str(exc), lineno) from None
            pair_id = str(rec.get("pairID", lineno))
            pairs.append(SentencePair(premise, hypothesis, label, pair_id))
    return pairs, dropped


def load_snli(path, use_parse: bool = True) -> List[SentencePair]:
    pairs, dropped = read_snli(path, use_parse)
    logger.info("%s: %d pairs loaded, %d no-consensus records dropped", path, len(pairs), dropped)
    return pairs


def write_tokenized(pairs: Iterable[SentencePair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"{p.pair_id}\t{p.label}\t{' '.join(p.premise)}\t{' '.join(p.hypothesis)}\n")


def read_tokenized(path) -> List[SentencePair]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"expected 4 tab-separated columns, found {len(cols)}", lineno)
        pair_id, label, prem, hyp = cols
        if label not in LABEL_INDEX:
            raise DataError(f"line {lineno}: unknown label {label!r}")
        pairs.append(SentencePair(tuple(prem.split(" ")), tuple(hyp.split(" ")), label, pair_id))
    return pairs


def load_pairs(path, use_parse: bool = True) -> List[SentencePair]:
    """Load either an SNLI jsonl file or a tokenized TSV, by extension."""
    suffix = Path(path).suffix.lower()
    if suffix in (".tsv", ".txt"):
        return read_tokenized(path)
    return load_snli(path, use_parse)
