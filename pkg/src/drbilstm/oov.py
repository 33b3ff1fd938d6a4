"""Recovery of out-of-vocabulary words at evaluation time.

Attempts, in order: lowercase; split on hyphens; split a leading "un";
spelling correction against the vocabulary; split into two known words;
finally the UNK token. The first attempt whose pieces are all in the
vocabulary wins.
"""

from __future__ import annotations

import weakref
from collections import defaultdict
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from .data import SentencePair
from .embeddings import SPECIALS, UNK, Vocabulary
from .errors import ContractError

MAX_DISTANCE = 2


def damerau_levenshtein(a: str, b: str) -> int:
    """Unrestricted Damerau-Levenshtein distance (transpositions may be edited again)."""
    inf = len(a) + len(b)
    last_row: Dict[str, int] = {}
    # d has a sentinel row and column holding `inf`
    d = [[inf] * (len(b) + 2) for _ in range(len(a) + 2)]
    for i in range(len(a) + 1):
        d[i + 1][1] = i
    for j in range(len(b) + 1):
        d[1][j + 1] = j
    for i in range(1, len(a) + 1):
        last_col = 0
        for j in range(1, len(b) + 1):
            k = last_row.get(b[j - 1], 0)
            l = last_col
            cost = 0 if a[i - 1] == b[j - 1] else 1
            if cost == 0:
                last_col = j
            d[i + 1][j + 1] = min(
                d[i][j] + cost,
                d[i + 1][j] + 1,
                d[i][j + 1] + 1,
                d[k][l] + (i - k - 1) + 1 + (j - l - 1),
            )
        last_row[a[i - 1]] = i
    return d[len(a) + 1][len(b) + 1]


class _LowerIndex:
    """Vocabulary words grouped by lowercase form and by length."""

    def __init__(self, vocab: Vocabulary):
        self.forms: Dict[str, List[str]] = defaultdict(list)
        for word in vocab.words():
            self.forms[word.lower()].append(word)
        self.by_length: Dict[int, List[str]] = defaultdict(list)
        for lower in self.forms:
            self.by_length[len(lower)].append(lower)


_indexes: "weakref.WeakKeyDictionary[Vocabulary, _LowerIndex]" = weakref.WeakKeyDictionary()


def _index(vocab: Vocabulary) -> _LowerIndex:
    idx = _indexes.get(vocab)
    if idx is None:
        idx = _indexes[vocab] = _LowerIndex(vocab)
    return idx


def spell_correct(token: str, vocab: Vocabulary, debug: bool = False) -> Optional[str]:
    """Closest known word within distance 2, ignoring case.

    Candidates are ranked by training frequency, then distance, then
    lexicographically. Returns None when nothing is close enough.
    """
    if token in vocab:
        if debug:
            raise ContractError(f"spell_correct called on in-vocabulary token {token!r}")
        return token
    idx = _index(vocab)
    lower = token.lower()
    best: Optional[Tuple[int, int, str]] = None
    for length in range(len(lower) - MAX_DISTANCE, len(lower) + MAX_DISTANCE + 1):
        for cand in idx.by_length.get(length, ()):
            dist = damerau_levenshtein(lower, cand)
            if dist > MAX_DISTANCE:
                continue
            for word in idx.forms[cand]:
                key = (-vocab.counts.get(word, 0), dist, word)
                if best is None or key < best:
                    best = key
    return None if best is None else best[2]


def split_known(token: str, vocab: Vocabulary) -> Optional[List[str]]:
    """Split a run-together word into two known words (``neverending``)."""
    best = None
    for cut in range(1, len(token)):
        left, right = _known(token[:cut], vocab), _known(token[cut:], vocab)
        if left is None or right is None:
            continue
        key = (-min(vocab.counts.get(left, 0), vocab.counts.get(right, 0)), left, right)
        if best is None or key < best:
            best = key
    return None if best is None else [best[1], best[2]]


def _known(piece: str, vocab: Vocabulary) -> Optional[str]:
    if piece in vocab and piece not in SPECIALS:
        return piece
    if piece.lower() in vocab:
        return piece.lower()
    return None


def _all_known(pieces: Sequence[str], vocab: Vocabulary) -> Optional[List[str]]:
    out = []
    for piece in pieces:
        known = _known(piece, vocab) if piece else None
        if known is None:
            return None
        out.append(known)
    return out


def recover_oov(token: str, vocab: Vocabulary) -> List[str]:
    """Replacement tokens for ``token``; known tokens come back unchanged."""
    if token in vocab:
        return [token]
    if token.lower() in vocab:
        return [token.lower()]
    if "-" in token:
        pieces = _all_known([p for p in token.split("-") if p], vocab)
        if pieces:
            return pieces
    if token.lower().startswith("un") and len(token) > 2:
        pieces = _all_known([token[:2], token[2:]], vocab)
        if pieces:
            return pieces
    corrected = spell_correct(token, vocab)
    if corrected is not None:
        return [corrected]
    pieces = split_known(token, vocab)
    if pieces is not None:
        return pieces
    return [UNK]


def recover_sentence(tokens: Sequence[str], vocab: Vocabulary) -> Tuple[Tuple[str, ...], int]:
    """Recovered token sequence and the number of tokens that became UNK."""
    out: List[str] = []
    unknown = 0
    for token in tokens:
        replacement = recover_oov(token, vocab)
        if token not in vocab and replacement == [UNK]:
            unknown += 1
        out.extend(replacement)
    return tuple(out), unknown


def recover_pair(pair: SentencePair, vocab: Vocabulary) -> Tuple[SentencePair, int]:
    premise, n1 = recover_sentence(pair.premise, vocab)
    hypothesis, n2 = recover_sentence(pair.hypothesis, vocab)
    return replace(pair, premise=premise, hypothesis=hypothesis), n1 + n2


def count_unknown(pairs: Sequence[SentencePair], vocab: Vocabulary) -> int:
    """Tokens that would map to UNK without any recovery."""
    return sum(t not in vocab for p in pairs for t in (*p.premise, *p.hypothesis))


def recover_pairs(pairs: Sequence[SentencePair], vocab: Vocabulary) -> Tuple[List[SentencePair], int]:
    out, unknown = [], 0
    for pair in pairs:
        fixed, n = recover_pair(pair, vocab)
        out.append(fixed)
        unknown += n
    return out, unknown
