"""Vocabulary construction and pretrained word-vector loading."""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError
from .tensor import Tensor, gather_rows

logger = logging.getLogger(__name__)

FOL = "_FOL_"
EOL = "_EOL_"
UNK = "UNK"
SPECIALS = (FOL, EOL, UNK)
MARKERS = (FOL, EOL)


class Vocabulary:
    """Bijective token/index map with training-corpus frequencies."""

    def __init__(self, tokens: Sequence[str], counts: Optional[dict] = None):
        self.index_to_token = list(tokens)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ConfigError("vocabulary contains duplicate tokens")
        for special in SPECIALS:
            if special not in self.token_to_index:
                raise ConfigError(f"vocabulary lacks special token {special}")
        self.counts = Counter(counts or {})

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    @property
    def unk_index(self) -> int:
        return self.token_to_index[UNK]

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, self.unk_index)

    def encode(self, tokens: Iterable[str]) -> list:
        return [self.index(t) for t in tokens]

    def words(self):
        """Regular (non-special) tokens."""
        return [t for t in self.index_to_token if t not in SPECIALS]

    def dump(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.index_to_token), encoding="utf-8")

    def dump_counts(self, path) -> None:
        lines = [f"{t}\t{self.counts[t]}\n" for t in self.index_to_token if self.counts.get(t)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path, counts_path=None) -> "Vocabulary":
        tokens = Path(path).read_text(encoding="utf-8").split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        counts = {}
        if counts_path is not None and Path(counts_path).exists():
            for line in Path(counts_path).read_text(encoding="utf-8").splitlines():
                tok, _, n = line.rpartition("\t")
                counts[tok] = int(n)
        return cls(tokens, counts)


def build_vocabulary(training_pairs) -> Vocabulary:
    """Index every token seen in training, then append the three specials.

    Accepts :class:`~drbilstm.data.SentencePair` objects or plain
    ``(premise_tokens, hypothesis_tokens, ...)`` tuples.
    """
    counts = Counter()
    order = {}
    for pair in training_pairs:
        if hasattr(pair, "premise"):
            sentences = (pair.premise, pair.hypothesis)
        else:
            sentences = tuple(pair)[:2]
        for sent in sentences:
            for tok in sent:
                if tok in SPECIALS:
                    continue
                counts[tok] += 1
                order.setdefault(tok, len(order))
    if not order:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(list(order) + list(SPECIALS), counts)


class EmbeddingTable:
    """Trainable ``|V| x r`` matrix; some rows can be held fixed."""

    def __init__(self, matrix: np.ndarray, trainable: bool = True, frozen_rows: Sequence[int] = ()):
        self.matrix = Tensor(matrix, requires_grad=trainable, name="embedding")
        self.trainable = trainable
        self.frozen_rows = np.asarray(sorted(frozen_rows), dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]

    def embed(self, token_indices: Sequence[int]) -> Tensor:
        idx = list(token_indices)
        if not idx:
            return Tensor(np.zeros((0, self.dim), dtype=self.matrix.dtype))
        return gather_rows(self.matrix, idx)

    def freeze_gradient(self) -> None:
        """Zero gradient rows that must not move (UNK)."""
        if self.matrix.grad is not None and self.frozen_rows.size:
            self.matrix.grad[self.frozen_rows] = 0


def random_table(vocab: Vocabulary, r: int, rng: np.random.Generator, dtype=np.float32, scale: float = 0.01):
    return (rng.standard_normal((len(vocab), r)) * scale).astype(dtype)


def load_pretrained(
    path,
    vocab: Vocabulary,
    r: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> EmbeddingTable:
    """Build an embedding table from a whitespace-separated vector file.

    Covered tokens copy their file vector. Other tokens, including the
    sentence markers, draw from N(0, 0.01^2). UNK is the mean of the loaded
    vectors and stays frozen.
    """
    matrix = random_table(vocab, r, rng, dtype=np.float64)
    loaded = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.rstrip().split(" ")
            if len(fields) < 2:
                raise ParseError("expected a token followed by numbers", lineno)
            if lineno == 1 and len(fields) - 1 != r:
                raise ConfigError(f"vector file has dimension {len(fields) - 1}, configured r={r}")
            if len(fields) - 1 != r:
                raise ParseError(f"expected {r} values, found {len(fields) - 1}", lineno)
            idx = vocab.token_to_index.get(fields[0])
            if idx is None or fields[0] in SPECIALS:
                continue
            try:
                matrix[idx] = np.array(fields[1:], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric value: {exc}", lineno) from None
            loaded[idx] = True
    unk = vocab.unk_index
    if loaded.any():
        matrix[unk] = matrix[loaded].mean(axis=0)
    else:
        logger.warning("no vocabulary token found in %s; all rows are random", path)
    logger.info("pretrained coverage: %d / %d tokens", int(loaded.sum()), len(vocab.words()))
    return EmbeddingTable(matrix.astype(dtype), trainable=True, frozen_rows=[unk])


def init_embeddings(vocab: Vocabulary, r: int, rng: np.random.Generator, path=None, dtype=np.float32) -> EmbeddingTable:
    if path is not None:
        return load_pretrained(path, vocab, r, rng, dtype=dtype)
    return EmbeddingTable(random_table(vocab, r, rng, dtype=dtype), trainable=True, frozen_rows=[vocab.unk_index])

