"""Full DR-BiLSTM forward pass: parameters, MLP classifier and log-loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attention import AlignmentOutput, ProjectionParams, align, energy, enrich_project
from .config import ModelConfig
from .data import LABELS, label_index
from .embeddings import EmbeddingTable, Vocabulary, random_table
from .encoder import BiLstmParams, multi_round_encode
from .errors import ContractError, ShapeError
from .inference import dependent_inference, dual_max_pool, pool_fixed
from .tensor import (
    Tensor,
    add,
    add_bias,
    concat,
    dropout,
    log,
    matmul,
    narrow,
    reshape,
    scale,
    softmax_rows,
    tanh,
)

PROB_FLOOR = 1e-12


@dataclass
class ModelParams:
    embedding: EmbeddingTable
    encoder: BiLstmParams
    projection: ProjectionParams
    inference: BiLstmParams
    mlp: dict

    def named_parameters(self) -> dict:
        out = {}
        if self.embedding.trainable:
            out["embedding"] = self.embedding.matrix
        out.update(self.encoder.named("encoder"))
        out["projection.W"] = self.projection.W
        out["projection.b"] = self.projection.b
        out.update(self.inference.named("inference"))
        for key, t in self.mlp.items():
            out[f"mlp.{key}"] = t
        return out

    def all_tensors(self) -> dict:
        """Every stored tensor, trainable or not."""
        named = self.named_parameters()
        named.setdefault("embedding", self.embedding.matrix)
        return named

    def parameter_count(self) -> int:
        return sum(t.size for t in self.all_tensors().values())

    def zero_grad(self) -> None:
        for t in self.named_parameters().values():
            t.grad = None


def init_params(
    config: ModelConfig,
    vocab_size: int,
    rng: Optional[np.random.Generator] = None,
    embedding: Optional[EmbeddingTable] = None,
    unk_index: Optional[int] = None,
) -> ModelParams:
    """Fresh parameters; the shapes depend only on ``config`` and ``vocab_size``."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    dtype = config.np_dtype
    if embedding is None:
        matrix = (rng.standard_normal((vocab_size, config.r)) * 0.01).astype(dtype)
        frozen = [] if unk_index is None else [unk_index]
        embedding = EmbeddingTable(matrix, trainable=True, frozen_rows=frozen)
    elif embedding.matrix.shape != (vocab_size, config.r):
        raise ShapeError(f"embedding {embedding.matrix.shape} does not match ({vocab_size}, {config.r})")
    d = config.d
    encoder = BiLstmParams.init(config.r, d, rng, dtype)
    projection = ProjectionParams.init(config.enrichment_width, d, rng, config.projection_activation, dtype)
    inference = BiLstmParams.init(d, d, rng, dtype)
    mlp_in = 2 * config.pooled_width
    mlp = {}
    if config.hidden_mlp:
        h = config.hidden_width
        mlp["W_h"] = _glorot(rng, mlp_in, h, dtype, "mlp.W_h")
        mlp["b_h"] = Tensor(np.zeros(h, dtype=dtype), requires_grad=True, name="mlp.b_h")
        mlp["W_o"] = _glorot(rng, h, len(LABELS), dtype, "mlp.W_o")
    else:
        mlp["W_o"] = _glorot(rng, mlp_in, len(LABELS), dtype, "mlp.W_o")
    mlp["b_o"] = Tensor(np.zeros(len(LABELS), dtype=dtype), requires_grad=True, name="mlp.b_o")
    return ModelParams(embedding, encoder, projection, inference, mlp)


def build_model(config: ModelConfig, vocab: Vocabulary, rng=None, embedding=None) -> ModelParams:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if embedding is None:
        embedding = EmbeddingTable(
            random_table(vocab, config.r, rng, dtype=config.np_dtype), trainable=True, frozen_rows=[vocab.unk_index]
        )
    return init_params(config, len(vocab), rng, embedding)


def _glorot(rng, fan_in, fan_out, dtype, name):
    k = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-k, k, (fan_in, fan_out)).astype(dtype), requires_grad=True, name=name)


@dataclass
class Prediction:
    probs: np.ndarray
    label: str

    @classmethod
    def from_probs(cls, probs) -> "Prediction":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(probs, LABELS[int(np.argmax(probs))])


@dataclass
class ForwardOutput:
    probs: Tensor
    alignment: AlignmentOutput

    @property
    def prediction(self) -> Prediction:
        return Prediction.from_probs(self.probs.data)


def mlp(U: Tensor, V: Tensor, params: ModelParams, config: ModelConfig, training: bool = False, rng=None) -> Tensor:
    """Class distribution from the pooled vectors (tanh hidden layer, softmax output)."""
    x = concat([U, V], axis=0)
    expected = 2 * config.pooled_width
    if x.shape != (expected,):
        raise ShapeError(f"MLP input has shape {x.shape}, expected ({expected},)")
    x = reshape(dropout(x, config.dropout_rate, rng, training), (1, expected))
    w = params.mlp
    if config.hidden_mlp:
        x = tanh(add_bias(matmul(x, w["W_h"]), w["b_h"]))
        x = dropout(x, config.dropout_rate, rng, training)
    logits = add_bias(matmul(x, w["W_o"]), w["b_o"])
    return reshape(softmax_rows(logits), (len(LABELS),))


def _mask(length, total):
    mask = np.zeros(total, dtype=bool)
    mask[:length] = True
    return mask


def forward(
    params: ModelParams,
    config: ModelConfig,
    premise: Sequence[int],
    hypothesis: Sequence[int],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    premise_len: Optional[int] = None,
    hypothesis_len: Optional[int] = None,
) -> ForwardOutput:
    """Run one indexed sentence pair through the whole network.

    ``premise_len``/``hypothesis_len`` mark how many leading indices are real
    tokens; anything after them is padding and has no influence on the output.
    """
    n, m = len(premise), len(hypothesis)
    pl = n if premise_len is None else premise_len
    hl = m if hypothesis_len is None else hypothesis_len
    if pl < 1 or hl < 1 or pl > n or hl > m:
        raise ContractError("both sentences need at least one real token")
    pmask, hmask = _mask(pl, n), _mask(hl, m)
    rate = config.dropout_rate

    u = params.embedding.embed(premise)
    v = params.embedding.embed(hypothesis)
    u_hat, v_hat = multi_round_encode(u, v, params.encoder, config.encoder_rounds, pl, hl)

    al = align(energy(u_hat, v_hat), u_hat, v_hat, pmask, hmask)
    p = enrich_project(u_hat, al.u_tilde, params.projection, config.difference, config.elem_prod,
                       rate, rng, training, pmask)
    q = enrich_project(v_hat, al.v_tilde, params.projection, config.difference, config.elem_prod,
                       rate, rng, training, hmask)

    reads = dependent_inference(p, q, params.inference, pl, hl, dependent=config.dep_infer)
    if not config.dep_infer:
        p_tilde, q_tilde = reads.p_bar, reads.q_bar
    elif not config.inference_pooling:
        p_tilde, q_tilde = reads.p_hat, reads.q_hat
    else:
        p_tilde = dual_max_pool(reads.p_bar, reads.p_hat)
        q_tilde = dual_max_pool(reads.q_bar, reads.q_hat)

    U = pool_fixed(p_tilde, pl, config.max_pool, config.avg_pool)
    V = pool_fixed(q_tilde, hl, config.max_pool, config.avg_pool)
    return ForwardOutput(mlp(U, V, params, config, training, rng), al)


def loss(probs: Tensor, gold) -> Tensor:
    """Negative log-probability of the gold label (clamped away from zero)."""
    if isinstance(gold, str):
        gold = label_index(gold)
    if not 0 <= int(gold) < len(LABELS):
        raise ContractError(f"invalid label index {gold}")
    gold = int(gold)
    picked = narrow(probs, 0, gold, gold + 1)
    return reshape(scale(log(picked, floor=PROB_FLOOR), -1.0), ())


def mean_loss(losses: Sequence[Tensor]) -> Tensor:
    if not losses:
        raise ContractError("mean of no losses")
    total = losses[0]
    for t in losses[1:]:
        total = add(total, t)
    return scale(total, 1.0 / len(losses))
