"""Soft alignment between the two encoded sentences, enrichment and projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    add_bias,
    concat,
    dropout,
    mask_rows,
    matmul,
    mul,
    relu,
    softmax_rows,
    sub,
    tanh,
    transpose,
)

ACTIVATIONS = {"relu": relu, "tanh": tanh}


@dataclass
class ProjectionParams:
    """Shared projector applied to both enriched sequences."""

    W: Tensor
    b: Tensor
    activation: str = "relu"

    @classmethod
    def init(cls, in_dim: int, d: int, rng: np.random.Generator, activation: str = "relu", dtype=np.float32):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown projection activation {activation!r}")
        k = np.sqrt(6.0 / (in_dim + d))
        W = rng.uniform(-k, k, (in_dim, d)).astype(dtype)
        return cls(
            Tensor(W, requires_grad=True, name="proj.W"),
            Tensor(np.zeros(d, dtype=dtype), requires_grad=True, name="proj.b"),
            activation,
        )


@dataclass
class AlignmentOutput:
    energy: Tensor
    u_tilde: Tensor
    v_tilde: Tensor
    premise_weights: Tensor
    hypothesis_weights: Tensor


def energy(u_hat: Tensor, v_hat: Tensor) -> Tensor:
    """Unnormalised attention scores ``u_hat @ v_hat.T``."""
    if u_hat.data.ndim != 2 or v_hat.data.ndim != 2 or u_hat.shape[1] != v_hat.shape[1]:
        raise ShapeError(f"energy: encodings {u_hat.shape} and {v_hat.shape} do not share a width")
    return matmul(u_hat, transpose(v_hat))


def _as_mask(mask, n):
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ShapeError(f"mask of shape {mask.shape} for a sequence of length {n}")
    return mask


def align(E: Tensor, u_hat: Tensor, v_hat: Tensor, premise_mask=None, hypothesis_mask=None) -> AlignmentOutput:
    """Attend each token to the other sentence.

    Premise token i gets a softmax over row i of ``E`` (hypothesis tokens),
    hypothesis token j a softmax over column j (premise tokens). Padded tokens
    take no weight, and their own attended rows are zero.
    """
    n, m = E.shape
    if u_hat.shape[0] != n or v_hat.shape[0] != m:
        raise ShapeError(f"energy {E.shape} does not match encodings {u_hat.shape}, {v_hat.shape}")
    pm = _as_mask(premise_mask, n)
    hm = _as_mask(hypothesis_mask, m)
    w_p = softmax_rows(E, np.broadcast_to(hm, (n, m)))
    w_h = softmax_rows(transpose(E), np.broadcast_to(pm, (m, n)))
    u_tilde = matmul(w_p, v_hat)
    v_tilde = matmul(w_h, u_hat)
    if not pm.all():
        u_tilde = mask_rows(u_tilde, pm)
    if not hm.all():
        v_tilde = mask_rows(v_tilde, hm)
    return AlignmentOutput(E, u_tilde, v_tilde, w_p, w_h)


def enrichment_width(width: int, use_difference: bool = True, use_product: bool = True) -> int:
    return width * (2 + int(use_difference) + int(use_product))


def enrich(x_hat: Tensor, x_tilde: Tensor, use_difference: bool = True, use_product: bool = True) -> Tensor:
    """Row-wise ``[x_hat, x_tilde, x_hat - x_tilde, x_hat * x_tilde]``."""
    if x_hat.shape != x_tilde.shape:
        raise ShapeError(f"enrich: shapes {x_hat.shape} and {x_tilde.shape} differ")
    parts = [x_hat, x_tilde]
    if use_difference:
        parts.append(sub(x_hat, x_tilde))
    if use_product:
        parts.append(mul(x_hat, x_tilde))
    return concat(parts, axis=1)


def enrich_project(
    x_hat: Tensor,
    x_tilde: Tensor,
    params: ProjectionParams,
    use_difference: bool = True,
    use_product: bool = True,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
    mask=None,
) -> Tensor:
    a = enrich(x_hat, x_tilde, use_difference, use_product)
    if a.shape[1] != params.W.shape[0]:
        raise ShapeError(f"enriched width {a.shape[1]} does not match projector {params.W.shape}")
    a = dropout(a, dropout_rate, rng, training)
    out = ACTIVATIONS[params.activation](add_bias(matmul(a, params.W), params.b))
    if mask is not None and not np.all(mask):
        out = mask_rows(out, mask)
    return out
