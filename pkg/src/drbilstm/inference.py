"""Dependent-reading aggregation of the matching vectors and fixed-length pooling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .encoder import BiLstmParams, bilstm
from .errors import ContractError, ShapeError
from .tensor import Tensor, concat, maximum, narrow, reduce


@dataclass
class InferenceReadings:
    p_bar: Tensor
    p_hat: Optional[Tensor]
    q_bar: Tensor
    q_hat: Optional[Tensor]


def dependent_inference(p: Tensor, q: Tensor, params: BiLstmParams, p_len=None, q_len=None, dependent: bool = True):
    """Independent and dependent BiLSTM reads of both matching sequences.

    With ``dependent=False`` the dependent reads are skipped and come back as
    None.
    """
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise ContractError("dependent_inference needs two non-empty sequences")
    q_bar, s_q = bilstm(q, None, params, q_len)
    p_bar, s_p = bilstm(p, None, params, p_len)
    if not dependent:
        return InferenceReadings(p_bar, None, q_bar, None)
    p_hat, _ = bilstm(p, s_q, params, p_len)
    q_hat, _ = bilstm(q, s_p, params, q_len)
    return InferenceReadings(p_bar, p_hat, q_bar, q_hat)


def dual_max_pool(x_bar: Tensor, x_hat: Tensor) -> Tensor:
    """Per position and channel, the larger of the two readings."""
    if x_bar.shape != x_hat.shape:
        raise ShapeError(f"dual_max_pool: shapes {x_bar.shape} and {x_hat.shape} differ")
    return maximum(x_bar, x_hat)


def pool_fixed(x: Tensor, length: Optional[int] = None, use_max: bool = True, use_avg: bool = True) -> Tensor:
    """Concatenated column max and column mean over the first ``length`` rows."""
    T = x.shape[0]
    length = T if length is None else length
    if length < 1 or length > T:
        raise ContractError(f"pool_fixed needs 1 <= length <= {T}, got {length}")
    if not (use_max or use_avg):
        raise ContractError("pool_fixed needs at least one of max and average pooling")
    real = x if length == T else narrow(x, 0, 0, length)
    parts = []
    if use_max:
        parts.append(reduce("max", real, axis=0))
    if use_avg:
        parts.append(reduce("mean", real, axis=0))
    return concat(parts, axis=0)
