"""Bidirectional LSTM with state injection (dependent reading)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError
from .tensor import Tensor, add, add_bias, concat, matmul, mul, narrow, reshape, row, sigmoid, tanh

# gate blocks inside the 4d pre-activation: input, forget, cell, output


@dataclass
class LstmParams:
    """One direction: input weights W, recurrent weights R, bias b."""

    W: Tensor
    R: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.R.shape[0]

    @classmethod
    def init(cls, input_dim: int, d: int, rng: np.random.Generator, dtype=np.float32, prefix: str = "") -> "LstmParams":
        k = 1.0 / np.sqrt(d)
        W = rng.uniform(-k, k, (input_dim, 4 * d)).astype(dtype)
        R = rng.uniform(-k, k, (d, 4 * d)).astype(dtype)
        b = np.zeros(4 * d, dtype=dtype)
        b[d:2 * d] = 1.0
        return cls(
            Tensor(W, requires_grad=True, name=prefix + "W"),
            Tensor(R, requires_grad=True, name=prefix + "R"),
            Tensor(b, requires_grad=True, name=prefix + "b"),
        )

    def tensors(self) -> dict:
        return {"W": self.W, "R": self.R, "b": self.b}


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    @classmethod
    def init(cls, input_dim: int, d: int, rng: np.random.Generator, dtype=np.float32) -> "BiLstmParams":
        return cls(LstmParams.init(input_dim, d, rng, dtype), LstmParams.init(input_dim, d, rng, dtype))

    def named(self, prefix: str) -> dict:
        out = {}
        for direction, p in (("fwd", self.fwd), ("bwd", self.bwd)):
            for key, t in p.tensors().items():
                out[f"{prefix}.{direction}.{key}"] = t
        return out


@dataclass
class CellState:
    h: Tensor
    c: Tensor


@dataclass
class RnnState:
    fwd: CellState
    bwd: CellState

    @classmethod
    def zeros(cls, d: int, dtype=np.float32) -> "RnnState":
        def z():
            return Tensor(np.zeros(d, dtype=dtype))

        return cls(CellState(z(), z()), CellState(z(), z()))


def lstm_cell(x_t: Tensor, state: CellState, params: LstmParams):
    """One LSTM step built from primitive tensor ops. Returns ``(h, new_state)``."""
    d = params.hidden
    if x_t.shape != (params.W.shape[0],) or state.h.shape != (d,) or state.c.shape != (d,):
        raise ShapeError(
            f"lstm_cell: input {x_t.shape}, state {state.h.shape}/{state.c.shape} "
            f"do not fit W {params.W.shape}, R {params.R.shape}"
        )
    z = add(matmul(reshape(x_t, (1, -1)), params.W), matmul(reshape(state.h, (1, -1)), params.R))
    z = add_bias(reshape(z, (4 * d,)), params.b)
    i = sigmoid(narrow(z, 0, 0, d))
    f = sigmoid(narrow(z, 0, d, 2 * d))
    g = tanh(narrow(z, 0, 2 * d, 3 * d))
    o = sigmoid(narrow(z, 0, 3 * d, 4 * d))
    c = add(mul(f, state.c), mul(i, g))
    h = mul(o, tanh(c))
    if not (np.all(np.isfinite(h.data)) and np.all(np.isfinite(c.data))):
        raise NumericError("non-finite LSTM state")
    return h, CellState(h, c)


def _gate_sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_sequence(seq: Tensor, init: CellState, params: LstmParams, reverse: bool = False):
    """Run one direction over every row of ``seq`` as a single tape node.

    Returns ``(hiddens, final_state)`` where ``hiddens[t]`` is the state after
    reading token ``t`` (in sequence order even when ``reverse``).
    """
    X, W, R, bias = seq.data, params.W.data, params.R.data, params.b.data
    T = X.shape[0]
    d = R.shape[0]
    if X.ndim != 2 or X.shape[1] != W.shape[0]:
        raise ShapeError(f"sequence {X.shape} does not fit input weights {W.shape}")
    h0, c0 = init.h.data, init.c.data
    if h0.shape != (d,) or c0.shape != (d,):
        raise ShapeError(f"initial state {h0.shape}/{c0.shape} does not match hidden size {d}")

    order = range(T - 1, -1, -1) if reverse else range(T)
    Zx = X @ W + bias
    gates = np.empty((T, 4 * d), dtype=X.dtype)
    tanh_c = np.empty((T, d), dtype=X.dtype)
    h_prev = np.empty((T, d), dtype=X.dtype)
    c_prev = np.empty((T, d), dtype=X.dtype)
    H = np.empty((T, d), dtype=X.dtype)
    h, c = h0, c0
    for t in order:
        h_prev[t] = h
        c_prev[t] = c
        z = Zx[t] + h @ R
        gt = gates[t]
        gt[:2 * d] = _gate_sigmoid(z[:2 * d])
        gt[2 * d:3 * d] = np.tanh(z[2 * d:3 * d])
        gt[3 * d:] = _gate_sigmoid(z[3 * d:])
        c = gt[d:2 * d] * c + gt[:d] * gt[2 * d:3 * d]
        tc = np.tanh(c)
        h = gt[3 * d:] * tc
        tanh_c[t] = tc
        H[t] = h
    Y = np.concatenate([H, h[None, :], c[None, :]], axis=0).astype(X.dtype)
    if not np.all(np.isfinite(Y)):
        raise NumericError("non-finite LSTM state")

    def backward(dY):
        dH = dY[:T]
        dh = dY[T].copy()
        dc = dY[T + 1].copy()
        dZ = np.empty((T, 4 * d), dtype=dY.dtype)
        for t in reversed(order):
            gt = gates[t]
            i, f, g, o = gt[:d], gt[d:2 * d], gt[2 * d:3 * d], gt[3 * d:]
            tc = tanh_c[t]
            dh_t = dH[t] + dh
            dc_t = dc + dh_t * o * (1.0 - tc * tc)
            dz = dZ[t]
            dz[:d] = dc_t * g * i * (1.0 - i)
            dz[d:2 * d] = dc_t * c_prev[t] * f * (1.0 - f)
            dz[2 * d:3 * d] = dc_t * i * (1.0 - g * g)
            dz[3 * d:] = dh_t * tc * o * (1.0 - o)
            dh = dz @ R.T
            dc = dc_t * f
        return (dZ @ W.T, dh, dc, X.T @ dZ, h_prev.T @ dZ, dZ.sum(axis=0))

    out = Tensor._result(Y, (seq, init.h, init.c, params.W, params.R, params.b), backward, "lstm")
    return narrow(out, 0, 0, T), CellState(row(out, T), row(out, T + 1))


def bilstm(seq: Tensor, init: Optional[RnnState], params: BiLstmParams, length: Optional[int] = None):
    """Bidirectional read of ``seq`` from ``init`` (zero state when None).

    Only the first ``length`` rows are read; rows beyond it come back as zeros
    and never touch the final state. Returns ``(hiddens [T x 2d], final)``.
    """
    T = seq.shape[0]
    length = T if length is None else length
    if length < 1 or length > T:
        raise ContractError(f"bilstm needs 1 <= length <= {T}, got length={length}")
    d = params.fwd.hidden
    if init is None:
        init = RnnState.zeros(d, dtype=params.fwd.W.dtype)
    real = seq if length == T else narrow(seq, 0, 0, length)
    hf, sf = lstm_sequence(real, init.fwd, params.fwd)
    hb, sb = lstm_sequence(real, init.bwd, params.bwd, reverse=True)
    hiddens = concat([hf, hb], axis=1)
    if length < T:
        pad = Tensor(np.zeros((T - length, 2 * d), dtype=hiddens.dtype))
        hiddens = concat([hiddens, pad], axis=0)
    return hiddens, RnnState(sf, sb)


@dataclass
class Encoding:
    u_hat: Tensor
    v_hat: Tensor
    u_bar: Tensor
    v_bar: Tensor
    s_u: RnnState
    s_v: RnnState


def dependent_encode(u, v, params: BiLstmParams, u_len=None, v_len=None, dependent: bool = True) -> Encoding:
    """Read each sentence from the final state of an independent read of the other."""
    if u.shape[0] == 0 or v.shape[0] == 0:
        raise ContractError("dependent_encode needs two non-empty sequences")
    v_bar, s_v = bilstm(v, None, params, v_len)
    u_bar, s_u = bilstm(u, None, params, u_len)
    if not dependent:
        return Encoding(u_bar, v_bar, u_bar, v_bar, s_u, s_v)
    u_hat, _ = bilstm(u, s_v, params, u_len)
    v_hat, _ = bilstm(v, s_u, params, v_len)
    return Encoding(u_hat, v_hat, u_bar, v_bar, s_u, s_v)


def multi_round_encode(u, v, params: BiLstmParams, rounds: int = 2, u_len=None, v_len=None):
    """Return ``(u_hat, v_hat)`` after 1, 2 or 3 rounds of dependent reading.

    One round is the plain independent read; two rounds is
    :func:`dependent_encode`; three rounds threads the state
    other -> self -> other before the final read of each sentence.
    """
    if rounds not in (1, 2, 3):
        raise ConfigError(f"unsupported number of dependent-reading rounds: {rounds}")
    if u.shape[0] == 0 or v.shape[0] == 0:
        raise ContractError("multi_round_encode needs two non-empty sequences")
    if rounds == 1:
        return bilstm(u, None, params, u_len)[0], bilstm(v, None, params, v_len)[0]
    if rounds == 2:
        enc = dependent_encode(u, v, params, u_len, v_len)
        return enc.u_hat, enc.v_hat

    seqs = {"u": (u, u_len), "v": (v, v_len)}

    def chained(target, other):
        state = None
        for name in (other, target, other):
            seq, n = seqs[name]
            _, state = bilstm(seq, state, params, n)
        seq, n = seqs[target]
        return bilstm(seq, state, params, n)[0]

    return chained("u", "v"), chained("v", "u")
