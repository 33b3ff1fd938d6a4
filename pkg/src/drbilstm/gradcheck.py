"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import ContractError, NumericError
from .tensor import Tensor, backward, record_branches

PASS_THRESHOLD = 1e-4


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)


@dataclass
class ParamReport:
    name: str
    coords: list
    analytic: np.ndarray
    numeric: np.ndarray
    skipped: int = 0

    @property
    def errors(self) -> np.ndarray:
        return relative_error(self.analytic, self.numeric)

    @property
    def max_error(self) -> float:
        return float(self.errors.max()) if self.coords else 0.0


@dataclass
class GradCheckReport:
    params: list = field(default_factory=list)
    threshold: float = PASS_THRESHOLD

    @property
    def max_error(self) -> float:
        return max((p.max_error for p in self.params), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold

    def worst(self) -> Optional[ParamReport]:
        return max(self.params, key=lambda p: p.max_error, default=None)

    def lines(self):
        for p in self.params:
            yield f"{p.name:<28s} n={len(p.coords):<4d} skipped={p.skipped:<3d} max_rel_err={p.max_error:.3e}"

    @property
    def checked(self) -> int:
        return sum(len(p.coords) for p in self.params)

    @property
    def skipped(self) -> int:
        return sum(p.skipped for p in self.params)


def _evaluate(model_fn, what: str):
    with record_branches() as branches:
        value = model_fn()
    out = float(np.asarray(value.data).reshape(-1)[0])
    if not np.isfinite(out):
        raise NumericError(f"non-finite loss while perturbing {what}")
    return out, branches


def _same_branches(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(
    model_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-3,
    samples: Optional[int] = 20,
    rng: Optional[np.random.Generator] = None,
    threshold: float = PASS_THRESHOLD,
) -> GradCheckReport:
    """Compare backprop gradients against central differences.

    ``model_fn`` must rebuild the graph from the current parameter values on
    every call and be deterministic. ``samples`` coordinates are drawn per
    parameter (all of them when ``samples`` is None or exceeds the size).

    A coordinate whose stencil ``x +/- eps`` changes a piecewise decision
    (ReLU sign, max winner, clamp) is not differentiable on that interval, so
    the central difference says nothing about the gradient there. Such
    coordinates are skipped, counted, and replaced by fresh draws.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ContractError(f"gradient check needs 64-bit parameters; {name} is {p.data.dtype}")

    for p in params.values():
        p.grad = None
    loss = model_fn()
    backward(loss, params.values())

    report = GradCheckReport(threshold=threshold)
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite analytic gradient in {name}")
        flat = p.data.reshape(-1)
        n = flat.size
        want = n if samples is None else min(samples, n)
        order = rng.permutation(n)
        picks, numeric, skipped = [], [], 0
        for idx in order:
            if len(picks) == want:
                break
            orig = flat[idx]
            flat[idx] = orig + eps
            up, up_branches = _evaluate(model_fn, name)
            flat[idx] = orig - eps
            down, down_branches = _evaluate(model_fn, name)
            flat[idx] = orig
            if not _same_branches(up_branches, down_branches):
                skipped += 1
                continue
            picks.append(int(idx))
            numeric.append((up - down) / (2 * eps))
        picks = np.array(picks, dtype=np.int64)
        analytic = p.grad.reshape(-1)[picks].copy()
        coords = [tuple(int(c) for c in np.unravel_index(i, p.shape)) for i in picks]
        report.params.append(ParamReport(name, coords, analytic, np.array(numeric), skipped))
    return report


def generic_point(params, rng: np.random.Generator, embedding_scale: float = 1.0) -> None:
    """Move parameters away from the symmetric initial point.

    Zero biases and tiny embeddings put most activations within ``eps`` of
    zero, where finite differences say little about the gradient.
    """
    E = params.embedding.matrix.data
    E[...] = rng.standard_normal(E.shape) * embedding_scale
    for name, t in params.named_parameters().items():
        if name.rsplit(".", 1)[-1] in ("b", "b_h", "b_o"):
            t.data[...] = rng.uniform(-0.5, 0.5, t.shape)


def check_model(
    config,
    seed: int = 0,
    vocab_size: int = 20,
    max_len: int = 7,
    samples: Optional[int] = 30,
    eps: float = 1e-3,
) -> GradCheckReport:
    """Gradient check of the full network on one random sentence pair.

    Runs in 64-bit with dropout off; sentence lengths are drawn from
    [3, max_len].
    """
    from .model import forward, init_params, loss

    config = config.replace(dtype="float64", dropout_rate=0.0)
    rng = np.random.default_rng(seed)
    params = init_params(config, vocab_size, rng)
    generic_point(params, rng)
    n, m = (int(x) for x in rng.integers(3, max_len + 1, size=2))
    premise = [int(i) for i in rng.integers(0, vocab_size, n)]
    hypothesis = [int(i) for i in rng.integers(0, vocab_size, m)]
    gold = int(rng.integers(0, 3))

    def model_fn():
        return loss(forward(params, config, premise, hypothesis).probs, gold)

    return grad_check(model_fn, params.named_parameters(), eps=eps, samples=samples, rng=rng)
