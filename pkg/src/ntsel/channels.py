"""Reference channels and capacity via alternating maximization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .prob import Distribution, StochasticMatrix, Y_GIVEN_X, mutual_information

CAPACITY_TOL = 1e-9
CAPACITY_MAX_ITERS = 100_000


@dataclass(frozen=True)
class CapacityResult:
    c: float
    q_star: Distribution
    iterations: int
    gap_bound: float


def _check_param(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def bsc(crossover: float) -> StochasticMatrix:
    e = _check_param(crossover, "crossover")
    return StochasticMatrix(np.array([[1 - e, e], [e, 1 - e]]), Y_GIVEN_X)


def bec(erasure: float) -> StochasticMatrix:
    """Binary erasure channel; output symbol 2 is the erasure."""
    e = _check_param(erasure, "erasure")
    return StochasticMatrix(np.array([[1 - e, 0.0, e], [0.0, 1 - e, e]]), Y_GIVEN_X)


def identity_channel(k: int) -> StochasticMatrix:
    if k < 2:
        raise ValueError("identity channel needs k >= 2")
    return StochasticMatrix(np.eye(k), Y_GIVEN_X)


def z_channel(crossover: float) -> StochasticMatrix:
    """Input 1 flips to 0 with the given probability; input 0 is noiseless."""
    e = _check_param(crossover, "crossover")
    return StochasticMatrix(np.array([[1.0, 0.0], [e, 1 - e]]), Y_GIVEN_X)


CHANNEL_CONSTRUCTORS = {
    "bsc": bsc,
    "bec": bec,
    "identity": identity_channel,
    "z": z_channel,
}


def binary_entropy(p: float) -> float:
    """Binary entropy in nats."""
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def blahut_arimoto_capacity(
    p: StochasticMatrix,
    tol: float = CAPACITY_TOL,
    max_iters: int = CAPACITY_MAX_ITERS,
) -> CapacityResult:
    """Channel capacity in nats by alternating maximization of I(Q o P).

    Stops when the standard upper/lower capacity bounds pinch to within tol;
    the reported c is the lower bound, so c >= I(q_star o P).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = p.probs
    nx = w.shape[0]
    q = np.full(nx, 1.0 / nx)
    lower = 0.0
    gap = float("inf")
    iters = 0
    mask = w > 0
    logw = np.zeros_like(w)
    logw[mask] = np.log(w[mask])
    for iters in range(1, max_iters + 1):
        out = q @ w
        # d[x] = D(P(.|x) || out)
        log_out = np.where(out > 0, np.log(out), 0.0)
        d = (w * (logw - log_out[None, :])).sum(axis=1)
        upper = float(d.max())
        weights = q * np.exp(d - upper)
        total = weights.sum()
        lower = upper + math.log(total)
        gap = upper - lower
        q = weights / total
        if gap <= tol:
            break
    return CapacityResult(c=lower, q_star=Distribution(q), iterations=iters, gap_bound=gap)
