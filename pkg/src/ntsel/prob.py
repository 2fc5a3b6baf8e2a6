"""Finite-alphabet probability primitives.

Distributions, stochastic matrices, joint distributions, empirical types,
divergences, and seeded sampling. All quantities are in nats. Types are
immutable after construction and operations are pure; parallel callers must
use distinct rng streams (see :func:`rng_stream`).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

# A probability below this is treated as a structural zero. Exact zeros are
# produced by the parametric minimizer formulas; the threshold only absorbs
# accumulated rounding.
ZERO_THRESHOLD = 1e-15

_SUM_TOL = 1e-12

Y_GIVEN_X = "y_given_x"
X_GIVEN_Y = "x_given_y"


class DimensionError(ValueError):
    """Shapes or alphabet sizes of the operands do not match."""


def _validated_probs(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"expected {ndim}-dimensional probabilities, got shape {arr.shape}")
    if arr.min(initial=0.0) < -ZERO_THRESHOLD:
        raise ValueError(f"negative probability entry: {arr.min()}")
    np.clip(arr, 0.0, None, out=arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Alphabet:
    """Finite symbol alphabet, optionally with human-readable labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("alphabet size must be >= 1")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise ValueError("labels length must equal alphabet size")
            if len(set(self.labels)) != self.size:
                raise ValueError("labels must be unique")


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _validated_probs(self.probs, 1)
        total = arr.sum()
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "probs", arr)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, size: int) -> "Distribution":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point_mass(cls, index: int, size: int) -> "Distribution":
        v = np.zeros(size)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def from_unnormalized(cls, weights) -> "Distribution":
        w = np.asarray(weights, dtype=float)
        s = w.sum()
        if s <= 0:
            raise ValueError("weights sum to zero")
        return cls(w / s)


@dataclass(frozen=True)
class StochasticMatrix:
    """Conditional probability table over X x Y.

    ``probs[x, y]`` always holds the conditional probability linking input
    symbol ``x`` and output symbol ``y``. The orientation tag says which
    variable is conditioned on: with ``y_given_x`` (channels P(y|x)) each row
    sums to 1, with ``x_given_y`` (auxiliary reverse conditionals, e.g. the
    decoder-side matrix) each column sums to 1.
    """

    probs: np.ndarray
    orientation: str = Y_GIVEN_X

    def __post_init__(self):
        if self.orientation not in (Y_GIVEN_X, X_GIVEN_Y):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        arr = _validated_probs(self.probs, 2)
        axis = 1 if self.orientation == Y_GIVEN_X else 0
        sums = arr.sum(axis=axis)
        if np.max(np.abs(sums - 1.0)) > _SUM_TOL:
            raise ValueError(f"conditional rows sum to {sums}, not 1")
        object.__setattr__(self, "probs", arr)

    @property
    def num_inputs(self) -> int:
        return self.probs.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class JointDistribution:
    """Probability matrix over the product alphabet X x Y."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _validated_probs(self.probs, 2)
        total = arr.sum()
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"joint probabilities sum to {total}, not 1")
        object.__setattr__(self, "probs", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape


@dataclass(frozen=True)
class EmpiricalType:
    """Joint empirical counts of two aligned symbol blocks."""

    counts: np.ndarray
    n: int

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.int64)
        if arr.ndim != 2 or arr.min(initial=0) < 0:
            raise ValueError("counts must be a nonnegative integer matrix")
        if arr.sum() != self.n:
            raise ValueError(f"counts sum to {arr.sum()}, expected n={self.n}")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    def to_joint(self) -> JointDistribution:
        return JointDistribution(self.counts / self.n)

    def x_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=1) / self.n

    def y_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=0) / self.n


def _probs_of(obj) -> np.ndarray:
    if isinstance(obj, (Distribution, JointDistribution, StochasticMatrix)):
        return obj.probs
    return np.asarray(obj, dtype=float)


def kl_divergence(p, q) -> float:
    """D(p || q) in nats; +inf where p puts mass outside q's support."""
    pa, qa = _probs_of(p), _probs_of(q)
    if pa.shape != qa.shape:
        raise DimensionError(f"shape mismatch {pa.shape} vs {qa.shape}")
    mask = pa > 0
    if np.any(qa[mask] <= 0):
        return float("inf")
    val = float(np.sum(pa[mask] * np.log(pa[mask] / qa[mask])))
    return max(val, 0.0)


def compose(q: Distribution, p: StochasticMatrix) -> JointDistribution:
    """Joint distribution (Q o P)(x, y) = Q(x) P(y|x)."""
    if p.orientation != Y_GIVEN_X:
        raise DimensionError("compose expects a forward channel (y_given_x)")
    if q.size != p.num_inputs:
        raise DimensionError(f"input alphabet mismatch: {q.size} vs {p.num_inputs}")
    return JointDistribution(q.probs[:, None] * p.probs)


def marginals(u: JointDistribution) -> tuple[Distribution, Distribution]:
    """(x-marginal, y-marginal) by exact row/column summation."""
    return Distribution(u.probs.sum(axis=1)), Distribution(u.probs.sum(axis=0))


def mutual_information(q: Distribution, p: StochasticMatrix) -> float:
    """I(Q o P) = D(Q o P || Q x marginal_y), in nats."""
    u = compose(q, p)
    ry = u.probs.sum(axis=0)
    return kl_divergence(u.probs, q.probs[:, None] * ry[None, :])


def conditional_x_given_y(u: JointDistribution) -> tuple[StochasticMatrix, np.ndarray]:
    """Reverse conditional U(x|y) plus a mask of y-columns where it is defined.

    Columns whose y-marginal falls below the structural-zero threshold are
    flagged undefined (mask False) and filled uniformly; the caller decides
    what to substitute there (e.g. carry a previous column over).
    """
    uy = u.probs.sum(axis=0)
    defined = uy > ZERO_THRESHOLD
    nx = u.probs.shape[0]
    cols = np.full_like(u.probs, 1.0 / nx)
    cols[:, defined] = u.probs[:, defined] / uy[defined]
    return StochasticMatrix(cols, X_GIVEN_Y), defined


def joint_type(x_block, y_block, num_x: int, num_y: int) -> EmpiricalType:
    """Empirical joint counts of two equal-length symbol blocks."""
    xs = np.asarray(x_block, dtype=np.int64)
    ys = np.asarray(y_block, dtype=np.int64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 1:
        raise DimensionError("blocks must be equal-length 1-D sequences of length >= 1")
    if xs.min() < 0 or xs.max() >= num_x or ys.min() < 0 or ys.max() >= num_y:
        raise ValueError("symbol outside the alphabet")
    counts = np.bincount(xs * num_y + ys, minlength=num_x * num_y).reshape(num_x, num_y)
    return EmpiricalType(counts, xs.size)


def rng_stream(seed: int, tag: str = "", index: int = 0) -> np.random.Generator:
    """Deterministic substream keyed by (session seed, purpose tag, index)."""
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, key, index]))


def sample_iid(d: Distribution, n: int, stream: np.random.Generator) -> np.ndarray:
    """n i.i.d. symbols from d via inverse-CDF over the alphabet order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cdf = np.cumsum(d.probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, stream.random(n), side="right").astype(np.int64)
