"""Stochastic block-level simulation of the 1-bit-feedback adaptation scheme.

Random codebooks, channel transmission, ML decoding, the threshold feedback
bit computed from the joint type of the (decoded) codeword and the received
block, per-block parameter updates, drifting-channel sessions, and the
Monte-Carlo verification that accepted types concentrate on the update
exponent's minimizer.

A "genie" decoder mode hands the decoder the transmitted codeword, realizing
the large-blocklength idealization in which the estimated type equals the true
type; it also removes the e^{nR} codebook-size barrier, so large-n experiments
stay tractable. ML mode keeps the honest protocol at small n*R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .prob import (
    Distribution,
    EmpiricalType,
    StochasticMatrix,
    X_GIVEN_Y,
    ZERO_THRESHOLD,
    conditional_x_given_y,
    joint_type,
    rng_stream,
    sample_iid,
)
from .engine import SystemState
from .exponents import error_exponent, update_exponent

MAX_CODEBOOK = 2**20

ML = "ml"
GENIE = "genie"


class ConfigurationError(ValueError):
    """Simulation configuration violates a desk-scale guard."""


class InfeasibleExperimentError(RuntimeError):
    """Acceptance rate too low to sample; lower n or the threshold."""


@dataclass(frozen=True)
class SimConfig:
    n: int
    rate: float
    t: float
    seed: int
    blocks: int
    decoder_mode: str = ML

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("blocklength n must be >= 1")
        if self.decoder_mode not in (ML, GENIE):
            raise ConfigurationError(f"unknown decoder mode {self.decoder_mode!r}")
        if not math.isfinite(self.rate):
            raise ConfigurationError("rate must be finite")
        if self.decoder_mode == ML and self.codebook_size > MAX_CODEBOOK:
            raise ConfigurationError(
                f"ml mode needs ceil(e^(nR)) = {self.codebook_size} <= {MAX_CODEBOOK}"
            )

    @property
    def codebook_size(self) -> int:
        nr = self.n * self.rate
        if nr > 30:  # far past the desk-scale cap; avoid exp overflow
            return 2**63
        return int(math.ceil(math.exp(nr)))


@dataclass
class BlockResult:
    block_index: int
    sent_msg: int
    decoded_msg: int | None
    decode_correct: bool
    r_hat: EmpiricalType | None
    statistic: float
    feedback: int
    state_updated: bool


@dataclass(frozen=True)
class DriftSchedule:
    segments: tuple[tuple[int, StochasticMatrix], ...]

    def __post_init__(self):
        starts = [s for s, _ in self.segments]
        if not starts or starts[0] != 0:
            raise ValueError("first segment must start at block 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start blocks must be strictly increasing")

    @classmethod
    def static(cls, p: StochasticMatrix) -> "DriftSchedule":
        return cls(((0, p),))

    def channel_at(self, block: int) -> StochasticMatrix:
        current = self.segments[0][1]
        for start, p in self.segments:
            if block >= start:
                current = p
        return current


@dataclass
class SegmentSummary:
    start_block: int
    end_block: int
    blocks: int
    updates: int
    update_frequency: float
    decode_errors: int
    mean_accepted_type: np.ndarray | None
    e_hat: float
    e_r: float
    mutual_information: float


@dataclass
class SessionTrace:
    blocks: list[BlockResult]
    segments: list[SegmentSummary]
    final_state: SystemState
    update_count: int


def generate_codebook(q: Distribution, n: int, rate: float, stream: np.random.Generator) -> np.ndarray:
    """ceil(e^{nR}) codewords of length n, each symbol i.i.d. from q."""
    m = int(math.ceil(math.exp(n * rate)))
    if m > MAX_CODEBOOK:
        raise ConfigurationError(f"codebook size {m} exceeds the desk-scale cap {MAX_CODEBOOK}")
    return sample_iid(q, m * n, stream).reshape(m, n)


def transmit(codeword: np.ndarray, p: StochasticMatrix, stream: np.random.Generator) -> np.ndarray:
    """Pass a codeword through the memoryless channel, one draw per symbol."""
    cum = np.cumsum(p.probs, axis=1)
    cum[:, -1] = 1.0
    u = stream.random(len(codeword))
    return (u[:, None] >= cum[codeword]).sum(axis=1).astype(np.int64)


def ml_decode(codebook: np.ndarray, y_block: np.ndarray, p: StochasticMatrix) -> tuple[int | None, float]:
    """Maximum-likelihood message, ties broken toward the smallest index.

    Returns (None, -inf) when every codeword has zero likelihood.
    """
    with np.errstate(divide="ignore"):
        logp = np.where(p.probs > 0, np.log(np.where(p.probs > 0, p.probs, 1.0)), -np.inf)
    ll = logp[codebook, y_block[None, :]].sum(axis=1)
    best = int(np.argmax(ll))
    if ll[best] == -np.inf:
        return None, float("-inf")
    return best, float(ll[best])


def type_statistic(r_hat: EmpiricalType, phi: StochasticMatrix) -> float:
    """sum r(x,y) log(phi(x|y)/r(x)); -inf where the type leaves phi's support."""
    r = r_hat.counts / r_hat.n
    rx = r.sum(axis=1)
    mask = r > 0
    if np.any(phi.probs[mask] <= 0):
        return float("-inf")
    ratio = phi.probs[mask] / np.broadcast_to(rx[:, None], r.shape)[mask]
    return float(np.sum(r[mask] * np.log(ratio)))


def feedback_bit(r_hat: EmpiricalType, phi: StochasticMatrix, t: float) -> int:
    """1 iff the type statistic reaches the threshold (ties accept)."""
    return int(type_statistic(r_hat, phi) >= t)


def apply_type_update(state: SystemState, r_hat: EmpiricalType) -> SystemState:
    """Q <- type's x-marginal; phi columns <- reverse conditional type where
    the y-marginal is positive, previous columns carried over elsewhere."""
    new_q = Distribution(r_hat.x_marginal())
    cond, defined = conditional_x_given_y(r_hat.to_joint())
    cols = np.where(defined[None, :], cond.probs, state.phi.probs)
    return SystemState(new_q, StochasticMatrix(cols, X_GIVEN_Y), state.l + 1)


def simulate_block(
    state: SystemState,
    config: SimConfig,
    p: StochasticMatrix,
    stream: np.random.Generator,
    codebook: np.ndarray | None = None,
    block_index: int = 0,
) -> tuple[SystemState, BlockResult]:
    """One transmission round: send, receive, decode, feed back, update."""
    n = config.n
    nx, ny = p.probs.shape
    if config.decoder_mode == GENIE:
        # Same sampling path as ml mode whenever a codebook is available, so
        # the two modes trace identically on noiseless channels; without one
        # (large n*R) the sent codeword is drawn i.i.d. directly.
        if codebook is not None:
            sent_msg = int(stream.integers(codebook.shape[0]))
            x = codebook[sent_msg]
        else:
            sent_msg = 0
            x = sample_iid(state.q, n, stream)
        y = transmit(x, p, stream)
        decoded_msg, decode_correct = None, True
        r_hat = joint_type(x, y, nx, ny)
    else:
        if codebook is None:
            codebook = generate_codebook(state.q, n, config.rate, stream)
        sent_msg = int(stream.integers(codebook.shape[0]))
        y = transmit(codebook[sent_msg], p, stream)
        decoded_msg, _ = ml_decode(codebook, y, p)
        decode_correct = decoded_msg == sent_msg
        if decoded_msg is None:
            result = BlockResult(block_index, sent_msg, None, False, None,
                                 float("-inf"), 0, False)
            return state, result
        r_hat = joint_type(codebook[decoded_msg], y, nx, ny)

    stat = type_statistic(r_hat, state.phi)
    f = int(stat >= config.t)
    if f == 1:
        state = apply_type_update(state, r_hat)
    result = BlockResult(block_index, sent_msg, decoded_msg, decode_correct,
                         r_hat, stat, f, f == 1)
    return state, result


def _segment_summary(
    start: int, end: int, rows: list[BlockResult],
    state: SystemState, p: StochasticMatrix, config: SimConfig,
) -> SegmentSummary:
    from .prob import mutual_information

    seg = [r for r in rows if start <= r.block_index < end]
    updates = sum(r.state_updated for r in seg)
    accepted = [r.r_hat.counts / r.r_hat.n for r in seg if r.feedback == 1]
    mean_type = np.mean(accepted, axis=0) if accepted else None
    sol = update_exponent(config.t, state.q, state.phi, p)
    er = error_exponent(config.rate, state.q, p)
    return SegmentSummary(
        start_block=start,
        end_block=end,
        blocks=len(seg),
        updates=updates,
        update_frequency=updates / len(seg) if seg else 0.0,
        decode_errors=sum(not r.decode_correct for r in seg),
        mean_accepted_type=mean_type,
        e_hat=sol.value if sol.feasible else float("inf"),
        e_r=er.value,
        mutual_information=mutual_information(state.q, p),
    )


def run_session(initial: SystemState, config: SimConfig, drift: DriftSchedule) -> SessionTrace:
    """Run config.blocks transmission rounds, switching the channel per the
    drift schedule.

    All randomness derives from the config seed: block b uses substream
    ("block", b); codebook number k (regenerated on the block after the k-th
    update, shared by encoder and decoder) uses substream ("codebook", k).
    """
    state = initial
    update_count = 0

    def fresh_codebook(k: int):
        # genie mode shares the codebook when it fits, so that the two
        # decoder modes use identical randomness on clean channels
        if config.decoder_mode == ML or config.codebook_size <= MAX_CODEBOOK:
            return generate_codebook(state.q, config.n, config.rate,
                                     rng_stream(config.seed, "codebook", k))
        return None

    codebook = fresh_codebook(0)
    rows: list[BlockResult] = []
    boundaries = [s for s, _ in drift.segments] + [config.blocks]
    end_states: dict[int, SystemState] = {}

    for b in range(config.blocks):
        p = drift.channel_at(b)
        stream = rng_stream(config.seed, "block", b)
        state, result = simulate_block(state, config, p, stream, codebook, b)
        rows.append(result)
        if result.state_updated:
            update_count += 1
            codebook = fresh_codebook(update_count)
        end_states[b + 1] = state

    segments = []
    for (start, p), end in zip(drift.segments, boundaries[1:]):
        if start >= config.blocks:
            break
        end = min(end, config.blocks)
        # each segment is scored with the state reached by its last block
        segments.append(_segment_summary(start, end, rows, end_states.get(end, state), p, config))
    return SessionTrace(rows, segments, state, update_count)


def _chunk_statistics(
    q: np.ndarray, p: np.ndarray, phi: np.ndarray, n: int, k: int,
    stream: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Joint-type counts and feedback statistics for k genie blocks at once.

    The joint type of n i.i.d. (x, y) pairs is exactly multinomial(n, Q o P),
    so types are drawn directly instead of symbol by symbol.
    """
    nx, ny = p.shape
    joint = (q[:, None] * p).ravel()
    joint = joint / joint.sum()
    counts = stream.multinomial(n, joint, size=k)
    r = counts / n
    log_phi = np.where(phi > 0, np.log(np.where(phi > 0, phi, 1.0)), -1e30).ravel()
    rx = r.reshape(k, nx, ny).sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(rx > 0, rx * np.log(np.where(rx > 0, rx, 1.0)), 0.0).sum(axis=1)
    stats = r @ log_phi + ent
    return counts, stats


def verify_type_concentration(
    state: SystemState,
    config: SimConfig,
    p: StochasticMatrix,
    num_accepted_target: int,
    chunk: int = 20_000,
    min_rate: float = 1e-6,
) -> dict:
    """Sample genie blocks without applying updates, keep those with feedback 1,
    and compare the mean accepted type and the empirical acceptance exponent
    against the update exponent's minimizer and value."""
    sol = update_exponent(config.t, state.q, state.phi, p)
    if not sol.feasible:
        raise InfeasibleExperimentError("update exponent is infeasible at this state")
    nx, ny = p.probs.shape
    n = config.n
    accepted = 0
    total = 0
    type_sum = np.zeros(nx * ny)
    index = 0
    while accepted < num_accepted_target:
        stream = rng_stream(config.seed, "concentration", index)
        index += 1
        counts, stats = _chunk_statistics(state.q.probs, p.probs, state.phi.probs, n, chunk, stream)
        keep = stats >= config.t
        accepted += int(keep.sum())
        type_sum += counts[keep].sum(axis=0) / n
        total += chunk
        if total >= max(2_000_000, 10 * num_accepted_target) and accepted / total < min_rate:
            raise InfeasibleExperimentError(
                f"acceptance rate {accepted / total:.2e} below {min_rate}; lower n or the threshold"
            )
    rate = accepted / total
    mean_type = (type_sum / accepted).reshape(nx, ny)
    l1 = float(np.abs(mean_type - sol.minimizer.probs).sum())
    return {
        "accepted": accepted,
        "total_blocks": total,
        "acceptance_rate": rate,
        "mean_type": mean_type,
        "l1_to_minimizer": l1,
        "empirical_exponent": -math.log(rate) / n,
        "e_hat": sol.value,
    }


def acceptance_exponent_regression(reports: list[dict], lengths: list[int]) -> float:
    """Least-squares slope of -log(acceptance rate) against blocklength.

    At a fixed threshold the acceptance probability decays like
    poly(n) * e^{-n*E}; regressing over several n strips the polynomial
    prefactor, leaving the exponent.
    """
    x = np.asarray(lengths, dtype=float)
    y = -np.log([r["acceptance_rate"] for r in reports])
    dx = x - x.mean()
    return float(np.dot(dx, y - y.mean()) / np.dot(dx, dx))


def tune_threshold(
    q: Distribution,
    phi: StochasticMatrix,
    p: StochasticMatrix,
    n: int,
    target_n_e_hat: float = 3.0,
) -> float:
    """Bisect the threshold just above T0 so that n * update exponent hits the
    target, keeping the acceptance probability e^{-n*E} sampleable."""
    from .exponents import threshold_t0

    t0 = threshold_t0(q, phi, p)
    lo, hi = t0, t0 + 0.2
    while update_exponent(hi, q, phi, p).value * n < target_n_e_hat:
        hi = t0 + 2 * (hi - t0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if update_exponent(mid, q, phi, p).value * n < target_n_e_hat:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
