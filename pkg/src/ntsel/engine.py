"""Deterministic iteration engine for the input-adaptation scheme.

Repeatedly replaces the pair (Q, phi) by the marginal and reverse conditional
of the joint distribution achieving the update exponent, driving the exponent
monotonically downward. Classifies the terminal behaviour (convergence to
zero vs. stalling at a positive level) and monitors the technical conditions
of the convergence theory plus the Arimoto fixed-point condition that
characterizes the stall level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .prob import (
    Distribution,
    JointDistribution,
    StochasticMatrix,
    X_GIVEN_Y,
    ZERO_THRESHOLD,
    compose,
    conditional_x_given_y,
    kl_divergence,
    marginals,
)
from .exponents import ExponentSolution, gallager_e0, update_exponent

# Stopping rule: "converged to zero" and "stuck at a positive level" are
# separated cleanly at double precision by these defaults.
EPS_ZERO = 1e-9
EPS_STALL = 1e-12
STALL_WINDOW = 25
MAX_ITERS = 100_000

MASS_FLOOR = 1e-9
RHO_CEILING = 1.0 - 1e-6


class RunStatus(enum.Enum):
    CONVERGED_TO_ZERO = "ConvergedToZero"
    STALLED = "Stalled"
    INFEASIBLE = "Infeasible"
    MAX_ITERS = "MaxIters"


class InfeasibleUpdateError(RuntimeError):
    """The update exponent is +inf at the current state."""


@dataclass(frozen=True)
class SystemState:
    """The adaptive pair (Q_l, phi_l) shared by encoder and decoder."""

    q: Distribution
    phi: StochasticMatrix
    l: int = 0

    def __post_init__(self):
        if self.phi.orientation != X_GIVEN_Y:
            raise ValueError("phi must be oriented x_given_y")
        if self.phi.num_inputs != self.q.size:
            raise ValueError("q and phi input alphabets differ")


@dataclass
class IterationRecord:
    l: int
    e_hat: float
    rho_star: float
    decrement: float          # e_hat_l - e_hat_{l+1}, filled once the next iterate is solved
    q_decrement: float        # D(Q_{l+1} || Q_l)
    min_q: float
    min_phi_on_support: float
    carried_columns: tuple[int, ...]


@dataclass
class ConditionsReport:
    """Tail monitor for the convergence theorem's technical conditions."""

    tail_len: int
    max_rho: float
    min_q: float
    min_phi_on_support: float
    rho_below_one: bool
    q_bounded_away: bool
    phi_bounded_away: bool


@dataclass
class RunOutcome:
    status: RunStatus
    final_e_hat: float
    final_state: SystemState
    trace: list[IterationRecord]
    conditions_report: ConditionsReport | None
    t: float


def init_phi_from_channel(q: Distribution, p: StochasticMatrix) -> StochasticMatrix:
    """Bayes reverse conditional (Q o P)(x|y); unreachable outputs get a
    uniform column."""
    cond, _ = conditional_x_given_y(compose(q, p))
    return cond


def _min_phi_on_support(phi: StochasticMatrix, p: StochasticMatrix) -> float:
    mask = p.probs > 0
    return float(phi.probs[mask].min()) if mask.any() else float("nan")


def _record_for(state: SystemState, sol: ExponentSolution) -> IterationRecord:
    return IterationRecord(
        l=state.l,
        e_hat=sol.value,
        rho_star=sol.rho_star,
        decrement=math.nan,
        q_decrement=math.nan,
        min_q=float(state.q.probs.min()),
        min_phi_on_support=math.nan,
        carried_columns=(),
    )


def _apply_solution(state: SystemState, sol: ExponentSolution) -> tuple[SystemState, IterationRecord]:
    u = sol.minimizer
    new_q, _ = marginals(u)
    cond, defined = conditional_x_given_y(u)
    new_cols = np.where(defined[None, :], cond.probs, state.phi.probs)
    carried = tuple(int(y) for y in np.flatnonzero(~defined))
    new_phi = StochasticMatrix(new_cols, X_GIVEN_Y)
    rec = _record_for(state, sol)
    rec.q_decrement = kl_divergence(new_q, state.q)
    rec.carried_columns = carried
    new_state = SystemState(new_q, new_phi, state.l + 1)
    return new_state, rec


def nts_step(
    state: SystemState, t: float, p: StochasticMatrix
) -> tuple[SystemState, IterationRecord]:
    """One update: Q <- U*(x), phi columns <- U*(x|y) where U*(y) > 0,
    previous columns carried over elsewhere.

    The record's ``decrement`` field is NaN here; it is only known once the
    exponent of the successor state is solved (``nts_run`` fills it in).
    """
    sol = update_exponent(t, state.q, state.phi, p)
    if not sol.feasible:
        raise InfeasibleUpdateError(f"update exponent infeasible at iteration {state.l}")
    new_state, rec = _apply_solution(state, sol)
    rec.min_phi_on_support = _min_phi_on_support(state.phi, p)
    return new_state, rec


def nts_run(
    initial: SystemState,
    t: float,
    p: StochasticMatrix,
    eps_zero: float = EPS_ZERO,
    eps_stall: float = EPS_STALL,
    stall_window: int = STALL_WINDOW,
    max_iters: int = MAX_ITERS,
    tail_fraction: float = 0.25,
) -> RunOutcome:
    """Iterate until the exponent reaches zero, the per-step decrements die
    out at a positive level, or the iteration budget runs out."""
    state = initial
    trace: list[IterationRecord] = []
    status = RunStatus.MAX_ITERS
    final_e = math.nan

    for _ in range(max_iters + 1):
        sol = update_exponent(t, state.q, state.phi, p)
        if not sol.feasible:
            status = RunStatus.INFEASIBLE
            final_e = float("inf")
            break
        if trace:
            trace[-1].decrement = trace[-1].e_hat - sol.value
        final_e = sol.value

        if sol.value <= eps_zero:
            rec = _record_for(state, sol)
            rec.decrement = 0.0
            rec.q_decrement = 0.0
            rec.min_phi_on_support = _min_phi_on_support(state.phi, p)
            trace.append(rec)
            status = RunStatus.CONVERGED_TO_ZERO
            break

        window = [r.decrement for r in trace[-stall_window:] if not math.isnan(r.decrement)]
        if len(window) >= stall_window and max(window) < eps_stall:
            rec = _record_for(state, sol)
            rec.decrement = 0.0
            rec.q_decrement = 0.0
            rec.min_phi_on_support = _min_phi_on_support(state.phi, p)
            trace.append(rec)
            status = RunStatus.STALLED
            break

        new_state, rec = _apply_solution(state, sol)
        rec.min_phi_on_support = _min_phi_on_support(state.phi, p)
        trace.append(rec)
        state = new_state

    report = check_theorem1_conditions(trace, p, tail_fraction) if trace else None
    return RunOutcome(status, final_e, state, trace, report, t)


def check_theorem1_conditions(
    trace: list[IterationRecord], p: StochasticMatrix, tail_fraction: float = 0.25
) -> ConditionsReport:
    """Report, over the trailing fraction of the trace, whether the slope
    stays below one and the iterates stay off the simplex boundary.

    Violations are reported, never corrected: altering the iterates would
    change the algorithm.
    """
    if not trace:
        raise ValueError("empty trace")
    tail_len = max(1, int(math.ceil(tail_fraction * len(trace))))
    tail = trace[-tail_len:]
    max_rho = max(r.rho_star for r in tail)
    min_q = min(r.min_q for r in tail)
    min_phi = min(r.min_phi_on_support for r in tail)
    return ConditionsReport(
        tail_len=tail_len,
        max_rho=max_rho,
        min_q=min_q,
        min_phi_on_support=min_phi,
        rho_below_one=max_rho < RHO_CEILING,
        q_bounded_away=min_q > MASS_FLOOR,
        phi_bounded_away=min_phi > MASS_FLOOR,
    )


def check_arimoto_fixed_point(q: Distribution, rho: float, p: StochasticMatrix) -> dict:
    """Evaluate, per input letter with positive mass, the quantity
    sum_y P^(1/(1-rho))(y|x) [sum_a Q(a) P^(1/(1-rho))(y|a)]^(-rho)
    and report its spread; constancy is sufficient for Q to minimize the
    negative-slope Gallager exponent."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    a = 1.0 / (1.0 - rho)
    pw = p.probs**a
    denom = q.probs @ pw
    pos = denom > 0
    vals = (pw[:, pos] * denom[pos] ** (-rho)).sum(axis=1)
    vals = vals[q.probs > 0]
    spread = float(vals.max() - vals.min())
    mean = float(vals.mean())
    return {
        "spread": spread,
        "mean": mean,
        "is_fixed_point": spread <= 1e-6 * mean,
    }


def tail_rho(outcome: RunOutcome, window: int = STALL_WINDOW) -> float:
    """Mean slope over the final window of the trace, the computable surrogate
    for the limiting slope."""
    tail = outcome.trace[-window:]
    return float(np.mean([r.rho_star for r in tail]))


def stall_level_identity(outcome: RunOutcome, p: StochasticMatrix, window: int = STALL_WINDOW) -> dict:
    """Check that a stalled run's limit equals E0(-rho_bar, Q_bar) + rho_bar*T."""
    if outcome.status is not RunStatus.STALLED:
        raise ValueError("stall_level_identity requires a Stalled outcome")
    rho_bar = tail_rho(outcome, window)
    if not 0.0 < rho_bar < 1.0:
        return {"applicable": False, "rho_bar": rho_bar}
    e0 = gallager_e0(-rho_bar, outcome.final_state.q, p)
    predicted = e0 + rho_bar * outcome.t
    return {
        "applicable": True,
        "rho_bar": rho_bar,
        "e0_neg_rho": e0,
        "predicted_level": predicted,
        "final_e_hat": outcome.final_e_hat,
        "gap": abs(outcome.final_e_hat - predicted),
    }
