"""Update-exponent and error-exponent computations.

The update exponent is the large-deviations rate of the 1-bit feedback event:
the KL distance from the channel joint Q o P to the nearest joint U satisfying
sum U(x,y) log(phi(x|y)/U(x)) >= T. It is computed through its Lagrangian dual
(a concave 1-D maximization over the multiplier rho), with the parametric
minimizer recovered in closed form. An independent convex-programming oracle
solves the same minimization directly for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .prob import (
    Distribution,
    JointDistribution,
    StochasticMatrix,
    ZERO_THRESHOLD,
    compose,
    kl_divergence,
)

# Bracket-expansion cap and secant-slope tolerance for infeasibility
# detection: the dual objective grows linearly in rho exactly when the
# threshold constraint is unattainable.
RHO_CAP = 2.0**20
SLOPE_TOL = 1e-9
GOLDEN_TOL = 1e-10

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateSupportError(ValueError):
    """Every input symbol has zero weight under the tilted measure."""


@dataclass(frozen=True)
class ExponentSolution:
    """Update exponent value with its achieving joint distribution."""

    value: float
    rho_star: float
    minimizer: JointDistribution | None
    feasible: bool
    constraint_value: float


@dataclass(frozen=True)
class ErrorExponentResult:
    """Random-coding error exponent at a given rate."""

    value: float
    rho_star: float


def _safe_log(a: np.ndarray) -> np.ndarray:
    return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)


def _log_brackets(rho: float, q: Distribution, phi: StochasticMatrix, p: StochasticMatrix):
    """Log-domain per-input weights log[Q(x) sum_y P(y|x) phi(x|y)^rho].

    Returned alongside the per-pair log weights log[P(y|x) phi(x|y)^rho].
    Everything is kept in logs so large rho does not underflow. 0^0 := 1.
    """
    lw = _safe_log(p.probs) if rho == 0 else _safe_log(p.probs) + rho * _safe_log(phi.probs)
    m = lw.max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_row = np.where(
            np.isfinite(m),
            m + np.log(np.exp(lw - np.where(np.isfinite(m), m, 0.0)[:, None]).sum(axis=1)),
            -np.inf,
        )
    return _safe_log(q.probs) + log_row, lw, log_row


def e0_hat(rho: float, q: Distribution, phi: StochasticMatrix, p: StochasticMatrix) -> float:
    """-(1+rho) log sum_x [Q(x) sum_y P(y|x) phi(x|y)^rho]^(1/(1+rho))."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    log_s, _, _ = _log_brackets(rho, q, phi, p)
    a = log_s / (1.0 + rho)
    m = a.max()
    if m == -np.inf:
        raise DegenerateSupportError("all per-input brackets vanish")
    return -(1.0 + rho) * (m + math.log(np.exp(a - m).sum()))


def u_rho(rho: float, q: Distribution, phi: StochasticMatrix, p: StochasticMatrix) -> JointDistribution:
    """Parametric minimizer: U(x) and U(y|x) tilted by phi^rho."""
    log_s, lw, log_row = _log_brackets(rho, q, phi, p)
    a = log_s / (1.0 + rho)
    m = a.max()
    if m == -np.inf:
        raise DegenerateSupportError("all per-input brackets vanish")
    ux = np.exp(a - m)
    ux /= ux.sum()
    pos = np.isfinite(log_row)
    cond = np.zeros_like(lw)
    cond[pos] = np.exp(lw[pos] - log_row[pos, None])
    return JointDistribution(ux[:, None] * cond)


def threshold_t0(q: Distribution, phi: StochasticMatrix, p: StochasticMatrix) -> float:
    """Largest threshold with zero update exponent:
    sum Q(x) P(y|x) log(phi(x|y)/Q(x)); -inf if phi vanishes on the support."""
    qp = q.probs[:, None] * p.probs
    mask = qp > 0
    if np.any(phi.probs[mask] <= 0):
        return float("-inf")
    qx = np.broadcast_to(q.probs[:, None], qp.shape)
    return float(np.sum(qp[mask] * np.log(phi.probs[mask] / qx[mask])))


def constraint_value(u: JointDistribution, phi: StochasticMatrix) -> float:
    """sum U(x,y) log(phi(x|y)/U(x)); -inf if U puts mass where phi is zero."""
    ux = u.probs.sum(axis=1)
    mask = u.probs > 0
    if np.any(phi.probs[mask] <= 0):
        return float("-inf")
    ratio = phi.probs[mask] / np.broadcast_to(ux[:, None], u.probs.shape)[mask]
    return float(np.sum(u.probs[mask] * np.log(ratio)))


def _golden_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    """Argmax of a concave f on [lo, hi] by golden-section search."""
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def update_exponent(
    t: float, q: Distribution, phi: StochasticMatrix, p: StochasticMatrix
) -> ExponentSolution:
    """Update exponent at threshold t via the concave dual sup_rho {e0_hat + rho t}.

    The rho = 0 boundary is decided analytically (t <= T0 gives value 0 with
    the channel joint as minimizer). Infeasibility is detected when the dual
    still climbs at the bracket cap.
    """
    t0 = threshold_t0(q, phi, p)
    if t <= t0:
        qp = compose(q, p)
        return ExponentSolution(0.0, 0.0, qp, True, t0)

    # The dual f(rho) = e0_hat + rho*t is concave with derivative t - c(rho),
    # where c(rho) is the constraint value achieved by the parametric
    # minimizer and is non-decreasing in rho. The maximizing rho therefore
    # solves c(rho) = t, which bisection locates to machine precision; the
    # constraint is unattainable exactly when c stays below t at the cap.
    def c(rho: float) -> float:
        return constraint_value(u_rho(rho, q, phi, p), phi)

    hi = 1.0
    while c(hi) < t:
        hi *= 2.0
        if hi > RHO_CAP:
            hi = RHO_CAP
            if t - c(hi) > SLOPE_TOL:
                return ExponentSolution(float("inf"), float("inf"), None, False, float("-inf"))
            break
    lo = hi / 2.0 if hi > 1.0 else 0.0
    for _ in range(120):
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if c(mid) < t:
            lo = mid
        else:
            hi = mid

    rho_star = hi  # upper end keeps the minimizer on the feasible side
    minimizer = u_rho(rho_star, q, phi, p)
    value = kl_divergence(minimizer, compose(q, p))
    return ExponentSolution(value, rho_star, minimizer, True, constraint_value(minimizer, phi))


def brute_force_update_exponent(
    t: float,
    q: Distribution,
    phi: StochasticMatrix,
    p: StochasticMatrix,
    resolution: int = 0,
) -> float:
    """Independent oracle: minimize D(U || Q o P) subject to the threshold
    constraint directly over the joint simplex.

    The constraint sum U log(phi) + H(U_x) >= t is a superlevel set of a
    concave function, so the feasible set is convex and the problem is solved
    exactly as a disciplined convex program. Returns +inf when infeasible.
    ``resolution`` is accepted for interface compatibility and unused.
    """
    import cvxpy as cp

    qp = q.probs[:, None] * p.probs
    # Feasible U must vanish wherever the reference joint or phi vanishes.
    mask = (qp > 0) & (phi.probs > 0)
    if not mask.any():
        return float("inf")
    nx, ny = qp.shape
    u = cp.Variable((nx, ny), nonneg=True)
    ij = np.where(mask)
    off = np.where(~mask)
    constraints = [cp.sum(u) == 1]
    if off[0].size:
        constraints.append(u[off] == 0)
    log_phi = np.zeros_like(qp)
    log_phi[mask] = np.log(phi.probs[mask])
    stat = cp.sum(cp.multiply(u, log_phi)) + cp.sum(cp.entr(cp.sum(u, axis=1)))
    constraints.append(stat >= t)
    objective = cp.sum(cp.kl_div(u[ij], qp[ij]))
    problem = cp.Problem(cp.Minimize(objective), constraints)
    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        problem.solve(solver=cp.SCS)
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return float("inf")
    if problem.value is None:
        return float("inf")
    # kl_div(u, v) sums to D(u||v) - sum(u) + sum(v); correct for the masked total.
    return max(0.0, float(problem.value) + 1.0 - float(qp[mask].sum()))


def gallager_e0(rho: float, q: Distribution, p: StochasticMatrix) -> float:
    """Gallager exponent function -log sum_y [sum_x Q(x) P(y|x)^(1/(1+rho))]^(1+rho).

    Valid for rho > -1; negative rho yields the correct-decoding-side branch
    used by the stall-level identity.
    """
    if rho <= -1:
        raise ValueError("rho must be > -1")
    inner = q.probs @ p.probs ** (1.0 / (1.0 + rho))
    return -math.log(np.sum(inner ** (1.0 + rho)))


def error_exponent(r: float, q: Distribution, p: StochasticMatrix) -> ErrorExponentResult:
    """Random-coding error exponent max_{rho in [0,1]} {E0(rho, Q) - rho R}."""
    if r < 0:
        raise ValueError("rate must be >= 0")

    def f(rho: float) -> float:
        return gallager_e0(rho, q, p) - rho * r

    rho_star = _golden_max(f, 0.0, 1.0)
    candidates = [(f(x), x) for x in (0.0, rho_star, 1.0)]
    best, rho_best = max(candidates)
    return ErrorExponentResult(max(best, 0.0), rho_best)
