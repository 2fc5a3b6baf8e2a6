import math

import numpy as np
import pytest

from ntsel.channels import binary_entropy, bsc, identity_channel, z_channel
from ntsel.engine import init_phi_from_channel
from ntsel.exponents import (
    DegenerateSupportError,
    brute_force_update_exponent,
    e0_hat,
    error_exponent,
    gallager_e0,
    threshold_t0,
    u_rho,
    update_exponent,
)
from ntsel.prob import (
    Distribution,
    StochasticMatrix,
    X_GIVEN_Y,
    Y_GIVEN_X,
    compose,
    kl_divergence,
    mutual_information,
)


def random_instance(rng, nx=2, ny=2):
    q = Distribution(rng.dirichlet(np.ones(nx)))
    p = StochasticMatrix(rng.dirichlet(np.ones(ny), size=nx), Y_GIVEN_X)
    cols = rng.dirichlet(np.ones(nx), size=ny).T
    phi = StochasticMatrix(cols, X_GIVEN_Y)
    return q, phi, p


def posterior_phi(q, p):
    return init_phi_from_channel(q, p)


def naive_e0_hat(rho, q, phi, p):
    total = 0.0
    nx, ny = p.probs.shape
    for x in range(nx):
        inner = sum(p.probs[x, y] * phi.probs[x, y] ** rho for y in range(ny))
        total += (q.probs[x] * inner) ** (1.0 / (1.0 + rho))
    return -(1.0 + rho) * math.log(total)


def grid_min_exponent(t, q, phi, p, coarse=0.005, refine=2e-4):
    """Two-stage grid search over 2x2 joints for the constrained KL minimum."""
    qp = compose(q, p).probs.ravel()
    logphi = np.where(phi.probs > 0, np.log(np.where(phi.probs > 0, phi.probs, 1.0)), -1e30).ravel()

    def sweep(lo, hi, step):
        a = np.arange(lo[0], hi[0] + step / 2, step)
        b = np.arange(lo[1], hi[1] + step / 2, step)
        c = np.arange(lo[2], hi[2] + step / 2, step)
        g = np.stack(np.meshgrid(a, b, c, indexing="ij"), axis=-1).reshape(-1, 3)
        last = 1.0 - g.sum(axis=1)
        ok = last >= -1e-12
        u = np.concatenate([g[ok], np.clip(last[ok], 0.0, 1.0)[:, None]], axis=1)
        ux = u[:, :2].sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(ux > 0, -ux * np.log(np.where(ux > 0, ux, 1.0)), 0.0)
            ent += np.where(1 - ux > 0, -(1 - ux) * np.log(np.where(1 - ux > 0, 1 - ux, 1.0)), 0.0)
            stat = u @ logphi + ent
            ratio = np.where(u > 0, np.log(np.where(u > 0, u, 1.0) / qp), 0.0)
            feas_support = (u[:, qp <= 0] <= 0).all(axis=1) if (qp <= 0).any() else np.ones(len(u), bool)
            div = np.where(feas_support, (u * ratio).sum(axis=1), np.inf)
        div = np.where(stat >= t, div, np.inf)
        if not np.isfinite(div).any():
            return None, np.inf
        i = int(np.argmin(div))
        return u[i], float(div[i])

    best_u, best = sweep(np.zeros(3), np.ones(3), coarse)
    if best_u is None:
        return math.inf
    lo = np.clip(best_u[:3] - 2 * coarse, 0.0, 1.0)
    hi = np.clip(best_u[:3] + 2 * coarse, 0.0, 1.0)
    _, refined = sweep(lo, hi, refine)
    return min(best, refined)


class TestE0Hat:
    def test_rho_zero_vanishes(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            q, phi, p = random_instance(rng)
            assert e0_hat(0.0, q, phi, p) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_one_symbol_channel(self):
        # phi identically 1 forces every bracket to Q(x)*1, and a singleton
        # alphabet makes the sum collapse to 1 for every rho
        q = Distribution(np.array([1.0]))
        p = StochasticMatrix(np.array([[1.0]]), Y_GIVEN_X)
        phi = StochasticMatrix(np.array([[1.0]]), X_GIVEN_Y)
        for rho in (0.0, 0.5, 1.0, 3.0):
            assert e0_hat(rho, q, phi, p) == pytest.approx(0.0, abs=1e-14)

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            q, phi, p = random_instance(rng, 3, 2)
            rho = float(rng.uniform(0.0, 4.0))
            assert e0_hat(rho, q, phi, p) == pytest.approx(naive_e0_hat(rho, q, phi, p), abs=1e-11)

    def test_rejects_negative_rho(self):
        q, phi, p = random_instance(np.random.default_rng(12))
        with pytest.raises(ValueError):
            e0_hat(-0.5, q, phi, p)

    def test_degenerate_support_raises(self):
        q = Distribution(np.array([1.0, 0.0]))
        p = bsc(0.0)
        phi = StochasticMatrix(np.array([[0.0, 0.0], [1.0, 1.0]]), X_GIVEN_Y)
        with pytest.raises(DegenerateSupportError):
            e0_hat(1.0, q, phi, p)


class TestURho:
    def test_rho_zero_recovers_channel_joint(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            q, phi, p = random_instance(rng)
            u = u_rho(0.0, q, phi, p)
            assert np.allclose(u.probs, compose(q, p).probs, atol=1e-14)

    def test_lagrangian_grid_oracle(self):
        # u_rho must minimize D(U || QoP) - rho * sum U log(phi/U_x)
        # over the joint simplex; check against a dense grid
        rng = np.random.default_rng(14)
        for _ in range(5):
            q, phi, p = random_instance(rng)
            rho = float(rng.uniform(0.2, 2.0))
            u = u_rho(rho, q, phi, p)
            qp = compose(q, p).probs.ravel()
            logphi = np.log(phi.probs).ravel()

            def lagrangian(flat):
                ux = flat.reshape(2, 2).sum(axis=1)
                d = sum(v * math.log(v / w) for v, w in zip(flat, qp) if v > 0)
                ent = sum(-m * math.log(m) for m in ux if m > 0)
                return d - rho * (float(flat @ logphi) + ent)

            base = lagrangian(u.probs.ravel())
            grid = np.arange(0.0, 1.0001, 0.02)
            for a in grid:
                for b in grid:
                    for c in grid:
                        s = a + b + c
                        if s > 1.0 + 1e-12:
                            continue
                        flat = np.array([a, b, c, max(0.0, 1.0 - s)])
                        assert lagrangian(flat) >= base - 1e-9

    def test_value_equals_dual_objective(self):
        # D(u_rho || QoP) - rho * constraint(u_rho) must equal e0_hat(rho)
        rng = np.random.default_rng(15)
        from ntsel.exponents import constraint_value

        for _ in range(100):
            q, phi, p = random_instance(rng, 2, 3)
            rho = float(rng.uniform(0.0, 3.0))
            u = u_rho(rho, q, phi, p)
            lhs = kl_divergence(u, compose(q, p)) - rho * constraint_value(u, phi)
            assert lhs == pytest.approx(e0_hat(rho, q, phi, p), abs=1e-10)


class TestThresholdT0:
    def test_posterior_phi_gives_mutual_information(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            q, _, p = random_instance(rng, 2, 3)
            phi = posterior_phi(q, p)
            assert threshold_t0(q, phi, p) == pytest.approx(mutual_information(q, p), abs=1e-12)

    def test_phi_equal_q_gives_zero(self):
        q = Distribution(np.array([0.3, 0.7]))
        phi = StochasticMatrix(np.tile(q.probs[:, None], (1, 2)), X_GIVEN_Y)
        assert threshold_t0(q, phi, bsc(0.2)) == pytest.approx(0.0, abs=1e-14)

    def test_vanishing_phi_on_support(self):
        q = Distribution.uniform(2)
        phi = StochasticMatrix(np.array([[1.0, 1.0], [0.0, 0.0]]), X_GIVEN_Y)
        assert threshold_t0(q, phi, bsc(0.1)) == float("-inf")


class TestUpdateExponent:
    def test_zero_at_and_below_t0(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            q, phi, p = random_instance(rng)
            t0 = threshold_t0(q, phi, p)
            sol = update_exponent(t0 - 1e-6, q, phi, p)
            assert sol.value == 0.0 and sol.rho_star == 0.0

    def test_positive_just_above_t0(self):
        rng = np.random.default_rng(18)
        for _ in range(100):
            q, phi, p = random_instance(rng)
            t0 = threshold_t0(q, phi, p)
            sol = update_exponent(t0 + 1e-3, q, phi, p)
            assert sol.value > 0.0

    def test_bsc_reference_value(self):
        # frozen from the convex-programming oracle (agrees to 3e-9)
        q = Distribution.uniform(2)
        p = bsc(0.1)
        phi = posterior_phi(q, p)
        sol = update_exponent(0.45, q, phi, p)
        assert sol.value == pytest.approx(0.008788793008512062, abs=1e-9)
        assert sol.rho_star == pytest.approx(0.23086270374951923, abs=1e-6)

    def test_minimizer_is_feasible_and_achieves_value(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            q, phi, p = random_instance(rng)
            t0 = threshold_t0(q, phi, p)
            t = t0 + float(rng.uniform(1e-3, 0.3))
            sol = update_exponent(t, q, phi, p)
            if not sol.feasible:
                continue
            assert sol.constraint_value >= t - 1e-9
            assert kl_divergence(sol.minimizer, compose(q, p)) == pytest.approx(sol.value, abs=1e-12)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(20)
        for _ in range(50):
            q, phi, p = random_instance(rng)
            t0 = threshold_t0(q, phi, p)
            ts = t0 + np.array([0.01, 0.05, 0.1, 0.2])
            vals = [update_exponent(float(t), q, phi, p).value for t in ts]
            assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_grid_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            q, phi, p = random_instance(rng)
            t = threshold_t0(q, phi, p) + float(rng.uniform(0.02, 0.15))
            sol = update_exponent(t, q, phi, p)
            if not sol.feasible:
                continue
            assert sol.value == pytest.approx(grid_min_exponent(t, q, phi, p), abs=2e-3)

    def test_infeasible_threshold(self):
        # max achievable statistic is sup log(phi/Q) over the support
        q = Distribution.uniform(2)
        p = bsc(0.1)
        phi = posterior_phi(q, p)
        sol = update_exponent(10.0, q, phi, p)
        assert not sol.feasible and sol.value == float("inf")


class TestBruteForceOracle:
    def test_matches_dual_on_random_instances(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            q, phi, p = random_instance(rng)
            t = threshold_t0(q, phi, p) + float(rng.uniform(0.01, 0.2))
            sol = update_exponent(t, q, phi, p)
            ref = brute_force_update_exponent(t, q, phi, p)
            if sol.feasible:
                assert sol.value == pytest.approx(ref, abs=1e-6)
            else:
                assert ref == float("inf")

    def test_zero_below_t0(self):
        q = Distribution.uniform(2)
        p = bsc(0.1)
        phi = posterior_phi(q, p)
        t0 = threshold_t0(q, phi, p)
        assert brute_force_update_exponent(t0 - 0.05, q, phi, p) == pytest.approx(0.0, abs=1e-7)

    def test_infeasible_returns_inf(self):
        q = Distribution.uniform(2)
        phi = posterior_phi(q, bsc(0.1))
        assert brute_force_update_exponent(5.0, q, phi, bsc(0.1)) == float("inf")


class TestGallagerE0:
    def test_rho_zero_vanishes(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            q, _, p = random_instance(rng, 2, 3)
            assert gallager_e0(0.0, q, p) == pytest.approx(0.0, abs=1e-13)

    def test_derivative_at_zero_is_mutual_information(self):
        rng = np.random.default_rng(24)
        for _ in range(50):
            q, _, p = random_instance(rng, 3, 3)
            h = 1e-6
            slope = (gallager_e0(h, q, p) - gallager_e0(-h, q, p)) / (2 * h)
            assert slope == pytest.approx(mutual_information(q, p), abs=1e-4)

    def test_bsc_uniform_closed_form(self):
        # -log sum_y [0.5 (1-e)^s + 0.5 e^s]^(1+rho) with s = 1/(1+rho)
        rho, e = 1.0, 0.1
        s = 1.0 / (1.0 + rho)
        expected = -math.log(2 * (0.5 * (1 - e) ** s + 0.5 * e**s) ** (1 + rho))
        assert gallager_e0(rho, Distribution.uniform(2), bsc(e)) == pytest.approx(expected, abs=1e-14)

    def test_negative_rho_branch(self):
        q = Distribution.uniform(2)
        assert gallager_e0(-0.5, q, bsc(0.1)) < 0.0
        with pytest.raises(ValueError):
            gallager_e0(-1.0, q, bsc(0.1))


class TestErrorExponent:
    def test_zero_at_and_above_capacity(self):
        q = Distribution.uniform(2)
        p = bsc(0.1)
        c = math.log(2) - binary_entropy(0.1)
        assert error_exponent(c + 0.01, q, p).value == 0.0

    def test_positive_below_capacity(self):
        q = Distribution.uniform(2)
        p = bsc(0.1)
        c = math.log(2) - binary_entropy(0.1)
        res = error_exponent(c - 0.1, q, p)
        assert res.value > 0.0

    def test_grid_oracle(self):
        rng = np.random.default_rng(25)
        for _ in range(50):
            q, _, p = random_instance(rng, 2, 3)
            r = float(rng.uniform(0.0, 0.6))
            res = error_exponent(r, q, p)
            grid = np.linspace(0.0, 1.0, 20001)
            ref = max(gallager_e0(rho, q, p) - rho * r for rho in grid)
            assert res.value == pytest.approx(max(ref, 0.0), abs=1e-7)

    def test_zero_rate_is_cutoff_value(self):
        q = Distribution.uniform(2)
        p = bsc(0.1)
        assert error_exponent(0.0, q, p).value == pytest.approx(gallager_e0(1.0, q, p), abs=1e-9)

    def test_monotone_nonincreasing_in_rate(self):
        q = Distribution.uniform(2)
        p = z_channel(0.2)
        rates = np.linspace(0.0, 0.8, 30)
        vals = [error_exponent(float(r), q, p).value for r in rates]
        assert all(a >= b - 1e-10 for a, b in zip(vals, vals[1:]))

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            error_exponent(-0.1, Distribution.uniform(2), bsc(0.1))

    def test_identity_channel(self):
        # noiseless binary channel: E0(rho) = rho log 2, so Er(R) = log2 - R
        q = Distribution.uniform(2)
        p = identity_channel(2)
        res = error_exponent(0.3, q, p)
        assert res.value == pytest.approx(math.log(2) - 0.3, abs=1e-8)
