import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ialm.auglag import (
    al_evaluate,
    ata_norm,
    lipschitz_estimate,
    psi,
    psi_partial_u,
    psi_vec,
    spectral_norm_ata,
)
from ialm.problem import ConvexProgram
from ialm.qcqp import generate_instance, qcqp_as_program

from conftest import central_diff_gradient, relative_error

finite = st.floats(-50, 50, allow_nan=False)
betas = st.floats(1e-3, 1e3, allow_nan=False)


class TestPsi:
    def test_active_branch(self):
        assert psi(2.0, 1.0, 1.0) == pytest.approx(2.0, abs=1e-15)

    def test_inactive_branch(self):
        assert psi(2.0, -1.0, 1.0) == pytest.approx(-0.25, abs=1e-15)

    @given(betas, finite)
    def test_branches_agree_at_seam(self, beta, v):
        u = -v / beta
        active = u * v + 0.5 * beta * u * u
        inactive = -v * v / (2.0 * beta)
        assert active == pytest.approx(inactive, rel=1e-9, abs=1e-12)

    @given(betas, finite, finite)
    def test_lower_bound(self, beta, u, v):
        assert psi(beta, u, v) >= -v * v / (2.0 * beta) - 1e-12 * (1.0 + v * v)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            psi(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            psi_partial_u(-1.0, 1.0, 1.0)

    @given(betas, st.lists(finite, min_size=1, max_size=6), st.data())
    def test_vectorized_matches_scalar(self, beta, us, data):
        vs = data.draw(st.lists(finite, min_size=len(us), max_size=len(us)))
        got = psi_vec(beta, np.array(us), np.array(vs))
        want = [psi(beta, u, v) for u, v in zip(us, vs)]
        np.testing.assert_allclose(got, want, rtol=1e-15, atol=0)


class TestPsiPartial:
    def test_examples(self):
        assert psi_partial_u(2.0, 1.0, 1.0) == 3.0
        assert psi_partial_u(2.0, -1.0, 1.0) == 0.0

    def test_matches_finite_difference_away_from_seam(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 200:
            beta = float(rng.uniform(0.1, 10.0))
            u = float(rng.uniform(-5, 5))
            v = float(rng.uniform(-5, 5))
            if abs(beta * u + v) < 1e-2:
                continue
            h = 1e-6 * (1.0 + abs(u))
            fd = (psi(beta, u + h, v) - psi(beta, u - h, v)) / (2.0 * h)
            exact = psi_partial_u(beta, u, v)
            assert abs(fd - exact) <= 1e-8 * max(1.0, abs(exact))
            checked += 1

    def test_one_sided_limits_agree_at_seam(self):
        beta, v = 2.0, 1.5
        u = -v / beta
        h = 1e-9
        left = (psi(beta, u, v) - psi(beta, u - h, v)) / h
        right = (psi(beta, u + h, v) - psi(beta, u, v)) / h
        assert left == pytest.approx(right, abs=1e-6)
        assert psi_partial_u(beta, u, v) == pytest.approx(0.0, abs=1e-12)


def toy_program(m=1, p=0, fs=None, A=None, b=None):
    n = 2
    lower, upper = -np.ones(n), np.ones(n)
    fs = fs if fs is not None else [lambda x: (float(x[0]) - 0.5, np.array([1.0, 0.0]))]
    return ConvexProgram(
        n=n,
        m=m,
        smooth_objective=lambda x: (0.5 * float(x @ x), x.copy()),
        nonsmooth_prox=lambda v, gamma: np.clip(v, lower, upper),
        constraints=fs,
        affine_A=np.zeros((0, n)) if A is None else A,
        affine_b=np.zeros(0) if b is None else b,
        strong_convexity_mu=1.0,
        grad_lipschitz_L0=1.0,
        constraint_grad_lipschitz=np.zeros(m),
        constraint_bounds=2.0 * np.ones(m),
        diameter_D=2.0 * math.sqrt(2),
        box=(lower, upper),
    )


class TestAlEvaluate:
    def test_unconstrained_reduces_to_objective(self):
        prog = toy_program(m=0, fs=[])
        x = np.array([0.3, -0.4])
        ev = al_evaluate(prog, 2.0, x, np.zeros(0), np.zeros(0))
        assert ev.value == pytest.approx(0.5 * float(x @ x), abs=1e-15)
        np.testing.assert_allclose(ev.smooth_grad, x)

    def test_inactive_constraint_zero_multiplier(self):
        prog = toy_program()
        x = np.array([0.0, 0.0])  # f(x) = -0.5 < 0
        ev = al_evaluate(prog, 2.0, x, np.zeros(0), np.zeros(1))
        assert ev.per_constraint_psi[0] == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(ev.smooth_grad, x)

    def test_counters_increment_once(self):
        prog = toy_program()
        al_evaluate(prog, 1.0, np.zeros(2), np.zeros(0), np.zeros(1))
        assert prog.counters.snapshot() == (1, 1, 0)
        al_evaluate(prog, 1.0, np.zeros(2), np.zeros(0), np.zeros(1), want_grad=False)
        assert prog.counters.snapshot() == (1, 2, 0)

    def test_feasible_penalty_sum_nonpositive(self):
        prog = toy_program()
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.uniform(-1, 0.4, size=2)  # keeps f(x) = x0 - 0.5 <= 0
            z = rng.uniform(0, 3, size=1)
            beta = float(rng.uniform(0.1, 10))
            ev = al_evaluate(prog, beta, x, np.zeros(0), z, want_grad=False, count=False)
            assert float(ev.per_constraint_psi.sum()) <= 1e-12

    def test_gradient_matches_finite_differences_on_qcqp(self):
        inst = generate_instance(11, 10, 3)
        prog = qcqp_as_program(inst)
        rng = np.random.default_rng(5)
        beta = 2.5
        z = rng.uniform(0.0, 1.0, size=3)

        def value(x):
            return al_evaluate(prog, beta, x, np.zeros(0), z, want_grad=False,
                               count=False).value

        for _ in range(4):
            x = rng.uniform(-0.9, 0.9, size=prog.n)
            ev = al_evaluate(prog, beta, x, np.zeros(0), z, count=False)
            fd = central_diff_gradient(value, x)
            assert relative_error(fd, ev.smooth_grad) <= 1e-6

    def test_affine_terms(self):
        A = np.array([[1.0, 1.0]])
        b = np.array([0.5])
        prog = toy_program(A=A, b=b)
        x = np.array([0.5, 0.5])
        y = np.array([2.0])
        beta = 4.0
        ev = al_evaluate(prog, beta, x, y, np.zeros(1))
        r = 0.5
        expected = 0.5 * float(x @ x) + 2.0 * r + 0.5 * beta * r * r + psi(beta, 0.0, 0.0)
        assert ev.value == pytest.approx(expected, abs=1e-14)
        np.testing.assert_allclose(
            ev.smooth_grad,
            x + A.T @ (y + beta * np.array([r])) + np.array([psi_partial_u(beta, 0.0, 0.0), 0.0]),
        )


class TestLipschitzEstimate:
    def test_unconstrained(self):
        prog = toy_program(m=0, fs=[])
        assert lipschitz_estimate(prog, 5.0, np.zeros(0)) == pytest.approx(1.0)

    def test_worked_example(self):
        # L0=1, beta=2, ||A'A||=3, one constraint with B=1, L=1, z=4
        n = 2
        A = np.array([[math.sqrt(3.0), 0.0]])
        prog = ConvexProgram(
            n=n,
            m=1,
            smooth_objective=lambda x: (0.5 * float(x @ x), x.copy()),
            nonsmooth_prox=lambda v, gamma: v,
            constraints=[lambda x: (float(x[0]), np.array([1.0, 0.0]))],
            affine_A=A,
            affine_b=np.zeros(1),
            strong_convexity_mu=0.0,
            grad_lipschitz_L0=1.0,
            constraint_grad_lipschitz=np.array([1.0]),
            constraint_bounds=np.array([1.0]),
            diameter_D=1.0,
        )
        assert lipschitz_estimate(prog, 2.0, np.array([4.0])) == pytest.approx(15.0, rel=1e-9)

    def test_empirical_gradient_ratio_never_exceeds_estimate(self):
        inst = generate_instance(23, 10, 3)
        prog = qcqp_as_program(inst)
        rng = np.random.default_rng(9)
        beta = 3.0
        z = rng.uniform(0, 2, size=3)
        bound = lipschitz_estimate(prog, beta, z)
        worst = 0.0
        for _ in range(200):
            a = rng.uniform(-1, 1, size=prog.n)
            b = rng.uniform(-1, 1, size=prog.n)
            ga = al_evaluate(prog, beta, a, np.zeros(0), z, count=False).smooth_grad
            gb = al_evaluate(prog, beta, b, np.zeros(0), z, count=False).smooth_grad
            dist = float(np.linalg.norm(a - b))
            if dist > 0:
                worst = max(worst, float(np.linalg.norm(ga - gb)) / dist)
        assert worst <= bound + 1e-9


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm_ata(np.eye(3)) == pytest.approx(1.0, rel=1e-8)

    def test_diagonal(self):
        assert spectral_norm_ata(np.diag([1.0, 2.0, 3.0])) == pytest.approx(9.0, rel=1e-8)

    def test_empty(self):
        assert spectral_norm_ata(np.zeros((0, 4))) == 0.0

    def test_matches_svd_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            A = rng.normal(size=(5, 7))
            want = float(np.linalg.svd(A, compute_uv=False)[0] ** 2)
            assert spectral_norm_ata(A) == pytest.approx(want, rel=1e-8)

    def test_cached_on_program(self):
        A = np.array([[3.0, 0.0]])
        prog = toy_program(A=A, b=np.zeros(1))
        assert ata_norm(prog) == pytest.approx(9.0, rel=1e-8)
        assert ata_norm(prog) == pytest.approx(9.0, rel=1e-8)
