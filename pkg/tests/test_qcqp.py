import math

import numpy as np
import pytest

from ialm.certificates import kkt_residual
from ialm.driver import InnerConfig, InvalidParams, build_schedule, run
from ialm.problem import check_lipschitz_by_sampling
from ialm.qcqp import (
    QcqpInstance,
    ReferenceNotCertified,
    constraint_values,
    fast_subproblem_solver,
    feasibility,
    generate_instance,
    inner_termination,
    load_instance,
    objective_value,
    qcqp_as_program,
    reference_solve,
    run_experiment,
    save_instance,
    schedule_for_regime,
    transform_equalities_to_inequalities,
)

from conftest import central_diff_gradient, relative_error


class TestGenerate:
    def test_deterministic_bitwise(self):
        a = generate_instance(7, 20, 3)
        b = generate_instance(7, 20, 3)
        assert np.array_equal(a.Q, b.Q)
        assert np.array_equal(a.c, b.c)
        assert np.array_equal(a.d, b.d)

    def test_convex_tag_is_rank_deficient(self):
        inst = generate_instance(3, 24, 2, "convex")
        assert float(np.linalg.eigvalsh(inst.Q[0])[0]) <= 1e-10
        assert inst.metadata["rank_deficiency"] == 6

    def test_strongly_convex_tag(self):
        inst = generate_instance(3, 24, 2, "strongly_convex")
        eigs = np.linalg.eigvalsh(inst.Q[0])
        assert eigs[0] > 0
        assert eigs[0] <= eigs[-1] / 4.0  # mu <= L0/4, required by the strongly convex budgets

    def test_origin_strictly_feasible(self):
        inst = generate_instance(11, 10, 4)
        np.testing.assert_array_equal(constraint_values(inst, np.zeros(10)), inst.d)
        assert np.all(inst.d < 0)

    def test_psd_constraints(self):
        inst = generate_instance(5, 15, 3)
        for j in range(4):
            assert float(np.linalg.eigvalsh(inst.Q[j])[0]) >= -1e-10

    def test_q0_scale_reuses_seed_data(self):
        base = generate_instance(9, 12, 2)
        scaled = generate_instance(9, 12, 2, q0_scale=100.0)
        np.testing.assert_allclose(scaled.Q[0], 100.0 * base.Q[0], rtol=1e-13)
        np.testing.assert_array_equal(scaled.Q[1:], base.Q[1:])
        np.testing.assert_array_equal(scaled.c, base.c)

    def test_invalid_sizes(self):
        with pytest.raises(InvalidParams):
            generate_instance(0, 0, 1)
        with pytest.raises(InvalidParams):
            generate_instance(0, 3, -1)

    def test_roundtrip_file(self, tmp_path):
        inst = generate_instance(13, 8, 2)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        again = load_instance(path)
        assert np.array_equal(inst.Q, again.Q)
        assert inst.digest() == again.digest()


class TestAdapter:
    def test_prox_is_clamp(self):
        inst = generate_instance(1, 2, 0)
        prog = qcqp_as_program(inst)
        np.testing.assert_array_equal(
            prog.prox(np.array([2.0, -3.0]), 1.0, count=False), [1.0, -1.0]
        )

    def test_gradient_finite_difference(self):
        inst = generate_instance(21, 9, 2)
        prog = qcqp_as_program(inst)
        rng = np.random.default_rng(0)
        x = rng.uniform(-0.9, 0.9, size=9)
        _, ggrad, _, _ = prog.eval_all(x, count=False)
        fd = central_diff_gradient(lambda v: prog.smooth_objective(v)[0], x)
        assert relative_error(fd, ggrad) <= 1e-6

    def test_declared_constants_validated_by_sampling(self):
        inst = generate_instance(31, 30, 4)
        prog = qcqp_as_program(inst)
        report = check_lipschitz_by_sampling(prog, rng_seed=5, num_pairs=5000)
        assert report.ok, report.violations

    def test_mu_zero_for_convex_tag(self):
        assert qcqp_as_program(generate_instance(2, 10, 1)).strong_convexity_mu == 0.0
        assert qcqp_as_program(
            generate_instance(2, 10, 1, "strongly_convex")
        ).strong_convexity_mu > 0.0

    def test_diameter(self):
        inst = generate_instance(2, 16, 0)
        assert qcqp_as_program(inst).diameter_D == pytest.approx(2.0 * 4.0)


class TestInnerTermination:
    def test_interior_zero_gradient(self):
        box = (-np.ones(3), np.ones(3))
        assert inner_termination(np.zeros(3), np.zeros(3), box, 1e-12, 1.0)

    def test_absorbed_at_upper_bound(self):
        # at the upper bound the outward-pointing -grad lies in the cone
        box = (-np.ones(1), np.ones(1))
        assert inner_termination(np.array([-1.0]), np.ones(1), box, 1e-9, 1.0)
        assert not inner_termination(np.array([1.0]), np.ones(1), box, 0.5, 1.0)

    def test_threshold_is_eps_over_diameter(self):
        box = (-np.ones(2), np.ones(2))
        grad = np.array([3e-4, 4e-4])  # interior residual 5e-4
        assert inner_termination(grad, np.zeros(2), box, 1e-3, 2.0)
        assert not inner_termination(grad, np.zeros(2), box, 9e-4, 2.0)

    def test_outside_box_rejected(self):
        box = (-np.ones(2), np.ones(2))
        with pytest.raises(ValueError):
            inner_termination(np.zeros(2), np.array([1.5, 0.0]), box, 1e-3, 1.0)


class TestReferenceSolve:
    def test_unconstrained_matches_projected_gradient_oracle(self):
        inst = generate_instance(41, 20, 0, "strongly_convex")
        ref = reference_solve(inst)
        # independent oracle: unconstrained solve, then long projected-gradient polish
        Q0, c0 = inst.Q[0], inst.c[0]
        L = float(np.linalg.eigvalsh(Q0)[-1])
        x = np.clip(np.linalg.solve(Q0, -c0), inst.lower, inst.upper)
        for _ in range(60_000):
            x = np.clip(x - (Q0 @ x + c0) / L, inst.lower, inst.upper)
        assert float(np.linalg.norm(ref.x - x)) <= 1e-9 * (1.0 + float(np.linalg.norm(x)))

    def test_toy_matches_grid_search_plus_polish(self):
        inst = generate_instance(43, 2, 1)
        ref = reference_solve(inst)
        grid = np.linspace(-1.0, 1.0, 2001)
        X, Y = np.meshgrid(grid, grid, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        objs = 0.5 * np.einsum("pi,ik,pk->p", pts, inst.Q[0], pts) + pts @ inst.c[0]
        f1 = 0.5 * np.einsum("pi,ik,pk->p", pts, inst.Q[1], pts) + pts @ inst.c[1] + inst.d[0]
        objs[f1 > 0] = np.inf
        best = pts[int(np.argmin(objs))]
        from scipy.optimize import minimize

        polished = minimize(
            lambda v: 0.5 * v @ inst.Q[0] @ v + inst.c[0] @ v,
            best,
            jac=lambda v: inst.Q[0] @ v + inst.c[0],
            bounds=[(-1.0, 1.0)] * 2,
            constraints=[{
                "type": "ineq",
                "fun": lambda v: -(0.5 * v @ inst.Q[1] @ v + inst.c[1] @ v + inst.d[0]),
                "jac": lambda v: -(inst.Q[1] @ v + inst.c[1]),
            }],
            method="SLSQP",
            options={"ftol": 1e-12, "maxiter": 200},
        )
        assert abs(ref.f0 - float(polished.fun)) <= 1e-6

    def test_certification_contract(self):
        inst = generate_instance(47, 12, 3)
        ref = reference_solve(inst)
        assert np.all(ref.z >= 0.0)
        assert max(ref.kkt) <= 1e-7
        fvals = constraint_values(inst, ref.x)
        assert float(np.max(np.abs(ref.z * fvals))) <= 1e-7

    def test_rejects_loose_tolerance(self):
        inst = generate_instance(47, 4, 1)
        with pytest.raises(InvalidParams):
            reference_solve(inst, tol=1e-5)


class TestFastSolverAccounting:
    def test_counter_units_match_iterations(self):
        inst = generate_instance(53, 10, 2)
        prog = qcqp_as_program(inst)
        solver = fast_subproblem_solver(inst)
        from ialm.auglag import lipschitz_estimate

        L = lipschitz_estimate(prog, 10.0, np.zeros(2))
        res = solver(prog, 10.0, np.zeros(0), np.zeros(2), np.zeros(10), L, 1e-6, 10_000)
        g, f, p = prog.counters.snapshot()
        assert g == 2 * res.iters
        assert f == 2 * res.iters
        assert p == res.iters

    def test_fast_and_generic_paths_agree(self):
        inst = generate_instance(59, 12, 3)
        sched = build_schedule("geometric", "constant", 6, 1.0, 2.0, 1e-3, sigma=10.0)
        fast = run(qcqp_as_program(inst), sched,
                   inner=InnerConfig(subproblem_solver=fast_subproblem_solver(inst)))
        generic = run(qcqp_as_program(inst), sched)
        np.testing.assert_allclose(fast.xs[-1], generic.xs[-1], rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(fast.zs[-1], generic.zs[-1], rtol=1e-5, atol=1e-8)
        np.testing.assert_array_equal(fast.grad_evals, 2 * fast.inner_iters)


@pytest.fixture(scope="module")
def small():
    inst = generate_instance(61, 15, 2)
    ref = reference_solve(inst)
    return inst, ref


class TestRunExperiment:

    def test_row_zero_is_strictly_feasible_origin(self, small):
        inst, ref = small
        res = run_experiment(inst, regimes=("geo-const",), K=5, reference=ref)
        row0 = res.runs[0].rows[0]
        assert row0["feas_last"] == 0.0
        assert row0["obj_gap_last"] == pytest.approx(abs(ref.f0), rel=1e-12)

    def test_deterministic_rows(self, small):
        inst, ref = small
        r1 = run_experiment(inst, regimes=("geo-const", "geo-adapt"), K=5, reference=ref)
        r2 = run_experiment(inst, regimes=("geo-const", "geo-adapt"), K=5, reference=ref)
        assert r1.to_dict()["runs"] == r2.to_dict()["runs"]

    def test_parallel_workers_match_serial(self, small):
        inst, ref = small
        serial = run_experiment(inst, regimes=("geo-const", "geo-adapt"), K=5,
                                reference=ref, workers=1)
        threaded = run_experiment(inst, regimes=("geo-const", "geo-adapt"), K=5,
                                  reference=ref, workers=2)
        assert serial.to_dict()["runs"] == threaded.to_dict()["runs"]

    def test_unknown_regime_rejected(self, small):
        inst, ref = small
        with pytest.raises(InvalidParams):
            run_experiment(inst, regimes=("bogus",), reference=ref)

    def test_penalty_regime_is_single_step(self):
        sched = schedule_for_regime("penalty", 1e-3, 10, 1.0, 2.0, 10.0, 0.0)
        assert sched.K == 1
        assert sched.beta[0] == pytest.approx(1.0 / 1e-3)


class TestStopRuleImpliesScheduledAccuracy:
    def test_subproblem_gap_bounded_by_eps_k(self):
        # when the projected-stationarity rule fires at eps_k / D, the AL
        # objective gap of the subproblem is at most eps_k (via convexity
        # and the set diameter); checked against an independent minimizer
        from scipy.optimize import minimize

        from ialm.auglag import al_evaluate, lipschitz_estimate

        inst = generate_instance(67, 2, 1)
        prog = qcqp_as_program(inst)
        solver = fast_subproblem_solver(inst)
        rng = np.random.default_rng(0)
        for beta in (1.0, 10.0, 100.0):
            z = rng.uniform(0.0, 1.0, size=1)
            eps_k = 1e-3
            tol = eps_k / prog.diameter_D
            L = lipschitz_estimate(prog, beta, z)
            res = solver(prog, beta, np.zeros(0), z, np.zeros(2), L, tol, 10**6)
            assert res.converged

            def al_value(v):
                return al_evaluate(prog, beta, v, np.zeros(0), z,
                                   want_grad=False, count=False).value

            best = math.inf
            for start in ([0.0, 0.0], [0.5, 0.5], [-0.5, 0.5], list(res.x)):
                out = minimize(al_value, np.asarray(start), bounds=[(-1, 1)] * 2,
                               method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-12})
                best = min(best, float(out.fun))
            gap = al_value(res.x) - best
            assert gap <= eps_k + 1e-12, f"beta={beta}: gap {gap:.3e}"


class TestTransformEqualities:
    def _equality_program(self, a, b, c):
        n = 2
        lower, upper = -np.ones(n), np.ones(n)
        from ialm.problem import ConvexProgram

        return ConvexProgram(
            n=n,
            m=0,
            smooth_objective=lambda x: (0.5 * float((x - c) @ (x - c)), x - c),
            nonsmooth_prox=lambda v, gamma: np.clip(v, lower, upper),
            constraints=[],
            affine_A=np.array([a]),
            affine_b=np.array([b]),
            strong_convexity_mu=1.0,
            grad_lipschitz_L0=1.0,
            constraint_grad_lipschitz=np.zeros(0),
            constraint_bounds=np.zeros(0),
            diameter_D=2.0 * math.sqrt(n),
            box=(lower, upper),
        )

    def test_pair_constants(self):
        prog = self._equality_program(np.array([1.0, 0.0]), 0.0, np.zeros(2))
        out = transform_equalities_to_inequalities(prog)
        assert out.p == 0
        assert out.m == 2
        np.testing.assert_array_equal(out.constraint_bounds, [1.0, 1.0])
        np.testing.assert_array_equal(out.constraint_grad_lipschitz, [0.0, 0.0])
        f0, g0 = out.constraints[0](np.array([0.4, 0.0]))
        f1, g1 = out.constraints[1](np.array([0.4, 0.0]))
        assert f0 == pytest.approx(0.4) and f1 == pytest.approx(-0.4)
        np.testing.assert_array_equal(g0, [1.0, 0.0])
        np.testing.assert_array_equal(g1, [-1.0, 0.0])

    def test_solutions_match_analytic_kkt(self):
        a = np.array([1.0, 1.0])
        b = 0.3
        c = np.array([0.5, -0.1])
        lam = (float(a @ c) - b) / float(a @ a)
        x_star = c - lam * a

        orig = self._equality_program(a, b, c)
        sched = build_schedule("geometric", "constant", 10, 4.0, 1.0, 1e-6, sigma=10.0)
        trace_orig = run(orig, sched)

        trans = transform_equalities_to_inequalities(self._equality_program(a, b, c))
        trace_trans = run(trans, sched)

        np.testing.assert_allclose(trace_orig.xs[-1], x_star, atol=1e-5)
        np.testing.assert_allclose(trace_trans.xs[-1], x_star, atol=1e-5)
        np.testing.assert_allclose(trace_trans.xs[-1], trace_orig.xs[-1], atol=1e-5)

    def test_noop_without_equalities(self):
        inst = generate_instance(3, 6, 1)
        prog = qcqp_as_program(inst)
        assert transform_equalities_to_inequalities(prog) is prog

    def test_feasibility_violation_preserved(self):
        from ialm.problem import feasibility_violation

        prog = self._equality_program(np.array([1.0, 1.0]), 0.3, np.zeros(2))
        trans = transform_equalities_to_inequalities(prog)
        for x in (np.array([0.6, 0.4]), np.array([-0.2, 0.1]), np.array([0.15, 0.15])):
            # one pair member is violated by exactly |a'x - b|, the other inactive
            assert feasibility_violation(trans, x) == pytest.approx(
                feasibility_violation(prog, x), abs=1e-14
            )
