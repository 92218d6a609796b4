"""Command-line front end: generate instances, run solves and benchmark
experiments, and re-verify stored certificates.

Exit codes: 0 on success (bench: all must-hold checks satisfied), 1 when a
must-hold check or a verification comparison fails, 2 on usage or input
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _recheck, qcqp
from .certificates import derive_constants, FEJER_SLACK
from .driver import Schedule, Setting
from .qcqp import (
    REGIMES,
    TABLE_COLUMNS,
    ExperimentResult,
    QcqpInstance,
    Reference,
    generate_instance,
    load_instance,
    qcqp_as_program,
    run_experiment,
    save_instance,
)

_RTOL = 1e-9


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.4e}"


def _rows_to_csv(rows: list[dict], timing: float | None = None) -> str:
    lines = [",".join(TABLE_COLUMNS)]
    for row in rows:
        lines.append(",".join(_format_cell(row[col]) for col in TABLE_COLUMNS))
    out = "\n".join(lines) + "\n"
    if timing is not None:
        out += f"# wall_time_s={timing:.3f} (nondeterministic)\n"
    return out


def _load_instance_or_exit(path: str) -> QcqpInstance:
    try:
        return load_instance(path)
    except FileNotFoundError:
        print(f"error: instance file not found: {path}", file=sys.stderr)
        raise SystemExit(2)
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"error: cannot parse instance file {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)


def cmd_generate(args: argparse.Namespace) -> int:
    inst = generate_instance(
        seed=args.seed,
        n=args.n,
        m=args.m,
        convexity="strongly_convex" if args.strongly_convex else "convex",
        q0_scale=args.q0_scale,
    )
    save_instance(inst, args.out)
    print(f"wrote instance seed={inst.seed} n={inst.n} m={inst.m} -> {args.out}")
    return 0


def _experiment(args: argparse.Namespace, regimes: list[str]) -> ExperimentResult:
    inst = _load_instance_or_exit(args.instance)
    reference = qcqp.reference_solve(inst)
    c_beta = args.c_beta
    if isinstance(c_beta, str):
        from .certificates import c_beta_sufficiency

        C_eps = args.c_eps or float(np.linalg.norm(inst.upper - inst.lower))
        c_beta = c_beta_sufficiency(reference.y, reference.z, C_eps)
    workers = int(os.environ.get("IALM_THREADS", "1") or "1")
    return run_experiment(
        inst,
        regimes=regimes,
        eps=args.eps,
        K=args.K,
        C_beta=c_beta,
        C_eps=args.c_eps,
        sigma=args.sigma,
        max_inner=args.max_inner,
        reference=reference,
        workers=workers,
    )


def _write_experiment(result: ExperimentResult, out_dir: Path, timing: dict | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        csv_text = _rows_to_csv(run.rows, None if timing is None else timing.get(run.regime))
        _atomic_write(out_dir / f"{run.regime}.csv", csv_text)
    _atomic_write(out_dir / "certificate.json", json.dumps(result.to_dict(), indent=1) + "\n")


def cmd_bench(args: argparse.Namespace) -> int:
    regimes = args.regimes.split(",") if args.regimes else list(REGIMES)
    t0 = time.perf_counter()
    result = _experiment(args, regimes)
    elapsed = time.perf_counter() - t0
    timing = {r.regime: elapsed / max(len(result.runs), 1) for r in result.runs} if args.timing else None
    _write_experiment(result, Path(args.out), timing)
    for run in result.runs:
        status = "ok" if all(c.satisfied for c in run.checks if c.must_hold) else "FAILED"
        print(
            f"{run.regime}: grad_evals={run.total_grad_evals} "
            f"fun_evals={run.total_fun_evals} checks={status}"
        )
    if not result.all_must_hold_ok:
        for regime, name in result.failing_checks():
            print(f"error: bound check failed: {regime}/{name}", file=sys.stderr)
        return 1
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    result = _experiment(args, [args.regime])
    _write_experiment(result, Path(args.out), None)
    run = result.runs[0]
    print(
        f"{run.regime}: K={run.schedule.K} grad_evals={run.total_grad_evals} "
        f"verified={'yes' if run.trace.all_verified else 'no'}"
    )
    return 0 if result.all_must_hold_ok else 1


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _RTOL * max(1.0, abs(a), abs(b))


def _verify_run(run_data: dict, inst: QcqpInstance, reference: Reference, params: dict) -> list[str]:
    """Recompute a stored run's table rows and bound checks through the
    independent formula transcriptions; return mismatch descriptions."""
    problems: list[str] = []
    sched = Schedule.from_dict(run_data["schedule"])
    xs = np.asarray(run_data["trace"]["xs"], dtype=float)
    zs = np.asarray(run_data["trace"]["zs"], dtype=float)
    ys = np.asarray(run_data["trace"]["ys"], dtype=float)
    x0 = np.asarray(run_data["trace"]["x0"], dtype=float)
    z0 = np.asarray(run_data["trace"]["z0"], dtype=float)
    y0 = np.asarray(run_data["trace"]["y0"], dtype=float)
    inner_iters = np.asarray(run_data["trace"]["inner_iters"], dtype=float)
    regime = run_data["regime"]

    # table rows from stored iterates
    rho = sched.rho
    for row in run_data["rows"]:
        k = int(row["outer_iter"])
        xk = x0 if k == 0 else xs[k - 1]
        xbar = x0 if k == 0 else (rho[:k] @ xs[:k]) / float(np.sum(rho[:k]))
        expect = {
            "obj_gap_last": abs(qcqp.objective_value(inst, xk) - reference.f0),
            "feas_last": qcqp.feasibility(inst, xk),
            "obj_gap_avg": abs(qcqp.objective_value(inst, xbar) - reference.f0),
            "feas_avg": qcqp.feasibility(inst, xbar),
        }
        for key, val in expect.items():
            if not _close(float(row[key]), val):
                problems.append(f"{regime}: row {k} column {key} mismatch")

    # bound checks through the second evaluator
    ny = float(np.linalg.norm(reference.y))
    nz = float(np.linalg.norm(reference.z))
    C_eps = float(params["C_eps"])
    prog = qcqp_as_program(inst)
    consts = derive_constants(prog, C_eps, reference.y, reference.z, f0_star=reference.f0)
    xbar_K = (rho @ xs) / float(np.sum(rho))
    xK = xs[-1]

    expected: dict[str, tuple[float, float]] = {}
    z_norms = [float(np.linalg.norm(z0))] + [float(np.linalg.norm(zz)) for zz in zs]
    expected["multiplier-bound"] = (
        max(z_norms),
        _recheck.multiplier_bound(ny, nz, C_eps),
    )
    obj_b, feas_b = _recheck.ergodic_bound(list(sched.rho), list(sched.eps_k), ny, nz)
    expected["ergodic-objective"] = (
        abs(qcqp.objective_value(inst, xbar_K) - reference.f0), obj_b,
    )
    expected["ergodic-feasibility"] = (qcqp.feasibility(inst, xbar_K), feas_b)
    if sched.setting is Setting.GEOMETRIC:
        obj_n, feas_n = _recheck.nonergodic_final_bound(
            sched.eps, sched.C_beta, sched.C_eps, sched.sigma, nz
        )
        expected["nonergodic-objective"] = (
            abs(qcqp.objective_value(inst, xK) - reference.f0), obj_n,
        )
        expected["nonergodic-feasibility"] = (qcqp.feasibility(inst, xK), feas_n)
    expected["iteration-budget"] = (
        float(np.sum(inner_iters)),
        _recheck.iteration_budget(
            sched.setting.value,
            sched.error_mode.value,
            sched.K,
            sched.C_beta,
            sched.C_eps,
            sched.eps,
            sched.sigma,
            sched.beta_g,
            prog.diameter_D,
            prog.strong_convexity_mu,
            consts.L_star,
            consts.H,
        ),
    )
    # per-step dual distance surplus
    worst = -np.inf
    y_prev, z_prev = y0, z0
    for k in range(sched.K):
        if run_data["trace"]["verified"][k]:
            before = 0.5 * (
                float(np.sum((y_prev - reference.y) ** 2))
                + float(np.sum((z_prev - reference.z) ** 2))
            )
            after = 0.5 * (
                float(np.sum((ys[k] - reference.y) ** 2))
                + float(np.sum((zs[k] - reference.z) ** 2))
            )
            worst = max(worst, after - before - float(sched.rho[k] * sched.eps_k[k]))
        y_prev, z_prev = ys[k], zs[k]
    if np.isfinite(worst):
        expected["dual-distance-step"] = (worst, FEJER_SLACK)
    expected["eps-optimal-objective"] = (
        abs(qcqp.objective_value(inst, xbar_K) - reference.f0), sched.eps,
    )
    expected["eps-optimal-feasibility"] = (qcqp.feasibility(inst, xbar_K), sched.eps)

    for check in run_data["checks"]:
        name = check["name"]
        if name not in expected:
            problems.append(f"{regime}: unknown check {name}")
            continue
        lhs, rhs = expected[name]
        if not _close(float(check["lhs"]), lhs):
            problems.append(f"{regime}: check {name} lhs mismatch")
        if not _close(float(check["rhs"]), rhs):
            problems.append(f"{regime}: check {name} rhs mismatch")
        if bool(check["satisfied"]) != (lhs <= rhs or _close(lhs, rhs)):
            # re-evaluate decision with the recomputed values
            if bool(check["satisfied"]) != (float(check["lhs"]) <= float(check["rhs"])):
                problems.append(f"{regime}: check {name} satisfied flag mismatch")
    return problems


def cmd_verify(args: argparse.Namespace) -> int:
    inst = _load_instance_or_exit(args.instance)
    try:
        bundle = json.loads(Path(args.certificate).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read certificate: {exc}", file=sys.stderr)
        return 2
    if bundle.get("format") != "ialm-certificate-v1":
        print("error: certificate schema mismatch", file=sys.stderr)
        return 2
    if bundle.get("instance_digest") != inst.digest():
        print("error: certificate does not match this instance", file=sys.stderr)
        return 2
    if not bundle.get("reference"):
        print("warning: no reference duals stored; bounds not evaluated")
        return 0
    reference = Reference.from_dict(bundle["reference"])
    problems: list[str] = []
    for run_data in bundle["runs"]:
        problems.extend(_verify_run(run_data, inst, reference, bundle["params"]))
    if problems:
        for item in problems:
            print(f"verification failed: {item}", file=sys.stderr)
        return 1
    print(f"verified {len(bundle['runs'])} run(s): all checks reproduced")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ialm",
        description="Inexact augmented Lagrangian solver and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a seeded QCQP instance file")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--m", type=int, default=5)
    convexity = gen.add_mutually_exclusive_group()
    convexity.add_argument("--convex", action="store_true", default=True)
    convexity.add_argument("--strongly-convex", dest="strongly_convex", action="store_true")
    gen.add_argument("--q0-scale", dest="q0_scale", type=float, default=1.0)
    gen.add_argument("--out", required=True)

    def add_run_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--instance", required=True)
        p.add_argument("--eps", type=float, default=1e-3)
        p.add_argument("--K", type=int, default=10)
        p.add_argument(
            "--c-beta", dest="c_beta", default=1.0,
            type=lambda s: s if s == "auto" else float(s),
            help="penalty budget constant, or 'auto' for the certified-optimality value",
        )
        p.add_argument(
            "--c-eps", dest="c_eps", type=float, default=None,
            help="accuracy budget constant (default ||u - l||)",
        )
        p.add_argument("--sigma", type=float, default=10.0)
        p.add_argument("--max-inner", dest="max_inner", type=int, default=10**6)
        p.add_argument("--out", required=True)

    bench = sub.add_parser("bench", help="run regimes, write CSV tables and a certificate")
    add_run_args(bench)
    bench.add_argument(
        "--regimes", default=None, help=f"comma-separated subset of {','.join(REGIMES)}"
    )
    bench.add_argument(
        "--timing", action="store_true",
        help="append a nondeterministic wall-time footer to each CSV",
    )

    solve = sub.add_parser("solve", help="run a single regime")
    add_run_args(solve)
    solve.add_argument("--regime", default="geo-const", choices=REGIMES)

    verify = sub.add_parser("verify", help="recompute a stored certificate's checks")
    verify.add_argument("--certificate", required=True)
    verify.add_argument("--instance", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate":
        if args.n < 1:
            parser.error("--n must be >= 1")
        if args.m < 0:
            parser.error("--m must be >= 0")
        return cmd_generate(args)
    if args.command == "bench":
        if args.regimes:
            unknown = [r for r in args.regimes.split(",") if r not in REGIMES]
            if unknown:
                parser.error(f"unknown regimes: {','.join(unknown)}")
        return cmd_bench(args)
    if args.command == "solve":
        return cmd_solve(args)
    if args.command == "verify":
        return cmd_verify(args)
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
