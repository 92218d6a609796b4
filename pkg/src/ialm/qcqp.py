"""Dense QCQP instances: seeded generation, adapter to the oracle model,
high-accuracy reference solutions and the experiment runner.

Instances are box-constrained convex QCQPs

    min 0.5 x'Q0 x + c0'x   s.t.  0.5 x'Qj x + cj'x + dj <= 0,  l <= x <= u

with PSD matrix stacks, Gaussian linear terms and strictly negative ``dj``
so the origin is strictly feasible.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .certificates import (
    BoundCheck,
    TheoryConstants,
    c_beta_sufficiency,
    certify_trace,
    derive_constants,
    kkt_residual,
)
from .driver import (
    ErrorMode,
    InnerConfig,
    InnerSolve,
    InvalidParams,
    Schedule,
    Setting,
    SolveTrace,
    build_schedule,
    run,
)
from .problem import ConvexProgram, EvalCounters, box_stationarity_residual

INSTANCE_FORMAT = "ialm-qcqp-v1"


class ReferenceNotCertified(RuntimeError):
    """Reference solve failed to reach the requested KKT accuracy."""


@dataclass
class QcqpInstance:
    """One generated problem; matrices are dense row-major float64."""

    seed: int
    n: int
    m: int
    convexity: str
    q0_scale: float
    Q: np.ndarray  # (m+1, n, n)
    c: np.ndarray  # (m+1, n)
    d: np.ndarray  # (m,)
    lower: np.ndarray
    upper: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": INSTANCE_FORMAT,
            "seed": self.seed,
            "n": self.n,
            "m": self.m,
            "convexity": self.convexity,
            "q0_scale": self.q0_scale,
            "metadata": self.metadata,
            "Q": self.Q.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "QcqpInstance":
        if data.get("format") != INSTANCE_FORMAT:
            raise ValueError(f"unrecognized instance format {data.get('format')!r}")
        return QcqpInstance(
            seed=int(data["seed"]),
            n=int(data["n"]),
            m=int(data["m"]),
            convexity=str(data["convexity"]),
            q0_scale=float(data["q0_scale"]),
            Q=np.asarray(data["Q"], dtype=float),
            c=np.asarray(data["c"], dtype=float),
            d=np.asarray(data["d"], dtype=float),
            lower=np.asarray(data["lower"], dtype=float),
            upper=np.asarray(data["upper"], dtype=float),
            metadata=dict(data.get("metadata", {})),
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def save_instance(inst: QcqpInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(inst.to_dict(), fh)
        fh.write("\n")


def load_instance(path) -> QcqpInstance:
    with open(path) as fh:
        return QcqpInstance.from_dict(json.load(fh))


def generate_instance(
    seed: int,
    n: int,
    m: int,
    convexity: str = "convex",
    q0_scale: float = 1.0,
    kappa: float = 100.0,
) -> QcqpInstance:
    """Seeded random instance.

    ``Qj = M'M / n`` with standard Gaussian ``M`` (PSD by construction).
    The objective matrix is reshaped by tag: ``convex`` zeroes out the
    ``ceil(n/4)`` smallest eigenvalues (rank-deficient, mu = 0);
    ``strongly_convex`` floors the spectrum at ``0.1 ||Q0|| / kappa``.
    ``dj = -|N(0,1)| - 0.1`` keeps all inequalities strictly satisfied at the
    origin.  Deterministic under the seed; generator choices are recorded in
    the metadata.
    """
    if n < 1:
        raise InvalidParams("n must be >= 1")
    if m < 0:
        raise InvalidParams("m must be >= 0")
    if convexity not in ("convex", "strongly_convex"):
        raise InvalidParams("convexity must be 'convex' or 'strongly_convex'")
    if q0_scale <= 0:
        raise InvalidParams("q0_scale must be > 0")

    rng = np.random.default_rng(seed)
    Q = np.empty((m + 1, n, n))
    for j in range(m + 1):
        M = rng.normal(size=(n, n))
        Q[j] = M.T @ M / n
    c = rng.normal(size=(m + 1, n))
    d = -np.abs(rng.normal(size=m)) - 0.1

    eigvals, V = np.linalg.eigh(Q[0])
    rank_drop = 0
    if convexity == "convex":
        rank_drop = math.ceil(n / 4)
        eigvals = eigvals.copy()
        eigvals[:rank_drop] = 0.0
    else:
        eigvals = np.maximum(eigvals, 0.1 * eigvals[-1] / kappa)
    Q0 = (V * eigvals) @ V.T
    Q[0] = 0.5 * (Q0 + Q0.T) * q0_scale

    return QcqpInstance(
        seed=seed,
        n=n,
        m=m,
        convexity=convexity,
        q0_scale=q0_scale,
        Q=Q,
        c=c,
        d=d,
        lower=-np.ones(n),
        upper=np.ones(n),
        metadata={
            "gaussian_variance": 1.0,
            "rank_deficiency": rank_drop,
            "kappa": kappa,
        },
    )


# ---------------------------------------------------------------------------
# direct (oracle-free) evaluations on the instance arrays
# ---------------------------------------------------------------------------

def objective_value(inst: QcqpInstance, x: np.ndarray) -> float:
    q0x = inst.Q[0] @ x
    return float(0.5 * x @ q0x + inst.c[0] @ x)


def constraint_values(inst: QcqpInstance, x: np.ndarray) -> np.ndarray:
    if inst.m == 0:
        return np.zeros(0)
    qx = np.einsum("jik,k->ji", inst.Q[1:], x)
    return 0.5 * qx @ x + inst.c[1:] @ x + inst.d


def feasibility(inst: QcqpInstance, x: np.ndarray) -> float:
    return float(np.linalg.norm(np.maximum(constraint_values(inst, x), 0.0)))


def _kkt_gradient(inst: QcqpInstance, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    v = inst.Q[0] @ x + inst.c[0]
    for i in range(inst.m):
        if z[i] != 0.0:
            v = v + z[i] * (inst.Q[i + 1] @ x + inst.c[i + 1])
    return v


# ---------------------------------------------------------------------------
# adapter to the oracle model
# ---------------------------------------------------------------------------

def _constraint_oracle(Qj: np.ndarray, cj: np.ndarray, dj: float) -> Callable:
    def oracle(x: np.ndarray):
        qx = Qj @ x
        return 0.5 * float(x @ qx) + float(cj @ x) + dj, qx + cj

    return oracle


def qcqp_as_program(
    inst: QcqpInstance, counters: Optional[EvalCounters] = None
) -> ConvexProgram:
    """Wrap an instance as a metered oracle bundle with analytic constants.

    ``L_j`` are the exact spectral norms, ``mu`` the smallest objective
    eigenvalue (zero under the convex tag), ``D = ||u - l||`` and
    ``B_j = max(sup_box |f_j|, sup_box ||grad f_j||)`` bounded through the
    enclosing ball of radius ``R = max-norm radius * sqrt(n)``.
    """
    Q, c, d = inst.Q, inst.c, inst.d
    lower, upper = inst.lower, inst.upper
    L = np.array([float(np.linalg.eigvalsh(Q[j])[-1]) for j in range(inst.m + 1)])
    L0 = L[0]
    mu = 0.0
    if inst.convexity == "strongly_convex":
        mu = max(float(np.linalg.eigvalsh(Q[0])[0]), 0.0)

    R = max(float(np.max(np.abs(lower))), float(np.max(np.abs(upper)))) * math.sqrt(inst.n)
    c_norms = np.linalg.norm(c, axis=1)
    B = np.maximum(
        0.5 * L[1:] * R * R + c_norms[1:] * R + np.abs(d),
        L[1:] * R + c_norms[1:],
    )

    def smooth_objective(x: np.ndarray):
        qx = Q[0] @ x
        return 0.5 * float(x @ qx) + float(c[0] @ x), qx + c[0]

    def prox(xhat: np.ndarray, gamma: float):
        return np.clip(xhat, lower, upper)

    constraints = [
        _constraint_oracle(Q[j + 1], c[j + 1], float(d[j])) for j in range(inst.m)
    ]
    return ConvexProgram(
        n=inst.n,
        m=inst.m,
        smooth_objective=smooth_objective,
        nonsmooth_prox=prox,
        constraints=constraints,
        affine_A=np.zeros((0, inst.n)),
        affine_b=np.zeros(0),
        strong_convexity_mu=mu,
        grad_lipschitz_L0=L0,
        constraint_grad_lipschitz=L[1:],
        constraint_bounds=B,
        diameter_D=float(np.linalg.norm(upper - lower)),
        box=(lower.copy(), upper.copy()),
        counters=counters if counters is not None else EvalCounters(),
    )


def inner_termination(
    grad: np.ndarray,
    x_new: np.ndarray,
    box: tuple[np.ndarray, np.ndarray],
    eps_k: float,
    D: float,
) -> bool:
    """Scheduled stop rule for the x-subproblems: the distance from
    ``-grad`` to the box normal cone at ``x_new`` is at most ``eps_k / D``.

    By convexity and the set diameter this implies the scheduled objective
    accuracy of the subproblem solve.
    """
    lower, upper = box
    x_new = np.asarray(x_new, dtype=float)
    if np.any(x_new < lower) or np.any(x_new > upper):
        raise ValueError("x_new must lie inside the box")
    return box_stationarity_residual(grad, x_new, lower, upper) <= eps_k / D


def fast_subproblem_solver(inst: QcqpInstance) -> Callable[..., InnerSolve]:
    """Fused inner solver backed by the selected kernel backend.

    Counts two joint gradient/function evaluations per inner iteration (one
    for the step, one for the stop check) and one prox per iteration, same
    as the generic oracle path.
    """
    Q = np.ascontiguousarray(inst.Q)
    c = np.ascontiguousarray(inst.c)
    d = np.ascontiguousarray(inst.d)
    lower = np.ascontiguousarray(inst.lower)
    upper = np.ascontiguousarray(inst.upper)

    def solver(prog, beta, y, z, x0, L_phi, tol, max_iters) -> InnerSolve:
        x, iters, res, converged, fvals = kernels.solve_al_subproblem(
            Q, c, d, lower, upper, beta, z, L_phi,
            prog.strong_convexity_mu, x0, tol, max_iters,
        )
        prog.counters.add(grad=2 * iters, fun=2 * iters, prox=iters)
        return InnerSolve(
            x=x,
            iters=iters,
            stop_metric=res,
            converged=converged,
            f_vals=fvals,
            eq_residual=np.zeros(0),
        )

    return solver


# ---------------------------------------------------------------------------
# reference oracle
# ---------------------------------------------------------------------------

@dataclass
class Reference:
    """Certified primal-dual reference solution."""

    x: np.ndarray
    f0: float
    y: np.ndarray
    z: np.ndarray
    kkt: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "f0": self.f0,
            "y": self.y.tolist(),
            "z": self.z.tolist(),
            "kkt": list(self.kkt),
        }

    @staticmethod
    def from_dict(data: dict) -> "Reference":
        return Reference(
            x=np.asarray(data["x"], dtype=float),
            f0=float(data["f0"]),
            y=np.asarray(data["y"], dtype=float),
            z=np.asarray(data["z"], dtype=float),
            kkt=tuple(data["kkt"]),
        )


def _newton_kkt(
    inst: QcqpInstance,
    act: np.ndarray,
    at_lo: np.ndarray,
    at_hi: np.ndarray,
    x0: np.ndarray,
    zeta0: np.ndarray,
    iters: int = 60,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Newton iteration on the reduced KKT equations for fixed active sets:
    stationarity on the free coordinates plus ``f_i(x) = 0`` on the active
    inequality set, with bound-active coordinates pinned."""
    Q, c = inst.Q, inst.c
    free = ~(at_lo | at_hi)
    idx = np.flatnonzero(act)
    x = x0.copy()
    x[at_lo] = inst.lower[at_lo]
    x[at_hi] = inst.upper[at_hi]
    zeta = zeta0.copy()
    nf, na = int(free.sum()), len(idx)
    best = math.inf
    stall = 0
    for _ in range(iters):
        grads = np.einsum("jik,k->ji", Q[1:], x) + c[1:] if inst.m else np.zeros((0, inst.n))
        fvals = constraint_values(inst, x)
        v = Q[0] @ x + c[0]
        if na:
            v = v + zeta @ grads[idx]
        R = np.concatenate([v[free], fvals[idx]])
        res = float(np.linalg.norm(R, ord=np.inf)) if R.size else 0.0
        if res <= 1e-13 * (1.0 + float(np.linalg.norm(v, ord=np.inf))):
            break
        if res >= best * 0.5:
            stall += 1
            if stall > 3:
                break
        else:
            stall = 0
        best = min(best, res)
        H = Q[0].copy()
        for k, i in enumerate(idx):
            H += zeta[k] * Q[i + 1]
        G = grads[idx][:, free] if na else np.zeros((0, nf))
        kkt_mat = np.zeros((nf + na, nf + na))
        kkt_mat[:nf, :nf] = H[np.ix_(free, free)]
        kkt_mat[:nf, nf:] = G.T
        kkt_mat[nf:, :nf] = G
        try:
            step = np.linalg.solve(kkt_mat, -R)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(kkt_mat, -R, rcond=None)[0]
        x[free] += step[:nf]
        zeta += step[nf:]
    return x, zeta, best if math.isfinite(best) else 0.0


def _active_set_polish(
    inst: QcqpInstance, x0: np.ndarray, z0: np.ndarray, max_rounds: int = 40
) -> tuple[np.ndarray, np.ndarray]:
    """Refine a near-optimal candidate to machine-accurate KKT by solving the
    reduced stationarity system on the active sets identified by the run,
    with sign-based set corrections between rounds."""
    lo, hi = inst.lower, inst.upper
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    z = np.maximum(np.asarray(z0, dtype=float), 0.0)
    f = constraint_values(inst, x)
    act = (z > 1e-10) | (f > -1e-7 * (1.0 + np.abs(inst.d)))
    at_lo = x <= lo + 1e-12
    at_hi = x >= hi - 1e-12

    for _ in range(max_rounds):
        x, zeta, _ = _newton_kkt(inst, act, at_lo, at_hi, x, z[act])
        z = np.zeros(inst.m)
        z[act] = zeta
        v = _kkt_gradient(inst, x, np.maximum(z, 0.0))
        f = constraint_values(inst, x)
        changed = False

        drop = act & (z < -1e-10)
        if np.any(drop):
            act = act & ~drop
            changed = True
        add = (~act) & (f > 1e-10)
        if np.any(add):
            act = act | add
            changed = True

        release_hi = at_hi & (v > 1e-10)
        release_lo = at_lo & (v < -1e-10)
        if np.any(release_hi):
            at_hi = at_hi & ~release_hi
            changed = True
        if np.any(release_lo):
            at_lo = at_lo & ~release_lo
            changed = True
        free = ~(at_lo | at_hi)
        go_hi = free & (x > hi)
        go_lo = free & (x < lo)
        if np.any(go_hi):
            at_hi = at_hi | go_hi
            changed = True
        if np.any(go_lo):
            at_lo = at_lo | go_lo
            changed = True

        if not changed:
            break
        z = np.maximum(z, 0.0)

    return np.clip(x, lo, hi), np.maximum(z, 0.0)


# tolerance floor applied to reference-mode inner solves: with penalty weight
# beta, the evaluated AL gradient carries rounding noise proportional to beta,
# so stationarity below ~1e-12 * beta is not resolvable in double precision.
_REFERENCE_TOL_FLOOR = 1e-12


def _floored_solver(base: Callable[..., InnerSolve]) -> Callable[..., InnerSolve]:
    def solver(prog, beta, y, z, x0, L_phi, tol, max_iters):
        return base(prog, beta, y, z, x0, L_phi, max(tol, _REFERENCE_TOL_FLOOR * beta), max_iters)

    return solver


def reference_solve(
    inst: QcqpInstance,
    tol: float = 1e-7,
    sigma: float = 10.0,
    max_inner: int = 100_000,
) -> Reference:
    """Certified reference optimum.

    Warm-up runs (geometric penalty, adaptive accuracy; the first phase uses
    placeholder duals for the penalty-budget constant, later phases refine it
    from the observed multipliers) identify the active sets; after each phase
    an active-set Newton refinement tries to drive the KKT residuals to
    machine accuracy.  Returns at the first certified phase and raises
    ``ReferenceNotCertified`` if none certifies within ``tol``.
    """
    if tol > 1e-7:
        raise InvalidParams("reference certification requires tol <= 1e-7")
    prog = qcqp_as_program(inst)
    C_eps = float(np.linalg.norm(inst.upper - inst.lower))
    mu = prog.strong_convexity_mu
    error_mode = (
        ErrorMode.ADAPTIVE_STRONGLY_CONVEX if mu > 0 else ErrorMode.ADAPTIVE_CONVEX
    )
    solver = _floored_solver(fast_subproblem_solver(inst))
    inner = InnerConfig(max_iters=max_inner, subproblem_solver=solver)

    c_beta = c_beta_sufficiency(0.0, 0.0, C_eps)
    x_warm = np.zeros(inst.n)
    worst: tuple[float, float, float] = (math.inf, math.inf, math.inf)
    for eps_phase, K_phase in ((1e-3, 8), (1e-5, 10), (1e-6, 12)):
        sched = build_schedule(
            Setting.GEOMETRIC, error_mode, K=K_phase, C_beta=c_beta, C_eps=C_eps,
            eps=eps_phase, sigma=sigma, mu=mu,
        )
        trace = run(prog, sched, x0=x_warm, inner=inner)
        x_warm = trace.xs[-1]
        c_beta = c_beta_sufficiency(0.0, trace.zs[-1], C_eps)
        x, z = _active_set_polish(inst, trace.xs[-1], trace.zs[-1])
        y = np.zeros(0)
        kkt = kkt_residual(prog, x, y, z)
        if max(kkt) <= tol:
            return Reference(x=x, f0=objective_value(inst, x), y=y, z=z, kkt=kkt)
        worst = kkt
    raise ReferenceNotCertified(
        f"KKT residuals {worst} exceed tol={tol:g} on seed {inst.seed}"
    )


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

REGIMES = ("penalty", "const-const", "geo-const", "geo-adapt")


def schedule_for_regime(
    regime: str,
    eps: float,
    K: int,
    C_beta: float,
    C_eps: float,
    sigma: float,
    mu: float,
) -> Schedule:
    """Named parameter regimes: the penalty method is the single-outer-step
    constant schedule; the others pair the two penalty settings with the
    constant or adaptive accuracy arrays (adaptive picks the variant matching
    the objective's convexity)."""
    if regime == "penalty":
        return build_schedule(Setting.CONSTANT, ErrorMode.CONSTANT, 1, C_beta, C_eps, eps, mu=mu)
    if regime == "const-const":
        return build_schedule(Setting.CONSTANT, ErrorMode.CONSTANT, K, C_beta, C_eps, eps, mu=mu)
    if regime == "geo-const":
        return build_schedule(
            Setting.GEOMETRIC, ErrorMode.CONSTANT, K, C_beta, C_eps, eps, sigma=sigma, mu=mu
        )
    if regime == "geo-adapt":
        mode = ErrorMode.ADAPTIVE_STRONGLY_CONVEX if mu > 0 else ErrorMode.ADAPTIVE_CONVEX
        return build_schedule(
            Setting.GEOMETRIC, mode, K, C_beta, C_eps, eps, sigma=sigma, mu=mu
        )
    raise InvalidParams(f"unknown regime {regime!r}; expected one of {REGIMES}")


TABLE_COLUMNS = (
    "outer_iter",
    "grad_evals",
    "fun_evals",
    "obj_gap_last",
    "feas_last",
    "obj_gap_avg",
    "feas_avg",
)


@dataclass
class RegimeRun:
    regime: str
    schedule: Schedule
    trace: SolveTrace
    rows: list[dict]
    checks: list[BoundCheck]

    @property
    def total_grad_evals(self) -> int:
        return int(np.sum(self.trace.grad_evals))

    @property
    def total_fun_evals(self) -> int:
        return int(np.sum(self.trace.fun_evals))

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "schedule": self.schedule.to_dict(),
            "rows": self.rows,
            "checks": [c.to_dict() for c in self.checks],
            "trace": {
                "x0": self.trace.x0.tolist(),
                "y0": self.trace.y0.tolist(),
                "z0": self.trace.z0.tolist(),
                "xs": self.trace.xs.tolist(),
                "ys": self.trace.ys.tolist(),
                "zs": self.trace.zs.tolist(),
                "inner_iters": self.trace.inner_iters.tolist(),
                "grad_evals": self.trace.grad_evals.tolist(),
                "fun_evals": self.trace.fun_evals.tolist(),
                "prox_evals": self.trace.prox_evals.tolist(),
                "stop_metrics": self.trace.stop_metrics.tolist(),
                "inner_tols": self.trace.inner_tols.tolist(),
                "verified": [bool(v) for v in self.trace.verified],
            },
        }


@dataclass
class ExperimentResult:
    instance_digest: str
    instance_meta: dict
    reference: Reference
    runs: list[RegimeRun]
    params: dict

    def to_dict(self) -> dict:
        return {
            "format": "ialm-certificate-v1",
            "instance_digest": self.instance_digest,
            "instance_meta": self.instance_meta,
            "params": self.params,
            "reference": self.reference.to_dict(),
            "runs": [r.to_dict() for r in self.runs],
        }

    @property
    def all_must_hold_ok(self) -> bool:
        return all(
            c.satisfied for r in self.runs for c in r.checks if c.must_hold
        )

    def failing_checks(self) -> list[tuple[str, str]]:
        return [
            (r.regime, c.name)
            for r in self.runs
            for c in r.checks
            if c.must_hold and not c.satisfied
        ]


def experiment_rows(
    inst: QcqpInstance, trace: SolveTrace, f0_star: float
) -> list[dict]:
    """Per-outer-iteration table rows (first row is the initial point)."""
    rows = [
        {
            "outer_iter": 0,
            "grad_evals": 0,
            "fun_evals": 0,
            "obj_gap_last": abs(objective_value(inst, trace.x0) - f0_star),
            "feas_last": feasibility(inst, trace.x0),
            "obj_gap_avg": abs(objective_value(inst, trace.x0) - f0_star),
            "feas_avg": feasibility(inst, trace.x0),
        }
    ]
    for k in range(trace.K):
        xk = trace.xs[k]
        xbar = trace.running_average(k + 1)
        rows.append(
            {
                "outer_iter": k + 1,
                "grad_evals": int(trace.grad_evals[k]),
                "fun_evals": int(trace.fun_evals[k]),
                "obj_gap_last": abs(objective_value(inst, xk) - f0_star),
                "feas_last": feasibility(inst, xk),
                "obj_gap_avg": abs(objective_value(inst, xbar) - f0_star),
                "feas_avg": feasibility(inst, xbar),
            }
        )
    return rows


def run_regime(
    inst: QcqpInstance,
    regime: str,
    reference: Reference,
    eps: float = 1e-3,
    K: int = 10,
    C_beta: float = 1.0,
    C_eps: Optional[float] = None,
    sigma: float = 10.0,
    max_inner: int = 10**6,
    use_fast_kernel: bool = True,
) -> RegimeRun:
    """Run one regime on a fresh metered program and certify the trace."""
    prog = qcqp_as_program(inst)
    if C_eps is None:
        C_eps = float(np.linalg.norm(inst.upper - inst.lower))
    sched = schedule_for_regime(
        regime, eps, K, C_beta, C_eps, sigma, prog.strong_convexity_mu
    )
    inner = InnerConfig(
        max_iters=max_inner,
        subproblem_solver=fast_subproblem_solver(inst) if use_fast_kernel else None,
    )
    trace = run(prog, sched, inner=inner)
    consts = derive_constants(prog, C_eps, reference.y, reference.z, f0_star=reference.f0)
    require_opt = C_beta >= c_beta_sufficiency(reference.y, reference.z, C_eps) - 1e-12
    checks = certify_trace(prog, trace, consts, require_eps_optimal=require_opt)
    rows = experiment_rows(inst, trace, reference.f0)
    return RegimeRun(regime=regime, schedule=sched, trace=trace, rows=rows, checks=checks)


def run_experiment(
    inst: QcqpInstance,
    regimes: Sequence[str] = REGIMES,
    eps: float = 1e-3,
    K: int = 10,
    C_beta: float = 1.0,
    C_eps: Optional[float] = None,
    sigma: float = 10.0,
    max_inner: int = 10**6,
    reference: Optional[Reference] = None,
    use_fast_kernel: bool = True,
    workers: int = 1,
) -> ExperimentResult:
    """Run the requested regimes against a certified reference and collect
    table rows plus bound checks for each."""
    for regime in regimes:
        if regime not in REGIMES:
            raise InvalidParams(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if reference is None:
        reference = reference_solve(inst)
    if C_eps is None:
        C_eps = float(np.linalg.norm(inst.upper - inst.lower))

    def one(regime: str) -> RegimeRun:
        return run_regime(
            inst, regime, reference, eps=eps, K=K, C_beta=C_beta, C_eps=C_eps,
            sigma=sigma, max_inner=max_inner, use_fast_kernel=use_fast_kernel,
        )

    if workers > 1 and len(regimes) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, regimes))
    else:
        runs = [one(r) for r in regimes]

    return ExperimentResult(
        instance_digest=inst.digest(),
        instance_meta={
            "seed": inst.seed,
            "n": inst.n,
            "m": inst.m,
            "convexity": inst.convexity,
            "q0_scale": inst.q0_scale,
        },
        reference=reference,
        runs=runs,
        params={
            "eps": eps,
            "K": K,
            "C_beta": C_beta,
            "C_eps": C_eps,
            "sigma": sigma,
            "max_inner": max_inner,
            "regimes": list(regimes),
        },
    )


# ---------------------------------------------------------------------------
# equality-to-inequality transform
# ---------------------------------------------------------------------------

def _affine_oracle(a: np.ndarray, b: float, sign: float) -> Callable:
    def oracle(x: np.ndarray):
        return sign * (float(a @ x) - b), sign * a

    return oracle


def transform_equalities_to_inequalities(prog: ConvexProgram) -> ConvexProgram:
    """Rewrite each equality row ``a'x = b`` as the inequality pair
    ``+(a'x - b) <= 0`` and ``-(a'x - b) <= 0``.

    The pairs have zero gradient-Lipschitz constants; their magnitude bounds
    are ``max(sup_box |a'x - b|, ||a||)`` (a box is required for the analytic
    supremum).  The solution set is unchanged.
    """
    if prog.p == 0:
        return prog
    if prog.box is None:
        raise InvalidParams("transforming equalities needs box bounds for the constants")
    lower, upper = prog.box
    new_constraints = list(prog.constraints)
    new_L = list(prog.constraint_grad_lipschitz)
    new_B = list(prog.constraint_bounds)
    for row in range(prog.p):
        a = prog.affine_A[row]
        b = float(prog.affine_b[row])
        sup = float(np.sum(np.where(a > 0, a * upper, a * lower))) - b
        inf = float(np.sum(np.where(a > 0, a * lower, a * upper))) - b
        bound = max(max(sup, -inf, 0.0), float(np.linalg.norm(a)))
        for sign in (1.0, -1.0):
            new_constraints.append(_affine_oracle(a, b, sign))
            new_L.append(0.0)
            new_B.append(bound)
    return ConvexProgram(
        n=prog.n,
        m=prog.m + 2 * prog.p,
        smooth_objective=prog.smooth_objective,
        nonsmooth_prox=prog.nonsmooth_prox,
        constraints=new_constraints,
        affine_A=np.zeros((0, prog.n)),
        affine_b=np.zeros(0),
        strong_convexity_mu=prog.strong_convexity_mu,
        grad_lipschitz_L0=prog.grad_lipschitz_L0,
        constraint_grad_lipschitz=np.asarray(new_L),
        constraint_bounds=np.asarray(new_B),
        diameter_D=prog.diameter_D,
        box=(lower.copy(), upper.copy()),
        h_value=prog.h_value,
    )


def derive_reference_constants(
    inst: QcqpInstance, reference: Reference, C_eps: float
) -> TheoryConstants:
    """Convenience: constants for bound evaluation on an instance."""
    prog = qcqp_as_program(inst)
    return derive_constants(prog, C_eps, reference.y, reference.z, f0_star=reference.f0)
