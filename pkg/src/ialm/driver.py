"""Outer loop of the inexact augmented Lagrangian method.

Each outer iteration minimizes the augmented Lagrangian in ``x`` to a
scheduled accuracy (warm-started accelerated proximal gradient), then takes
a dual ascent step on the multipliers.  Penalty/step/accuracy schedules come
in two penalty settings (constant, geometric) and three accuracy modes
(constant, adaptive for convex objectives, adaptive for strongly convex
objectives), all constructed so that sum_k beta_k * eps_k = C_eps / 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import apg
from .auglag import al_evaluate, lipschitz_estimate
from .problem import ConvexProgram, DimensionMismatch, box_stationarity_residual


class InvalidParams(ValueError):
    """Schedule parameters out of range or mutually inconsistent."""


class Setting(str, enum.Enum):
    CONSTANT = "constant"
    GEOMETRIC = "geometric"


class ErrorMode(str, enum.Enum):
    CONSTANT = "constant"
    ADAPTIVE_CONVEX = "adaptive-convex"
    ADAPTIVE_STRONGLY_CONVEX = "adaptive-strongly-convex"


@dataclass
class Schedule:
    """Per-outer-iteration parameter arrays plus their generating constants.

    Invariants: ``rho == beta`` elementwise, ``sum(rho) == C_beta / eps`` and
    ``sum(beta * eps_k) == C_eps / 2`` (the schedules meet the accuracy
    budget with equality).
    """

    setting: Setting
    error_mode: ErrorMode
    K: int
    C_beta: float
    C_eps: float
    eps: float
    sigma: Optional[float]
    beta: np.ndarray
    rho: np.ndarray
    eps_k: np.ndarray

    @property
    def rho_sum(self) -> float:
        return float(np.sum(self.rho))

    @property
    def rho_eps_sum(self) -> float:
        return float(np.sum(self.rho * self.eps_k))

    @property
    def beta_g(self) -> Optional[float]:
        if self.setting is Setting.GEOMETRIC:
            return float(self.beta[0])
        return None

    def to_dict(self) -> dict:
        return {
            "setting": self.setting.value,
            "error_mode": self.error_mode.value,
            "K": self.K,
            "C_beta": self.C_beta,
            "C_eps": self.C_eps,
            "eps": self.eps,
            "sigma": self.sigma,
            "beta": self.beta.tolist(),
            "rho": self.rho.tolist(),
            "eps_k": self.eps_k.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "Schedule":
        return Schedule(
            setting=Setting(data["setting"]),
            error_mode=ErrorMode(data["error_mode"]),
            K=int(data["K"]),
            C_beta=float(data["C_beta"]),
            C_eps=float(data["C_eps"]),
            eps=float(data["eps"]),
            sigma=None if data["sigma"] is None else float(data["sigma"]),
            beta=np.asarray(data["beta"], dtype=float),
            rho=np.asarray(data["rho"], dtype=float),
            eps_k=np.asarray(data["eps_k"], dtype=float),
        )


def build_schedule(
    setting: Setting | str,
    error_mode: ErrorMode | str,
    K: int,
    C_beta: float,
    C_eps: float,
    eps: float,
    sigma: Optional[float] = None,
    mu: float = 0.0,
) -> Schedule:
    """Construct the penalty/step/accuracy arrays for a target accuracy ``eps``.

    Constant setting: ``beta_k = rho_k = C_beta / (K eps)``.  Geometric:
    ``beta_k = rho_k = beta_g sigma^k`` with ``beta_g`` chosen so the betas
    sum to ``C_beta / eps``.  Accuracy arrays: constant mode uses
    ``eps_k = (eps / 2) C_eps / C_beta``; the adaptive modes spread the
    budget as ``(C_eps / 2) / (beta_k^{1/3} sum_t beta_t^{2/3})`` (convex)
    or ``(C_eps / 2) / (sqrt(beta_k) sum_t sqrt(beta_t))`` (strongly convex).
    """
    setting = Setting(setting)
    error_mode = ErrorMode(error_mode)
    if K < 1:
        raise InvalidParams("K must be >= 1")
    if not (C_beta > 0 and C_eps > 0 and eps > 0):
        raise InvalidParams("C_beta, C_eps and eps must be > 0")
    if error_mode is ErrorMode.ADAPTIVE_STRONGLY_CONVEX and not mu > 0:
        raise InvalidParams("strongly convex accuracy mode requires mu > 0")

    if setting is Setting.CONSTANT:
        beta = np.full(K, C_beta / (K * eps))
        sigma = None
    else:
        if sigma is None or not sigma > 1:
            raise InvalidParams("geometric setting requires sigma > 1")
        beta_g = (C_beta / eps) * (sigma - 1.0) / (sigma**K - 1.0)
        beta = beta_g * sigma ** np.arange(K)

    rho = beta.copy()
    if error_mode is ErrorMode.CONSTANT:
        eps_k = np.full(K, 0.5 * eps * C_eps / C_beta)
    elif error_mode is ErrorMode.ADAPTIVE_CONVEX:
        eps_k = 0.5 * C_eps / (np.cbrt(beta) * np.sum(np.cbrt(beta) ** 2))
    else:
        sqrt_beta = np.sqrt(beta)
        eps_k = 0.5 * C_eps / (sqrt_beta * np.sum(sqrt_beta))
    return Schedule(
        setting=setting,
        error_mode=error_mode,
        K=K,
        C_beta=float(C_beta),
        C_eps=float(C_eps),
        eps=float(eps),
        sigma=None if sigma is None else float(sigma),
        beta=beta,
        rho=rho,
        eps_k=eps_k,
    )


def update_multipliers(
    y: np.ndarray,
    z: np.ndarray,
    x_new: np.ndarray,
    beta_k: float,
    rho_k: float,
    prog: ConvexProgram,
    f_vals: Optional[np.ndarray] = None,
    eq_residual: Optional[np.ndarray] = None,
    count: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Dual ascent step: ``y += rho (Ax - b)`` and
    ``z_i += rho max(-z_i / beta, f_i(x))``.

    ``f_vals`` (and ``eq_residual``) may be passed in when the caller already
    evaluated them, e.g. from the inner solver's final stop check; otherwise
    one counted function evaluation is spent.  The result is clamped at zero,
    which only removes rounding noise: with ``rho <= beta`` the exact update
    preserves nonnegativity.
    """
    if not (beta_k > 0 and rho_k > 0):
        raise InvalidParams("beta_k and rho_k must be > 0")
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if y.shape[0] != prog.p or z.shape[0] != prog.m:
        raise DimensionMismatch("multiplier lengths must match (p, m)")
    if np.any(z < 0):
        raise InvalidParams("z must be componentwise nonnegative")
    if f_vals is None:
        f_vals = prog.constraint_values(x_new, count=count)
    if eq_residual is None:
        eq_residual = prog.equality_residual(x_new)
    y_new = y + rho_k * eq_residual
    if prog.m:
        if rho_k == beta_k:
            z_new = np.maximum(z + beta_k * f_vals, 0.0)
        else:
            z_new = np.maximum(z + rho_k * np.maximum(-z / beta_k, f_vals), 0.0)
    else:
        z_new = z.copy()
    return y_new, z_new


@dataclass
class InnerConfig:
    """Inner-solver policy: iteration cap per outer step and an optional
    replacement subproblem solver (e.g. the fused dense-QCQP kernel)."""

    max_iters: int = 10**6
    subproblem_solver: Optional[Callable[..., "InnerSolve"]] = None


@dataclass
class InnerSolve:
    """Outcome of one x-subproblem solve."""

    x: np.ndarray
    iters: int
    stop_metric: float
    converged: bool
    f_vals: Optional[np.ndarray] = None
    eq_residual: Optional[np.ndarray] = None


@dataclass
class SolveTrace:
    """Per-outer-iteration record of a run.

    Arrays hold iterates ``x^1..x^K`` (etc.); evaluation columns are deltas
    against the shared program counters, so they sum to the totals consumed
    by the run.  ``verified[k]`` is False when the inner cap was hit before
    the stationarity tolerance, in which case downstream certificates treat
    iteration ``k`` (and the run) as unverified rather than failing.
    """

    schedule: Schedule
    x0: np.ndarray
    y0: np.ndarray
    z0: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    inner_iters: np.ndarray
    grad_evals: np.ndarray
    fun_evals: np.ndarray
    prox_evals: np.ndarray
    stop_metrics: np.ndarray
    inner_tols: np.ndarray
    verified: np.ndarray
    x_bar: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.x_bar = ergodic_average(self)

    @property
    def K(self) -> int:
        return self.schedule.K

    @property
    def all_verified(self) -> bool:
        return bool(np.all(self.verified))

    def running_average(self, k: int) -> np.ndarray:
        """Rho-weighted average of ``x^1..x^k`` (1-based ``k``)."""
        if not 1 <= k <= self.K:
            raise ValueError("k out of range")
        w = self.schedule.rho[:k]
        return (w @ self.xs[:k]) / float(np.sum(w))

    def totals(self) -> dict:
        return {
            "inner_iters": int(np.sum(self.inner_iters)),
            "grad_evals": int(np.sum(self.grad_evals)),
            "fun_evals": int(np.sum(self.fun_evals)),
            "prox_evals": int(np.sum(self.prox_evals)),
        }

    def residuals(self, prog: ConvexProgram, f0_star: Optional[float] = None) -> list[dict]:
        """Per-outer-iteration feasibility (and objective gap when a
        reference optimum is supplied); diagnostic, uncounted."""
        from .problem import feasibility_violation

        out = []
        for k in range(self.K):
            row = {"feasibility": feasibility_violation(prog, self.xs[k])}
            if f0_star is not None:
                row["obj_gap"] = abs(prog.objective_value(self.xs[k]) - f0_star)
            out.append(row)
        return out


def ergodic_average(trace: SolveTrace, schedule: Optional[Schedule] = None) -> np.ndarray:
    """Rho-weighted average of the primal iterates ``x^1..x^K``."""
    sched = schedule if schedule is not None else trace.schedule
    if trace.xs.shape[0] == 0:
        raise ValueError("empty trace")
    w = sched.rho[: trace.xs.shape[0]]
    return (w @ trace.xs) / float(np.sum(w))


def _default_subproblem_solver(
    prog: ConvexProgram,
    beta: float,
    y: np.ndarray,
    z: np.ndarray,
    x0: np.ndarray,
    L_phi: float,
    tol: float,
    max_iters: int,
) -> InnerSolve:
    """Generic oracle-driven inner solve via the accelerated method.

    The last gradient evaluation of the stop check happens at the returned
    point, so its constraint values and equality residual are captured and
    reused for the multiplier update.
    """
    last: dict = {}

    def grad(xx: np.ndarray) -> np.ndarray:
        ev = al_evaluate(prog, beta, xx, y, z, want_grad=True)
        last["f_vals"] = ev.constraint_values
        last["eq_residual"] = ev.equality_residual
        return ev.smooth_grad

    lower, upper = prog.box if prog.box is not None else (None, None)

    def residual(xx: np.ndarray, gg: np.ndarray) -> float:
        return box_stationarity_residual(gg, xx, lower, upper)

    config = apg.ApgConfig(
        L_phi=L_phi,
        mu=prog.strong_convexity_mu,
        max_iters=max_iters,
        stop_rule=apg.GradientMapNorm(tol=tol, residual=residual),
    )
    result = apg.solve(grad, lambda v, gamma: prog.prox(v, gamma), config, x0)
    return InnerSolve(
        x=result.x_final,
        iters=result.iters_used,
        stop_metric=result.final_stop_metric,
        converged=result.converged,
        f_vals=last.get("f_vals"),
        eq_residual=last.get("eq_residual"),
    )


def run(
    prog: ConvexProgram,
    schedule: Schedule,
    x0: Optional[np.ndarray] = None,
    y0: Optional[np.ndarray] = None,
    z0: Optional[np.ndarray] = None,
    inner: Optional[InnerConfig] = None,
    require_no_affine: bool = False,
) -> SolveTrace:
    """Run ``K`` outer iterations and record the trace.

    Inner subproblems use the smooth AL gradient with Lipschitz constant
    ``lipschitz_estimate(prog, beta_k, z^k)``, warm-started from ``x^k`` and
    stopped when the projected stationarity falls below ``eps_k / D`` (this
    guarantees the scheduled objective accuracy by convexity).  Hitting the
    inner cap marks the iteration unverified and the run continues.

    ``require_no_affine`` enforces the inequality-only mode used by the
    final-iterate (nonergodic) guarantees.
    """
    if require_no_affine and prog.p > 0:
        raise InvalidParams("this mode requires a program without affine equalities")
    inner = inner or InnerConfig()
    solver = inner.subproblem_solver or _default_subproblem_solver

    x = np.zeros(prog.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros(prog.p) if y0 is None else np.asarray(y0, dtype=float).copy()
    z = np.zeros(prog.m) if z0 is None else np.asarray(z0, dtype=float).copy()
    if x.shape[0] != prog.n or y.shape[0] != prog.p or z.shape[0] != prog.m:
        raise DimensionMismatch("initial point dimensions must match the program")
    if np.any(z < 0):
        raise InvalidParams("z0 must be componentwise nonnegative")
    x0_saved, y0_saved, z0_saved = x.copy(), y.copy(), z.copy()

    K = schedule.K
    xs = np.empty((K, prog.n))
    ys = np.empty((K, prog.p))
    zs = np.empty((K, prog.m))
    t_k = np.empty(K, dtype=int)
    g_k = np.empty(K, dtype=int)
    f_k = np.empty(K, dtype=int)
    p_k = np.empty(K, dtype=int)
    metrics = np.empty(K)
    tols = np.empty(K)
    verified = np.empty(K, dtype=bool)

    for k in range(K):
        beta_k = float(schedule.beta[k])
        rho_k = float(schedule.rho[k])
        tol_k = float(schedule.eps_k[k]) / prog.diameter_D
        L_phi = lipschitz_estimate(prog, beta_k, z)
        before = prog.counters.snapshot()
        sub = solver(prog, beta_k, y, z, x, L_phi, tol_k, inner.max_iters)
        y, z = update_multipliers(
            y, z, sub.x, beta_k, rho_k, prog,
            f_vals=sub.f_vals, eq_residual=sub.eq_residual,
        )
        after = prog.counters.snapshot()
        x = np.asarray(sub.x, dtype=float)
        xs[k], ys[k], zs[k] = x, y, z
        t_k[k] = sub.iters
        g_k[k], f_k[k], p_k[k] = (after[0] - before[0], after[1] - before[1], after[2] - before[2])
        metrics[k] = sub.stop_metric
        tols[k] = tol_k
        verified[k] = sub.converged

    return SolveTrace(
        schedule=schedule,
        x0=x0_saved,
        y0=y0_saved,
        z0=z0_saved,
        xs=xs,
        ys=ys,
        zs=zs,
        inner_iters=t_k,
        grad_evals=g_k,
        fun_evals=f_k,
        prox_evals=p_k,
        stop_metrics=metrics,
        inner_tols=tols,
        verified=verified,
    )
