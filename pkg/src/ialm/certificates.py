"""Checkable guarantees: accuracy certificates, KKT residuals, error bounds
and evaluation budgets.

Every bound here is a pure arithmetic transcription of a guarantee that the
solver's schedules are designed to meet; ``verify``-style callers re-evaluate
them through the independently coded twin in ``_recheck`` (double-entry
bookkeeping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .auglag import ata_norm
from .driver import ErrorMode, InvalidParams, Schedule, Setting, SolveTrace
from .problem import ConvexProgram, box_stationarity_residual, feasibility_violation


class UnsupportedProblem(ValueError):
    """Residual decomposition not available for this h/X combination."""


def _norm(v: Union[float, np.ndarray]) -> float:
    if np.ndim(v) == 0:
        value = float(v)
        if value < 0:
            raise ValueError("a norm must be >= 0")
        return value
    return float(np.linalg.norm(np.asarray(v, dtype=float)))


@dataclass
class TheoryConstants:
    """Derived constants entering the bounds.

    ``H`` collects the penalty curvature (``||A^T A|| + sum B_i (B_i+L_i)``)
    and ``L_star`` bounds the multiplier-dependent part of the AL gradient
    Lipschitz constant along any run whose accuracy budget holds.
    """

    H: float
    L_star: float
    y_star: np.ndarray
    z_star: np.ndarray
    f0_star: Optional[float]
    C_eps: float
    L0: float

    @property
    def dual_norm_bound(self) -> float:
        """Uniform bound on ``||z^k||``: ``||y*|| + 2||z*|| + sqrt(C_eps)``."""
        return _norm(self.y_star) + 2.0 * _norm(self.z_star) + math.sqrt(self.C_eps)


def derive_constants(
    prog: ConvexProgram,
    C_eps: float,
    y_star: Union[float, np.ndarray],
    z_star: Union[float, np.ndarray],
    f0_star: Optional[float] = None,
) -> TheoryConstants:
    """Compute ``H`` and ``L_star`` from program constants and reference duals.

    Zeros are accepted as placeholder duals for bound sketches.
    """
    if C_eps < 0:
        raise InvalidParams("C_eps must be >= 0")
    B = prog.constraint_bounds
    L = prog.constraint_grad_lipschitz
    H = ata_norm(prog) + float(np.sum(B * (B + L)))
    ell_norm = float(np.linalg.norm(L))
    dual_bound = _norm(y_star) + 2.0 * _norm(z_star) + math.sqrt(C_eps)
    L_star = prog.grad_lipschitz_L0 + ell_norm * dual_bound
    y_arr = np.atleast_1d(np.asarray(y_star, dtype=float)).reshape(-1)
    z_arr = np.atleast_1d(np.asarray(z_star, dtype=float)).reshape(-1)
    return TheoryConstants(
        H=H,
        L_star=L_star,
        y_star=y_arr,
        z_star=z_arr,
        f0_star=f0_star,
        C_eps=float(C_eps),
        L0=prog.grad_lipschitz_L0,
    )


@dataclass
class BoundCheck:
    """One inequality check: ``lhs <= rhs`` (plus slack baked into rhs)."""

    name: str
    lhs: float
    rhs: float
    satisfied: bool
    must_hold: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "satisfied": self.satisfied,
            "must_hold": self.must_hold,
            "note": self.note,
        }


@dataclass
class Certificate:
    """Accuracy certificate for a candidate point."""

    obj_gap: float
    feas: float
    eps: float
    eps_optimal: bool
    kkt: Optional[tuple[float, float, float]] = None
    bound_checks: list[BoundCheck] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "obj_gap": self.obj_gap,
            "feas": self.feas,
            "eps": self.eps,
            "eps_optimal": self.eps_optimal,
            "kkt": None if self.kkt is None else list(self.kkt),
            "bound_checks": [c.to_dict() for c in self.bound_checks],
        }


def eps_optimality(
    prog: ConvexProgram, x: np.ndarray, f0_star: float, eps: float
) -> Certificate:
    """Objective gap and feasibility of ``x`` against a reference optimum.

    ``x`` is eps-optimal when both ``|f0(x) - f0*| <= eps`` and
    ``||Ax-b|| + ||[f(x)]_+|| <= eps`` (closed inequalities).
    """
    if not math.isfinite(f0_star):
        raise ValueError("f0_star must be finite")
    gap = abs(prog.objective_value(x) - f0_star)
    feas = feasibility_violation(prog, x)
    return Certificate(
        obj_gap=gap, feas=feas, eps=float(eps), eps_optimal=(gap <= eps and feas <= eps)
    )


def kkt_residual(
    prog: ConvexProgram, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> tuple[float, float, float]:
    """Residual triple (stationarity, primal feasibility, complementarity).

    Stationarity is the distance from ``-(grad g + A^T y + sum z_i grad f_i)``
    to the normal cone of the box (only ``h == 0`` with box or free ``X`` is
    supported; other combinations need their own subdifferential decomposition
    and are rejected).  Complementarity is
    ``max(max_i |z_i f_i(x)|, max_i [f_i(x)]_+)``.
    """
    if not prog.h_is_zero:
        raise UnsupportedProblem("KKT residual decomposition requires h == 0")
    z = np.asarray(z, dtype=float).reshape(-1)
    if np.any(z < 0):
        raise InvalidParams("z must be componentwise nonnegative")
    y = np.asarray(y, dtype=float).reshape(-1)
    _, ggrad, fvals, fgrads = prog.eval_all(x, want_grad=True, count=False)
    v = ggrad.copy()
    if prog.p:
        v += prog.affine_A.T @ y
    if prog.m:
        v += z @ fgrads
    lower, upper = prog.box if prog.box is not None else (None, None)
    stationarity = box_stationarity_residual(v, x, lower, upper)
    primal = feasibility_violation(prog, x)
    if prog.m:
        comp = max(float(np.max(np.abs(z * fvals))), float(np.max(np.maximum(fvals, 0.0))))
    else:
        comp = 0.0
    return stationarity, primal, comp


def ergodic_bound(schedule: Schedule, consts: TheoryConstants) -> tuple[float, float]:
    """Guaranteed bounds for the weighted-average iterate after ``K`` steps:

    objective:   (2||y*||^2 + 2||z*||^2 + sum rho_k eps_k) / sum rho_t
    feasibility: ((1+||y*||)^2/2 + (1+||z*||)^2/2 + sum rho_k eps_k) / sum rho_t
    """
    rho_sum = schedule.rho_sum
    if not rho_sum > 0:
        raise InvalidParams("sum of rho must be > 0")
    ny, nz = _norm(consts.y_star), _norm(consts.z_star)
    re = schedule.rho_eps_sum
    obj = (2.0 * ny * ny + 2.0 * nz * nz + re) / rho_sum
    feas = (0.5 * (1.0 + ny) ** 2 + 0.5 * (1.0 + nz) ** 2 + re) / rho_sum
    return obj, feas


def nonergodic_bound(
    beta_k: float,
    eps_k: float,
    z_star_norm: Union[float, np.ndarray],
    C_eps: float,
    p: int = 0,
) -> tuple[float, float]:
    """Final-iterate bounds at one outer step (inequality-only programs):

    feasibility: (5||z*|| + 3.5 sqrt(C_eps)) / beta_k
    objective:   eps_k + (2||z*|| + sqrt(C_eps)) * feasibility bound
    """
    if p > 0:
        raise InvalidParams("final-iterate bounds require no affine equality block")
    if not beta_k > 0:
        raise InvalidParams("beta_k must be > 0")
    nz = _norm(z_star_norm)
    rc = math.sqrt(C_eps)
    feas = (5.0 * nz + 3.5 * rc) / beta_k
    obj = eps_k + (2.0 * nz + rc) * feas
    return obj, feas


def nonergodic_final_bound(
    schedule: Schedule, z_star_norm: Union[float, np.ndarray], p: int = 0
) -> tuple[float, float]:
    """Bounds for the last iterate ``x^K`` under the geometric setting,
    with the worst-case substitutions ``eps_{K-1} <= (eps/2) C_eps / C_beta``
    and ``beta_{K-1} >= C_beta (sigma - 1) / (eps sigma)``."""
    if schedule.setting is not Setting.GEOMETRIC:
        raise InvalidParams("final-iterate bounds require the geometric setting")
    if p > 0:
        raise InvalidParams("final-iterate bounds require no affine equality block")
    nz = _norm(z_star_norm)
    rc = math.sqrt(schedule.C_eps)
    eps, C_beta, sigma = schedule.eps, schedule.C_beta, schedule.sigma
    lead = eps * sigma / (C_beta * (sigma - 1.0))
    feas = lead * (5.0 * nz + 3.5 * rc)
    obj = 0.5 * eps * schedule.C_eps / C_beta + lead * (2.0 * nz + rc) * (5.0 * nz + 3.5 * rc)
    return obj, feas


def iteration_budget(
    schedule: Schedule, consts: TheoryConstants, D: float, mu: float
) -> float:
    """Guaranteed cap on total inner iterations (one gradient step each)
    over the ``K`` outer steps, matched on (setting, accuracy mode, mu > 0).

    Constant penalty makes the adaptive accuracy arrays constant, so all
    accuracy modes share the constant-setting budget there.
    """
    K = schedule.K
    C_beta, C_eps, eps = schedule.C_beta, schedule.C_eps, schedule.eps
    L_star, H = consts.L_star, consts.H
    if mu > 0 and mu > consts.L0 / 4.0:
        raise InvalidParams("strongly convex budgets assume mu <= L0 / 4")

    if schedule.setting is Setting.CONSTANT:
        if mu == 0:
            inner = 2.0 * D * K * math.sqrt(C_beta / C_eps) * (
                math.sqrt(L_star / eps) + math.sqrt(C_beta * H / K) / eps
            )
            return math.ceil(inner + K)
        log_term = math.log(
            (D * D * C_beta / C_eps) * ((L_star + mu) / eps + C_beta * H / (K * eps * eps))
        )
        inner = 2.0 * K * (
            math.sqrt(L_star / mu) + math.sqrt(C_beta * H / (mu * K * eps))
        ) * log_term
        return math.ceil(inner + K)

    sigma = schedule.sigma
    beta_g = schedule.beta_g
    rs = math.sqrt(sigma)
    if schedule.error_mode is ErrorMode.CONSTANT:
        if mu == 0:
            inner = 2.0 * D * math.sqrt(C_beta / C_eps) * (
                K * math.sqrt(L_star / eps)
                + math.sqrt(C_beta * H * (sigma - 1.0)) / (eps * (rs - 1.0))
            )
            return math.ceil(inner + K)
        G = math.log(C_beta * D * D / (eps * C_eps)) + math.log(
            L_star + mu + H * (C_beta * (sigma - 1.0) + beta_g * eps) / (sigma * eps)
        )
        inner = 2.0 * G * (
            K * math.sqrt(L_star / mu)
            + math.sqrt(H / mu) * math.sqrt(C_beta * (sigma - 1.0)) / (math.sqrt(eps) * (rs - 1.0))
        )
        return math.ceil(inner + K)

    # geometric + adaptive accuracy
    if mu == 0:
        s16 = sigma ** (1.0 / 6.0)
        s23 = sigma ** (2.0 / 3.0)
        inner = 2.0 * D * math.sqrt(C_beta / C_eps) * (
            math.sqrt(L_star / eps) * math.sqrt(sigma - 1.0) / ((s16 - 1.0) * math.sqrt(s23 - 1.0))
            + math.sqrt(H * C_beta) * (sigma - 1.0) / (eps * (s23 - 1.0) ** 1.5)
        )
        return math.ceil(inner + K)
    G = (
        math.log(C_beta * D * D / (eps * C_eps))
        + math.log(L_star + mu + H * (C_beta * (sigma - 1.0) + beta_g * eps) / (sigma * eps))
        + math.log(
            math.sqrt((sigma - 1.0) ** 2 + beta_g * eps * (sigma - 1.0) / C_beta) / (sigma - rs)
        )
    )
    inner = 2.0 * G * (
        K * math.sqrt(L_star / mu)
        + math.sqrt(H / mu) * math.sqrt(C_beta * (sigma - 1.0)) / (math.sqrt(eps) * (rs - 1.0))
    )
    return math.ceil(inner + K)


def c_beta_sufficiency(
    y_star: Union[float, np.ndarray],
    z_star: Union[float, np.ndarray],
    C_eps: float,
    sigma: Optional[float] = None,
    mode: str = "ergodic",
) -> float:
    """Smallest ``C_beta`` making the scheduled runs eps-optimal.

    Ergodic mode: ``2 C_beta >= max(4||y*||^2 + 4||z*||^2,
    (1+||y*||)^2 + (1+||z*||)^2) + C_eps``.  Nonergodic mode adds the
    final-iterate constants and needs ``sigma``.
    """
    ny, nz = _norm(y_star), _norm(z_star)
    if mode == "ergodic":
        lead = max(4.0 * ny * ny + 4.0 * nz * nz, (1.0 + ny) ** 2 + (1.0 + nz) ** 2)
        return 0.5 * (lead + C_eps)
    if mode == "nonergodic":
        if sigma is None or not sigma > 1:
            raise InvalidParams("nonergodic mode requires sigma > 1")
        rc = math.sqrt(C_eps)
        lead = (2.0 * sigma / (sigma - 1.0)) * (2.0 * nz + rc) * (5.0 * nz + 3.5 * rc)
        return 0.5 * (C_eps + lead)
    raise InvalidParams(f"unknown mode {mode!r}")


FEJER_SLACK = 1e-9


def certify_trace(
    prog: ConvexProgram,
    trace: SolveTrace,
    consts: TheoryConstants,
    require_eps_optimal: bool = False,
) -> list[BoundCheck]:
    """Evaluate every applicable bound against a recorded run.

    Checks whose hypotheses need a fully verified run (all inner solves hit
    their tolerance) are reported with ``must_hold=False`` when the cap was
    hit somewhere, mirroring how capped rows are reported rather than failed.
    """
    sched = trace.schedule
    checks: list[BoundCheck] = []
    all_verified = trace.all_verified
    started_clean = (
        not np.any(trace.y0) and not np.any(trace.z0)
    )

    # uniform multiplier bound, all 0 <= k <= K
    z_norms = [float(np.linalg.norm(trace.z0))] + [
        float(np.linalg.norm(zk)) for zk in trace.zs
    ]
    checks.append(
        BoundCheck(
            name="multiplier-bound",
            lhs=max(z_norms),
            rhs=consts.dual_norm_bound,
            satisfied=max(z_norms) <= consts.dual_norm_bound,
            must_hold=all_verified and started_clean,
            note="max_k ||z^k|| vs ||y*|| + 2||z*|| + sqrt(C_eps)",
        )
    )

    # per-step dual distance decrease up to rho_k eps_k
    y_star = consts.y_star if consts.y_star.size == prog.p else np.zeros(prog.p)
    z_star = consts.z_star if consts.z_star.size == prog.m else np.zeros(prog.m)
    worst = -math.inf
    y_prev, z_prev = trace.y0, trace.z0
    for k in range(sched.K):
        if trace.verified[k]:
            before = 0.5 * float(
                np.sum((y_prev - y_star) ** 2) + np.sum((z_prev - z_star) ** 2)
            )
            after = 0.5 * float(
                np.sum((trace.ys[k] - y_star) ** 2) + np.sum((trace.zs[k] - z_star) ** 2)
            )
            worst = max(worst, after - before - float(sched.rho[k] * sched.eps_k[k]))
        y_prev, z_prev = trace.ys[k], trace.zs[k]
    if math.isfinite(worst):
        checks.append(
            BoundCheck(
                name="dual-distance-step",
                lhs=worst,
                rhs=FEJER_SLACK,
                satisfied=worst <= FEJER_SLACK,
                must_hold=True,
                note="max over verified steps of the dual-distance increase beyond rho_k eps_k",
            )
        )

    # ergodic bounds at the weighted average
    if consts.f0_star is not None:
        obj_bound, feas_bound = ergodic_bound(sched, consts)
        gap = abs(prog.objective_value(trace.x_bar) - consts.f0_star)
        feas = feasibility_violation(prog, trace.x_bar)
        checks.append(
            BoundCheck(
                name="ergodic-objective",
                lhs=gap,
                rhs=obj_bound,
                satisfied=gap <= obj_bound,
                must_hold=all_verified and started_clean,
            )
        )
        checks.append(
            BoundCheck(
                name="ergodic-feasibility",
                lhs=feas,
                rhs=feas_bound,
                satisfied=feas <= feas_bound,
                must_hold=all_verified and started_clean,
            )
        )

        # final-iterate bounds (geometric setting, inequality-only programs)
        if sched.setting is Setting.GEOMETRIC and prog.p == 0:
            obj_b, feas_b = nonergodic_final_bound(sched, z_star, p=prog.p)
            xK = trace.xs[-1]
            gapK = abs(prog.objective_value(xK) - consts.f0_star)
            feasK = feasibility_violation(prog, xK)
            checks.append(
                BoundCheck(
                    name="nonergodic-objective",
                    lhs=gapK,
                    rhs=obj_b,
                    satisfied=gapK <= obj_b,
                    must_hold=all_verified and started_clean,
                )
            )
            checks.append(
                BoundCheck(
                    name="nonergodic-feasibility",
                    lhs=feasK,
                    rhs=feas_b,
                    satisfied=feasK <= feas_b,
                    must_hold=all_verified and started_clean,
                )
            )

        if require_eps_optimal:
            cert = eps_optimality(prog, trace.x_bar, consts.f0_star, sched.eps)
            checks.append(
                BoundCheck(
                    name="eps-optimal-objective",
                    lhs=cert.obj_gap,
                    rhs=sched.eps,
                    satisfied=cert.obj_gap <= sched.eps,
                    must_hold=all_verified and started_clean,
                )
            )
            checks.append(
                BoundCheck(
                    name="eps-optimal-feasibility",
                    lhs=cert.feas,
                    rhs=sched.eps,
                    satisfied=cert.feas <= sched.eps,
                    must_hold=all_verified and started_clean,
                )
            )

    # total inner-iteration budget
    budget = iteration_budget(sched, consts, prog.diameter_D, prog.strong_convexity_mu)
    total = float(np.sum(trace.inner_iters))
    checks.append(
        BoundCheck(
            name="iteration-budget",
            lhs=total,
            rhs=budget,
            satisfied=total <= budget,
            must_hold=all_verified and started_clean,
            note="total inner iterations vs guaranteed cap",
        )
    )
    return checks
