"""Accelerated proximal gradient method for ``min phi(x) + psi(x)``.

``phi`` is Lipschitz-smooth with known constant and possibly strongly
convex; ``psi`` is prox-friendly (here typically an indicator of a box,
optionally plus a simple nonsmooth term).  The extrapolation weights follow
the optimal recursion

    alpha_{k+1} = (q - alpha_k^2 + sqrt((q - alpha_k^2)^2 + 4 alpha_k^2)) / 2

with ``q = mu / L``, which reproduces the classic 1/k^2 schedule when
``mu = 0`` and the linear-rate momentum ``(1-sqrt(q))/(1+sqrt(q))`` when
``mu > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np


class NonFiniteError(FloatingPointError):
    """NaN or Inf appeared in the iterate sequence."""


@dataclass
class GradientMapNorm:
    """Stop when a caller-supplied stationarity residual falls below ``tol``.

    ``residual(x, grad_at_x)`` must return the distance from ``-grad`` to the
    normal cone of the feasible set at ``x`` (for a box: the componentwise
    clipped gradient norm).  Checking costs one extra gradient evaluation per
    iteration, at the candidate point.
    """

    tol: float
    residual: Callable[[np.ndarray, np.ndarray], float]


@dataclass
class ObjectiveGap:
    """Stop when ``objective(x) - ref_value <= tol``; needs a value oracle."""

    ref_value: float
    tol: float


class IterCount:
    """Run to ``max_iters`` unconditionally."""


StopRule = Union[GradientMapNorm, ObjectiveGap, IterCount, None]


@dataclass
class ApgConfig:
    """Solver parameters.

    ``alpha0`` defaults to 1 when ``mu == 0`` and ``sqrt(mu / L_phi)``
    otherwise, matching the settings under which the rate envelopes hold.
    ``mu`` may be a valid lower estimate of the true modulus.
    """

    L_phi: float
    mu: float = 0.0
    alpha0: Optional[float] = None
    max_iters: int = 10**6
    stop_rule: StopRule = None

    def __post_init__(self) -> None:
        if not self.L_phi > 0:
            raise ValueError("L_phi must be > 0")
        if not 0.0 <= self.mu <= self.L_phi:
            raise ValueError("need 0 <= mu <= L_phi")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.alpha0 is None:
            self.alpha0 = math.sqrt(self.mu / self.L_phi) if self.mu > 0 else 1.0
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError("alpha0 must be in (0, 1]")


@dataclass
class ApgResult:
    x_final: np.ndarray
    iters_used: int
    final_stop_metric: float
    converged: bool
    history: Optional[list[float]] = field(default=None)


def alpha_next(alpha_k: float, q: float) -> float:
    """Positive root of ``a^2 = (1 - a) alpha_k^2 + q a``; stays in (0, 1]."""
    if not 0.0 < alpha_k <= 1.0:
        raise ValueError("alpha_k must be in (0, 1]")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    diff = q - alpha_k * alpha_k
    out = 0.5 * (diff + math.sqrt(diff * diff + 4.0 * alpha_k * alpha_k))
    return min(out, 1.0)


def momentum_weight(alpha_k: float, alpha_k1: float) -> float:
    """Extrapolation weight ``alpha_k (1 - alpha_k) / (alpha_k^2 + alpha_{k+1})``."""
    if not 0.0 < alpha_k <= 1.0 or not 0.0 < alpha_k1 <= 1.0:
        raise ValueError("alpha values must be in (0, 1]")
    return alpha_k * (1.0 - alpha_k) / (alpha_k * alpha_k + alpha_k1)


def solve(
    grad: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray, float], np.ndarray],
    config: ApgConfig,
    x0: np.ndarray,
    objective: Optional[Callable[[np.ndarray], float]] = None,
    record_history: bool = False,
) -> ApgResult:
    """Run the accelerated method from ``x0``.

    ``grad(x)`` returns the smooth gradient; ``prox(v, gamma)`` must return a
    point in the domain of the nonsmooth part.  Each iteration takes one
    gradient for the step plus (for ``GradientMapNorm``) one at the candidate
    for the stop check.  Hitting ``max_iters`` without satisfying the rule is
    reported through ``converged=False``, not an exception.

    Deterministic: identical inputs produce bitwise-identical iterates.
    """
    rule = config.stop_rule
    if isinstance(rule, ObjectiveGap) and objective is None:
        raise ValueError("ObjectiveGap stop rule needs an objective oracle")
    if record_history and objective is None:
        raise ValueError("recording history needs an objective oracle")

    L = config.L_phi
    q = config.mu / L
    alpha = config.alpha0
    x = np.asarray(x0, dtype=float).copy()
    xhat = x.copy()
    history: Optional[list[float]] = [] if record_history else None
    metric = math.inf
    iters = 0
    converged = False

    for iters in range(1, config.max_iters + 1):
        g = grad(xhat)
        x_new = prox(xhat - g / L, 1.0 / L)
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteError(f"non-finite iterate at inner iteration {iters}")

        if record_history:
            history.append(float(objective(x_new)))

        if isinstance(rule, GradientMapNorm):
            metric = float(rule.residual(x_new, grad(x_new)))
            if math.isnan(metric):
                raise NonFiniteError(f"non-finite stop metric at inner iteration {iters}")
            if metric <= rule.tol:
                x = x_new
                converged = True
                break
        elif isinstance(rule, ObjectiveGap):
            metric = float(objective(x_new)) - rule.ref_value
            if metric <= rule.tol:
                x = x_new
                converged = True
                break

        alpha_new = alpha_next(alpha, q)
        w = momentum_weight(alpha, alpha_new)
        xhat = x_new + w * (x_new - x)
        x = x_new
        alpha = alpha_new

    return ApgResult(
        x_final=x,
        iters_used=iters,
        final_stop_metric=metric,
        converged=converged if rule is not None and not isinstance(rule, IterCount) else True,
        history=history,
    )
