"""Classical augmented Lagrangian function and its smooth-part gradient.

Inequality constraints enter through the smoothed penalty

    psi(beta, u, v) = u*v + (beta/2)*u^2   if beta*u + v >= 0
                      -v^2 / (2*beta)      otherwise,

which is the quadratic penalty of the slack reformulation after minimizing
out the slack.  Equality constraints keep the usual multiplier-plus-quadratic
terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import ConvexProgram, DimensionMismatch


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise ValueError("beta must be > 0")
    return beta


def psi(beta: float, u: float, v: float) -> float:
    """Smoothed inequality penalty; continuously differentiable in ``u``."""
    beta = _check_beta(beta)
    if beta * u + v >= 0:
        return u * v + 0.5 * beta * u * u
    return -v * v / (2.0 * beta)


def psi_partial_u(beta: float, u: float, v: float) -> float:
    """Exact partial derivative of ``psi`` in ``u``: ``max(0, beta*u + v)``."""
    beta = _check_beta(beta)
    return max(0.0, beta * u + v)


def psi_vec(beta: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized ``psi`` over paired arrays."""
    beta = _check_beta(beta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    active = beta * u + v >= 0
    return np.where(active, u * v + 0.5 * beta * u * u, -(v * v) / (2.0 * beta))


@dataclass
class AlEvaluation:
    """One evaluation of the augmented Lagrangian at ``(x, y, z)``.

    ``value`` includes ``h(x)`` (zero unless the program supplies an h-value
    oracle); ``smooth_grad`` is the gradient of the smooth part only, i.e. of
    everything except ``h`` and the feasible-set indicator.
    """

    value: float
    smooth_grad: Optional[np.ndarray]
    per_constraint_psi: np.ndarray
    constraint_values: np.ndarray
    equality_residual: np.ndarray


def al_evaluate(
    prog: ConvexProgram,
    beta: float,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    want_grad: bool = True,
    count: bool = True,
) -> AlEvaluation:
    """Evaluate the augmented Lagrangian and, optionally, its smooth gradient.

    The gradient is ``grad g + A^T y + beta A^T (Ax-b)
    + sum_i [beta f_i + z_i]_+ grad f_i``.  Counts one fun unit and (when
    ``want_grad``) one grad unit.
    """
    beta = _check_beta(beta)
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if y.shape[0] != prog.p:
        raise DimensionMismatch("y must have length p")
    if z.shape[0] != prog.m:
        raise DimensionMismatch("z must have length m")

    gval, ggrad, fvals, fgrads = prog.eval_all(x, want_grad=want_grad, count=count)
    r = prog.equality_residual(x)
    psis = psi_vec(beta, fvals, z) if prog.m else np.zeros(0)
    hval = 0.0 if prog.h_value is None else float(prog.h_value(np.asarray(x, dtype=float)))
    value = gval + hval + float(y @ r) + 0.5 * beta * float(r @ r) + float(psis.sum())

    grad = None
    if want_grad:
        grad = ggrad.copy()
        if prog.p:
            grad += prog.affine_A.T @ (y + beta * r)
        if prog.m:
            weights = np.maximum(0.0, beta * fvals + z)
            grad += weights @ fgrads
    return AlEvaluation(
        value=value,
        smooth_grad=grad,
        per_constraint_psi=psis,
        constraint_values=fvals,
        equality_residual=r,
    )


def spectral_norm_ata(
    A: np.ndarray, tol: float = 1e-10, max_iters: int = 1000, seed: int = 0
) -> float:
    """``||A^T A||_2`` (squared top singular value) by power iteration.

    Deterministic seeded start, Rayleigh-quotient stopping at ``tol`` change,
    1000-iteration cap.  Returns 0 for an empty matrix.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    n = A.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = A.T @ (A @ v)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v_new = w / norm_w
        lam_new = float(v_new @ (A.T @ (A @ v_new)))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam, v = lam_new, v_new
    return lam


def ata_norm(prog: ConvexProgram) -> float:
    """Cached ``||A^T A||`` for the program's affine block."""
    cached = getattr(prog, "_ata_norm_cache", None)
    if cached is None:
        cached = spectral_norm_ata(prog.affine_A) if prog.p else 0.0
        prog._ata_norm_cache = cached
    return cached


def lipschitz_estimate(prog: ConvexProgram, beta: float, z: np.ndarray) -> float:
    """Lipschitz constant of the smooth AL gradient for multiplier ``z``:

    ``L0 + beta ||A^T A|| + sum_i (beta B_i (B_i + L_i) + L_i |z_i|)``.
    """
    beta = _check_beta(beta)
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != prog.m:
        raise DimensionMismatch("z must have length m")
    B = prog.constraint_bounds
    L = prog.constraint_grad_lipschitz
    total = prog.grad_lipschitz_L0 + beta * ata_norm(prog)
    if prog.m:
        total += float(np.sum(beta * B * (B + L) + L * np.abs(z)))
    return float(total)
