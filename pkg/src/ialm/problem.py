"""Black-box model of a constrained convex program.

A program is a bundle of oracles (smooth objective, prox of the nonsmooth
part over the feasible set, inequality constraints, affine pair) plus the
constants the solver and its certificates need: gradient Lipschitz moduli,
constraint bounds, strong convexity and the feasible-set diameter.  Oracle
evaluations are metered so outer-loop accounting matches what experiment
tables report.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class DimensionMismatch(ValueError):
    """Vector or matrix shape inconsistent with the program dimensions."""


class InvalidProgram(ValueError):
    """Program constants violate their declared invariants."""


ValueGradOracle = Callable[[np.ndarray], tuple[float, np.ndarray]]
ProxOracle = Callable[[np.ndarray, float], np.ndarray]


class EvalCounters:
    """Monotone evaluation counters with thread-safe increments.

    One ``grad_evals`` unit is a joint evaluation of the objective gradient
    and all constraint gradients at one point; one ``fun_evals`` unit is a
    joint evaluation of the objective value and all constraint values.
    """

    __slots__ = ("_lock", "grad_evals", "fun_evals", "prox_evals")

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.grad_evals = 0
        self.fun_evals = 0
        self.prox_evals = 0

    def add(self, grad: int = 0, fun: int = 0, prox: int = 0) -> None:
        if grad < 0 or fun < 0 or prox < 0:
            raise ValueError("counters are monotone; increments must be >= 0")
        with self._lock:
            self.grad_evals += grad
            self.fun_evals += fun
            self.prox_evals += prox

    def snapshot(self) -> tuple[int, int, int]:
        with self._lock:
            return (self.grad_evals, self.fun_evals, self.prox_evals)

    def reset(self) -> None:
        with self._lock:
            self.grad_evals = 0
            self.fun_evals = 0
            self.prox_evals = 0

    def __repr__(self) -> str:  # pragma: no cover
        g, f, p = self.snapshot()
        return f"EvalCounters(grad={g}, fun={f}, prox={p})"


@dataclass
class ConvexProgram:
    """Oracle bundle for ``min g(x)+h(x) s.t. Ax=b, f_i(x)<=0, x in X``.

    Parameters
    ----------
    n, m : int
        Variable dimension and number of inequality constraints.
    smooth_objective : callable
        ``x -> (g(x), grad g(x))``.
    nonsmooth_prox : callable
        ``(xhat, gamma) -> argmin_{x in X} h(x) + ||x - xhat||^2 / (2 gamma)``.
    constraints : sequence of callables
        ``x -> (f_i(x), grad f_i(x))`` for each inequality constraint.
    affine_A, affine_b : ndarray
        Affine equality pair; shapes ``(p, n)`` and ``(p,)`` with ``p >= 0``.
    strong_convexity_mu : float
        Strong convexity modulus of ``g`` (0 for merely convex).
    grad_lipschitz_L0 : float
        Lipschitz constant of ``grad g`` on the feasible set.
    constraint_grad_lipschitz : ndarray
        Per-constraint Lipschitz constants of ``grad f_i``, shape ``(m,)``.
    constraint_bounds : ndarray
        Per-constraint bounds ``B_i >= max(|f_i|, ||grad f_i||)`` on the
        feasible set, shape ``(m,)``.
    diameter_D : float
        Diameter of ``dom(h)`` intersected with ``X`` (caller supplied).
    box : (ndarray, ndarray), optional
        Lower/upper bounds when ``X`` is a box; enables projected
        stationarity rules and sampling helpers.  ``None`` means ``X`` is
        only reachable through the prox oracle.
    h_value : callable, optional
        ``x -> h(x)``.  ``None`` declares ``h == 0``.
    counters : EvalCounters
        Shared evaluation meter; a fresh one is created by default.

    Constants are inputs, not estimated online; ``check_lipschitz_by_sampling``
    provides a report-only validator for them.
    """

    n: int
    m: int
    smooth_objective: ValueGradOracle
    nonsmooth_prox: ProxOracle
    constraints: Sequence[ValueGradOracle]
    affine_A: np.ndarray
    affine_b: np.ndarray
    strong_convexity_mu: float
    grad_lipschitz_L0: float
    constraint_grad_lipschitz: np.ndarray
    constraint_bounds: np.ndarray
    diameter_D: float
    box: Optional[tuple[np.ndarray, np.ndarray]] = None
    h_value: Optional[Callable[[np.ndarray], float]] = None
    counters: EvalCounters = field(default_factory=EvalCounters)

    def __post_init__(self) -> None:
        self.affine_A = np.atleast_2d(np.asarray(self.affine_A, dtype=float))
        if self.affine_A.size == 0:
            self.affine_A = np.zeros((0, self.n))
        self.affine_b = np.asarray(self.affine_b, dtype=float).reshape(-1)
        self.constraint_grad_lipschitz = np.asarray(
            self.constraint_grad_lipschitz, dtype=float
        ).reshape(-1)
        self.constraint_bounds = np.asarray(self.constraint_bounds, dtype=float).reshape(-1)

        if self.n < 1:
            raise InvalidProgram("n must be >= 1")
        if self.m < 0:
            raise InvalidProgram("m must be >= 0")
        if len(self.constraints) != self.m:
            raise DimensionMismatch("constraints length != m")
        if self.affine_A.shape != (self.p, self.n):
            raise DimensionMismatch("affine_A must be (p, n)")
        if self.affine_b.shape[0] != self.p:
            raise DimensionMismatch("affine_b must be (p,)")
        if self.constraint_grad_lipschitz.shape[0] != self.m:
            raise DimensionMismatch("constraint_grad_lipschitz must be (m,)")
        if self.constraint_bounds.shape[0] != self.m:
            raise DimensionMismatch("constraint_bounds must be (m,)")
        if not 0.0 <= self.strong_convexity_mu <= self.grad_lipschitz_L0:
            raise InvalidProgram("need 0 <= mu <= L0")
        if np.any(self.constraint_grad_lipschitz < 0) or np.any(self.constraint_bounds < 0):
            raise InvalidProgram("constraint constants must be >= 0")
        if not self.diameter_D > 0:
            raise InvalidProgram("diameter_D must be > 0")
        if self.box is not None:
            lo = np.asarray(self.box[0], dtype=float).reshape(-1)
            hi = np.asarray(self.box[1], dtype=float).reshape(-1)
            if lo.shape[0] != self.n or hi.shape[0] != self.n:
                raise DimensionMismatch("box bounds must be (n,)")
            if np.any(lo >= hi):
                raise InvalidProgram("box must satisfy l < u componentwise")
            self.box = (lo, hi)

    @property
    def p(self) -> int:
        return self.affine_A.shape[0]

    @property
    def h_is_zero(self) -> bool:
        return self.h_value is None

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"x has length {x.shape[0]}, expected {self.n}")
        return x

    def eval_all(
        self, x: np.ndarray, want_grad: bool = True, count: bool = True
    ) -> tuple[float, Optional[np.ndarray], np.ndarray, Optional[np.ndarray]]:
        """Jointly evaluate objective and constraints at ``x``.

        Returns ``(g, grad_g, f, grad_f)`` with ``f`` of shape ``(m,)`` and
        ``grad_f`` of shape ``(m, n)``.  Counts one fun unit, plus one grad
        unit when ``want_grad``.  Diagnostic callers pass ``count=False``.
        """
        x = self._check_x(x)
        gval, ggrad = self.smooth_objective(x)
        fvals = np.empty(self.m)
        fgrads = np.empty((self.m, self.n)) if want_grad else None
        for i, oracle in enumerate(self.constraints):
            fi, gi = oracle(x)
            fvals[i] = fi
            if want_grad:
                fgrads[i] = gi
        if count:
            self.counters.add(grad=1 if want_grad else 0, fun=1)
        return float(gval), (np.asarray(ggrad, dtype=float) if want_grad else None), fvals, fgrads

    def objective_value(self, x: np.ndarray, count: bool = False) -> float:
        """Full objective ``g(x) + h(x)``; diagnostic by default."""
        x = self._check_x(x)
        gval, _ = self.smooth_objective(x)
        if count:
            self.counters.add(fun=1)
        return float(gval) + (0.0 if self.h_value is None else float(self.h_value(x)))

    def constraint_values(self, x: np.ndarray, count: bool = False) -> np.ndarray:
        x = self._check_x(x)
        vals = np.array([oracle(x)[0] for oracle in self.constraints], dtype=float)
        if count:
            self.counters.add(fun=1)
        return vals

    def prox(self, xhat: np.ndarray, gamma: float, count: bool = True) -> np.ndarray:
        if gamma <= 0:
            raise ValueError("prox step gamma must be > 0")
        out = np.asarray(self.nonsmooth_prox(self._check_x(xhat), float(gamma)), dtype=float)
        if count:
            self.counters.add(prox=1)
        return out

    def equality_residual(self, x: np.ndarray) -> np.ndarray:
        """``Ax - b`` (empty for p = 0)."""
        if self.p == 0:
            return np.zeros(0)
        return self.affine_A @ self._check_x(x) - self.affine_b


def feasibility_violation(prog: ConvexProgram, x: np.ndarray, count: bool = False) -> float:
    """Combined constraint violation ``||Ax-b|| + ||[f(x)]_+||``.

    Zero exactly when the equalities hold and every inequality is satisfied;
    callers are responsible for ``x in X``.
    """
    r = prog.equality_residual(x)
    fvals = prog.constraint_values(x, count=count)
    return float(np.linalg.norm(r) + np.linalg.norm(np.maximum(fvals, 0.0)))


def box_stationarity_residual(
    grad: np.ndarray, x: np.ndarray, lower: Optional[np.ndarray], upper: Optional[np.ndarray]
) -> float:
    """Distance from ``-grad`` to the normal cone of a box at ``x``.

    Componentwise, the normal cone of ``[l_i, u_i]`` is ``{0}`` in the
    interior, nonnegative multiples of ``+e_i`` at the upper bound and
    nonpositive at the lower bound, so the residual keeps ``max(0, grad_i)``
    at the upper bound, ``min(0, grad_i)`` at the lower bound and the full
    component in the interior.  ``lower``/``upper`` of ``None`` means the
    whole space (residual is plain ``||grad||``).
    """
    grad = np.asarray(grad, dtype=float)
    if lower is None or upper is None:
        return float(np.linalg.norm(grad))
    x = np.asarray(x, dtype=float)
    r = grad.copy()
    at_upper = x >= upper
    at_lower = x <= lower
    r[at_upper] = np.maximum(grad[at_upper], 0.0)
    r[at_lower] = np.minimum(grad[at_lower], 0.0)
    # a degenerate pinned coordinate (l == u is rejected; this covers l ~ u)
    r[at_upper & at_lower] = 0.0
    return float(np.linalg.norm(r))


def sample_feasible_points(
    prog: ConvexProgram, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Draw points in ``X`` for validators: uniform over the box when known,
    otherwise prox-projections of Gaussians scaled to the set diameter."""
    if prog.box is not None:
        lo, hi = prog.box
        return rng.uniform(lo, hi, size=(count, prog.n))
    raw = rng.normal(scale=prog.diameter_D, size=(count, prog.n))
    return np.stack([prog.prox(v, 1.0, count=False) for v in raw])


@dataclass
class LipschitzReport:
    """Report-only outcome of sampled validation of declared constants."""

    num_pairs: int
    grad_ratio_objective: float
    grad_ratio_constraints: np.ndarray
    max_abs_constraint: np.ndarray
    max_constraint_grad_norm: np.ndarray
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_lipschitz_by_sampling(
    prog: ConvexProgram, rng_seed: int, num_pairs: int
) -> LipschitzReport:
    """Sample point pairs in ``X`` and compare observed difference ratios and
    magnitudes against the declared ``L_0``, ``L_i`` and ``B_i``.

    Never raises; any exceedance (with 1e-9 relative slack for rounding) is
    recorded in ``violations``.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    rng = np.random.default_rng(rng_seed)
    pts = sample_feasible_points(prog, rng, 2 * num_pairs)

    ratio_g = 0.0
    ratio_f = np.zeros(prog.m)
    max_abs_f = np.zeros(prog.m)
    max_grad_f = np.zeros(prog.m)
    for a, b in zip(pts[:num_pairs], pts[num_pairs:]):
        dist = float(np.linalg.norm(a - b))
        _, ga, fa, gfa = prog.eval_all(a, count=False)
        _, gb, fb, gfb = prog.eval_all(b, count=False)
        max_abs_f = np.maximum(max_abs_f, np.maximum(np.abs(fa), np.abs(fb)))
        if prog.m:
            norms = np.maximum(
                np.linalg.norm(gfa, axis=1), np.linalg.norm(gfb, axis=1)
            )
            max_grad_f = np.maximum(max_grad_f, norms)
        if dist <= 0:
            continue
        ratio_g = max(ratio_g, float(np.linalg.norm(ga - gb)) / dist)
        if prog.m:
            ratio_f = np.maximum(
                ratio_f, np.linalg.norm(gfa - gfb, axis=1) / dist
            )

    slack = 1.0 + 1e-9
    violations: list[str] = []
    if ratio_g > prog.grad_lipschitz_L0 * slack + 1e-12:
        violations.append(
            f"objective gradient ratio {ratio_g:.6e} exceeds declared L0="
            f"{prog.grad_lipschitz_L0:.6e}"
        )
    for i in range(prog.m):
        if ratio_f[i] > prog.constraint_grad_lipschitz[i] * slack + 1e-12:
            violations.append(
                f"constraint {i} gradient ratio {ratio_f[i]:.6e} exceeds "
                f"L_{i + 1}={prog.constraint_grad_lipschitz[i]:.6e}"
            )
        observed = max(max_abs_f[i], max_grad_f[i])
        if observed > prog.constraint_bounds[i] * slack + 1e-12:
            violations.append(
                f"constraint {i} magnitude {observed:.6e} exceeds "
                f"B_{i + 1}={prog.constraint_bounds[i]:.6e}"
            )
    return LipschitzReport(
        num_pairs=num_pairs,
        grad_ratio_objective=ratio_g,
        grad_ratio_constraints=ratio_f,
        max_abs_constraint=max_abs_f,
        max_constraint_grad_norm=max_grad_f,
        violations=violations,
    )
