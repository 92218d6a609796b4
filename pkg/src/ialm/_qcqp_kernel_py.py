"""Pure-numpy inner loop for dense box-constrained QCQP subproblems.

Reference implementation of the fused accelerated-proximal-gradient loop on
the augmented Lagrangian of

    min 0.5 x'Q0 x + c0'x  s.t.  0.5 x'Qj x + cj'x + dj <= 0,  l <= x <= u.

The compiled extension (``_qcqp_kernel``) implements the identical loop; this
module is the fallback selected at import when the extension is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def _al_grad(Qf, c, d, beta, z, x, n):
    """Smooth AL gradient and constraint values at ``x``.

    ``Qf`` is the (m+1) matrix stack flattened to ``((m+1)*n, n)`` so the
    whole evaluation is one matvec plus O(m n) vector work.
    """
    qx = (Qf @ x).reshape(-1, n)
    quad = qx @ x
    lin = c @ x
    fvals = 0.5 * quad[1:] + lin[1:] + d
    w = np.maximum(beta * fvals + z, 0.0)
    grad = qx[0] + c[0] + w @ (qx[1:] + c[1:])
    return grad, fvals


def _residual(grad, x, lower, upper):
    r = grad.copy()
    at_upper = x >= upper
    at_lower = x <= lower
    r[at_upper] = np.maximum(grad[at_upper], 0.0)
    r[at_lower] = np.minimum(grad[at_lower], 0.0)
    return float(np.linalg.norm(r))


def solve_al_subproblem(Q, c, d, lower, upper, beta, z, L_phi, mu, x0, tol, max_iters):
    """Minimize the smooth AL part over the box to projected stationarity ``tol``.

    Returns ``(x, iters, stop_metric, converged, f_vals)`` where ``f_vals``
    are the constraint values at the returned point (reused by the caller for
    the multiplier update).  Each iteration evaluates the AL gradient twice:
    once at the extrapolated point for the step, once at the candidate for
    the stop check.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    d = np.ascontiguousarray(d, dtype=float)
    n = x0.shape[0]
    Qf = Q.reshape(-1, n)
    q = mu / L_phi
    alpha = math.sqrt(q) if mu > 0 else 1.0

    x = np.array(x0, dtype=float)
    xhat = x.copy()
    fvals = np.zeros(d.shape[0])
    res = math.inf
    iters = 0
    converged = False

    for iters in range(1, max_iters + 1):
        g, _ = _al_grad(Qf, c, d, beta, z, xhat, n)
        x_new = np.clip(xhat - g / L_phi, lower, upper)
        g2, fvals = _al_grad(Qf, c, d, beta, z, x_new, n)
        res = _residual(g2, x_new, lower, upper)
        if math.isnan(res):
            raise FloatingPointError(f"non-finite stop metric at inner iteration {iters}")
        if res <= tol:
            x = x_new
            converged = True
            break
        diff = q - alpha * alpha
        alpha_new = min(0.5 * (diff + math.sqrt(diff * diff + 4.0 * alpha * alpha)), 1.0)
        w = alpha * (1.0 - alpha) / (alpha * alpha + alpha_new)
        xhat = x_new + w * (x_new - x)
        x = x_new
        alpha = alpha_new

    return x, iters, res, converged, fvals
