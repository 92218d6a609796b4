# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loop for dense box-constrained QCQP subproblems.

Same algorithm as ``_qcqp_kernel_py``: accelerated proximal gradient on the
smooth augmented Lagrangian with a projected-stationarity stop rule checked
at every candidate point.  The matrix stack is applied through BLAS dgemv,
matching the fallback's matvec.
"""

from libc.math cimport sqrt, isnan

from scipy.linalg.cython_blas cimport dgemv, ddot

import numpy as np

BACKEND = "compiled"


cdef void _al_grad(double* Qf, double* c, double* d, double beta, double* z,
                   double* x, double* qx, double* grad, double* fvals,
                   int n, int m) noexcept nogil:
    """grad = Q0 x + c0 + sum_j [beta f_j + z_j]_+ (Qj x + cj); fvals = f(x)."""
    cdef int rows = (m + 1) * n
    cdef int inc = 1
    cdef int i, j
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char trans = b'T'
    cdef double quad, lin, w
    cdef double* qxj
    cdef double* cj
    # row-major (rows, n) times x: column-major view is (n, rows), so 'T'
    dgemv(&trans, &n, &rows, &one, Qf, &n, x, &inc, &zero, qx, &inc)
    for i in range(n):
        grad[i] = qx[i] + c[i]
    for j in range(m):
        qxj = qx + (j + 1) * n
        cj = c + (j + 1) * n
        quad = ddot(&n, x, &inc, qxj, &inc)
        lin = ddot(&n, cj, &inc, x, &inc)
        fvals[j] = 0.5 * quad + lin + d[j]
        w = beta * fvals[j] + z[j]
        if w > 0.0:
            for i in range(n):
                grad[i] += w * (qxj[i] + cj[i])


def solve_al_subproblem(Q, c, d, lower, upper, double beta, z, double L_phi,
                        double mu, x0, double tol, long max_iters):
    """See ``_qcqp_kernel_py.solve_al_subproblem``; identical contract."""
    cdef double[:, :, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(upper, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)

    cdef int n = Qv.shape[1]
    cdef int m = dv.shape[0]

    x_arr = np.array(x0, dtype=np.float64)
    xhat_arr = x_arr.copy()
    xnew_arr = np.empty(n)
    grad_arr = np.empty(n)
    fvals_arr = np.zeros(max(m, 1))
    qx_arr = np.empty((m + 1) * n)

    cdef double[::1] x = x_arr
    cdef double[::1] xhat = xhat_arr
    cdef double[::1] xnew = xnew_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] fvals = fvals_arr
    cdef double[::1] qx = qx_arr

    cdef double* Qp = &Qv[0, 0, 0]
    cdef double* cp = &cv[0, 0]
    cdef double* dp = &dv[0] if m > 0 else NULL
    cdef double* zp = &zv[0] if m > 0 else NULL

    cdef double q = mu / L_phi
    cdef double alpha = sqrt(q) if mu > 0.0 else 1.0
    cdef double alpha_new, w, diff, res, ss, g, v
    cdef long iters = 0
    cdef bint converged = False
    cdef int i

    res = float("inf")
    with nogil:
        for iters in range(1, max_iters + 1):
            _al_grad(Qp, cp, dp, beta, zp, &xhat[0], &qx[0], &grad[0], &fvals[0], n, m)
            for i in range(n):
                v = xhat[i] - grad[i] / L_phi
                if v < lo[i]:
                    v = lo[i]
                elif v > hi[i]:
                    v = hi[i]
                xnew[i] = v
            _al_grad(Qp, cp, dp, beta, zp, &xnew[0], &qx[0], &grad[0], &fvals[0], n, m)
            ss = 0.0
            for i in range(n):
                g = grad[i]
                if xnew[i] >= hi[i]:
                    g = g if g > 0.0 else 0.0
                elif xnew[i] <= lo[i]:
                    g = g if g < 0.0 else 0.0
                ss += g * g
            res = sqrt(ss)
            if isnan(res):
                break
            if res <= tol:
                for i in range(n):
                    x[i] = xnew[i]
                converged = True
                break
            diff = q - alpha * alpha
            alpha_new = 0.5 * (diff + sqrt(diff * diff + 4.0 * alpha * alpha))
            if alpha_new > 1.0:
                alpha_new = 1.0
            w = alpha * (1.0 - alpha) / (alpha * alpha + alpha_new)
            for i in range(n):
                v = xnew[i]
                xhat[i] = v + w * (v - x[i])
                x[i] = v
            alpha = alpha_new

    if isnan(res):
        raise FloatingPointError(f"non-finite stop metric at inner iteration {iters}")
    return x_arr, int(iters), float(res), bool(converged), fvals_arr[:m]
