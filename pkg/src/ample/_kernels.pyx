# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: exact grid traversal and fixed-step likelihood descent.

Signatures and return values mirror ``ample._pykernels`` one for one.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, fabs, floor, hypot, isfinite, INFINITY, M_PI
from libc.float cimport DBL_EPSILON

cnp.import_array()


def trace_runs(const signed char[:, ::1] grid, double cell_size,
               double x0, double y0, double x1, double y1, double eps=1e-9):
    """Walk the segment (x0, y0) -> (x1, y1) over a south-up grid.

    Returns ``(codes, lengths)`` of merged runs of equal code, in order.
    """
    cdef Py_ssize_t H = grid.shape[0], W = grid.shape[1]
    cdef double dx = x1 - x0, dy = y1 - y0
    cdef double L = hypot(dx, dy)
    cdef double ux = dx / L, uy = dy / L
    cdef double fx = x0 / cell_size, fy = y0 / cell_size
    cdef Py_ssize_t ix = <Py_ssize_t>floor(fx), iy = <Py_ssize_t>floor(fy)
    cdef Py_ssize_t sx, sy, n = 0, cap
    cdef double t = 0.0, tnext, tmx, tmy, piece, carry = 0.0
    cdef int code, last = -1

    if fx == <double>ix and ux < 0:
        ix -= 1
    if fy == <double>iy and uy < 0:
        iy -= 1
    ix = min(max(ix, 0), W - 1)
    iy = min(max(iy, 0), H - 1)
    sx = 1 if ux > 0 else -1
    sy = 1 if uy > 0 else -1

    cap = <Py_ssize_t>(fabs(dx) / cell_size + fabs(dy) / cell_size) + 4
    codes_arr = np.empty(cap, dtype=np.int64)
    lengths_arr = np.empty(cap, dtype=np.float64)
    cdef long long[::1] codes = codes_arr
    cdef double[::1] lengths = lengths_arr

    while True:
        if ux != 0.0:
            tmx = ((ix + (1 if sx > 0 else 0)) * cell_size - x0) / ux
        else:
            tmx = INFINITY
        if uy != 0.0:
            tmy = ((iy + (1 if sy > 0 else 0)) * cell_size - y0) / uy
        else:
            tmy = INFINITY
        tnext = min(tmx, tmy)
        if tnext > L:
            tnext = L
        piece = tnext - t
        if piece < 0.0:
            piece = 0.0
        code = grid[iy, ix]
        if piece > eps:
            if code == last:
                lengths[n - 1] += piece + carry
            else:
                lengths[n] = piece + carry
                codes[n] = code
                n += 1
                last = code
            carry = 0.0
        elif n > 0:
            lengths[n - 1] += piece
        else:
            carry += piece
        if tnext >= L:
            break
        t = tnext
        if tmx <= tmy:
            ix += sx
        else:
            iy += sy
        if ix < 0 or ix >= W or iy < 0 or iy >= H:
            # float overshoot at the far edge; the remainder belongs to the last run
            if n > 0:
                lengths[n - 1] += L - t
            break
    return codes_arr[:n].copy(), lengths_arr[:n].copy()


cdef double _pass(const double[:, ::1] X, const double[::1] y, double[::1] theta,
                  double[::1] g) noexcept nogil:
    """Sum of squared residuals; writes -sum(r * X[:, k]) into g.

    Rows are processed in blocks of four so the per-row dot products run as
    independent chains; the summation order is fixed, so results are
    deterministic.
    """
    cdef Py_ssize_t Z = X.shape[0], K = X.shape[1], z, k, Z4 = Z - Z % 4
    cdef double r0, r1, r2, r3, m0, m1, m2, m3, t, x
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef const double *p0
    cdef const double *p1
    cdef const double *p2
    cdef const double *p3
    cdef const double *th = &theta[0]
    cdef double *acc = &g[0]
    if K == 1:
        # single-column designs (CI)
        t = th[0]
        m0 = m1 = m2 = m3 = 0.0
        for z in range(0, Z4, 4):
            x = X[z, 0]; r0 = y[z] - x * t; s0 += r0 * r0; m0 -= r0 * x
            x = X[z + 1, 0]; r1 = y[z + 1] - x * t; s1 += r1 * r1; m1 -= r1 * x
            x = X[z + 2, 0]; r2 = y[z + 2] - x * t; s2 += r2 * r2; m2 -= r2 * x
            x = X[z + 3, 0]; r3 = y[z + 3] - x * t; s3 += r3 * r3; m3 -= r3 * x
        for z in range(Z4, Z):
            x = X[z, 0]; r0 = y[z] - x * t; s0 += r0 * r0; m0 -= r0 * x
        acc[0] = (m0 + m1) + (m2 + m3)
        return (s0 + s1) + (s2 + s3)
    for k in range(K):
        acc[k] = 0.0
    for z in range(0, Z4, 4):
        p0 = &X[z, 0]
        p1 = p0 + K
        p2 = p1 + K
        p3 = p2 + K
        m0 = m1 = m2 = m3 = 0.0
        for k in range(K):
            t = th[k]
            m0 += p0[k] * t
            m1 += p1[k] * t
            m2 += p2[k] * t
            m3 += p3[k] * t
        r0 = y[z] - m0
        r1 = y[z + 1] - m1
        r2 = y[z + 2] - m2
        r3 = y[z + 3] - m3
        s0 += r0 * r0
        s1 += r1 * r1
        s2 += r2 * r2
        s3 += r3 * r3
        for k in range(K):
            acc[k] -= (r0 * p0[k] + r1 * p1[k]) + (r2 * p2[k] + r3 * p3[k])
    for z in range(Z4, Z):
        p0 = &X[z, 0]
        m0 = 0.0
        for k in range(K):
            m0 += p0[k] * th[k]
        r0 = y[z] - m0
        s0 += r0 * r0
        for k in range(K):
            acc[k] -= r0 * p0[k]
    return (s0 + s1) + (s2 + s3)


cdef inline double _nll(Py_ssize_t Z, double s, double sigma) noexcept nogil:
    return Z * (log(sigma) + 0.5 * log(2.0 * M_PI)) + s / (2.0 * sigma * sigma)


def nll_grad(const double[:, ::1] X, const double[::1] y, theta_in, double sigma):
    """Negative log-likelihood and its gradient over (theta..., sigma)."""
    cdef Py_ssize_t Z = X.shape[0], K = X.shape[1], k
    theta_arr = np.ascontiguousarray(theta_in, dtype=np.float64)
    cdef double[::1] theta = theta_arr
    out = np.empty(K + 1, dtype=np.float64)
    cdef double[::1] g = out
    cdef double s = _pass(X, y, theta, g)
    cdef double s2 = sigma * sigma
    for k in range(K):
        g[k] /= s2
    g[K] = Z / sigma - s / (s2 * sigma)
    return _nll(Z, s, sigma), out


cdef double _pnorm(double[::1] g, Py_ssize_t K, double sigma, double sigma_floor) noexcept nogil:
    cdef double m = 0.0
    cdef Py_ssize_t k
    for k in range(K):
        if fabs(g[k]) > m:
            m = fabs(g[k])
    # sigma pinned at its floor with the gradient pushing further down is stationary
    if not (sigma <= sigma_floor and g[K] > 0.0):
        if fabs(g[K]) > m:
            m = fabs(g[K])
    return m


def descend(const double[:, ::1] X, const double[::1] y, theta0, double sigma0,
            double step, long long max_iters, double grad_tol, double sigma_floor,
            long long trace_every=0):
    """Fixed-step gradient descent on the Gaussian NLL.

    A proposal that raises the NLL (beyond rounding) or is non-finite is
    rejected and the step halved. Returns a dict.
    """
    cdef Py_ssize_t Z = X.shape[0], K = X.shape[1], k
    theta_arr = np.array(theta0, dtype=np.float64, copy=True)
    prop_arr = np.empty(K, dtype=np.float64)
    g_arr = np.empty(K + 1, dtype=np.float64)
    gp_arr = np.empty(K + 1, dtype=np.float64)
    cdef double[::1] theta = theta_arr
    cdef double[::1] prop = prop_arr
    cdef double[::1] g = g_arr
    cdef double[::1] gp = gp_arr
    cdef double sigma = max(sigma0, sigma_floor), sp, s, nll, nllp, s2, gn = INFINITY
    cdef long long it = 0, rejected = 0
    cdef bint converged = False, stalled = False
    trace = []

    s = _pass(X, y, theta, g)
    s2 = sigma * sigma
    for k in range(K):
        g[k] /= s2
    g[K] = Z / sigma - s / (s2 * sigma)
    nll = _nll(Z, s, sigma)
    if not isfinite(nll):
        return dict(theta=theta_arr, sigma=sigma, nll=nll, grad=g_arr, iters=0,
                    converged=False, stalled=False, step=step, rejected=0,
                    trace=trace, finite=False)

    while True:
        gn = _pnorm(g, K, sigma, sigma_floor)
        if gn <= grad_tol:
            converged = True
            break
        if it >= max_iters:
            break
        for k in range(K):
            prop[k] = theta[k] - step * g[k]
        sp = sigma - step * g[K]
        if sp < sigma_floor:
            sp = sigma_floor
        s = _pass(X, y, prop, gp)
        nllp = _nll(Z, s, sp)
        it += 1
        if isfinite(nllp) and nllp <= nll + 64.0 * DBL_EPSILON * max(1.0, fabs(nll)):
            s2 = sp * sp
            for k in range(K):
                theta[k] = prop[k]
                g[k] = gp[k] / s2
            g[K] = Z / sp - s / (s2 * sp)
            sigma = sp
            nll = nllp
        else:
            rejected += 1
            step *= 0.5
            if step < 1e-300:
                stalled = True
                break
        if trace_every > 0 and it % trace_every == 0:
            trace.append((it, nll))

    return dict(theta=theta_arr, sigma=sigma, nll=nll, grad=g_arr.copy(), iters=it,
                converged=converged, stalled=stalled, step=step, rejected=rejected,
                trace=trace, finite=True)
