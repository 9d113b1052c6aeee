"""Pure-Python/NumPy fallback for the compiled kernels in ``_kernels.pyx``.

Same names, same arguments, same return values. Used when the extension
was not built, and by the benchmark as the baseline.
"""
import math
import sys

import numpy as np

_EPS = sys.float_info.epsilon
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def trace_runs(grid, cell_size, x0, y0, x1, y1, eps=1e-9):
    H, W = grid.shape
    dx, dy = x1 - x0, y1 - y0
    L = math.hypot(dx, dy)
    ux, uy = dx / L, dy / L
    fx, fy = x0 / cell_size, y0 / cell_size
    ix, iy = math.floor(fx), math.floor(fy)
    if fx == ix and ux < 0:
        ix -= 1
    if fy == iy and uy < 0:
        iy -= 1
    ix = min(max(ix, 0), W - 1)
    iy = min(max(iy, 0), H - 1)
    sx = 1 if ux > 0 else -1
    sy = 1 if uy > 0 else -1
    bx = 1 if sx > 0 else 0
    by = 1 if sy > 0 else 0

    codes, lengths = [], []
    t = 0.0
    carry = 0.0
    last = -1
    while True:
        tmx = ((ix + bx) * cell_size - x0) / ux if ux != 0.0 else math.inf
        tmy = ((iy + by) * cell_size - y0) / uy if uy != 0.0 else math.inf
        tnext = min(tmx, tmy, L)
        piece = max(tnext - t, 0.0)
        code = int(grid[iy, ix])
        if piece > eps:
            if code == last:
                lengths[-1] += piece + carry
            else:
                codes.append(code)
                lengths.append(piece + carry)
                last = code
            carry = 0.0
        elif lengths:
            lengths[-1] += piece
        else:
            carry += piece
        if tnext >= L:
            break
        t = tnext
        if tmx <= tmy:
            ix += sx
        else:
            iy += sy
        if not (0 <= ix < W and 0 <= iy < H):
            if lengths:
                lengths[-1] += L - t
            break
    return np.array(codes, dtype=np.int64), np.array(lengths, dtype=np.float64)


def _stats(X, y, theta):
    r = y - X @ theta
    return float(r @ r), -(X.T @ r)


def nll_grad(X, y, theta, sigma):
    Z = X.shape[0]
    theta = np.asarray(theta, dtype=np.float64)
    s, g = _stats(X, y, theta)
    s2 = sigma * sigma
    grad = np.empty(theta.size + 1)
    grad[:-1] = g / s2
    grad[-1] = Z / sigma - s / (s2 * sigma)
    return Z * (math.log(sigma) + _LOG_SQRT_2PI) + s / (2.0 * s2), grad


def _pnorm(g, sigma, sigma_floor):
    m = float(np.max(np.abs(g[:-1]))) if g.size > 1 else 0.0
    if not (sigma <= sigma_floor and g[-1] > 0.0):
        m = max(m, abs(float(g[-1])))
    return m


def descend(X, y, theta0, sigma0, step, max_iters, grad_tol, sigma_floor, trace_every=0):
    theta = np.array(theta0, dtype=np.float64, copy=True)
    sigma = max(float(sigma0), sigma_floor)
    with np.errstate(all="ignore"):
        nll, g = nll_grad(X, y, theta, sigma)
    trace = []
    if not math.isfinite(nll):
        return dict(theta=theta, sigma=sigma, nll=nll, grad=g, iters=0, converged=False,
                    stalled=False, step=step, rejected=0, trace=trace, finite=False)
    it = rejected = 0
    converged = stalled = False
    while True:
        if _pnorm(g, sigma, sigma_floor) <= grad_tol:
            converged = True
            break
        if it >= max_iters:
            break
        prop = theta - step * g[:-1]
        sp = max(sigma - step * g[-1], sigma_floor)
        with np.errstate(all="ignore"):
            nllp, gp = nll_grad(X, y, prop, sp)
        it += 1
        if math.isfinite(nllp) and nllp <= nll + 64.0 * _EPS * max(1.0, abs(nll)):
            theta, sigma, nll, g = prop, sp, nllp, gp
        else:
            rejected += 1
            step *= 0.5
            if step < 1e-300:
                stalled = True
                break
        if trace_every > 0 and it % trace_every == 0:
            trace.append((it, nll))
    return dict(theta=theta, sigma=sigma, nll=nll, grad=g, iters=it, converged=converged,
                stalled=stalled, step=step, rejected=rejected, trace=trace, finite=True)
