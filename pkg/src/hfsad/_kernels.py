"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public wrappers in :mod:`hfsad.prox_ops` pick one via ``_accel.BACKEND``.
Both paths implement identical arithmetic; results agree to rounding.
"""

import math

import numpy as np

from ._accel import jit

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 200


# ---------------------------------------------------------------------------
# prox of  weight * sqrt(v^2 + mu^2)  with step t  (elementwise)
# ---------------------------------------------------------------------------

@jit
def _smoothed_prox_scalar(u, weight, mu, t):
    if weight == 0.0 or u == 0.0:
        return u
    tw = t * weight
    lo = min(0.0, u)
    hi = max(0.0, u)
    v = u / (1.0 + tw / math.sqrt(u * u + mu * mu))
    for _ in range(NEWTON_MAXITER):
        r = math.sqrt(v * v + mu * mu)
        f = v + tw * v / r - u
        if f == 0.0:
            return v
        if f > 0.0:
            hi = v
        else:
            lo = v
        fp = 1.0 + tw * mu * mu / (r * r * r)
        vn = v - f / fp
        if vn <= lo or vn >= hi:
            vn = 0.5 * (lo + hi)
        if abs(vn - v) < NEWTON_TOL or hi - lo < NEWTON_TOL:
            return vn
        v = vn
    return v


@jit
def smoothed_prox_numba(u, weight, mu, t, out):
    for i in range(u.shape[0]):
        out[i] = _smoothed_prox_scalar(u[i], weight[i], mu[i], t[i])
    return out


def smoothed_prox_numpy(u, weight, mu, t, out):
    tw = t * weight
    lo = np.minimum(0.0, u)
    hi = np.maximum(0.0, u)
    v = u / (1.0 + tw / np.sqrt(u * u + mu * mu))
    active = (weight != 0.0) & (u != 0.0)
    res = u.copy()
    for _ in range(NEWTON_MAXITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        vi, twi, mui, ui = v[idx], tw[idx], mu[idx], u[idx]
        r = np.sqrt(vi * vi + mui * mui)
        f = vi + twi * vi / r - ui
        exact = f == 0.0
        hi[idx] = np.where(f > 0.0, vi, hi[idx])
        lo[idx] = np.where(f < 0.0, vi, lo[idx])
        fp = 1.0 + twi * mui * mui / (r * r * r)
        vn = vi - f / fp
        bad = (vn <= lo[idx]) | (vn >= hi[idx])
        vn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), vn)
        done = (np.abs(vn - vi) < NEWTON_TOL) | (hi[idx] - lo[idx] < NEWTON_TOL)
        vn = np.where(exact, vi, vn)
        done |= exact
        v[idx] = vn
        res[idx[done]] = vn[done]
        active[idx[done]] = False
    res[active] = v[active]
    out[:] = res
    return out


# ---------------------------------------------------------------------------
# prox of  |y - (x.w)^2|  with step t, followed by a box clamp  (row-wise)
# ---------------------------------------------------------------------------

@jit
def _pr_cost(u, a, y, two_ts):
    d = u - a
    return abs(y - u * u) + d * d / two_ts


@jit
def phase_prox_numba(V, X, y, t, bound, out):
    n, m = V.shape
    for i in range(n):
        a = 0.0
        s = 0.0
        for j in range(m):
            a += X[i, j] * V[i, j]
            s += X[i, j] * X[i, j]
        if s == 0.0:
            for j in range(m):
                out[i, j] = min(max(V[i, j], -bound), bound)
            continue
        yi = y[i]
        two_ts = 2.0 * t[i] * s
        # piece where u^2 >= y: stationary point of u^2 - y + (u-a)^2/(2ts)
        best_u = 0.0
        best_h = np.inf
        u1 = a / (1.0 + two_ts)
        if u1 * u1 >= yi:
            best_u = u1
            best_h = _pr_cost(u1, a, yi, two_ts)
        if yi >= 0.0:
            denom = 1.0 - two_ts
            if denom != 0.0:
                u2 = a / denom
                if u2 * u2 <= yi:
                    h = _pr_cost(u2, a, yi, two_ts)
                    if h < best_h:
                        best_u = u2
                        best_h = h
            r = math.sqrt(yi)
            h = _pr_cost(r, a, yi, two_ts)
            if h < best_h:
                best_u = r
                best_h = h
            h = _pr_cost(-r, a, yi, two_ts)
            if h < best_h:
                best_u = -r
                best_h = h
        coef = (best_u - a) / s
        for j in range(m):
            out[i, j] = min(max(V[i, j] + coef * X[i, j], -bound), bound)
    return out


def phase_prox_numpy(V, X, y, t, bound, out):
    a = np.einsum("ij,ij->i", X, V)
    s = np.einsum("ij,ij->i", X, X)
    zero = s == 0.0
    s_safe = np.where(zero, 1.0, s)
    two_ts = 2.0 * t * s_safe
    nonneg = y >= 0.0
    r = np.sqrt(np.where(nonneg, y, 0.0))
    u1 = a / (1.0 + two_ts)
    denom = 1.0 - two_ts
    denom_ok = denom != 0.0
    u2 = a / np.where(denom_ok, denom, 1.0)
    cands = np.stack([u1, u2, r, -r], axis=1)
    valid = np.stack([
        u1 * u1 >= y,
        nonneg & denom_ok & (u2 * u2 <= y),
        nonneg,
        nonneg,
    ], axis=1)
    d = cands - a[:, None]
    h = np.abs(y[:, None] - cands * cands) + d * d / two_ts[:, None]
    h = np.where(valid, h, np.inf)
    # argmin returns the first minimum: same tie order as the numba loop
    u = cands[np.arange(len(a)), np.argmin(h, axis=1)]
    coef = np.where(zero, 0.0, (u - a) / s_safe)
    np.clip(V + coef[:, None] * X, -bound, bound, out=out)
    return out
