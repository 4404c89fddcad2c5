"""Brute-force reference minimisers used to check the closed-form proxes.

Each oracle evaluates the prox objective on a uniform grid, then refines
every grid local minimum with golden-section search and keeps the best.
Nothing here imports the closed forms it is meant to check.
"""

import math

import numpy as np

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo, hi, tol=1e-13, maxiter=200):
    """Minimiser of a unimodal scalar ``f`` on ``[lo, hi]``."""
    a, b = float(lo), float(hi)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def grid_minimize(f, lo, hi, h=1e-4, max_refine=8):
    """Global minimiser of a scalar ``f`` (vectorised) over ``[lo, hi]``."""
    n = max(3, int(math.ceil((hi - lo) / h)) + 1)
    grid = np.linspace(lo, hi, n)
    vals = f(grid)
    left = np.concatenate([[np.inf], vals[:-1]])
    right = np.concatenate([vals[1:], [np.inf]])
    local = np.flatnonzero((vals <= left) & (vals <= right))
    local = local[np.argsort(vals[local], kind="stable")][:max_refine]
    best_x, best_f = grid[local[0]], vals[local[0]]
    for i in local:
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, n - 1)]
        x = golden_section(lambda t: float(f(np.array([t]))[0]), a, b)
        fx = float(f(np.array([x]))[0])
        if fx < best_f:
            best_x, best_f = x, fx
    return float(best_x)


# ---------------------------------------------------------------------------
# penalty shapes, written out independently of prox_ops
# ---------------------------------------------------------------------------

def scad_shape(t, lam, gamma):
    t = np.abs(t)
    mid = (2.0 * gamma * lam * t - t * t - lam * lam) / (2.0 * (gamma - 1.0))
    top = 0.5 * lam * lam * (gamma + 1.0)
    return np.where(t <= lam, lam * t, np.where(t <= gamma * lam, mid, top))


def mcp_shape(t, lam, gamma):
    t = np.abs(t)
    return np.where(t <= gamma * lam, lam * t - t * t / (2.0 * gamma), 0.5 * gamma * lam * lam)


def _span(u, pad=1.0):
    r = abs(u) + pad
    return -r, r


def oracle_soft_threshold(w, t, h=1e-4):
    return grid_minimize(lambda v: t * np.abs(v) + 0.5 * (v - w) ** 2, *_span(w), h)


def oracle_scad(w, lam, gamma, step, h=1e-4):
    return grid_minimize(lambda v: scad_shape(v, lam, gamma) + (v - w) ** 2 / (2.0 * step),
                         *_span(w), h)


def oracle_mcp(w, lam, gamma, step, h=1e-4):
    return grid_minimize(lambda v: mcp_shape(v, lam, gamma) + (v - w) ** 2 / (2.0 * step),
                         *_span(w), h)


def oracle_smoothed(u, weight, mu, step, h=1e-4):
    return grid_minimize(lambda v: weight * np.sqrt(v * v + mu * mu) + (v - u) ** 2 / (2.0 * step),
                         *_span(u), h)


def oracle_phase_retrieval(v, x, y, step, bound=5.0, h=1e-4):
    """Prox of ``|y - (x.w)^2|`` then box clamp, via a scalar search in ``u = x.w``.

    Along ``w = v + ((u - a)/s) x`` the objective is
    ``|y - u^2| + (u - a)^2 / (2 step s)``; directions orthogonal to ``x``
    only add a quadratic, so this line contains the minimiser.
    """
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    s = float(x @ x)
    if s == 0.0:
        return np.clip(v, -bound, bound)
    a = float(x @ v)
    r = 5.0 * float(np.abs(x).sum()) + 1.0
    r = max(r, abs(a) + 1.0, math.sqrt(max(y, 0.0)) + 1.0)
    u = grid_minimize(lambda u: np.abs(y - u * u) + (u - a) ** 2 / (2.0 * step * s), -r, r, h)
    return np.clip(v + ((u - a) / s) * x, -bound, bound)


# ---------------------------------------------------------------------------
# random case generators (shared by the verify command and the tests)
# ---------------------------------------------------------------------------

def scalar_cases(kind, n, rng):
    """``n`` random argument tuples for the scalar prox ``kind``."""
    out = []
    for _ in range(n):
        step = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        if kind == "soft":
            out.append((float(rng.normal(0, 2)), step))
        elif kind == "scad":
            lam, gamma = float(rng.uniform(0.02, 1.0)), float(rng.uniform(2.05, 5.0))
            out.append((float(rng.normal(0, 1.5 * lam * gamma)), lam, gamma, step))
        elif kind == "mcp":
            lam, gamma = float(rng.uniform(0.02, 1.0)), float(rng.uniform(1.05, 5.0))
            out.append((float(rng.normal(0, 1.5 * lam * gamma)), lam, gamma, step))
        elif kind == "smoothed":
            weight, mu = float(rng.uniform(0.0, 3.0)), float(np.exp(rng.uniform(-7, 0)))
            out.append((float(rng.normal(0, 2)), weight, mu, step))
        else:
            raise ValueError(kind)
    return out


def phase_cases(M, n, rng):
    out = []
    for _ in range(n):
        x = rng.normal(size=M)
        v = rng.normal(size=M) * 2.0
        y = float(rng.exponential(2.0) * (1 + (x @ x)))
        step = float(np.exp(rng.uniform(np.log(0.01), np.log(2.0))))
        out.append((v, x, y, step))
    return out


ORACLES = {
    "soft": oracle_soft_threshold,
    "scad": oracle_scad,
    "mcp": oracle_mcp,
    "smoothed": oracle_smoothed,
}


def run_prox_suite(n=1000, seed=0, tol=1e-6):
    """Compare every prox with its oracle; returns ``[(name, max_err, ok)]``."""
    from . import prox_ops as po
    from ._rng import derive_rng

    ops = {
        "soft": po.soft_threshold,
        "scad": po.prox_scad,
        "mcp": po.prox_mcp,
        "smoothed": po.prox_smoothed_penalty_scalar,
    }
    results = []
    for i, (name, op) in enumerate(ops.items()):
        rng = derive_rng(seed, 0, "verify", i)
        errs = [abs(float(op(*args)) - ORACLES[name](*args)) for args in scalar_cases(name, n, rng)]
        worst = max(errs)
        results.append((name, worst, worst <= tol))
    box = po.BoxDomain(5.0)
    for M in (1, 2, 3):
        rng = derive_rng(seed, 0, "verify", 100 + M)
        worst = 0.0
        for v, x, y, step in phase_cases(M, n, rng):
            got = po.prox_phase_retrieval_loss(v, x, y, step, box)
            worst = max(worst, float(np.max(np.abs(got - oracle_phase_retrieval(v, x, y, step)))))
        results.append((f"phase_M{M}", worst, worst <= tol))
    return results
