"""Proximal operators and penalty values used by the HFSAD updates.

Every prox here solves ``argmin_v  g(v) + (1 / (2 * step)) * ||v - w||^2``
for some penalty or loss ``g``. Scalar operators are vectorised with numpy
broadcasting, so they accept floats or arrays alike.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _accel, _kernels


class PenaltyKind(str, Enum):
    NONE = "none"
    L1 = "l1"
    SCAD = "scad"
    MCP = "mcp"


@dataclass(frozen=True)
class PenaltySpec:
    """A separable penalty ``weight * sum_m p(|w_m|)``.

    ``weight`` may be an array with one entry per row when the penalty is
    applied to a stack of vectors (one cluster head per row).
    """

    kind: PenaltyKind = PenaltyKind.NONE
    lam: float = 0.0
    gamma: float = 3.7
    weight: "float | np.ndarray" = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if self.lam < 0:
            raise ValueError(f"penalty lambda must be >= 0, got {self.lam}")
        if np.any(np.asarray(self.weight) < 0):
            raise ValueError("penalty weight must be >= 0")
        if self.kind is PenaltyKind.SCAD and not self.gamma > 2:
            raise ValueError(f"SCAD requires gamma > 2, got {self.gamma}")
        if self.kind is PenaltyKind.MCP and not self.gamma > 1:
            raise ValueError(f"MCP requires gamma > 1, got {self.gamma}")

    @classmethod
    def none(cls):
        return cls(PenaltyKind.NONE)

    @classmethod
    def l1(cls, weight=1.0, lam=1.0):
        return cls(PenaltyKind.L1, lam=lam, weight=weight)

    @classmethod
    def scad(cls, lam, gamma, weight=1.0):
        return cls(PenaltyKind.SCAD, lam=lam, gamma=gamma, weight=weight)

    @classmethod
    def mcp(cls, lam, gamma, weight=1.0):
        return cls(PenaltyKind.MCP, lam=lam, gamma=gamma, weight=weight)


@dataclass(frozen=True)
class BoxDomain:
    bound: float = 5.0

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError(f"box bound must be > 0, got {self.bound}")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# penalty shapes
# ---------------------------------------------------------------------------

def scad_abs(theta, lam, gamma):
    """SCAD value at ``theta = |w| >= 0``."""
    theta = np.asarray(theta, dtype=float)
    mid = (2.0 * gamma * lam * theta - theta * theta - lam * lam) / (2.0 * (gamma - 1.0))
    flat = lam * lam * (gamma + 1.0) / 2.0
    return np.where(theta <= lam, lam * theta, np.where(theta <= gamma * lam, mid, flat))


def mcp_abs(theta, lam, gamma):
    theta = np.asarray(theta, dtype=float)
    return np.where(theta <= gamma * lam, lam * theta - theta * theta / (2.0 * gamma),
                    gamma * lam * lam / 2.0)


def scad_derivative(w, lam, gamma):
    """Derivative of SCAD, defined a.e. (zero at the origin)."""
    w = np.asarray(w, dtype=float)
    theta = np.abs(w)
    mag = np.where(theta <= lam, lam, np.maximum(gamma * lam - theta, 0.0) / (gamma - 1.0))
    return np.sign(w) * mag


def penalty_value(spec, w):
    """``weight * sum_m p(|w_m|)``, summed over the last axis."""
    theta = np.abs(np.asarray(w, dtype=float))
    if spec.kind is PenaltyKind.NONE:
        return _out(np.zeros(theta.shape[:-1]) if theta.ndim else 0.0)
    if spec.kind is PenaltyKind.L1:
        per = spec.lam * theta
    elif spec.kind is PenaltyKind.SCAD:
        per = scad_abs(theta, spec.lam, spec.gamma)
    else:
        per = mcp_abs(theta, spec.lam, spec.gamma)
    total = per.sum(axis=-1) if per.ndim else per
    return _out(np.asarray(spec.weight) * total)


# ---------------------------------------------------------------------------
# scalar proxes
# ---------------------------------------------------------------------------

def soft_threshold(w, t):
    w = np.asarray(w, dtype=float)
    return _out(np.sign(w) * np.maximum(np.abs(w) - t, 0.0))


def _best_candidate(theta, cands, cost):
    """Pick, per element, the candidate magnitude of lowest cost (first wins ties)."""
    vals = np.stack([cost(c) for c in cands], axis=0)
    pick = np.argmin(vals, axis=0)
    return np.take_along_axis(np.stack(cands, axis=0), pick[None], axis=0)[0]


def prox_scad(w, lam, gamma, step):
    """Global minimiser of ``SCAD(v) + (v - w)^2 / (2 step)``.

    Closed form while ``step < gamma - 1``; beyond that the subproblem is
    non-convex and the best of the per-region candidates is returned.
    """
    if not gamma > 2:
        raise ValueError(f"SCAD requires gamma > 2, got {gamma}")
    w = np.asarray(w, dtype=float)
    step = np.asarray(step, dtype=float)
    if np.any(step <= 0):
        raise ValueError("prox step must be positive")
    w_b, step_b = np.broadcast_arrays(w, step)
    theta_b = np.abs(w_b)

    convex = step_b < gamma - 1.0
    denom = np.where(convex, gamma - 1.0 - step_b, 1.0)
    mid = ((gamma - 1.0) * theta_b - step_b * gamma * lam) / denom
    closed = np.where(theta_b <= lam * (1.0 + step_b), np.maximum(theta_b - step_b * lam, 0.0),
                      np.where(theta_b <= gamma * lam, mid, theta_b))
    mag = closed
    if not convex.all():
        nc = ~convex
        th, st = theta_b[nc], step_b[nc]
        ok = st != gamma - 1.0
        stat = np.where(ok, ((gamma - 1.0) * th - st * gamma * lam) / np.where(ok, gamma - 1.0 - st, 1.0), lam)
        cands = [
            np.clip(th - st * lam, 0.0, lam),
            np.clip(stat, lam, gamma * lam),
            np.full_like(th, lam),
            np.full_like(th, gamma * lam),
            np.maximum(th, gamma * lam),
        ]

        def cost(v):
            return scad_abs(v, lam, gamma) + (v - th) ** 2 / (2.0 * st)

        mag = closed.copy()
        mag[nc] = _best_candidate(th, cands, cost)
    return _out(np.sign(w_b) * mag)


def prox_mcp(w, lam, gamma, step):
    """Global minimiser of ``MCP(v) + (v - w)^2 / (2 step)`` (firm thresholding)."""
    if not gamma > 1:
        raise ValueError(f"MCP requires gamma > 1, got {gamma}")
    w = np.asarray(w, dtype=float)
    step = np.asarray(step, dtype=float)
    if np.any(step <= 0):
        raise ValueError("prox step must be positive")
    w_b, step_b = np.broadcast_arrays(w, step)
    theta = np.abs(w_b)

    convex = step_b < gamma
    scale = np.where(convex, 1.0 - step_b / gamma, 1.0)
    closed = np.where(theta <= step_b * lam, 0.0,
                      np.where(theta <= gamma * lam, (theta - step_b * lam) / scale, theta))
    mag = closed
    if not convex.all():
        nc = ~convex
        th, st = theta[nc], step_b[nc]
        cands = [
            np.zeros_like(th),
            np.full_like(th, gamma * lam),
            np.maximum(th, gamma * lam),
        ]

        def cost(v):
            return mcp_abs(v, lam, gamma) + (v - th) ** 2 / (2.0 * st)

        mag = closed.copy()
        mag[nc] = _best_candidate(th, cands, cost)
    return _out(np.sign(w_b) * mag)


def _flat_params(u, *params):
    shape = np.broadcast_shapes(np.shape(u), *(np.shape(p) for p in params))
    arrays = [np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), shape)).ravel()
              for a in (u, *params)]
    return shape, arrays


def prox_smoothed_penalty_scalar(u, weight, mu, step):
    """Minimiser of ``weight * sqrt(v^2 + mu^2) + (v - u)^2 / (2 step)``, elementwise.

    Parameters broadcast against ``u``, so per-row ``mu``/``step`` columns are
    fine. Solved by safeguarded Newton on the monotone stationarity equation.
    """
    if np.any(np.asarray(mu) <= 0):
        raise ValueError("smoothing parameter mu must be > 0 (use soft_threshold for mu = 0)")
    if np.any(np.asarray(step) <= 0):
        raise ValueError("prox step must be positive")
    if np.any(np.asarray(weight) < 0):
        raise ValueError("penalty weight must be >= 0")
    shape, (uf, wf, muf, tf) = _flat_params(u, weight, mu, step)
    out = np.empty_like(uf)
    if _accel.NUMBA_AVAILABLE:
        _kernels.smoothed_prox_numba(uf, wf, muf, tf, out)
    else:
        _kernels.smoothed_prox_numpy(uf, wf, muf, tf, out)
    return _out(out.reshape(shape))


def prox_penalty(spec, w, step):
    """Prox of the full penalty ``spec`` (weight folded into the step)."""
    w = np.asarray(w, dtype=float)
    weight = np.asarray(spec.weight, dtype=float)
    if weight.ndim == 1 and w.ndim == 2:
        weight = weight[:, None]
    step = np.asarray(step, dtype=float)
    if step.ndim == 1 and w.ndim == 2:
        step = step[:, None]
    if spec.kind is PenaltyKind.NONE or not np.any(weight > 0):
        return _out(w.copy())
    eff = weight * step
    if spec.kind is PenaltyKind.L1:
        return soft_threshold(w, spec.lam * eff)
    # zero weight rows: prox of nothing is the identity
    eff = np.where(eff > 0, eff, np.finfo(float).tiny)
    if spec.kind is PenaltyKind.SCAD:
        return prox_scad(w, spec.lam, spec.gamma, eff)
    return prox_mcp(w, spec.lam, spec.gamma, eff)


def smoothed_penalty_prox(spec, u, mu, step):
    """Prox of the smoothed consensus penalty applied to differences ``u``.

    For l1 the smoothing is ``sqrt(x^2 + mu^2)``. Non-convex kinds are used
    without smoothing (their own prox), matching how personalisation penalties
    are kept non-smooth.
    """
    if spec.kind is PenaltyKind.NONE:
        return np.asarray(u, dtype=float).copy()
    if spec.kind is PenaltyKind.L1:
        return prox_smoothed_penalty_scalar(u, spec.lam * np.asarray(spec.weight), mu, step)
    return prox_penalty(spec, u, step)


# ---------------------------------------------------------------------------
# loss prox and box
# ---------------------------------------------------------------------------

def project_box(w, box):
    return _out(np.clip(np.asarray(w, dtype=float), -box.bound, box.bound))


def phase_retrieval_loss(w, x, y):
    """``|y - (x.w)^2|`` per row."""
    u = np.einsum("...m,...m->...", np.asarray(x, float), np.asarray(w, float))
    return _out(np.abs(np.asarray(y, float) - u * u))


def prox_phase_retrieval_loss(v, x, y, step, box):
    """Prox of ``|y - (x.w)^2|`` with step ``step``, then clamped to the box.

    Accepts one client (``v``, ``x`` of shape ``(M,)``) or a stack of clients
    (shape ``(n, M)`` with ``y`` and ``step`` of shape ``(n,)`` or scalar).
    The M-dimensional problem reduces to a scalar one in ``u = x.w``; the
    winner among the piecewise stationary points and the kinks ``+-sqrt(y)``
    is mapped back along ``x``.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.ascontiguousarray(np.atleast_2d(v))
    X = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(np.asarray(x, dtype=float)), V.shape))
    n = V.shape[0]
    yv = np.ascontiguousarray(np.broadcast_to(np.asarray(y, dtype=float), (n,)))
    tv = np.ascontiguousarray(np.broadcast_to(np.asarray(step, dtype=float), (n,)))
    if np.any(tv <= 0):
        raise ValueError("prox step must be positive")
    out = np.empty_like(V)
    if _accel.NUMBA_AVAILABLE:
        _kernels.phase_prox_numba(V, X, yv, tv, float(box.bound), out)
    else:
        _kernels.phase_prox_numpy(V, X, yv, tv, float(box.bound), out)
    return out[0] if single else out
