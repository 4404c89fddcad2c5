"""Robust phase-retrieval benchmark: instance generation, metrics, baseline.

Each client holds one intensity measurement ``y = (x.w)^2 + eps`` where
``eps`` is one-sided mixture-exponential noise calibrated to a target SNR.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import MultiPhaseRetrievalData, PhaseRetrievalData
from .prox_ops import BoxDomain, PenaltyKind, PenaltySpec, penalty_value, scad_derivative
from .trace import Trace, TraceRecord

log = logging.getLogger(__name__)

INSTANCE_FORMAT = "hfsad-instance"
INSTANCE_VERSION = 1


@dataclass(frozen=True)
class NoiseSpec:
    """Two-component exponential mixture; ``lambda*`` are *rates* (mean ``1/rate``)."""

    lambda1: float
    c1: float = 0.9
    c2: float = 0.1
    heavy_ratio: float = 10.0

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be > 0")
        if abs(self.c1 + self.c2 - 1.0) > 1e-12 or min(self.c1, self.c2) < 0:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if not self.heavy_ratio > 0:
            raise ValueError("heavy_ratio must be > 0")

    @property
    def lambda2(self):
        return self.lambda1 / self.heavy_ratio

    @property
    def moment_constant(self):
        """``lambda1^2 * E[eps^2]``; 21.8 for the default mixture."""
        return 2.0 * (self.c1 + self.c2 * self.heavy_ratio**2)


@dataclass(frozen=True)
class GeneratorParams:
    p: float = 0.8  # per-cluster feature density of x
    s: float = 0.3  # sparsity of the ground truth
    snr_db: float = -20.0
    c1: float = 0.9
    c2: float = 0.1
    heavy_ratio: float = 10.0
    m_per_client: int = 1
    box: float = 5.0
    max_redraws: int = 100


@dataclass
class ProblemInstance:
    w_true: np.ndarray
    x: np.ndarray  # (n, M) or (n, m, M)
    y: np.ndarray  # (n,) or (n, m)
    mask_s: np.ndarray
    masks_h: np.ndarray  # (L, M)
    cluster_sizes: tuple
    lambda1: float
    snr_db: float
    noise: np.ndarray
    box: float = 5.0
    meta: dict = field(default_factory=dict)

    @property
    def n_clients(self):
        return int(sum(self.cluster_sizes))

    @property
    def dim(self):
        return self.w_true.shape[0]

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.cluster_sizes)]).astype(np.int64)

    @property
    def cluster_of_client(self):
        return np.repeat(np.arange(len(self.cluster_sizes)), self.cluster_sizes)

    def client_data(self, inner_steps=20):
        box = BoxDomain(self.box)
        if self.x.ndim == 2:
            return PhaseRetrievalData(self.x, self.y, box)
        return MultiPhaseRetrievalData(self.x, self.y, box, inner_steps)

    def flat_xy(self):
        return self.x.reshape(-1, self.dim), self.y.reshape(-1)

    def signal(self):
        x, _ = self.flat_xy()
        return (x @ self.w_true) ** 2


def compute_lambda1(snr_db, signal_sq_sum, total_clients, moment_constant=21.8):
    """Noise rate giving ``E[eps^2] = mean signal / 10^(snr/10)``."""
    if not signal_sq_sum > 0:
        raise ValueError("signal energy must be positive")
    return float(np.sqrt(total_clients * moment_constant * 10.0 ** (snr_db / 10.0) / signal_sq_sum))


def sample_noise(spec, rng, size=None):
    """Draw from ``c1 * Exp(rate lambda1) + c2 * Exp(rate lambda2)``."""
    heavy = rng.random(size) >= spec.c1
    light_draw = rng.exponential(1.0 / spec.lambda1, size)
    heavy_draw = rng.exponential(1.0 / spec.lambda2, size)
    out = np.where(heavy, heavy_draw, light_draw)
    return float(out) if size is None else out


def generate_instance(cfg, gen, rng):
    """Draw masks, ground truth, measurements and calibrated noise.

    ``cfg`` needs ``cluster_sizes`` and ``dim`` (a ``RunConfig`` works).
    """
    sizes = tuple(int(n) for n in cfg.cluster_sizes)
    dim = int(cfg.dim)
    n_clusters = len(sizes)
    n = sum(sizes)
    m = int(gen.m_per_client)

    for attempt in range(gen.max_redraws):
        mask_s = rng.random(dim) < gen.s
        if mask_s.any():
            break
        log.info("ground-truth mask empty, redrawing (attempt %d)", attempt + 1)
    else:
        raise ValueError(f"could not draw a non-empty sparsity mask with s={gen.s}")
    w_true = rng.standard_normal(dim) * mask_s
    masks_h = rng.random((n_clusters, dim)) < gen.p
    cluster_of = np.repeat(np.arange(n_clusters), sizes)
    shape = (n, dim) if m == 1 else (n, m, dim)
    x = rng.standard_normal(shape)
    x *= masks_h[cluster_of] if m == 1 else masks_h[cluster_of][:, None, :]
    signal = (x @ w_true) ** 2

    noise_shape = (n,) if m == 1 else (n, m)
    moment = NoiseSpec(1.0, gen.c1, gen.c2, gen.heavy_ratio).moment_constant
    lam1 = compute_lambda1(gen.snr_db, float(signal.sum()), signal.size, moment)
    spec = NoiseSpec(lam1, gen.c1, gen.c2, gen.heavy_ratio)
    eps = sample_noise(spec, rng, noise_shape)
    return ProblemInstance(
        w_true=w_true, x=x, y=signal + eps, mask_s=mask_s, masks_h=masks_h,
        cluster_sizes=sizes, lambda1=lam1, snr_db=float(gen.snr_db), noise=eps,
        box=float(gen.box),
    )


def realized_snr_db(instance, moment_constant=21.8):
    """SNR implied by the drawn noise, in the same units as the target."""
    signal = instance.signal()
    return float(10.0 * np.log10(signal.mean() / np.mean(instance.noise**2)))


def relative_error(w_hat, w_true):
    """``min(||w_hat - w||^2, ||w_hat + w||^2) / ||w||^2`` (global sign quotiented)."""
    w_true = np.asarray(w_true, dtype=float)
    w_hat = np.asarray(w_hat, dtype=float)
    energy = float(w_true @ w_true)
    if energy == 0.0:
        raise ValueError("relative error undefined for a zero ground truth")
    minus = w_hat - w_true
    plus = w_hat + w_true
    return float(min(minus @ minus, plus @ plus) / energy)


# ---------------------------------------------------------------------------
# centralised objective and baseline
# ---------------------------------------------------------------------------

def objective(instance, w, penalties=()):
    x, y = instance.flat_xy()
    u = x @ w
    val = float(np.abs(y - u * u).sum())
    for spec in penalties:
        val += float(np.sum(penalty_value(spec, w)))
    return val


def penalty_gradient(spec, w):
    """An a.e. gradient of ``spec`` (zero at the origin)."""
    weight = float(np.sum(spec.weight))
    if spec.kind is PenaltyKind.NONE or weight == 0:
        return np.zeros_like(w)
    if spec.kind is PenaltyKind.L1:
        return weight * spec.lam * np.sign(w)
    if spec.kind is PenaltyKind.SCAD:
        return weight * scad_derivative(w, spec.lam, spec.gamma)
    return weight * np.sign(w) * np.maximum(spec.lam - np.abs(w) / spec.gamma, 0.0)


@dataclass(frozen=True)
class StepRule:
    """Normalised-subgradient step: geometric ``eta0 * rho^k`` or Polyak."""

    kind: str = "geometric"
    eta0: float | None = None  # None -> 1 / sqrt(total clients)
    rho: float = 0.998
    f_star: float | None = None

    def __post_init__(self):
        if self.kind not in ("geometric", "polyak"):
            raise ValueError(f"unknown step rule {self.kind!r}")
        if self.kind == "polyak" and self.f_star is None:
            raise ValueError("Polyak steps need f_star")


def subgradient_baseline(instance, steps, step_rule=StepRule(), w_init=None, penalties=(),
                         use_box=True):
    """Centralised normalised-subgradient method on the pooled objective.

    One record per step; ``cumulative_updates = k * total_clients`` so the
    curve lines up with HFSAD's client-update count.
    """
    x, y = instance.flat_xy()
    n_total = instance.n_clients
    eta0 = step_rule.eta0 if step_rule.eta0 is not None else 1.0 / np.sqrt(n_total)
    w = np.zeros(instance.dim) if w_init is None else np.array(w_init, dtype=float)
    bound = instance.box

    def record(k, w):
        return TraceRecord(k, k * n_total, relative_error(w, instance.w_true), 0.0, 0.0, 0.0,
                           objective(instance, w, penalties))

    recs = [record(0, w)]
    for k in range(steps):
        u = x @ w
        g = x.T @ (np.sign(u * u - y) * 2.0 * u)
        for spec in penalties:
            g = g + penalty_gradient(spec, w)
        gnorm = float(np.linalg.norm(g))
        if gnorm > 0:
            if step_rule.kind == "geometric":
                step = eta0 * step_rule.rho**k / gnorm
            else:
                step = max(objective(instance, w, penalties) - step_rule.f_star, 0.0) / gnorm**2
            w = w - step * g
            if use_box:
                w = np.clip(w, -bound, bound)
        recs.append(record(k + 1, w))
    return Trace.from_records(recs, final_w=w)


# ---------------------------------------------------------------------------
# initial points
# ---------------------------------------------------------------------------

def _weighted_median(values, weights):
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    return float(values[order][np.searchsorted(cum, 0.5 * cum[-1])])


def fit_scale(instance, direction):
    """Best ``t >= 0`` for ``t * direction`` under the l1 data fit."""
    x, y = instance.flat_xy()
    a = (x @ direction) ** 2
    keep = a > 0
    if not keep.any():
        return 0.0
    tau = _weighted_median(y[keep] / a[keep], a[keep])
    return float(np.sqrt(max(tau, 0.0)))


def orthogonality_init(instance, frac=0.5):
    """Direction least aligned with the smallest-intensity measurements.

    With one-sided noise a small ``y`` implies a small ``(x.w)^2``, so the
    generalised eigenvector of the low-intensity covariance against the full
    covariance with the smallest eigenvalue points along ``w``.
    """
    from scipy.linalg import eigh

    x, y = instance.flat_xy()
    low = np.argsort(y, kind="stable")[: max(1, int(frac * len(y)))]
    small = x[low].T @ x[low] / len(low)
    full = x.T @ x / len(y) + 1e-12 * np.eye(instance.dim)
    _, vecs = eigh(small, full)
    v = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    v = v * (1.0 if v[np.argmax(np.abs(v))] >= 0 else -1.0)
    return fit_scale(instance, v) * v


def spectral_init(instance):
    x, y = instance.flat_xy()
    mat = (x * y[:, None]).T @ x / len(y)
    _, vecs = np.linalg.eigh(mat)
    v = vecs[:, -1]
    v = v * (1.0 if v[np.argmax(np.abs(v))] >= 0 else -1.0)
    return fit_scale(instance, v) * v


INITIALIZERS = {
    "zero": lambda inst: np.zeros(inst.dim),
    "orthogonal": orthogonality_init,
    "spectral": spectral_init,
}


def initial_point(instance, kind):
    try:
        return INITIALIZERS[kind](instance)
    except KeyError:
        raise ValueError(f"unknown init {kind!r}; choose from {sorted(INITIALIZERS)}") from None


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def save_instance(path, instance):
    """Write an ``.npz`` with a versioned JSON header; bit-exact round trip."""
    header = {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "cluster_sizes": list(instance.cluster_sizes),
        "lambda1": instance.lambda1,
        "snr_db": instance.snr_db,
        "box": instance.box,
        "meta": instance.meta,
    }
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), w_true=instance.w_true,
                 x=instance.x, y=instance.y, mask_s=instance.mask_s, masks_h=instance.masks_h,
                 noise=instance.noise)
    return path


def load_instance(path):
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != INSTANCE_FORMAT:
            raise ValueError(f"{path}: not an HFSAD instance file")
        if header.get("version") != INSTANCE_VERSION:
            raise ValueError(f"{path}: unsupported instance version {header.get('version')}")
        return ProblemInstance(
            w_true=data["w_true"], x=data["x"], y=data["y"], mask_s=data["mask_s"],
            masks_h=data["masks_h"], cluster_sizes=tuple(header["cluster_sizes"]),
            lambda1=header["lambda1"], snr_db=header["snr_db"], noise=data["noise"],
            box=header["box"], meta=header.get("meta", {}),
        )


__all__ = [
    "GeneratorParams", "NoiseSpec", "PenaltySpec", "ProblemInstance", "StepRule",
    "compute_lambda1", "generate_instance", "initial_point", "load_instance", "objective",
    "orthogonality_init", "realized_snr_db", "relative_error", "sample_noise", "save_instance",
    "spectral_init", "subgradient_baseline",
]
