"""Penalty/smoothing schedules and the consensus-condition check."""

import math
from dataclasses import dataclass

import numpy as np

SQRT20 = math.sqrt(20.0)


@dataclass(frozen=True)
class ScheduleParams:
    """Growth of the ADMM penalties and decay of the smoothing parameters.

    ``c``/``alpha`` drive the clients, ``d``/``beta`` the cluster heads.
    """

    c: float
    d: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("c", "d", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"schedule parameter {name} must be > 0, got {getattr(self, name)}")

    def client(self, k):
        return schedule_params(k, self.c, self.alpha)

    def cluster(self, k):
        return schedule_params(k, self.d, self.beta)


@dataclass(frozen=True)
class ConsensusBounds:
    """Gradient bounds entering the consensus conditions.

    ``omega`` is ``max_l |N_l| * nu_f + nu_r``; ``omega0`` is the TV weight
    actually used between cluster heads and the server.
    """

    nu_f: float
    nu_r: float
    omega: float
    omega0: float

    @classmethod
    def from_gradients(cls, nu_f, nu_r, max_clients, omega0):
        return cls(nu_f=nu_f, nu_r=nu_r, omega=max_clients * nu_f + nu_r, omega0=omega0)


@dataclass(frozen=True)
class ConsensusReport:
    client_ok: bool
    cluster_ok: bool

    @property
    def ok(self):
        return self.client_ok and self.cluster_ok


def schedule_params(k, growth, decay):
    """Return ``(sigma, mu) = (growth * sqrt(k), decay / sqrt(k))``.

    ``k`` may be an integer array (one counter per node).
    """
    k_arr = np.asarray(k)
    if np.any(k_arr < 1):
        raise ValueError("update counter k must be >= 1")
    root = np.sqrt(k_arr.astype(float))
    sigma = growth * root
    mu = decay / root
    if k_arr.ndim == 0:
        return float(sigma), float(mu)
    return sigma, mu


def check_consensus_conditions(s, b):
    """Check ``alpha*c >= sqrt(20)*nu_f`` and ``beta*d >= sqrt(20)*omega``."""
    return ConsensusReport(
        client_ok=bool(s.alpha * s.c >= SQRT20 * b.nu_f),
        cluster_ok=bool(s.beta * s.d >= SQRT20 * b.omega),
    )


def smoothed_abs(x, mu):
    """``sqrt(x^2 + mu^2)``: a smooth upper bound of ``|x|`` within ``mu``."""
    if np.any(np.asarray(mu) <= 0):
        raise ValueError("mu must be > 0")
    val = np.hypot(x, mu)
    return float(val) if np.ndim(val) == 0 else val
