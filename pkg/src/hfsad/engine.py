"""HFSAD update rules for clients, cluster heads and the server.

Every state holds a *stack* of nodes: ``ClientState`` arrays are ``(n, M)``
with one row per client and ``ClusterState`` arrays are ``(L, M)``. A single
node is simply a stack of one. Round functions are pure: they return new
states and messages and never mutate their inputs.
"""

from dataclasses import dataclass, replace

import numpy as np

from .prox_ops import (
    BoxDomain,
    PenaltyKind,
    PenaltySpec,
    penalty_value,
    phase_retrieval_loss,
    project_box,
    prox_penalty,
    prox_phase_retrieval_loss,
    smoothed_penalty_prox,
)
from .smoothing import ScheduleParams, smoothed_abs


class ProtocolError(RuntimeError):
    """A head or the server was asked to aggregate without any messages."""


def _col(v, like):
    """Reshape per-row parameters ``(n,)`` to ``(n, 1)`` against 2-D ``like``."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1 and np.ndim(like) == 2:
        return v[:, None]
    return v


# ---------------------------------------------------------------------------
# client data (the pluggable loss)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseRetrievalData:
    """One intensity measurement per client: ``f(w) = |y - (x.w)^2| + I_box(w)``."""

    x: np.ndarray  # (n, M)
    y: np.ndarray  # (n,)
    box: BoxDomain = BoxDomain()

    def prox(self, v, step):
        return prox_phase_retrieval_loss(v, self.x, self.y, step, self.box)

    def loss(self, w):
        return phase_retrieval_loss(w, self.x, self.y)

    def take(self, idx):
        return replace(self, x=self.x[idx], y=self.y[idx])


@dataclass(frozen=True)
class MultiPhaseRetrievalData:
    """Several measurements per client, summed: ``sum_i |y_i - (x_i.w)^2|``.

    No closed-form prox exists for the sum, so ``prox`` runs a fixed number of
    proximal subgradient steps on the prox objective (box-projected).
    """

    x: np.ndarray  # (n, m, M)
    y: np.ndarray  # (n, m)
    box: BoxDomain = BoxDomain()
    inner_steps: int = 20

    def prox(self, v, step):
        v = np.atleast_2d(v)
        step = _col(np.broadcast_to(np.asarray(step, float), (v.shape[0],)), v)
        sigma = 1.0 / step
        w = v.copy()
        for _ in range(self.inner_steps):
            u = np.einsum("nim,nm->ni", self.x, w)
            g = np.einsum("ni,nim->nm", 2.0 * u * np.sign(u * u - self.y), self.x)
            # linearised loss + prox term + proximal damping with the same weight
            w = project_box((sigma * v + sigma * w - g) / (2.0 * sigma), self.box)
        return w

    def loss(self, w):
        u = np.einsum("nim,nm->ni", self.x, np.atleast_2d(w))
        return np.abs(self.y - u * u).sum(axis=1)

    def take(self, idx):
        return replace(self, x=self.x[idx], y=self.y[idx])


# ---------------------------------------------------------------------------
# states and messages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsensusWeights:
    """TV weights ``omega`` (client <-> head) and ``omega0`` (head <-> server).

    Passing an explicit ``PenaltySpec`` swaps the TV norm for another
    separable penalty on the differences (e.g. MCP for personalisation).
    """

    omega_client: float
    omega_cluster: float
    client_penalty: PenaltySpec | None = None
    cluster_penalty: PenaltySpec | None = None

    def __post_init__(self):
        if self.omega_client < 0 or self.omega_cluster < 0:
            raise ValueError("consensus weights must be >= 0")

    @property
    def client(self):
        if self.client_penalty is not None:
            return self.client_penalty
        return PenaltySpec.l1(weight=self.omega_client)

    @property
    def cluster(self):
        if self.cluster_penalty is not None:
            return self.cluster_penalty
        return PenaltySpec.l1(weight=self.omega_cluster)


@dataclass(frozen=True)
class Mailbox:
    """Latest ``(q, Gamma, sigma at k+1, k)`` per sender.

    ``offsets`` splits senders into contiguous groups, one per receiver.
    """

    q: np.ndarray
    gamma: np.ndarray
    sigma_next: np.ndarray
    k: np.ndarray
    offsets: np.ndarray

    def receive(self, msg, active=None):
        if active is None:
            return replace(self, q=msg.q.copy(), gamma=msg.gamma.copy(),
                           sigma_next=msg.sigma_next.copy(), k=msg.k.copy())
        act = np.asarray(active, dtype=bool)
        return replace(
            self,
            q=np.where(act[:, None], msg.q, self.q),
            gamma=np.where(act[:, None], msg.gamma, self.gamma),
            sigma_next=np.where(act, msg.sigma_next, self.sigma_next),
            k=np.where(act, msg.k, self.k),
        )

    def group_sum(self, values):
        sizes = np.diff(self.offsets)
        if values.shape[0] == 0 or np.any(sizes <= 0):
            raise ProtocolError("mailbox has a receiver with no senders")
        return np.add.reduceat(values, self.offsets[:-1], axis=0)


@dataclass(frozen=True)
class Message:
    q: np.ndarray
    gamma: np.ndarray
    sigma_next: np.ndarray
    k: np.ndarray


@dataclass(frozen=True)
class ClientState:
    w: np.ndarray
    z: np.ndarray
    q: np.ndarray
    lambda_dual: np.ndarray
    gamma_dual: np.ndarray
    k: np.ndarray
    data: object
    skipped: np.ndarray

    @classmethod
    def initial(cls, data, n, dim, w_init=None):
        base = np.zeros((n, dim)) if w_init is None else np.tile(np.asarray(w_init, float), (n, 1))
        zeros = np.zeros((n, dim))
        return cls(w=base.copy(), z=base.copy(), q=base.copy(), lambda_dual=zeros,
                   gamma_dual=zeros.copy(), k=np.zeros(n, dtype=np.int64), data=data,
                   skipped=np.zeros(n, dtype=np.int64))


@dataclass(frozen=True)
class ClusterState:
    w: np.ndarray
    z: np.ndarray
    q: np.ndarray
    lambda_dual: np.ndarray
    gamma_dual: np.ndarray
    k: np.ndarray
    mailbox: Mailbox | None
    skipped: np.ndarray

    @classmethod
    def initial(cls, n_clusters, dim, mailbox, w_init=None):
        base = (np.zeros((n_clusters, dim)) if w_init is None
                else np.tile(np.asarray(w_init, float), (n_clusters, 1)))
        zeros = np.zeros((n_clusters, dim))
        return cls(w=base.copy(), z=base.copy(), q=base.copy(), lambda_dual=zeros,
                   gamma_dual=zeros.copy(), k=np.zeros(n_clusters, dtype=np.int64),
                   mailbox=mailbox, skipped=np.zeros(n_clusters, dtype=np.int64))


@dataclass(frozen=True)
class ServerState:
    w0: np.ndarray
    k0: int
    mailbox: Mailbox | None


def initial_mailbox(q, growth, offsets):
    """Warm-start mailbox: initial ``q``, zero duals, ``sigma(1)``, ``k = 0``."""
    n = q.shape[0]
    return Mailbox(q=np.array(q, dtype=float), gamma=np.zeros_like(q, dtype=float),
                   sigma_next=np.full(n, float(growth)), k=np.zeros(n, dtype=np.int64),
                   offsets=np.asarray(offsets, dtype=np.int64))


# ---------------------------------------------------------------------------
# update rules
# ---------------------------------------------------------------------------

def client_primal_update(s, sigma):
    """``w = Prox_f(z - Lambda / sigma; 1 / sigma)``."""
    sig = _col(sigma, s.z)
    iota = s.z - s.lambda_dual / sig
    return s.data.prox(iota, 1.0 / np.asarray(sigma, dtype=float))


def joint_zq_update(a, b, rc, mu, sigma):
    """Closed-form joint ``(z, q)`` step.

    ``e = Prox_{rc~}(b - a; 2 / sigma)`` and ``(z, q) = (a + b)/2 -+ e/2``,
    so ``z + q = a + b`` exactly and ``q - z = e``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sig = _col(sigma, a)
    e = smoothed_penalty_prox(rc, b - a, _col(mu, a), 2.0 / sig)
    mid = 0.5 * (a + b)
    half = 0.5 * np.asarray(e)
    return mid - half, mid + half


def dual_ascent(dual, sigma, primal, aux):
    return dual + _col(sigma, primal) * (np.asarray(primal) - np.asarray(aux))


def cluster_head_aggregate(cs, sigma_l):
    """``(upsilon_l, rbar_l)`` for every head from its mailbox."""
    if cs.mailbox is None:
        raise ProtocolError("cluster head has no mailbox")
    mb = cs.mailbox
    sig = np.asarray(sigma_l, dtype=float)
    pull = mb.group_sum(mb.sigma_next[:, None] * mb.q - mb.gamma)
    total_sigma = mb.group_sum(mb.sigma_next[:, None])[:, 0]
    upsilon = 1.0 / (sig + total_sigma)
    rbar = _col(upsilon, cs.z) * (_col(sig, cs.z) * cs.z - cs.lambda_dual + pull)
    return upsilon, rbar


def cluster_head_primal_update(cs, sigma_l, rw):
    """``w_l = Prox_{R_w^l}(rbar_l; upsilon_l)``."""
    upsilon, rbar = cluster_head_aggregate(cs, sigma_l)
    return prox_penalty(rw, rbar, upsilon)


def server_aggregate(ss, gamma_sign=-1.0):
    if ss.mailbox is None or ss.mailbox.q.shape[0] == 0:
        raise ProtocolError("server has no cluster messages")
    mb = ss.mailbox
    xi = 1.0 / mb.sigma_next.sum()
    r = xi * (mb.sigma_next[:, None] * mb.q + gamma_sign * mb.gamma).sum(axis=0)
    return xi, r


def server_update(ss, rw0, gamma_sign=-1.0):
    """``w0 = Prox_{R_w^0}(xi * sum_l(sigma_l q_l - Gamma_l); xi)``.

    ``gamma_sign=+1`` gives the ``+Gamma`` variant for A/B comparison.
    """
    xi, r = server_aggregate(ss, gamma_sign)
    return prox_penalty(rw0, r, xi)


def _merge(active, new, old):
    if active is None:
        return new
    act = np.asarray(active, dtype=bool)
    if np.ndim(new) == 2:
        act = act[:, None]
    return np.where(act, new, old)


def client_round(s, cluster_w, sched, rc, rw_unused=None, active=None):
    """One client iteration: schedule, w, (z, q), then the two dual ascents.

    ``cluster_w`` holds each client's current head parameter (row-aligned).
    Rows outside ``active`` keep their state; their message rows are still
    produced but must not be delivered.
    """
    k = s.k + 1
    sigma, mu = sched.client(k)
    stepped = replace(s, k=k)
    w = client_primal_update(stepped, sigma)
    sig = _col(sigma, w)
    a = w + s.lambda_dual / sig
    b = cluster_w + s.gamma_dual / sig
    z, q = joint_zq_update(a, b, rc.client, mu, sigma)
    lam = dual_ascent(s.lambda_dual, sigma, w, z)
    gam = dual_ascent(s.gamma_dual, sigma, cluster_w, q)
    sigma_next, _ = sched.client(k + 1)

    new = replace(
        s,
        w=_merge(active, w, s.w),
        z=_merge(active, z, s.z),
        q=_merge(active, q, s.q),
        lambda_dual=_merge(active, lam, s.lambda_dual),
        gamma_dual=_merge(active, gam, s.gamma_dual),
        k=_merge(active, k, s.k),
    )
    msg = Message(q=new.q, gamma=new.gamma_dual, sigma_next=np.asarray(sigma_next, float), k=new.k)
    return new, msg


def cluster_round(cs, w0, sched, rc, rw, active=None):
    """One cluster-head iteration; returns ``(state, message, broadcast w_l)``."""
    k = cs.k + 1
    sigma, mu = sched.cluster(k)
    w_l = cluster_head_primal_update(cs, sigma, rw)
    sig = _col(sigma, w_l)
    a = w_l + cs.lambda_dual / sig
    b = w0 + cs.gamma_dual / sig
    z, q = joint_zq_update(a, b, rc.cluster, mu, sigma)
    lam = dual_ascent(cs.lambda_dual, sigma, w_l, z)
    gam = dual_ascent(cs.gamma_dual, sigma, np.broadcast_to(w0, q.shape), q)
    sigma_next, _ = sched.cluster(k + 1)

    new = replace(
        cs,
        w=_merge(active, w_l, cs.w),
        z=_merge(active, z, cs.z),
        q=_merge(active, q, cs.q),
        lambda_dual=_merge(active, lam, cs.lambda_dual),
        gamma_dual=_merge(active, gam, cs.gamma_dual),
        k=_merge(active, k, cs.k),
    )
    msg = Message(q=new.q, gamma=new.gamma_dual, sigma_next=np.asarray(sigma_next, float), k=new.k)
    return new, msg, new.w


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Residuals:
    max_client_gap: float
    max_cluster_gap: float
    max_primal_aux_gap: float


def consensus_residuals(clients, clusters, server, cluster_of_client):
    """Consensus gaps ``||w_l^j - w_l||``, ``||w_l - w_0||`` and constraint residuals."""
    head_w = clusters.w[cluster_of_client]
    client_gap = np.linalg.norm(clients.w - head_w, axis=1)
    cluster_gap = np.linalg.norm(clusters.w - server.w0, axis=1)
    aux = [
        np.linalg.norm(clients.w - clients.z, axis=1),
        np.linalg.norm(head_w - clients.q, axis=1),
        np.linalg.norm(clusters.w - clusters.z, axis=1),
        np.linalg.norm(server.w0 - clusters.q, axis=1),
    ]
    return Residuals(
        max_client_gap=float(client_gap.max(initial=0.0)),
        max_cluster_gap=float(cluster_gap.max(initial=0.0)),
        max_primal_aux_gap=float(max(r.max(initial=0.0) for r in aux)),
    )


def _smoothed_rc(spec, diff, mu):
    if spec.kind is PenaltyKind.L1:
        return float((np.asarray(spec.weight) * spec.lam * smoothed_abs(diff, mu).sum(axis=-1)).sum())
    return float(np.sum(penalty_value(spec, diff)))


def augmented_lagrangian(clients, clusters, server, cluster_of_client, sched, rc, rw, rw0):
    """Smoothed augmented Lagrangian at the current iterate (diagnostic only)."""
    kc = np.maximum(clients.k, 1)
    kl = np.maximum(clusters.k, 1)
    sig_c, mu_c = sched.client(kc)
    sig_l, mu_l = sched.cluster(kl)
    head_w = clusters.w[cluster_of_client]

    val = float(np.sum(clients.data.loss(clients.w)))
    val += _smoothed_rc(rc.client, clients.q - clients.z, mu_c[:, None])
    val += _smoothed_rc(rc.cluster, clusters.q - clusters.z, mu_l[:, None])
    val += float(np.sum(penalty_value(rw, clusters.w)))
    val += float(penalty_value(rw0, server.w0))

    def coupling(dual, sigma, lhs, rhs):
        diff = lhs - rhs
        return float(np.sum(dual * diff) + 0.5 * np.sum(sigma[:, None] * diff * diff))

    val += coupling(clients.lambda_dual, sig_c, clients.w, clients.z)
    val += coupling(clients.gamma_dual, sig_c, head_w, clients.q)
    val += coupling(clusters.lambda_dual, sig_l, clusters.w, clusters.z)
    val += coupling(clusters.gamma_dual, sig_l, np.broadcast_to(server.w0, clusters.q.shape), clusters.q)
    return val


__all__ = [
    "ClientState", "ClusterState", "ServerState", "Mailbox", "Message", "ConsensusWeights",
    "PhaseRetrievalData", "MultiPhaseRetrievalData", "ProtocolError", "Residuals",
    "ScheduleParams", "augmented_lagrangian", "client_primal_update", "client_round",
    "cluster_head_aggregate", "cluster_head_primal_update", "cluster_round",
    "consensus_residuals", "dual_ascent", "initial_mailbox", "joint_zq_update",
    "server_aggregate", "server_update",
]
