"""Discrete-round orchestration: participation, inner rounds, barrier, server.

Asynchrony is modelled as random per-round participation with per-node
update counters. A node that sat out ``K_a - 1`` consecutive global
iterations is forced to participate at the next one, so every window of
``K_a`` global iterations contains at least one update per node.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_rng
from .engine import (
    ClientState,
    ClusterState,
    ConsensusWeights,
    ServerState,
    client_round,
    cluster_round,
    consensus_residuals,
    initial_mailbox,
    server_update,
)
from .problems import initial_point, objective, relative_error
from .prox_ops import PenaltySpec
from .smoothing import SQRT20, ScheduleParams, ConsensusBounds, check_consensus_conditions
from .trace import Trace, TraceRecord

# reference configuration of the benchmark
SCAD_LAMBDA = 0.1
SCAD_GAMMA = 2.4
OMEGA_SCALE = 5.0


@dataclass(frozen=True)
class RunConfig:
    """Topology, loop counts and tuning. ``None`` tuning fields mean "auto".

    Auto values are resolved per instance by :func:`reference_settings`.
    """

    N_l: tuple = (50,) * 5
    M: int = 25
    K_z: int = 1000
    K_M: int = 10
    K_a: int = 10
    p_c: float = 1.0
    schedule: ScheduleParams | None = None
    weights: ConsensusWeights | None = None
    rw_cluster: PenaltySpec | None = None
    rw_global: PenaltySpec | None = None
    seed: int = 0
    trials: int = 1
    gamma_sign: float = -1.0
    init: str = "orthogonal"

    def __post_init__(self):
        object.__setattr__(self, "N_l", tuple(int(n) for n in self.N_l))
        if len(self.N_l) < 1 or min(self.N_l) < 1:
            raise ValueError("N_l: every cluster needs at least one client")
        for name in ("M", "K_z", "K_M", "K_a", "trials"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.p_c <= 1.0:
            raise ValueError(f"p_c must lie in (0, 1], got {self.p_c}")
        if self.gamma_sign not in (-1.0, 1.0):
            raise ValueError("gamma_sign must be -1 or +1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def L(self):
        return len(self.N_l)

    @property
    def cluster_sizes(self):
        return self.N_l

    @property
    def dim(self):
        return self.M

    @property
    def n_clients(self):
        return sum(self.N_l)


@dataclass(frozen=True)
class Settings:
    """Fully resolved tuning for one instance."""

    schedule: ScheduleParams
    weights: ConsensusWeights
    rw_cluster: PenaltySpec
    rw_global: PenaltySpec
    bounds: ConsensusBounds

    def consensus_conditions(self):
        return check_consensus_conditions(self.schedule, self.bounds)


def reference_settings(cfg, instance):
    """Reference tuning: TV weights from the data, SCAD heads, sqrt-k schedules.

    ``omega = 5 max ||x||_2``, ``eta_l = N_l - 1/L``,
    ``omega0 = max_l (N_l omega + eta_l lam gamma)``, ``c = omega``,
    ``d = omega0 / 25``, ``alpha = sqrt(20)``, ``beta = 25 sqrt(20)``.
    Explicit fields of ``cfg`` take precedence.
    """
    x, _ = instance.flat_xy()
    sizes = np.asarray(cfg.N_l, dtype=float)
    omega = OMEGA_SCALE * float(np.linalg.norm(x, axis=1).max())
    eta = sizes - 1.0 / cfg.L
    omega0 = float(np.max(sizes * omega + eta * SCAD_LAMBDA * SCAD_GAMMA))
    weights = cfg.weights or ConsensusWeights(omega, omega0)
    rw_cluster = cfg.rw_cluster or PenaltySpec.scad(SCAD_LAMBDA, SCAD_GAMMA, weight=eta)
    rw_global = cfg.rw_global or PenaltySpec.scad(SCAD_LAMBDA, SCAD_GAMMA, weight=1.0)
    schedule = cfg.schedule or ScheduleParams(c=omega, d=omega0 / 25.0, alpha=SQRT20,
                                              beta=25.0 * SQRT20)
    # omega stands in for the client gradient bound; nu_r is the largest SCAD slope
    nu_r = SCAD_LAMBDA * float(np.max(np.asarray(rw_cluster.weight)))
    bounds = ConsensusBounds(nu_f=omega, nu_r=nu_r, omega=omega, omega0=omega0)
    return Settings(schedule, weights, rw_cluster, rw_global, bounds)


def baseline_penalties(st):
    """Penalties of the pooled objective: every head's SCAD plus the server's."""
    total = float(np.sum(st.rw_cluster.weight)) + float(np.sum(st.rw_global.weight))
    return (replace(st.rw_global, weight=total),)


# ---------------------------------------------------------------------------
# participation
# ---------------------------------------------------------------------------

def sample_participation(rng, p_c, skipped, K_a):
    """One participation decision; draws from ``rng`` only when not forced."""
    if skipped >= K_a - 1 or p_c >= 1.0:
        return True
    return bool(rng.random() < p_c)


class ParticipationStreams:
    """One generator per node; each draws ``K_M`` uniforms per global iteration.

    Drawing a fixed block regardless of forcing keeps every node's stream
    aligned with the iteration index. With ``p_c = 1`` nothing is drawn.
    """

    def __init__(self, seed, trial, n_nodes, p_c):
        self.p_c = float(p_c)
        self.n_nodes = n_nodes
        self._rngs = ([] if self.p_c >= 1.0 else
                      [derive_rng(seed, trial, "participation", node) for node in range(n_nodes)])

    def block(self, K_M):
        if self.p_c >= 1.0:
            return np.zeros((K_M, self.n_nodes))
        return np.stack([r.random(K_M) for r in self._rngs], axis=1)


# ---------------------------------------------------------------------------
# state and the global iteration
# ---------------------------------------------------------------------------

@dataclass
class SimState:
    clients: ClientState
    clusters: ClusterState
    server: ServerState
    k0: int = 0
    cumulative: int = 0
    client_skipped: np.ndarray = field(default=None)  # consecutive idle global iterations
    cluster_skipped: np.ndarray = field(default=None)


def initial_state(cfg, instance, st, w_init=None):
    if instance.dim != cfg.M or tuple(instance.cluster_sizes) != cfg.N_l:
        raise ValueError(f"instance shape (N_l={instance.cluster_sizes}, M={instance.dim}) "
                         f"does not match config (N_l={cfg.N_l}, M={cfg.M})")
    w_init = np.zeros(cfg.M) if w_init is None else np.asarray(w_init, dtype=float)
    n, L = cfg.n_clients, cfg.L
    clients = ClientState.initial(instance.client_data(), n, cfg.M, w_init)
    client_box = initial_mailbox(clients.q, st.schedule.c, instance.offsets)
    clusters = ClusterState.initial(L, cfg.M, client_box, w_init)
    cluster_box = initial_mailbox(clusters.q, st.schedule.d, np.array([0, L]))
    server = ServerState(w0=w_init.copy(), k0=0, mailbox=cluster_box)
    return SimState(clients, clusters, server, client_skipped=np.zeros(n, dtype=np.int64),
                    cluster_skipped=np.zeros(L, dtype=np.int64))


def run_global_iteration(state, cfg, st, streams, cluster_of_client):
    """``K_M`` inner rounds (clients, then heads), barrier, then the server.

    Returns the new state plus per-node update counts for this iteration.
    """
    n, L = cfg.n_clients, cfg.L
    uniforms = streams.block(cfg.K_M)
    clients, clusters, server = state.clients, state.clusters, state.server
    w0 = server.w0
    forced_c = state.client_skipped >= cfg.K_a - 1
    forced_l = state.cluster_skipped >= cfg.K_a - 1
    c_count = np.zeros(n, dtype=np.int64)
    l_count = np.zeros(L, dtype=np.int64)
    full = cfg.p_c >= 1.0

    for km in range(cfg.K_M):
        first = km == 0
        if full:
            act_c = None
        else:
            act_c = uniforms[km, :n] < cfg.p_c
            if first:
                act_c |= forced_c
        head_w = clusters.w[cluster_of_client]
        clients, msg = client_round(clients, head_w, st.schedule, st.weights, active=act_c)
        clusters = replace(clusters, mailbox=clusters.mailbox.receive(msg, act_c))

        if full:
            act_l = None
        else:
            any_member = np.logical_or.reduceat(act_c, clusters.mailbox.offsets[:-1])
            act_l = any_member | (uniforms[km, n:] < cfg.p_c)
            if first:
                act_l |= forced_l
        clusters, cmsg, _ = cluster_round(clusters, w0, st.schedule, st.weights,
                                          st.rw_cluster, active=act_l)
        server = replace(server, mailbox=server.mailbox.receive(cmsg, act_l))
        c_count += 1 if act_c is None else act_c
        l_count += 1 if act_l is None else act_l

    # barrier: every inner round has finished before the server reads
    w0 = server_update(server, st.rw_global, cfg.gamma_sign)
    server = replace(server, w0=w0, k0=server.k0 + 1)
    new = SimState(
        clients, clusters, server, k0=state.k0 + 1,
        cumulative=state.cumulative + int(c_count.sum()),
        client_skipped=np.where(c_count > 0, 0, state.client_skipped + 1),
        cluster_skipped=np.where(l_count > 0, 0, state.cluster_skipped + 1),
    )
    return new, c_count, l_count


def _record(state, instance, cluster_of_client, penalties):
    res = consensus_residuals(state.clients, state.clusters, state.server, cluster_of_client)
    w0 = state.server.w0
    return TraceRecord(state.k0, state.cumulative, relative_error(w0, instance.w_true),
                       res.max_client_gap, res.max_cluster_gap, res.max_primal_aux_gap,
                       objective(instance, w0, penalties))


def run(cfg, instance, trial=0, settings=None, w_init=None, callback=None):
    """Run ``K_z`` global iterations; one trace record per iteration."""
    st = settings or reference_settings(cfg, instance)
    if w_init is None:
        w_init = initial_point(instance, cfg.init)
    state = initial_state(cfg, instance, st, w_init)
    streams = ParticipationStreams(cfg.seed, trial, cfg.n_clients + cfg.L, cfg.p_c)
    cluster_of = instance.cluster_of_client
    penalties = baseline_penalties(st)

    records, c_hist, l_hist = [], [], []
    for _ in range(cfg.K_z):
        state, c_count, l_count = run_global_iteration(state, cfg, st, streams, cluster_of)
        records.append(_record(state, instance, cluster_of, penalties))
        c_hist.append(c_count)
        l_hist.append(l_count)
        if callback is not None:
            callback(state, records[-1])
    return Trace.from_records(
        records,
        client_updates=np.array(c_hist, dtype=np.int64),
        cluster_updates=np.array(l_hist, dtype=np.int64),
        final_w=state.server.w0.copy(),
        meta={"K_a": cfg.K_a, "K_M": cfg.K_M, "p_c": cfg.p_c, "init": cfg.init},
    )


def audit_staleness(trace, K_a):
    """True when every node updated at least once in every ``K_a``-window."""
    for counts in (trace.client_updates, trace.cluster_updates):
        if counts is None:
            raise ValueError("trace carries no per-node update counts")
        active = (counts > 0).astype(np.int64)
        if active.shape[0] < K_a:
            continue
        csum = np.concatenate([np.zeros((1, active.shape[1]), np.int64), np.cumsum(active, axis=0)])
        windows = csum[K_a:] - csum[:-K_a]
        if np.any(windows < 1):
            return False
    return True


def first_hit(errors, threshold):
    """1-based index of the first entry ``<= threshold`` (``inf`` if none)."""
    hit = np.flatnonzero(np.asarray(errors) <= threshold)
    return int(hit[0]) + 1 if hit.size else math.inf


__all__ = [
    "ParticipationStreams", "RunConfig", "Settings", "SimState", "audit_staleness",
    "baseline_penalties", "first_hit", "initial_state", "reference_settings", "run",
    "run_global_iteration", "sample_participation",
]
