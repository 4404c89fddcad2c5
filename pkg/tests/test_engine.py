import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hfsad.engine import (
    ClientState,
    ClusterState,
    ConsensusWeights,
    Mailbox,
    Message,
    PhaseRetrievalData,
    ProtocolError,
    ServerState,
    client_primal_update,
    client_round,
    cluster_head_aggregate,
    cluster_head_primal_update,
    cluster_round,
    consensus_residuals,
    dual_ascent,
    initial_mailbox,
    joint_zq_update,
    server_update,
)
from hfsad.prox_ops import (
    BoxDomain,
    PenaltySpec,
    prox_phase_retrieval_loss,
    prox_scad,
    prox_smoothed_penalty_scalar,
)
from hfsad.smoothing import ScheduleParams

NONE = PenaltySpec.none()
vec = arrays(np.float64, 5, elements=st.floats(-20, 20))


def _clients(rng, n=3, m=4, y=None):
    x = rng.normal(size=(n, m))
    y = rng.exponential(2.0, n) if y is None else y
    return ClientState.initial(PhaseRetrievalData(x, y, BoxDomain(5.0)), n, m)


# --- client primal ------------------------------------------------------------

def test_client_primal_fixed_point(rng):
    x = rng.normal(size=(1, 3))
    w_star = rng.normal(size=3)
    y = (x @ w_star) ** 2
    s = ClientState.initial(PhaseRetrievalData(x, y), 1, 3, w_star)
    assert np.allclose(client_primal_update(s, np.array([2.0])), w_star)


def test_client_primal_large_sigma(rng):
    s = _clients(rng, 2, 3)
    s = ClientState(s.w, rng.normal(size=(2, 3)), s.q, rng.normal(size=(2, 3)), s.gamma_dual, s.k,
                    s.data, s.skipped)
    w = client_primal_update(s, np.full(2, 1e8))
    assert np.allclose(w, s.z, atol=1e-4)


def test_client_primal_matches_direct_minimisation(rng):
    from scipy.optimize import minimize

    x, y = np.array([[0.8, -1.3]]), np.array([1.7])
    s = ClientState.initial(PhaseRetrievalData(x, y), 1, 2)
    z, lam, sigma = np.array([[0.4, 0.9]]), np.array([[0.3, -0.2]]), 1.5
    s = ClientState(s.w, z, s.q, lam, s.gamma_dual, s.k, s.data, s.skipped)
    iota = z[0] - lam[0] / sigma
    obj = lambda w: abs(y[0] - (x[0] @ w) ** 2) + sigma / 2 * np.sum((w - iota) ** 2)  # noqa: E731
    best = min((minimize(obj, iota + rng.normal(size=2), method="Nelder-Mead",
                         options={"xatol": 1e-11, "fatol": 1e-13}) for _ in range(10)),
               key=lambda r: r.fun)
    assert np.allclose(client_primal_update(s, np.array([sigma]))[0], best.x, atol=1e-5)


# --- joint (z, q) -----------------------------------------------------------------

def test_zq_symmetric_fixed_point(rng):
    a = rng.normal(size=4)
    z, q = joint_zq_update(a, a, PenaltySpec.l1(3.0), 0.1, 2.0)
    assert np.array_equal(z, a) and np.array_equal(q, a)


def test_zq_zero_weight(rng):
    a, b = rng.normal(size=4), rng.normal(size=4)
    z, q = joint_zq_update(a, b, PenaltySpec.l1(0.0), 0.1, 2.0)
    assert np.allclose(z, a) and np.allclose(q, b)


@given(vec, vec, st.floats(0, 50), st.floats(1e-6, 1.0), st.floats(1e-2, 1e3))
def test_zq_conservation_and_shrinkage(a, b, omega, mu, sigma):
    z, q = joint_zq_update(a, b, PenaltySpec.l1(omega), mu, sigma)
    assert np.max(np.abs(z + q - a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a + b)))
    assert np.sum(np.abs(q - z)) <= np.sum(np.abs(b - a)) + 1e-9


def test_zq_difference_is_smoothed_prox(rng):
    a, b = rng.normal(size=6), rng.normal(size=6)
    z, q = joint_zq_update(a, b, PenaltySpec.l1(2.0), 0.05, 4.0)
    assert np.allclose(q - z, prox_smoothed_penalty_scalar(b - a, 2.0, 0.05, 0.5), atol=1e-14)


def test_dual_ascent_examples():
    assert np.array_equal(dual_ascent(np.array([1.0, 2.0]), 3.0, np.ones(2), np.ones(2)), [1.0, 2.0])
    assert np.array_equal(dual_ascent(np.zeros(2), 2.0, np.array([1.0, 0.0]), np.zeros(2)), [2.0, 0.0])


# --- cluster head -----------------------------------------------------------------

def _head(q, gamma, sigma_next, z, lam, offsets=(0, 2)):
    mb = Mailbox(np.array(q, float), np.array(gamma, float), np.array(sigma_next, float),
                 np.zeros(len(q), np.int64), np.array(offsets))
    n = len(offsets) - 1
    cs = ClusterState.initial(n, len(z[0]), mb)
    return ClusterState(cs.w, np.array(z, float), cs.q, np.array(lam, float), cs.gamma_dual, cs.k,
                        mb, cs.skipped)


def test_head_identical_inputs_average():
    v = [1.0, -2.0, 0.5]
    cs = _head([v, v], np.zeros((2, 3)), [2.0, 5.0], [v], np.zeros((1, 3)))
    assert np.allclose(cluster_head_primal_update(cs, np.array([3.0]), NONE), [v])


def test_head_hand_arithmetic():
    q = [[1.0, 0.0], [0.0, 2.0]]
    g = [[0.5, 0.5], [-1.0, 0.0]]
    cs = _head(q, g, [2.0, 4.0], [[1.0, 1.0]], [[0.2, -0.4]])
    ups, rbar = cluster_head_aggregate(cs, np.array([3.0]))
    assert ups[0] == pytest.approx(1 / 9)
    expected = (3 * np.array([1.0, 1.0]) - [0.2, -0.4] + 2 * np.array(q[0]) - g[0]
                + 4 * np.array(q[1]) - g[1]) / 9
    assert np.allclose(rbar[0], expected)
    scad = PenaltySpec.scad(0.1, 2.4, weight=np.array([49.8]))
    got = cluster_head_primal_update(cs, np.array([3.0]), scad)
    assert np.allclose(got[0], prox_scad(expected, 0.1, 2.4, 49.8 / 9))


def test_head_empty_mailbox():
    cs = _head(np.zeros((0, 2)), np.zeros((0, 2)), [], [[0.0, 0.0]], [[0.0, 0.0]], offsets=(0, 0))
    with pytest.raises(ProtocolError):
        cluster_head_aggregate(cs, np.array([1.0]))
    with pytest.raises(ProtocolError):
        cluster_head_aggregate(ClusterState.initial(1, 2, None), np.array([1.0]))


# --- server -------------------------------------------------------------------------

def _server(q, gamma, sigma):
    mb = Mailbox(np.array(q, float), np.array(gamma, float), np.array(sigma, float),
                 np.zeros(len(q), np.int64), np.array([0, len(q)]))
    return ServerState(np.zeros(np.shape(q)[1]), 0, mb)


def test_server_identical_inputs():
    v = [0.3, -1.0]
    assert np.allclose(server_update(_server([v, v, v], np.zeros((3, 2)), [1.0, 2.0, 3.0]), NONE), v)


def test_server_weighted_average_and_sign():
    q, g = [[1.0, 0.0], [0.0, 1.0]], [[0.3, 0.0], [0.0, -0.6]]
    ss = _server(q, np.zeros((2, 2)), [1.0, 3.0])
    assert np.allclose(server_update(ss, NONE), [0.25, 0.75])
    ss = _server(q, g, [1.0, 3.0])
    assert np.allclose(server_update(ss, NONE), [(1 - 0.3) / 4, (3 + 0.6) / 4])
    assert np.allclose(server_update(ss, NONE, gamma_sign=1.0), [(1 + 0.3) / 4, (3 - 0.6) / 4])
    avg = np.array([(1 - 0.3) / 4, (3 + 0.6) / 4])
    assert np.allclose(server_update(ss, PenaltySpec.scad(0.1, 2.4, 1.0)), prox_scad(avg, 0.1, 2.4, 0.25))


def test_server_empty():
    with pytest.raises(ProtocolError):
        server_update(ServerState(np.zeros(2), 0, None), NONE)


# --- rounds --------------------------------------------------------------------------

def test_client_round_hand_trace(rng):
    s = _clients(rng, 1, 3)
    sched = ScheduleParams(2.0, 1.0, 0.5, 0.5)
    rc = ConsensusWeights(1.5, 3.0)
    head = rng.normal(size=(1, 3))
    new, msg = client_round(s, head, sched, rc)
    sigma, mu = 2.0, 0.5  # k = 1
    w = prox_phase_retrieval_loss(s.z, s.data.x, s.data.y, 1 / sigma, BoxDomain(5.0))
    a, b = w, head
    e = prox_smoothed_penalty_scalar(b - a, 1.5, mu, 2 / sigma)
    z, q = (a + b) / 2 - e / 2, (a + b) / 2 + e / 2
    assert np.allclose(new.w, w) and np.allclose(new.z, z) and np.allclose(new.q, q)
    assert np.allclose(new.lambda_dual, sigma * (w - z))
    assert np.allclose(new.gamma_dual, sigma * (head - q))
    assert new.k[0] == 1 and msg.sigma_next[0] == pytest.approx(2.0 * np.sqrt(2))
    new2, msg2 = client_round(new, head, sched, rc)
    assert msg2.sigma_next[0] > msg.sigma_next[0] and new2.k[0] == 2


def test_client_round_fixed_point(rng):
    x = rng.normal(size=(2, 3))
    w = rng.normal(size=3)
    s = ClientState.initial(PhaseRetrievalData(x, (x @ w) ** 2), 2, 3, w)
    new, _ = client_round(s, np.tile(w, (2, 1)), ScheduleParams(1, 1, 1, 1), ConsensusWeights(2, 2))
    for name in ("w", "z", "q", "lambda_dual", "gamma_dual"):
        assert np.allclose(getattr(new, name), getattr(s, name), atol=1e-12)
    assert np.array_equal(new.k, [1, 1])


def test_client_round_inactive_rows_frozen(rng):
    s = _clients(rng, 3, 4)
    new, _ = client_round(s, rng.normal(size=(3, 4)), ScheduleParams(1, 1, 1, 1),
                          ConsensusWeights(1, 1), active=np.array([True, False, True]))
    assert np.array_equal(new.k, [1, 0, 1])
    assert np.array_equal(new.w[1], s.w[1])


def test_cluster_round_hand_trace(rng):
    q = rng.normal(size=(2, 3))
    mb = initial_mailbox(q, 1.0, np.array([0, 2]))
    cs = ClusterState.initial(1, 3, mb)
    w0 = rng.normal(size=3)
    sched = ScheduleParams(1.0, 2.0, 1.0, 0.8)
    rw = PenaltySpec.scad(0.1, 2.4, weight=np.array([1.8]))
    new, msg, wl = cluster_round(cs, w0, sched, ConsensusWeights(1.0, 4.0), rw)
    ups = 1 / (2.0 + 2.0)
    rbar = ups * (q.sum(axis=0))
    w_l = prox_scad(rbar, 0.1, 2.4, 1.8 * ups)
    e = prox_smoothed_penalty_scalar(w0 - w_l, 4.0, 0.8, 1.0)
    z, qq = (w_l + w0) / 2 - e / 2, (w_l + w0) / 2 + e / 2
    assert np.allclose(wl[0], w_l) and np.allclose(new.z[0], z) and np.allclose(new.q[0], qq)
    assert np.allclose(new.gamma_dual[0], 2.0 * (w0 - qq))
    assert msg.sigma_next[0] == pytest.approx(2.0 * np.sqrt(2))


def test_rounds_are_pure_and_deterministic(rng):
    s = _clients(rng, 3, 4)
    head = rng.normal(size=(3, 4))
    before = s.w.copy()
    a, _ = client_round(s, head, ScheduleParams(1, 1, 1, 1), ConsensusWeights(1, 1))
    b, _ = client_round(s, head, ScheduleParams(1, 1, 1, 1), ConsensusWeights(1, 1))
    assert np.array_equal(s.w, before)
    for name in ("w", "z", "q", "lambda_dual", "gamma_dual"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_plain_averaging_one_client_per_cluster(rng):
    """No penalties, zero duals, one client per cluster: w0 is the sigma-weighted mean."""
    L, m = 3, 4
    x = rng.normal(size=(L, m))
    clients = ClientState.initial(PhaseRetrievalData(x, rng.exponential(1.0, L)), L, m)
    rc = ConsensusWeights(0.0, 0.0)
    sched = ScheduleParams(1.0, 1.0, 1.0, 1.0)
    clients, msg = client_round(clients, np.zeros((L, m)), sched, rc)
    mb = initial_mailbox(clients.q, 1.0, np.arange(L + 1)).receive(msg)
    clusters = ClusterState.initial(L, m, mb)
    clusters, cmsg, _ = cluster_round(clusters, np.zeros(m), sched, rc, NONE)
    smb = initial_mailbox(clusters.q, 1.0, np.array([0, L])).receive(cmsg)
    w0 = server_update(ServerState(np.zeros(m), 0, smb), NONE)
    wts = cmsg.sigma_next
    assert np.allclose(w0, (wts[:, None] * (clusters.q - clusters.gamma_dual / wts[:, None])).sum(0) / wts.sum())
    assert np.allclose(clusters.gamma_dual, 0.0)  # zero weights: q equals the server copy
    assert np.allclose(w0, (wts[:, None] * clusters.q).sum(0) / wts.sum())


def test_iterates_stay_in_box(rng):
    s = _clients(rng, 5, 3, y=np.full(5, 1e4))
    head = np.zeros((5, 3))
    for _ in range(20):
        s, _ = client_round(s, head, ScheduleParams(0.1, 1, 1, 1), ConsensusWeights(0.1, 1))
        assert np.all(np.abs(s.w) <= 5.0)


# --- residuals ------------------------------------------------------------------------

def test_residuals(rng):
    m = 3
    v = rng.normal(size=m)
    x = rng.normal(size=(4, m))
    clients = ClientState.initial(PhaseRetrievalData(x, np.ones(4)), 4, m, v)
    clusters = ClusterState.initial(2, m, None, v)
    server = ServerState(v.copy(), 0, None)
    of = np.array([0, 0, 1, 1])
    r = consensus_residuals(clients, clusters, server, of)
    assert (r.max_client_gap, r.max_cluster_gap, r.max_primal_aux_gap) == (0.0, 0.0, 0.0)
    w = clients.w.copy()
    w[2, 0] += 0.25
    bumped = ClientState(w, clients.z, clients.q, clients.lambda_dual, clients.gamma_dual,
                         clients.k, clients.data, clients.skipped)
    assert consensus_residuals(bumped, clusters, server, of).max_client_gap == pytest.approx(0.25)


def test_mailbox_receive_partial():
    mb = initial_mailbox(np.zeros((3, 2)), 1.5, np.array([0, 3]))
    msg = Message(np.ones((3, 2)), np.ones((3, 2)), np.full(3, 9.0), np.array([1, 1, 1]))
    got = mb.receive(msg, np.array([True, False, True]))
    assert np.array_equal(got.q[:, 0], [1, 0, 1]) and np.array_equal(got.sigma_next, [9, 1.5, 9])
