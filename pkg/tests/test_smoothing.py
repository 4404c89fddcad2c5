import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hfsad.smoothing import (
    SQRT20,
    ScheduleParams,
    ConsensusBounds,
    check_consensus_conditions,
    schedule_params,
    smoothed_abs,
)

pos = st.floats(1e-3, 1e3)


def test_schedule_examples():
    assert schedule_params(1, 2.5, 0.7) == (2.5, 0.7)
    assert schedule_params(4, 2.5, 0.7) == (5.0, 0.35)
    assert schedule_params(9, 3, 6) == (9.0, 2.0)
    with pytest.raises(ValueError):
        schedule_params(0, 1.0, 1.0)


def test_schedule_array_exact():
    k = np.arange(1, 10**6 + 1)
    sigma, mu = schedule_params(k, 3.3, 0.9)
    root = np.sqrt(k.astype(float))
    assert np.max(np.abs(sigma / root - 3.3)) <= 4 * np.finfo(float).eps * 3.3
    assert np.max(np.abs(mu * root - 0.9)) <= 4 * np.finfo(float).eps * 0.9
    assert np.all(np.diff(sigma) > 0) and np.all(np.diff(mu) < 0)


@given(st.integers(1, 10**9), pos, pos)
def test_schedule_product(k, g, d):
    s, m = schedule_params(k, g, d)
    assert s * m == pytest.approx(g * d, rel=1e-12)


def test_schedule_params_validated():
    with pytest.raises(ValueError):
        ScheduleParams(1.0, 0.0, 1.0, 1.0)
    sp = ScheduleParams(2.0, 3.0, 5.0, 7.0)
    assert sp.client(4) == (4.0, 2.5)
    assert sp.cluster(4) == (6.0, 3.5)


def test_consensus_conditions_examples():
    any_sched = ScheduleParams(0.1, 0.1, 0.1, 0.1)
    assert check_consensus_conditions(any_sched, ConsensusBounds(0, 0, 0, 0)).ok
    omega, omega0 = 12.0, 40.0
    b = ConsensusBounds.from_gradients(nu_f=0.2, nu_r=2.0, max_clients=50, omega0=omega0)
    assert b.omega == pytest.approx(12.0)
    ref = ScheduleParams(c=omega, d=omega0 / 25, alpha=SQRT20, beta=25 * SQRT20)
    rep = check_consensus_conditions(ref, b)
    assert rep.client_ok and rep.cluster_ok == (omega0 >= b.omega)
    low = ConsensusBounds(0.2, 2.0, 50.0, 40.0)
    assert not check_consensus_conditions(ref, low).cluster_ok


@given(pos, pos, pos, pos, pos, pos, st.floats(1.0, 10.0))
def test_consensus_conditions_monotone(c, d, a, b, nu_f, omega, scale):
    bounds = ConsensusBounds(nu_f, 0.0, omega, omega)
    before = check_consensus_conditions(ScheduleParams(c, d, a, b), bounds)
    after = check_consensus_conditions(ScheduleParams(c * scale, d * scale, a * scale, b * scale), bounds)
    assert after.client_ok >= before.client_ok and after.cluster_ok >= before.cluster_ok


def test_smoothed_abs_examples():
    assert smoothed_abs(0.0, 0.3) == 0.3
    assert smoothed_abs(3.0, 4.0) == 5.0
    with pytest.raises(ValueError):
        smoothed_abs(1.0, 0.0)


@given(st.floats(-1e6, 1e6), st.floats(1e-9, 1e3))
def test_smoothed_abs_bounds(x, mu):
    g = smoothed_abs(x, mu)
    assert abs(x) <= g <= abs(x) + mu * (1 + 1e-12)
    h = 1e-6 * max(1.0, abs(x))
    slope = (smoothed_abs(x + h, mu) - smoothed_abs(x - h, mu)) / (2 * h)
    assert abs(slope) <= 1 + 1e-6
    assert math.isfinite(g)
