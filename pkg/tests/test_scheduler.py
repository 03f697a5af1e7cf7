import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from powersched.bnb import solve, utopia_point
from powersched.feasibility import verify
from powersched.rate_model import RateCurve, UtilityConfig
from powersched.scheduler import (
    ScheduleState,
    SolverConfig,
    compute_weights,
    run,
    step,
    write_slot_trace,
)
from powersched.topology import NetworkInstance


def blocked_pair(n=2):
    """Identical links without cross interference that carrier-sense each other."""
    a = np.eye(n) * 1e-6
    b = (1 - np.eye(n)) * 1e-3
    return NetworkInstance(a, b, 10 ** -9.4, 100.0, 10 ** -8.2)


def test_weights_examples():
    assert np.allclose(compute_weights([2.0, 2.0], 1.0), [0.5, 0.5])
    assert np.allclose(compute_weights([1.0, 3.0], 1.0), [0.75, 0.25])
    assert np.allclose(compute_weights([1.0, 30.0, 0.0], 0.0), [1 / 3] * 3)


def test_weights_floor_guards_zero_history():
    w = compute_weights([0.0, 0.0, 5.0], 1.0, weight_floor=1e-3)
    assert np.allclose(w[:2], w[0]) and w[2] < 1e-3


def test_weights_reject_bad_input():
    with pytest.raises(ValueError):
        compute_weights([-1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        compute_weights([1.0, 2.0], 1.0, weight_floor=0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 60), min_size=1, max_size=8), st.floats(0, 4))
def test_weights_sum_to_one(r, alpha):
    w = compute_weights(r, alpha)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 60), min_size=2, max_size=8), st.floats(0.1, 3), st.data())
def test_starving_user_gains_weight(r, alpha, data):
    i = data.draw(st.integers(0, len(r) - 1))
    lower = list(r)
    lower[i] = r[i] * data.draw(st.floats(0.1, 0.9))
    assert compute_weights(lower, alpha)[i] > compute_weights(r, alpha)[i]


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        ScheduleState(np.array([-1.0]))
    with pytest.raises(ValueError):
        run(blocked_pair(), RateCurve(), slots=0)


def test_isolated_links_get_utopia_every_slot(curve):
    inst = make_instance(np.diag([1.0, 0.5]), noise=0.01, max_power=5.0)
    res = run(inst, curve, slots=5)
    top = utopia_point(inst, curve)
    for rec in res.slots:
        assert np.array_equal(rec.rates, top)
    assert np.allclose(res.avg_rates, top)


def test_blocked_pair_alternates(curve):
    inst = blocked_pair()
    single = utopia_point(inst, curve)[0]
    res = run(inst, curve, slots=2)
    first, second = res.slots
    assert len(first.active) == 1 and len(second.active) == 1
    assert first.active[0] != second.active[0]
    for rec in res.slots:
        assert rec.powers[rec.active[0]] == pytest.approx(100.0, rel=1e-9)
    long = run(inst, curve, slots=20)
    assert np.allclose(long.avg_rates, single / 2, rtol=0.05)


def test_step_uses_history_weights(curve):
    inst = blocked_pair(3)
    state = ScheduleState(np.array([10.0, 20.0, 5.0]), slot=3, alpha=1.0)
    record, new = step(state, inst, curve)
    assert np.array_equal(record.weights, compute_weights(state.avg_rates, 1.0))
    assert new.slot == 4
    assert np.allclose(new.avg_rates, (3 * state.avg_rates + record.rates) / 4)
    # the most starved user wins the contended slot
    assert list(record.active) == [2]


def test_one_slot_equals_single_solve(curve):
    inst = make_instance([[1.0, 0.3, 0.1], [0.2, 1.0, 0.4], [0.1, 0.2, 1.0]], noise=0.05,
                         max_power=4.0)
    res = run(inst, curve, slots=1)
    w = compute_weights(np.zeros(3), 1.0)
    ref = solve(inst, curve, UtilityConfig(0.0, w, 1e-3))
    assert np.array_equal(res.slots[0].rates, ref.rates)
    assert np.array_equal(res.avg_rates, ref.rates)


def test_symmetric_users_share_fairly(curve):
    inst = blocked_pair(3)
    res = run(inst, curve, slots=30)
    assert res.avg_rates.max() / res.avg_rates.min() < 1.05


def test_long_run_average_settles(curve):
    inst = make_instance([[1.0, 0.6, 0.2], [0.5, 1.0, 0.7], [0.3, 0.6, 1.0]], noise=0.02,
                         max_power=3.0)
    short = run(inst, curve, slots=30)
    long = run(inst, curve, slots=60)
    assert np.allclose(long.avg_rates, short.avg_rates, rtol=0.05)


def test_every_slot_verifies(curve):
    inst = make_instance([[1.0, 0.6, 0.2], [0.5, 1.0, 0.7], [0.3, 0.6, 1.0]],
                         b=[[0, 0.2, 0.1], [0.2, 0, 0.3], [0.1, 0.3, 0]], noise=0.02,
                         max_power=3.0, cst=0.5)
    res = run(inst, curve, slots=15)
    assert res.statuses == {"optimal"}
    for rec in res.slots:
        assert verify(rec.powers, rec.rates, inst, curve).ok


def test_slot_trace_csv(curve):
    res = run(blocked_pair(), curve, slots=2)
    buf = io.StringIO()
    write_slot_trace(res.slots, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["slot", "user", "rate_mbps", "power_dbm_or_off", "weight"]
    assert len(rows) == 1 + 2 * 2
    on = [r for r in rows[1:] if r[3] != "off"]
    assert len(on) == 2
    assert all(r[3] == "20" for r in on)
    assert rows[1][4] == "0.5"
