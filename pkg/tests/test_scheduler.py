import pytest
from hypothesis import given
from hypothesis import strategies as st

from ibflow.errors import IBFlowError
from ibflow.scheduler import AlphaSchedule, alpha_at

deltas = st.floats(0.0, 0.5)
steps = st.integers(0, 100_000)


def test_starts_at_one():
    assert alpha_at(AlphaSchedule(), 0) == 1.0


def test_linear_decrement():
    assert alpha_at(AlphaSchedule(delta=0.1), 5) == pytest.approx(0.5, abs=1e-15)


def test_clamped_at_floor():
    assert alpha_at(AlphaSchedule(delta=0.3), 10) == 0.0
    assert alpha_at(AlphaSchedule(delta=0.3, floor=0.2), 10) == 0.2


def test_zero_delta_is_static():
    assert alpha_at(AlphaSchedule(delta=0.0), 10**6) == 1.0


@pytest.mark.parametrize("kwargs", [
    {"alpha0": 1.5}, {"alpha0": -0.1}, {"delta": -1e-3}, {"alpha0": 0.5, "floor": 0.6}, {"per": "batch"},
])
def test_invalid_schedules(kwargs):
    with pytest.raises(IBFlowError):
        AlphaSchedule(**kwargs)


def test_negative_index():
    with pytest.raises(IBFlowError):
        alpha_at(AlphaSchedule(), -1)


@given(delta=deltas, t=steps)
def test_monotone(delta, t):
    s = AlphaSchedule(delta=delta)
    assert alpha_at(s, t + 1) <= alpha_at(s, t)


@given(delta=st.floats(1e-6, 0.5), floor=st.floats(0.0, 0.9))
def test_reaches_floor(delta, floor):
    s = AlphaSchedule(delta=delta, floor=floor)
    horizon = int((1.0 - floor) / delta) + 1
    for t in (horizon, horizon + 1, 10 * horizon):
        assert alpha_at(s, t) == floor


@given(delta=deltas, t=steps)
def test_decrement_identity(delta, t):
    s = AlphaSchedule(delta=delta)
    if 1.0 - (t + 1) * delta > 0.0:
        assert alpha_at(s, t) - alpha_at(s, t + 1) == pytest.approx(delta, abs=1e-9)


def test_round_trips_through_dict():
    s = AlphaSchedule(alpha0=0.9, delta=1e-2, floor=0.1, per="epoch")
    assert AlphaSchedule(**s.to_dict()) == s
