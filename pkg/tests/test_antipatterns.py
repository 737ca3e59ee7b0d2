import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_signal
from cpsgen.antipatterns import (
    MAXIMIZE,
    GoalVector,
    discontinuity,
    goal_vector,
    growth_to_infinity,
    instability,
    minmax,
)
from cpsgen.errors import ContractError, UndefinedMetricError
from cpsgen.model import SimulationTrace

samples = st.lists(
    st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False),
    min_size=4,
    max_size=50,
)


def naive_discontinuity(v: list[float], dt: float) -> float:
    k = len(v) - 1
    best = 0.0
    for width in (1, 2, 3):
        for j in range(width, k - width + 1):
            lc = abs(v[j] - v[j - width]) / dt
            rc = abs(v[j + width] - v[j]) / dt
            best = max(best, min(lc, rc))
    return best


def naive_instability(v: list[float]) -> float:
    total = 0.0
    for j in range(1, len(v)):
        total += abs(v[j] - v[j - 1])
    return total


def naive_growth(v: list[float]) -> float:
    return max(abs(x) for x in v[1:])


def naive_minmax(v: list[float]) -> float:
    return abs(max(v[1:]) - min(v[1:]))


def test_discontinuity_pulse(signal):
    assert discontinuity(signal([0, 0, 5, 0, 0])) == 5.0


def test_discontinuity_ramp(signal):
    ramp = signal(np.linspace(0.0, 1.0, 11))

    # printed divisor: wider windows see larger jumps
    assert discontinuity(ramp) == pytest.approx(0.3)
    assert discontinuity(ramp, rate=True) == pytest.approx(0.1)


def test_discontinuity_needs_three_samples(signal):
    with pytest.raises(UndefinedMetricError):
        discontinuity(signal([1.0, 2.0]))


def test_instability(signal):
    assert instability(signal([0, 1, 0, 1])) == 3.0
    assert instability(signal([2, 2, 2])) == 0.0
    assert instability(signal(np.linspace(0, 1, 37))) == pytest.approx(1.0)


def test_growth_to_infinity_skips_initial_sample(signal):
    assert growth_to_infinity(signal([9, 0, 0])) == 0.0
    assert growth_to_infinity(signal([0, -7, 3])) == 7.0


def test_minmax(signal):
    assert minmax(signal([0, 1, 3, 2])) == 2.0
    assert minmax(signal([4, 4, 4])) == 0.0
    assert minmax(signal([5, -5])) == 0.0


def test_constant_signal_has_no_antipatterns(signal):
    flat = signal([1.5] * 8)
    assert discontinuity(flat) == 0.0
    assert instability(flat) == 0.0
    assert minmax(flat) == 0.0
    assert growth_to_infinity(flat) == 1.5


def test_metrics_match_naive_reference():
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(4, 51))
        dt = float(rng.choice([0.1, 1.0]))
        values = list(rng.normal(0.0, 10.0, n))
        sig = make_signal(values, dt)

        assert discontinuity(sig) == pytest.approx(naive_discontinuity(values, dt), abs=1e-12, rel=1e-12)
        assert instability(sig) == pytest.approx(naive_instability(values), abs=1e-12, rel=1e-12)
        assert growth_to_infinity(sig) == pytest.approx(naive_growth(values), abs=1e-12)
        assert minmax(sig) == pytest.approx(naive_minmax(values), abs=1e-12)


@given(samples, st.floats(min_value=-100, max_value=100))
def test_shift_invariance(values: list[float], shift: float):
    a = make_signal(values)
    b = make_signal([v + shift for v in values])

    assert discontinuity(b) == pytest.approx(discontinuity(a), abs=1e-8)
    assert instability(b) == pytest.approx(instability(a), abs=1e-8 * len(values))
    assert minmax(b) == pytest.approx(minmax(a), abs=1e-8)


def test_growth_is_not_shift_invariant(signal):
    assert growth_to_infinity(signal([0, 1, 2])) != growth_to_infinity(signal([10, 11, 12]))


@given(samples, st.floats(min_value=0.0, max_value=50.0))
@settings(max_examples=50)
def test_scale_equivariance(values: list[float], scale: float):
    a = make_signal(values)
    b = make_signal([v * scale for v in values])

    for metric in (discontinuity, instability, growth_to_infinity, minmax):
        assert metric(b) == pytest.approx(scale * metric(a), rel=1e-9, abs=1e-7)
        assert metric(a) >= 0.0


def test_goal_vector_layout(signal):
    trace = SimulationTrace(
        outputs=(signal([0, 0, 5, 0, 0]), signal([0, 1, 0, 1, 0])),
        coverage=frozenset(),
    )
    goals = goal_vector(trace)

    assert len(goals) == 8
    assert goals.values[:4] == (5.0, 10.0, 5.0, 5.0)
    assert goals.values[4:] == (1.0, 4.0, 1.0, 1.0)
    assert set(goals.directions) == {MAXIMIZE}


def test_goal_vector_validation():
    with pytest.raises(ContractError):
        GoalVector((1.0, 2.0), (MAXIMIZE,))
    with pytest.raises(ContractError):
        GoalVector((1.0,), (0,))
