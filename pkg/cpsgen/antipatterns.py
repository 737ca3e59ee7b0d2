"""
Output-signal anti-patterns used as test objectives.

Every output contributes four values, all to be maximised: discontinuity,
instability, growth to infinity and min/max range.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, UndefinedMetricError
from .model import SimulationTrace
from .signals import Signal

GOAL_NAMES = ("discontinuity", "instability", "growth_to_infinity", "minmax")

MAXIMIZE = -1
MINIMIZE = 1


def discontinuity(sig: Signal, rate: bool = False) -> float:
    """
    Largest short pulse in the signal: for window widths 1..3, the smaller of
    the left and right slopes around each sample, maximised.

    By default both slopes divide by the sample period, as in the printed
    formula. With `rate=True` they divide by width * period, a true rate.
    """
    v = sig.values
    k = len(v) - 1
    if k < 2:
        raise UndefinedMetricError(f"discontinuity needs at least 3 samples, got {k + 1}")

    best = 0.0
    for width in (1, 2, 3):
        if k - width < width:
            continue
        divisor = sig.dt * width if rate else sig.dt
        mid = v[width : k - width + 1]
        left = np.abs(mid - v[: k - 2 * width + 1]) / divisor
        right = np.abs(v[2 * width :] - mid) / divisor
        best = max(best, float(np.max(np.minimum(left, right))))
    return best


def instability(sig: Signal) -> float:
    """Total variation of the sample sequence."""
    _require_step(sig)
    return float(np.sum(np.abs(np.diff(sig.values))))


def growth_to_infinity(sig: Signal) -> float:
    """Largest magnitude over samples 1..k; the initial sample is excluded."""
    _require_step(sig)
    return float(np.max(np.abs(sig.values[1:])))


def minmax(sig: Signal) -> float:
    """Range of samples 1..k."""
    _require_step(sig)
    tail = sig.values[1:]
    return float(abs(np.max(tail) - np.min(tail)))


def _require_step(sig: Signal):
    if len(sig.values) < 2:
        raise UndefinedMetricError("metric needs at least 2 samples")


def signal_goals(sig: Signal, rate: bool = False) -> tuple[float, float, float, float]:
    return (
        discontinuity(sig, rate),
        instability(sig),
        growth_to_infinity(sig),
        minmax(sig),
    )


@dataclass(frozen=True)
class GoalVector:
    values: tuple[float, ...]
    directions: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.directions):
            raise ContractError("goal vector needs one direction per goal")
        if any(d not in (MAXIMIZE, MINIMIZE) for d in self.directions):
            raise ContractError("goal directions must be 1 (minimize) or -1 (maximize)")

    @classmethod
    def maximizing(cls, values: t.Iterable[float]) -> GoalVector:
        values = tuple(float(v) for v in values)
        return cls(values, (MAXIMIZE,) * len(values))

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def to_json(self) -> dict[str, t.Any]:
        return {"values": list(self.values), "directions": list(self.directions)}


def goal_vector(trace: SimulationTrace, rate: bool = False) -> GoalVector:
    """
    The 4 * n_outputs objective vector of a trace, metric quadruples
    concatenated in outport order.
    """
    values: list[float] = []
    for sig in trace.outputs:
        values.extend(signal_goals(sig, rate))
    return GoalVector.maximizing(values)
