"""
Signals, input specifications and test cases.

A test case is a set of control-point vectors, one per model input. Rendering
turns each vector into a uniformly sampled signal by holding every control
point until the next one (piecewise-constant interpolation).
"""

from __future__ import annotations

import math
import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError
from .utils import log

NUMERIC = "numeric"
BOOLEAN = "boolean"

PIECEWISE_CONSTANT = "piecewise-constant"
CONSTANT = "constant"


@dataclass(frozen=True, eq=False)
class Signal:
    values: np.ndarray
    dt: float
    duration: float

    def __post_init__(self):
        if not self.dt > 0 or not self.duration > 0:
            raise ConfigurationError(
                f"signal needs dt > 0 and duration > 0, got {self.dt}, {self.duration}"
            )

        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ContractError("signal values must be one-dimensional")

        expected = step_count(self.duration, self.dt) + 1
        if len(values) != expected:
            raise ContractError(
                f"signal has {len(values)} samples, expected {expected}"
            )

        if not np.all(np.isfinite(values)):
            raise ContractError("signal contains non-finite samples")

        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self):
        return f"<Signal k={self.k} dt={self.dt}>"


@dataclass(frozen=True)
class InputSpec:
    name: str
    kind: str = NUMERIC
    lo: float = 0.0
    hi: float = 1.0
    control_points: int = 1
    interpolation: str = PIECEWISE_CONSTANT

    def __post_init__(self):
        if self.kind not in (NUMERIC, BOOLEAN):
            raise ConfigurationError(f"input {self.name}: unknown kind {self.kind!r}")

        if self.interpolation not in (PIECEWISE_CONSTANT, CONSTANT):
            raise ConfigurationError(
                f"input {self.name}: unknown interpolation {self.interpolation!r}"
            )

        # narrowed range assumptions may shrink a boolean input's range
        if self.kind == BOOLEAN and not (0.0 <= self.lo and self.hi <= 1.0):
            raise ConfigurationError(f"boolean input {self.name} must stay within [0, 1]")

        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise ConfigurationError(
                f"input {self.name}: invalid range [{self.lo}, {self.hi}]"
            )

        if self.control_points < 1:
            raise ConfigurationError(f"input {self.name}: needs at least one control point")

        if self.interpolation == CONSTANT and self.control_points != 1:
            raise ConfigurationError(
                f"constant input {self.name} must have exactly one control point"
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def is_constant(self) -> bool:
        return self.interpolation == CONSTANT

    def with_range(self, lo: float, hi: float) -> InputSpec:
        return InputSpec(self.name, self.kind, lo, hi, self.control_points, self.interpolation)

    @classmethod
    def from_json(cls, data: dict[str, t.Any]) -> InputSpec:
        kind = data.get("kind", NUMERIC)
        lo, hi = data.get("range", [0.0, 1.0])
        interpolation = data.get("interpolation", PIECEWISE_CONSTANT)
        default_points = 1 if interpolation == CONSTANT else 5
        return cls(
            name=data["name"],
            kind=kind,
            lo=float(lo),
            hi=float(hi),
            control_points=int(data.get("control_points", default_points)),
            interpolation=interpolation,
        )

    def to_json(self) -> dict[str, t.Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "range": [self.lo, self.hi],
            "control_points": self.control_points,
            "interpolation": self.interpolation,
        }


@dataclass(frozen=True)
class TestCase:
    names: tuple[str, ...]
    points: tuple[tuple[float, ...], ...]

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if len(self.names) != len(self.points):
            raise ContractError("test case needs one control-point vector per input")

    def check(self, specs: t.Sequence[InputSpec]):
        """Raise unless this test case fits `specs` (order, lengths, ranges)."""
        if tuple(s.name for s in specs) != self.names:
            raise ContractError(
                f"test case inputs {self.names} do not match model inputs "
                f"{tuple(s.name for s in specs)}"
            )

        for spec, values in zip(specs, self.points):
            if len(values) != spec.control_points:
                raise ContractError(
                    f"input {spec.name} expects {spec.control_points} control points"
                )
            for v in values:
                if not spec.lo <= v <= spec.hi:
                    raise ContractError(f"input {spec.name}: value {v} outside range")

    def flatten(self) -> np.ndarray:
        return np.array([v for values in self.points for v in values], dtype=float)

    @classmethod
    def from_json(cls, data: dict[str, t.Any]) -> TestCase:
        inputs = data["inputs"]
        return cls(
            names=tuple(item["name"] for item in inputs),
            points=tuple(tuple(float(v) for v in item["points"]) for item in inputs),
        )

    def to_json(self) -> dict[str, t.Any]:
        return {
            "inputs": [
                {"name": name, "points": list(values)}
                for name, values in zip(self.names, self.points)
            ]
        }


class TestSuite:
    """An ordered list of test cases, the unit every generator emits."""

    __test__ = False

    def __init__(self, tests: t.Iterable[TestCase] = ()):
        self.tests: list[TestCase] = list(tests)

    def __len__(self) -> int:
        return len(self.tests)

    def __iter__(self) -> t.Iterator[TestCase]:
        return iter(self.tests)

    def __getitem__(self, index: int) -> TestCase:
        return self.tests[index]

    def __add__(self, other: TestSuite) -> TestSuite:
        return TestSuite(self.tests + other.tests)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TestSuite):
            return False
        return self.tests == other.tests

    def __repr__(self):
        return f"<TestSuite of {len(self.tests)}>"

    @classmethod
    def from_json(cls, data: list[dict[str, t.Any]]) -> TestSuite:
        return cls(TestCase.from_json(item) for item in data)

    def to_json(self) -> list[dict[str, t.Any]]:
        return [test.to_json() for test in self.tests]


def step_count(duration: float, dt: float) -> int:
    """
    Number of simulation steps k = duration / dt.

    Raises:
        ConfigurationError: If duration is not an integral multiple of dt.
    """
    if not dt > 0 or not duration > 0:
        raise ConfigurationError(f"need dt > 0 and duration > 0, got {dt}, {duration}")

    ratio = duration / dt
    k = round(ratio)
    if abs(ratio - k) > 1e-9 * max(1.0, ratio) or k < 1:
        raise ConfigurationError(
            f"duration {duration} is not an integral number of steps of {dt}"
        )
    return k


def sample_test_case(specs: t.Sequence[InputSpec], rng: np.random.Generator) -> TestCase:
    """
    Draw every control point uniformly from its input's range.

    Args:
        specs (Sequence[InputSpec]): The model inputs, in inport order.
        rng (np.random.Generator): The random source; the draw order is fixed
            so a given seed always yields the same test case.

    Raises:
        ConfigurationError: If `specs` is empty.
    """
    if len(specs) == 0:
        raise ConfigurationError("cannot sample a test case without inputs")

    return TestCase(
        names=tuple(spec.name for spec in specs),
        points=tuple(
            tuple(float(v) for v in rng.uniform(spec.lo, spec.hi, spec.control_points))
            for spec in specs
        ),
    )


def hold_indices(control_points: int, k: int) -> np.ndarray:
    """
    For every sample j = 0..k, the index of the control point it holds.

    Control point i sits at time i * duration / c, so sample j (time
    j * duration / k) holds point floor(j * c / k).
    """
    j = np.arange(k + 1)
    return np.minimum(control_points - 1, (j * control_points) // k)


def render_signal(
    values: t.Sequence[float],
    spec: InputSpec,
    duration: float,
    dt: float,
) -> Signal:
    k = step_count(duration, dt)

    if len(values) != spec.control_points:
        raise ContractError(
            f"input {spec.name}: got {len(values)} control points, "
            f"expected {spec.control_points}"
        )

    points = np.asarray(values, dtype=float)
    if spec.is_constant:
        samples = np.full(k + 1, points[0])
    else:
        samples = points[hold_indices(spec.control_points, k)]

    return Signal(samples, dt, duration)


def render_test_case(
    test: TestCase,
    specs: t.Sequence[InputSpec],
    duration: float,
    dt: float,
) -> list[Signal]:
    test.check(specs)
    return [
        render_signal(values, spec, duration, dt)
        for values, spec in zip(test.points, specs)
    ]


def render_batch(
    tests: t.Sequence[TestCase],
    specs: t.Sequence[InputSpec],
    duration: float,
    dt: float,
) -> np.ndarray:
    """
    Render many test cases at once into an array shaped
    (len(tests), len(specs), k + 1).
    """
    k = step_count(duration, dt)
    out = np.empty((len(tests), len(specs), k + 1))

    for u, spec in enumerate(specs):
        points = np.array([test.points[u] for test in tests], dtype=float)
        points = points.reshape(len(tests), spec.control_points)
        if spec.is_constant:
            out[:, u, :] = points[:, :1]
        else:
            out[:, u, :] = points[:, hold_indices(spec.control_points, k)]

    return out


def booleanize(x: float) -> int:
    """
    Map a value in [0, 1] to 0 or 1, splitting at 0.5 (0.5 itself maps to 1).
    Out-of-range values are clamped with a warning.
    """
    if x < 0.0 or x > 1.0:
        log("log", f"booleanize: clamping out-of-range value {x}")
        x = min(1.0, max(0.0, x))

    return 0 if x < 0.5 else 1


def booleanize_array(x: np.ndarray) -> np.ndarray:
    return np.where(x < 0.5, 0.0, 1.0)
