import typing as t

import numpy as np
import pytest

from cpsgen.experiment import resolve_model
from cpsgen.model import ModelGraph, load_model_file, model_from_json
from cpsgen.signals import Signal


def make_signal(values: t.Sequence[float], dt: float = 1.0) -> Signal:
    return Signal(np.asarray(values, dtype=float), dt, dt * (len(values) - 1))


def build_graph(
    inports: list[dict[str, t.Any]],
    blocks: list[dict[str, t.Any]],
    connections: list[tuple[str, str]],
    outports: list[str],
    dt: float = 1.0,
    duration: float = 4.0,
    name: str = "toy",
) -> ModelGraph:
    return model_from_json(
        {
            "name": name,
            "dt": dt,
            "duration": duration,
            "inports": inports,
            "outports": outports,
            "blocks": blocks,
            "connections": [{"from": a, "to": b} for a, b in connections],
        }
    )


@pytest.fixture
def signal() -> t.Callable[..., Signal]:
    return make_signal


@pytest.fixture
def build() -> t.Callable[..., ModelGraph]:
    return build_graph


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny() -> ModelGraph:
    return load_model_file(resolve_model("tiny_controller"))


@pytest.fixture(scope="session")
def two_tanks() -> ModelGraph:
    return load_model_file(resolve_model("two_tanks"))


@pytest.fixture
def threshold_model() -> ModelGraph:
    """y = (x >= 0.5), plus a gain whose output goes nowhere."""
    return build_graph(
        inports=[{"name": "x", "range": [0.0, 1.0], "interpolation": "constant"}],
        blocks=[
            {"id": "th", "kind": "Constant", "params": {"value": 0.5}},
            {"id": "cmp", "kind": "RelationalOp", "params": {"op": ">="}},
            {"id": "dead", "kind": "Gain", "params": {"gain": 3.0}},
        ],
        connections=[
            ("x", "cmp.in1"),
            ("th.out", "cmp.in2"),
            ("x", "dead.in1"),
            ("cmp.out", "y"),
        ],
        outports=["y"],
        name="threshold",
    )
