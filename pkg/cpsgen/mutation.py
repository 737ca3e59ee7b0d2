"""
Mutation testing for block-diagram models.

A mutant seeds one fault into one block. A test kills a mutant when any
output sample of the mutant differs from the original model's.
"""

from __future__ import annotations

import itertools
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, UndefinedMetricError
from .model import Block, BatchTrace, Connection, ModelGraph, SimulationTrace, Simulator
from .signals import TestCase, TestSuite, sample_test_case
from .storage import to_csv
from .utils import log, run_pool

CONSTANT_CHANGE = "ConstantChange"
BOOLEAN_NEGATE = "BooleanNegate"
SUM_SIGN_VECTOR = "SumSignVector"
SUM_TO_PRODUCT = "SumToProduct"
RELATIONAL_SWAP = "RelationalSwap"
LOGICAL_SWAP = "LogicalSwap"
NOT_TOGGLE = "NotToggle"
SWITCH_LINE_SWAP = "SwitchLineSwap"
INITIAL_VALUE_CHANGE = "InitialValueChange"

# "inclusive" lists every sign vector (the original one included) plus the
# product; "strict" leaves the original sign vector out
INCLUSIVE_COUNT = "inclusive"
STRICT_COUNT = "strict"

RELATIONAL_SWAPS = {
    ">=": ("<", "<="),
    "<=": (">", ">="),
    "<": (">=", ">"),
    ">": ("<=", ">="),
    "==": ("!=",),
    "!=": ("==",),
}

LOGICAL_SWAPS = {
    "AND": ("OR", "XOR"),
    "OR": ("AND", "XOR"),
    "XOR": ("AND", "OR"),
}

ABS_TOLERANCE = 1e-9
REL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Mutant:
    id: int
    model: str
    block: str
    operator: str
    params: dict[str, t.Any] = field(default_factory=dict)
    description: str = ""

    @property
    def label(self) -> str:
        return f"m{self.id:04d}"

    def to_json(self) -> dict[str, t.Any]:
        return {
            "id": self.id,
            "model": self.model,
            "block": self.block,
            "operator": self.operator,
            "params": dict(self.params),
            "description": self.description,
        }

    @classmethod
    def from_json(cls, data: dict[str, t.Any]) -> Mutant:
        return cls(
            id=int(data["id"]),
            model=data["model"],
            block=data["block"],
            operator=data["operator"],
            params=dict(data.get("params", {})),
            description=data.get("description", ""),
        )

    def __repr__(self):
        return f"<Mutant {self.label} {self.block}: {self.description}>"


def _constant_values(c: float) -> list[float]:
    values: list[float] = []
    for v in (c + 1, -c, 0.0, 10 * c):
        v = float(v) + 0.0  # folds -0.0 into 0.0
        if v != c and v not in values:
            values.append(v)
    return values


def _block_mutations(block: Block, sum_count_mode: str) -> list[tuple[str, dict[str, t.Any], str]]:
    p = block.params
    out: list[tuple[str, dict[str, t.Any], str]] = []

    if block.kind == "Constant":
        c = float(p["value"])
        if p.get("type") == "boolean":
            negated = 0.0 if c != 0 else 1.0
            out.append((BOOLEAN_NEGATE, {"value": negated}, f"negate {c:g} to {negated:g}"))
        else:
            for v in _constant_values(c):
                out.append((CONSTANT_CHANGE, {"value": v}, f"constant {c:g} -> {v:g}"))

    elif block.kind == "Gain":
        g = float(p["gain"])
        for v in _constant_values(g):
            out.append((CONSTANT_CHANGE, {"gain": v}, f"gain {g:g} -> {v:g}"))

    elif block.kind == "Sum":
        signs: str = p["signs"]
        for combo in itertools.product("+-", repeat=len(signs)):
            new = "".join(combo)
            if new == signs and sum_count_mode == STRICT_COUNT:
                continue
            out.append((SUM_SIGN_VECTOR, {"signs": new}, f"signs {signs} -> {new}"))
        out.append((SUM_TO_PRODUCT, {"inputs": len(signs)}, f"sum {signs} -> product"))

    elif block.kind == "RelationalOp":
        for op in RELATIONAL_SWAPS[p["op"]]:
            out.append((RELATIONAL_SWAP, {"op": op}, f"{p['op']} -> {op}"))

    elif block.kind == "LogicalOp":
        op = p["op"]
        for new in LOGICAL_SWAPS.get(op, ()):
            out.append((LOGICAL_SWAP, {"op": new}, f"{op} -> {new}"))
        if op == "NOT":
            action = "add NOT" if p.get("negate") else "remove NOT"
        else:
            action = "remove NOT" if p.get("negate") else "add NOT"
        out.append((NOT_TOGGLE, {"negate": not p.get("negate", False)}, f"{action} on {op}"))

    elif block.kind == "Switch":
        out.append((SWITCH_LINE_SWAP, {}, "swap switch data inputs 1 and 3"))

    elif block.kind in ("UnitDelay", "DiscreteIntegrator"):
        init = float(p["initial"])
        out.append((INITIAL_VALUE_CHANGE, {"initial": init + 1}, f"initial {init:g} -> {init + 1:g}"))

    return out


def enumerate_mutants(graph: ModelGraph, sum_count_mode: str = INCLUSIVE_COUNT) -> list[Mutant]:
    """
    Every single-block mutant of `graph`, in block declaration order.

    Sum blocks yield every +/- sign vector plus the product variant; in the
    default "inclusive" mode the original sign vector is listed too (a 3-input
    sum yields 9), in "strict" mode it is not (8).
    """
    if sum_count_mode not in (INCLUSIVE_COUNT, STRICT_COUNT):
        raise ContractError(f"unknown sum count mode {sum_count_mode!r}")

    mutants: list[Mutant] = []
    for block in graph.blocks:
        for operator, params, description in _block_mutations(block, sum_count_mode):
            mutants.append(
                Mutant(
                    id=len(mutants) + 1,
                    model=graph.name,
                    block=block.id,
                    operator=operator,
                    params=params,
                    description=description,
                )
            )
    return mutants


def apply_mutant(graph: ModelGraph, mutant: Mutant) -> ModelGraph:
    """The mutated copy of `graph`."""
    target = graph.block(mutant.block)
    connections = graph.connections

    if mutant.operator in (
        CONSTANT_CHANGE,
        BOOLEAN_NEGATE,
        SUM_SIGN_VECTOR,
        RELATIONAL_SWAP,
        LOGICAL_SWAP,
        NOT_TOGGLE,
        INITIAL_VALUE_CHANGE,
    ):
        replacement = target.with_params(**mutant.params)

    elif mutant.operator == SUM_TO_PRODUCT:
        replacement = Block(target.id, "Product", {"inputs": mutant.params["inputs"]})

    elif mutant.operator == SWITCH_LINE_SWAP:
        replacement = target
        swap = {f"{target.id}.in1": f"{target.id}.in3", f"{target.id}.in3": f"{target.id}.in1"}
        connections = tuple(Connection(c.src, swap.get(c.dst, c.dst)) for c in connections)

    else:
        raise ContractError(f"unknown mutation operator {mutant.operator!r}")

    blocks = [replacement if b.id == target.id else b for b in graph.blocks]
    return graph.replace(blocks=blocks, connections=connections, name=f"{graph.name}#{mutant.label}")


def structural_diff(a: ModelGraph, b: ModelGraph) -> list[str]:
    """Ids of blocks whose kind, parameters or incoming wiring differ."""
    changed: list[str] = []
    for block in a.blocks:
        other = b.block(block.id)
        if (
            block.kind != other.kind
            or block.params != other.params
            or a.block_inputs[block.id] != b.block_inputs[block.id]
        ):
            changed.append(block.id)
    return changed


def kill_vector(original: np.ndarray, mutated: np.ndarray) -> np.ndarray:
    """
    Per test case, whether any output sample differs beyond
    max(1e-9, 1e-9 * magnitude). Inputs are shaped (batch, outports, k + 1).
    """
    if original.shape != mutated.shape:
        raise ContractError(f"trace shapes differ: {original.shape} vs {mutated.shape}")
    scale = np.maximum(np.abs(original), np.abs(mutated))
    tolerance = np.maximum(ABS_TOLERANCE, REL_TOLERANCE * scale)
    differs = np.abs(original - mutated) > tolerance
    return differs.reshape(differs.shape[0], -1).any(axis=1)


def kills(original: SimulationTrace, mutated: SimulationTrace) -> bool:
    if len(original.outputs) != len(mutated.outputs) or any(
        len(a) != len(b) for a, b in zip(original.outputs, mutated.outputs)
    ):
        raise ContractError("traces differ in shape; they cannot come from the same solver")

    a = np.stack([s.values for s in original.outputs])[np.newaxis]
    b = np.stack([s.values for s in mutated.outputs])[np.newaxis]
    return bool(kill_vector(a, b)[0])


class KillMatrix:
    """Which test (row) kills which mutant (column)."""

    def __init__(self, mutants: t.Sequence[Mutant], killed: np.ndarray):
        self.mutants = list(mutants)
        self.killed = np.asarray(killed, dtype=bool).reshape(-1, len(self.mutants))

    @property
    def n_tests(self) -> int:
        return self.killed.shape[0]

    def signature(self, column: int) -> tuple[bool, ...]:
        return tuple(bool(v) for v in self.killed[:, column])

    def killed_mutants(self) -> list[Mutant]:
        hit = self.killed.any(axis=0)
        return [m for m, h in zip(self.mutants, hit) if h]

    def to_csv(self) -> str:
        header = ["test"] + [m.label for m in self.mutants]
        rows = [[i] + [int(v) for v in self.killed[i]] for i in range(self.n_tests)]
        return to_csv(header, rows)


def kill_matrix(
    simulator: Simulator,
    tests: t.Sequence[TestCase],
    mutants: t.Sequence[Mutant],
    original: BatchTrace | None = None,
    workers: int | None = None,
) -> KillMatrix:
    """
    Simulate `tests` on the original model and on every mutant. Mutants are
    independent and run on the worker pool.
    """
    if original is None:
        original = simulator.run(tests)

    def _column(mutant: Mutant) -> np.ndarray:
        mutated = simulator.run(tests, apply_mutant(simulator.graph, mutant))
        return kill_vector(original.outputs, mutated.outputs)

    columns = run_pool(_column, mutants, workers)
    if not columns:
        return KillMatrix(mutants, np.zeros((len(tests), 0), dtype=bool))
    return KillMatrix(mutants, np.stack(columns, axis=1))


@dataclass
class FilterResult:
    mutants: list[Mutant]
    original_count: int
    probes: list[TestCase]
    matrix: KillMatrix
    dropped_all: list[int] = field(default_factory=list)
    dropped_none: list[int] = field(default_factory=list)
    dropped_duplicate: list[int] = field(default_factory=list)

    @property
    def percentage(self) -> float:
        if self.original_count == 0:
            return 0.0
        return round(len(self.mutants) / self.original_count, 3)

    def summary(self) -> str:
        return f"{self.original_count} -> {len(self.mutants)} ({self.percentage:.0%})"

    def stats_json(self) -> dict[str, t.Any]:
        return {
            "original": self.original_count,
            "filtered": len(self.mutants),
            "percentage": self.percentage,
            "killed_by_all": len(self.dropped_all),
            "killed_by_none": len(self.dropped_none),
            "duplicates": len(self.dropped_duplicate),
            "probes": len(self.probes),
        }


def probe_filter(
    mutants: t.Sequence[Mutant],
    graph: ModelGraph,
    n_probe: int = 200,
    rng: np.random.Generator | None = None,
    simulator: Simulator | None = None,
    probes: t.Sequence[TestCase] | None = None,
    workers: int | None = None,
) -> FilterResult:
    """
    Run random probes against the original and every mutant; drop mutants
    killed by every probe, by no probe, and all but the lowest id among
    mutants with identical kill signatures.
    """
    if len(mutants) == 0:
        raise ContractError("nothing to filter")

    simulator = simulator or Simulator(graph)
    if probes is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        probes = [sample_test_case(graph.inports, rng) for _ in range(n_probe)]
    probes = list(probes)

    matrix = kill_matrix(simulator, probes, mutants, workers=workers)
    result = FilterResult(mutants=[], original_count=len(mutants), probes=probes, matrix=matrix)
    seen: set[tuple[bool, ...]] = set()

    for column, mutant in sorted(enumerate(mutants), key=lambda cm: cm[1].id):
        signature = matrix.signature(column)
        if all(signature):
            result.dropped_all.append(mutant.id)
        elif not any(signature):
            result.dropped_none.append(mutant.id)
        elif signature in seen:
            result.dropped_duplicate.append(mutant.id)
        else:
            seen.add(signature)
            result.mutants.append(mutant)

    log("mut", f"{graph.name}: filtered mutants {result.summary()}")
    return result


def filter_mutants(
    mutants: t.Sequence[Mutant],
    graph: ModelGraph,
    n_probe: int = 200,
    rng: np.random.Generator | None = None,
    simulator: Simulator | None = None,
    probes: t.Sequence[TestCase] | None = None,
) -> list[Mutant]:
    return probe_filter(mutants, graph, n_probe, rng, simulator, probes).mutants


def mutation_score(
    suite: TestSuite | t.Sequence[TestCase],
    graph: ModelGraph,
    mutants: t.Sequence[Mutant],
    simulator: Simulator | None = None,
    workers: int | None = None,
) -> float:
    """
    Fraction of `mutants` killed by at least one test of `suite`.

    Raises:
        UndefinedMetricError: If there are no mutants.
    """
    if len(mutants) == 0:
        raise UndefinedMetricError("mutation score is undefined without mutants")

    tests = list(suite)
    if not tests:
        return 0.0

    simulator = simulator or Simulator(graph)
    matrix = kill_matrix(simulator, tests, mutants, workers=workers)
    return len(matrix.killed_mutants()) / len(mutants)


def mutants_to_json(mutants: t.Sequence[Mutant]) -> list[dict[str, t.Any]]:
    return [m.to_json() for m in mutants]


def mutants_from_json(data: list[dict[str, t.Any]]) -> list[Mutant]:
    return [Mutant.from_json(item) for item in data]
