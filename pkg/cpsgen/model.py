"""
A discrete-time block-diagram model and its fixed-step simulator.

A model is a flat set of blocks wired port to port. Every step evaluates the
blocks in topological order; state blocks (UnitDelay, DiscreteIntegrator)
emit the state they entered the step with and update it once every other
block has been evaluated, which is what breaks feedback loops.

Simulation is vectorised over a batch of test cases: every wire carries a
numpy vector with one entry per test case.
"""

from __future__ import annotations

import heapq
import json
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ModelLoadError
from .signals import (
    BOOLEAN,
    InputSpec,
    Signal,
    TestCase,
    booleanize_array,
    render_batch,
    step_count,
)
from .utils import Counter, log

STATE_KINDS = frozenset({"UnitDelay", "DiscreteIntegrator"})
BRANCH_KINDS = frozenset({"Switch", "RelationalOp"})

RELATIONAL_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGICAL_OPS = ("AND", "OR", "XOR", "NOT")

_RELATIONAL_ALIASES = {"≤": "<=", "≥": ">=", "≠": "!=", "~=": "!="}


@dataclass(frozen=True)
class Block:
    id: str
    kind: str
    params: dict[str, t.Any] = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return block_arity(self.kind, self.params, self.id)

    @property
    def is_state(self) -> bool:
        return self.kind in STATE_KINDS

    def with_params(self, **changes: t.Any) -> Block:
        return Block(self.id, self.kind, {**self.params, **changes})

    def to_json(self) -> dict[str, t.Any]:
        return {"id": self.id, "kind": self.kind, "params": dict(self.params)}

    def __repr__(self):
        return f"<Block {self.id} {self.kind} {self.params}>"


@dataclass(frozen=True)
class Connection:
    """
    A wire. `src` is an inport name or "block.out"; `dst` is an outport name
    or "block.inN".
    """

    src: str
    dst: str

    def to_json(self) -> dict[str, str]:
        return {"from": self.src, "to": self.dst}


def block_arity(kind: str, params: t.Mapping[str, t.Any], ident: str = "?") -> int:
    if kind == "Constant":
        return 0
    if kind in ("Gain", "UnitDelay", "DiscreteIntegrator", "Saturation", "Abs"):
        return 1
    if kind == "RelationalOp":
        return 2
    if kind == "Switch":
        return 3
    if kind == "Sum":
        signs = params.get("signs", "++")
        if not signs or any(c not in "+-" for c in signs):
            raise ModelLoadError(f"block {ident}: invalid sign vector {signs!r}")
        return len(signs)
    if kind in ("Product", "MinMax"):
        n = int(params.get("inputs", 2))
        if n < 1:
            raise ModelLoadError(f"block {ident}: needs at least one input")
        return n
    if kind == "LogicalOp":
        if params.get("op") == "NOT":
            return 1
        n = int(params.get("inputs", 2))
        if n < 2:
            raise ModelLoadError(f"block {ident}: {params.get('op')} needs two or more inputs")
        return n

    raise ModelLoadError(f"block {ident}: unknown block kind {kind!r}")


def _check_params(block: Block):
    p = block.params
    required = {
        "Constant": ("value",),
        "Gain": ("gain",),
        "Switch": ("threshold",),
        "UnitDelay": ("initial",),
        "DiscreteIntegrator": ("initial",),
        "Saturation": ("lo", "hi"),
    }.get(block.kind, ())
    for name in required:
        if name not in p:
            raise ModelLoadError(f"block {block.id}: missing parameter {name!r}")

    if block.kind == "RelationalOp" and p.get("op") not in RELATIONAL_OPS:
        raise ModelLoadError(f"block {block.id}: unknown relational operator {p.get('op')!r}")
    if block.kind == "LogicalOp" and p.get("op") not in LOGICAL_OPS:
        raise ModelLoadError(f"block {block.id}: unknown logical operator {p.get('op')!r}")
    if block.kind == "MinMax" and p.get("op") not in ("min", "max"):
        raise ModelLoadError(f"block {block.id}: MinMax op must be min or max")
    if block.kind == "Saturation" and not float(p["lo"]) <= float(p["hi"]):
        raise ModelLoadError(f"block {block.id}: saturation lo > hi")
    if block.kind == "Constant" and p.get("type", "numeric") not in ("numeric", "boolean"):
        raise ModelLoadError(f"block {block.id}: unknown constant type {p.get('type')!r}")


def _normalise_params(kind: str, params: dict[str, t.Any]) -> dict[str, t.Any]:
    params = dict(params)
    if kind == "RelationalOp" and params.get("op") in _RELATIONAL_ALIASES:
        params["op"] = _RELATIONAL_ALIASES[params["op"]]
    if kind == "LogicalOp":
        params.setdefault("negate", False)
    return params


# a wire source: ("inport", index) or ("block", block id)
Source = tuple[str, t.Any]


@dataclass(frozen=True, eq=False)
class ModelGraph:
    name: str
    inports: tuple[InputSpec, ...]
    outports: tuple[str, ...]
    blocks: tuple[Block, ...]
    connections: tuple[Connection, ...]
    dt: float
    duration: float

    # derived during validation
    block_inputs: dict[str, tuple[Source, ...]] = field(init=False, repr=False)
    outport_sources: tuple[Source, ...] = field(init=False, repr=False)
    order: tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        _validate(self)

    @property
    def k(self) -> int:
        return step_count(self.duration, self.dt)

    def block(self, ident: str) -> Block:
        for block in self.blocks:
            if block.id == ident:
                return block
        raise KeyError(ident)

    def branch_universe(self) -> frozenset[tuple[str, str]]:
        return frozenset(
            (block.id, tag)
            for block in self.blocks
            if block.kind in BRANCH_KINDS
            for tag in ("true", "false")
        )

    def replace(
        self,
        blocks: t.Iterable[Block] | None = None,
        connections: t.Iterable[Connection] | None = None,
        inports: t.Iterable[InputSpec] | None = None,
        name: str | None = None,
    ) -> ModelGraph:
        return ModelGraph(
            name=self.name if name is None else name,
            inports=self.inports if inports is None else tuple(inports),
            outports=self.outports,
            blocks=self.blocks if blocks is None else tuple(blocks),
            connections=self.connections if connections is None else tuple(connections),
            dt=self.dt,
            duration=self.duration,
        )

    def to_json(self) -> dict[str, t.Any]:
        return {
            "name": self.name,
            "dt": self.dt,
            "duration": self.duration,
            "inports": [spec.to_json() for spec in self.inports],
            "outports": list(self.outports),
            "blocks": [block.to_json() for block in self.blocks],
            "connections": [c.to_json() for c in self.connections],
        }

    def __repr__(self):
        return (
            f"<ModelGraph {self.name} {len(self.inports)}/{len(self.outports)} "
            f"{len(self.blocks)} blocks>"
        )


def _validate(graph: ModelGraph):
    if len(graph.inports) < 1 or len(graph.outports) < 1:
        raise ModelLoadError(f"model {graph.name}: needs at least one inport and one outport")

    step_count(graph.duration, graph.dt)

    names: set[str] = set()
    for name in [s.name for s in graph.inports] + list(graph.outports) + [b.id for b in graph.blocks]:
        if name in names:
            raise ModelLoadError(f"model {graph.name}: duplicate name {name!r}")
        if "." in name:
            raise ModelLoadError(f"model {graph.name}: name {name!r} must not contain '.'")
        names.add(name)

    blocks = {block.id: block for block in graph.blocks}
    inport_index = {spec.name: i for i, spec in enumerate(graph.inports)}
    outport_index = {name: i for i, name in enumerate(graph.outports)}

    for block in graph.blocks:
        block_arity(block.kind, block.params, block.id)
        _check_params(block)

    block_inputs: dict[str, list[Source | None]] = {
        block.id: [None] * block.arity for block in graph.blocks
    }
    outport_sources: list[Source | None] = [None] * len(graph.outports)

    for conn in graph.connections:
        source = _parse_source(conn.src, blocks, inport_index)

        if conn.dst in outport_index:
            slot = outport_index[conn.dst]
            if outport_sources[slot] is not None:
                raise ModelLoadError(f"outport {conn.dst} has more than one incoming connection")
            outport_sources[slot] = source
            continue

        block_id, port = _split_endpoint(conn.dst)
        if block_id not in blocks:
            raise ModelLoadError(f"dangling connection to unknown element {conn.dst!r}")
        if not port.startswith("in") or not port[2:].isdigit():
            raise ModelLoadError(f"connection to invalid port {conn.dst!r}")
        index = int(port[2:]) - 1
        ports = block_inputs[block_id]
        if not 0 <= index < len(ports):
            raise ModelLoadError(
                f"connection to {conn.dst!r}: block {block_id} has {len(ports)} inputs"
            )
        if ports[index] is not None:
            raise ModelLoadError(f"port {conn.dst!r} has more than one incoming connection")
        ports[index] = source

    for block_id, ports in block_inputs.items():
        for i, source in enumerate(ports):
            if source is None:
                raise ModelLoadError(f"port {block_id}.in{i + 1} has no incoming connection")

    for name, source in zip(graph.outports, outport_sources):
        if source is None:
            raise ModelLoadError(f"outport {name} has no incoming connection")

    object.__setattr__(
        graph,
        "block_inputs",
        {k: t.cast(tuple[Source, ...], tuple(v)) for k, v in block_inputs.items()},
    )
    object.__setattr__(graph, "outport_sources", t.cast(tuple[Source, ...], tuple(outport_sources)))
    object.__setattr__(graph, "order", _order(graph))


def _split_endpoint(endpoint: str) -> tuple[str, str]:
    if "." not in endpoint:
        raise ModelLoadError(f"dangling connection endpoint {endpoint!r}")
    block_id, port = endpoint.split(".", 1)
    return block_id, port


def _parse_source(
    src: str,
    blocks: dict[str, Block],
    inport_index: dict[str, int],
) -> Source:
    if src in inport_index:
        return ("inport", inport_index[src])

    block_id, port = _split_endpoint(src)
    if block_id not in blocks:
        raise ModelLoadError(f"dangling connection from unknown element {src!r}")
    if port != "out":
        raise ModelLoadError(f"connection from invalid port {src!r}")
    return ("block", block_id)


def _order(graph: ModelGraph) -> tuple[str, ...]:
    # edges only leave non-state blocks: a state block's output is known at
    # the start of every step
    position = {block.id: i for i, block in enumerate(graph.blocks)}
    indegree = {block.id: 0 for block in graph.blocks}
    successors: dict[str, list[str]] = {block.id: [] for block in graph.blocks}

    for block in graph.blocks:
        for kind, ref in graph.block_inputs[block.id]:
            if kind == "block" and not graph.block(ref).is_state:
                successors[ref].append(block.id)
                indegree[block.id] += 1

    ready = [(position[b], b) for b, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []

    while ready:
        _, current = heapq.heappop(ready)
        order.append(current)
        for succ in successors[current]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                heapq.heappush(ready, (position[succ], succ))

    if len(order) != len(graph.blocks):
        stuck = sorted((b for b, d in indegree.items() if d > 0), key=position.__getitem__)
        raise ModelLoadError(
            f"model {graph.name}: algebraic loop through blocks {', '.join(stuck)}"
        )

    return tuple(order)


def topological_order(graph: ModelGraph) -> list[str]:
    """
    The block evaluation order: every block comes after its non-state
    predecessors; ties keep declaration order.
    """
    return list(graph.order)


def model_from_json(data: dict[str, t.Any]) -> ModelGraph:
    try:
        blocks = tuple(
            Block(
                id=str(item["id"]),
                kind=str(item["kind"]),
                params=_normalise_params(str(item["kind"]), item.get("params", {})),
            )
            for item in data["blocks"]
        )
        return ModelGraph(
            name=str(data["name"]),
            inports=tuple(InputSpec.from_json(item) for item in data["inports"]),
            outports=tuple(str(name) for name in data["outports"]),
            blocks=blocks,
            connections=tuple(
                Connection(str(item["from"]), str(item["to"])) for item in data["connections"]
            ),
            dt=float(data["dt"]),
            duration=float(data["duration"]),
        )
    except KeyError as e:
        raise ModelLoadError(f"model document is missing key {e}") from e
    except ModelLoadError:
        raise
    except ValueError as e:
        raise ModelLoadError(f"invalid model document: {e}") from e


def load_model(text: str) -> ModelGraph:
    """
    Parse and validate a JSON model document.

    Raises:
        ModelLoadError: On unknown block kinds, dangling connections,
            unconnected ports, or algebraic loops.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelLoadError(f"model document is not valid JSON: {e}") from e
    return model_from_json(data)


def load_model_file(path: str) -> ModelGraph:
    with open(path, "r") as f:
        return load_model(f.read())


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    outputs: tuple[Signal, ...]
    coverage: frozenset[tuple[str, str]]
    fault_step: int | None = None

    @property
    def faulted(self) -> bool:
        return self.fault_step is not None


@dataclass(frozen=True, eq=False)
class BatchTrace:
    """Simulation results for a batch of test cases."""

    outputs: np.ndarray  # (batch, outports, k + 1)
    coverage: tuple[frozenset[tuple[str, str]], ...]
    fault_steps: np.ndarray  # (batch,), -1 when the run stayed finite
    dt: float
    duration: float

    def __len__(self) -> int:
        return self.outputs.shape[0]

    def faulted(self, index: int) -> bool:
        return bool(self.fault_steps[index] >= 0)

    def trace(self, index: int) -> SimulationTrace:
        step = int(self.fault_steps[index])
        return SimulationTrace(
            outputs=tuple(
                Signal(self.outputs[index, o], self.dt, self.duration)
                for o in range(self.outputs.shape[1])
            ),
            coverage=self.coverage[index],
            fault_step=None if step < 0 else step,
        )


_Op = t.Callable[[list[np.ndarray]], np.ndarray]

_RELATIONAL_FUNCS: dict[str, t.Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


def _compile(block: Block, batch: int) -> _Op:
    p = block.params
    kind = block.kind

    if kind == "Constant":
        value = float(p["value"])
        if p.get("type") == "boolean":
            value = 1.0 if value != 0 else 0.0
        constant = np.full(batch, value)
        return lambda xs: constant

    if kind == "Sum":
        signs = [1.0 if c == "+" else -1.0 for c in p["signs"]]

        def _sum(xs: list[np.ndarray]) -> np.ndarray:
            total = signs[0] * xs[0]
            for sign, x in zip(signs[1:], xs[1:]):
                total = total + x if sign > 0 else total - x
            return total

        return _sum

    if kind == "Product":

        def _product(xs: list[np.ndarray]) -> np.ndarray:
            total = xs[0]
            for x in xs[1:]:
                total = total * x
            return total

        return _product

    if kind == "Gain":
        gain = float(p["gain"])
        return lambda xs: gain * xs[0]

    if kind == "RelationalOp":
        func = _RELATIONAL_FUNCS[p["op"]]
        return lambda xs: func(xs[0], xs[1]).astype(float)

    if kind == "LogicalOp":
        op = p["op"]
        negate = bool(p.get("negate", False))

        def _logical(xs: list[np.ndarray]) -> np.ndarray:
            bits = [x != 0 for x in xs]
            if op == "NOT":
                out = ~bits[0]
            elif op == "AND":
                out = np.logical_and.reduce(bits)
            elif op == "OR":
                out = np.logical_or.reduce(bits)
            else:
                out = np.logical_xor.reduce(bits)
            if negate:
                out = ~out
            return out.astype(float)

        return _logical

    if kind == "Switch":
        threshold = float(p["threshold"])
        return lambda xs: np.where(xs[1] >= threshold, xs[0], xs[2])

    if kind == "Saturation":
        lo, hi = float(p["lo"]), float(p["hi"])
        return lambda xs: np.clip(xs[0], lo, hi)

    if kind == "Abs":
        return lambda xs: np.abs(xs[0])

    if kind == "MinMax":
        reduce = np.minimum.reduce if p["op"] == "min" else np.maximum.reduce
        return lambda xs: reduce(xs)

    raise ModelLoadError(f"block {block.id}: {kind} is not a combinational block")


def simulate_batch(graph: ModelGraph, inputs: np.ndarray) -> BatchTrace:
    """
    Simulate a batch of input signal sets.

    Args:
        graph (ModelGraph): The model.
        inputs (np.ndarray): Shaped (batch, inports, k + 1), in inport order.

    A run whose wires go non-finite is truncated at that step: its outputs
    hold the last finite values for the rest of the horizon, and its fault
    step is recorded.
    """
    k = graph.k
    inputs = np.array(inputs, dtype=float)
    if inputs.ndim != 3 or inputs.shape[1:] != (len(graph.inports), k + 1):
        raise ContractError(
            f"model {graph.name} expects inputs shaped (batch, {len(graph.inports)}, {k + 1}), "
            f"got {inputs.shape}"
        )

    batch = inputs.shape[0]
    for u, spec in enumerate(graph.inports):
        if spec.kind == BOOLEAN:
            inputs[:, u, :] = booleanize_array(inputs[:, u, :])

    blocks = {block.id: block for block in graph.blocks}
    ops = {bid: _compile(blocks[bid], batch) for bid in graph.order if not blocks[bid].is_state}
    states = {
        block.id: np.full(batch, float(block.params["initial"]))
        for block in graph.blocks
        if block.is_state
    }
    branch_ids = [block.id for block in graph.blocks if block.kind in BRANCH_KINDS]
    seen_true = {bid: np.zeros(batch, dtype=bool) for bid in branch_ids}
    seen_false = {bid: np.zeros(batch, dtype=bool) for bid in branch_ids}

    outputs = np.zeros((batch, len(graph.outports), k + 1))
    held = np.zeros((batch, len(graph.outports)))
    fault_steps = np.full(batch, -1)
    alive = np.ones(batch, dtype=bool)

    def _value(source: Source, wires: dict[str, np.ndarray], j: int) -> np.ndarray:
        kind, ref = source
        if kind == "inport":
            return inputs[:, ref, j]
        return wires[ref]

    with np.errstate(all="ignore"):
        for j in range(k + 1):
            wires: dict[str, np.ndarray] = dict(states)
            finite = np.ones(batch, dtype=bool)

            for bid in graph.order:
                block = blocks[bid]
                if block.is_state:
                    continue
                xs = [_value(s, wires, j) for s in graph.block_inputs[bid]]
                out = ops[bid](xs)
                wires[bid] = out
                finite &= np.isfinite(out)

                if block.kind == "Switch":
                    taken = xs[1] >= float(block.params["threshold"])
                elif block.kind == "RelationalOp":
                    taken = out != 0
                else:
                    continue
                seen_true[bid] |= taken & alive
                seen_false[bid] |= ~taken & alive

            for state in states.values():
                finite &= np.isfinite(state)

            step_out = np.stack(
                [_value(s, wires, j) for s in graph.outport_sources], axis=1
            )

            newly = alive & ~finite
            if np.any(newly):
                fault_steps[newly] = j
                alive &= finite
                log("sim", f"{graph.name}: {int(newly.sum())} run(s) went non-finite at step {j}")

            held[alive] = step_out[alive]
            outputs[:, :, j] = held

            # state update with this step's inputs
            new_states: dict[str, np.ndarray] = {}
            for bid, state in states.items():
                x = _value(graph.block_inputs[bid][0], wires, j)
                if blocks[bid].kind == "UnitDelay":
                    new_states[bid] = x
                else:
                    new_states[bid] = state + graph.dt * x
            states = new_states

    coverage = tuple(
        frozenset(
            [(bid, "true") for bid in branch_ids if seen_true[bid][i]]
            + [(bid, "false") for bid in branch_ids if seen_false[bid][i]]
        )
        for i in range(batch)
    )

    return BatchTrace(outputs, coverage, fault_steps, graph.dt, graph.duration)


def simulate(graph: ModelGraph, inputs: t.Sequence[Signal]) -> SimulationTrace:
    """
    Simulate a single set of input signals, one per inport in inport order.

    Raises:
        ContractError: If the signal count or the signals' dt/duration do not
            match the model.
    """
    if len(inputs) != len(graph.inports):
        raise ContractError(
            f"model {graph.name} has {len(graph.inports)} inports, got {len(inputs)} signals"
        )
    for sig in inputs:
        if abs(sig.dt - graph.dt) > 1e-12 or abs(sig.duration - graph.duration) > 1e-9:
            raise ContractError(
                f"signal (dt={sig.dt}, T={sig.duration}) does not match model "
                f"(dt={graph.dt}, T={graph.duration})"
            )

    data = np.stack([sig.values for sig in inputs])[np.newaxis, :, :]
    return simulate_batch(graph, data).trace(0)


@dataclass
class Budget:
    """What a generator spent: simulated test cases plus generator details."""

    simulations: int
    seed: int | None = None
    details: dict[str, t.Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, t.Any]:
        return {"simulations": self.simulations, "seed": self.seed, **self.details}


class Simulator:
    """
    Runs test cases against one model and counts every simulated test case.
    The counter is the budget generators and the experiment harness report.
    """

    def __init__(self, graph: ModelGraph, counter: Counter | None = None):
        self.graph = graph
        self.counter = counter or Counter()

    @property
    def simulations(self) -> int:
        return self.counter.value

    def run(self, tests: t.Sequence[TestCase], graph: ModelGraph | None = None) -> BatchTrace:
        """
        Simulate `tests` on this model, or on `graph` (a mutant of it) when
        given. Every test case counts once towards the budget.
        """
        graph = graph or self.graph
        for test in tests:
            test.check(graph.inports)

        self.counter.add(len(tests))
        inputs = render_batch(tests, graph.inports, graph.duration, graph.dt)
        return simulate_batch(graph, inputs)

    def trace(self, test: TestCase) -> SimulationTrace:
        return self.run([test]).trace(0)
