"""
Comparison generators: random sampling, range-narrowing EPIcuRus, and the
output-diversity (OD) search.
"""

from __future__ import annotations

import time
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .antipatterns import GoalVector, goal_vector
from .cart import fit_regression_tree
from .domination import DominationContext, rank_scores
from .errors import CapabilityError, ConfigurationError, ContractError
from .model import BatchTrace, Budget, ModelGraph, Simulator
from .signals import InputSpec, TestCase, TestSuite, sample_test_case
from .utils import log


def random_suite(
    specs: t.Sequence[InputSpec],
    k: int,
    rng: np.random.Generator,
) -> TestSuite:
    """`k` independent uniformly sampled test cases."""
    if k < 1:
        raise ConfigurationError(f"suite size must be at least 1, got {k}")
    return TestSuite(sample_test_case(specs, rng) for _ in range(k))


class RangeAssumption:
    """Per-input intervals, each a sub-interval of the input's original range."""

    def __init__(self, specs: t.Sequence[InputSpec]):
        self.original = list(specs)
        self.ranges: dict[str, tuple[float, float]] = {s.name: (s.lo, s.hi) for s in specs}

    def specs(self) -> list[InputSpec]:
        return [spec.with_range(*self.ranges[spec.name]) for spec in self.original]

    def narrow(self, name: str, lo: float, hi: float) -> None:
        cur_lo, cur_hi = self.ranges[name]
        lo, hi = max(lo, cur_lo), min(hi, cur_hi)
        if lo > hi:
            raise ContractError(f"narrowing {name} to an empty interval")
        self.ranges[name] = (lo, hi)

    def __getitem__(self, name: str) -> tuple[float, float]:
        return self.ranges[name]

    def to_json(self) -> dict[str, list[float]]:
        return {name: [lo, hi] for name, (lo, hi) in self.ranges.items()}

    def __repr__(self):
        return f"<RangeAssumption {self.to_json()}>"


@dataclass(frozen=True)
class EpicurusConfig:
    iterations: int = 30
    min_leaf: int = 2
    scoring_suites: int = 5
    rate: bool = False

    def __post_init__(self):
        if self.iterations < 0 or self.min_leaf < 1 or self.scoring_suites < 1:
            raise ConfigurationError("invalid EPIcuRus configuration")


@dataclass
class EpicurusResult:
    suite: TestSuite
    ranges: RangeAssumption
    budget: Budget
    history: list[dict[str, t.Any]] = field(default_factory=list)


def _feature_owner(specs: t.Sequence[InputSpec]) -> list[int]:
    """For every flattened control-point column, the index of its input."""
    return [u for u, spec in enumerate(specs) for _ in range(spec.control_points)]


def epicurus_suite(
    model: ModelGraph,
    k: int,
    config: EpicurusConfig = EpicurusConfig(),
    simulator: Simulator | None = None,
    rng: np.random.Generator | None = None,
) -> EpicurusResult:
    """
    Narrow the input ranges towards high anti-pattern values, then draw the
    suite inside the narrowed ranges.

    Every iteration samples `k` tests inside the current ranges, simulates
    them, scores all accumulated tests by mean continuous-domination loss,
    fits a regression tree on their control points, and restricts the input
    owning the root split to the child interval with the lower mean loss.
    """
    if k < 1:
        raise ConfigurationError(f"suite size must be at least 1, got {k}")

    simulator = simulator or Simulator(model)
    rng = rng if rng is not None else np.random.default_rng(0)
    start = simulator.simulations

    ranges = RangeAssumption(model.inports)
    owners = _feature_owner(model.inports)
    tests: list[TestCase] = []
    goals: list[GoalVector] = []
    history: list[dict[str, t.Any]] = []

    for iteration in range(config.iterations):
        fresh = [sample_test_case(ranges.specs(), rng) for _ in range(k)]
        batch = simulator.run(fresh)
        tests.extend(fresh)
        goals.extend(goal_vector(batch.trace(i), config.rate) for i in range(len(fresh)))

        if len(tests) < config.min_leaf:
            continue

        targets = rank_scores(goals, DominationContext.from_population(goals))
        X = np.array([test.flatten() for test in tests])
        tree = fit_regression_tree(X, targets, config.min_leaf)

        if tree.left is None or tree.right is None or tree.feature is None or tree.threshold is None:
            log("gen", f"epicurus: iteration {iteration} tree is a single leaf, ranges unchanged")
            history.append({"iteration": iteration, "narrowed": None})
            continue

        spec = model.inports[owners[tree.feature]]
        lo, hi = ranges[spec.name]
        if tree.left.mean <= tree.right.mean:
            child = (lo, min(hi, tree.threshold))
        else:
            child = (max(lo, tree.threshold), hi)

        # tests from earlier iterations can put the split outside the current range
        if child[0] > child[1] or child == (lo, hi):
            log("gen", f"epicurus: iteration {iteration} split on {spec.name} misses {lo, hi}, ranges unchanged")
            history.append({"iteration": iteration, "narrowed": None})
            continue

        ranges.narrow(spec.name, *child)

        log("gen", f"epicurus: iteration {iteration} narrowed {spec.name} to {ranges[spec.name]}")
        history.append({"iteration": iteration, "narrowed": spec.name, "range": ranges[spec.name]})

    suite = random_suite(ranges.specs(), k, rng)
    budget = Budget(
        simulations=simulator.simulations - start,
        details={"iterations": config.iterations, "ranges": ranges.to_json()},
    )
    return EpicurusResult(suite, ranges, budget, history)


def epicurus_scoring_suites(
    ranges: RangeAssumption,
    k: int,
    rng: np.random.Generator,
    count: int = 5,
) -> list[TestSuite]:
    """Independent suites drawn inside the final ranges, scored by median."""
    return [random_suite(ranges.specs(), k, rng) for _ in range(count)]


SIMULATED_CLOCK = "simulated"
WALL_CLOCK = "wall"


@dataclass(frozen=True)
class ODConfig:
    timeout: float = 600.0
    plateau: int = 3
    sigma_start: float = 0.5
    sigma_end: float = 0.01
    clock: str = SIMULATED_CLOCK
    simulation_cost: float = 0.05
    max_iterations: int | None = None

    def __post_init__(self):
        if self.timeout <= 0 or self.plateau < 1:
            raise ConfigurationError("OD timeout and plateau must be positive")
        if not 0 < self.sigma_end <= self.sigma_start:
            raise ConfigurationError("OD needs 0 < sigma_end <= sigma_start")
        if self.clock not in (SIMULATED_CLOCK, WALL_CLOCK):
            raise ConfigurationError(f"unknown OD clock {self.clock!r}")


Clock = t.Callable[[], float]


class _Runner(t.Protocol):
    graph: ModelGraph

    @property
    def simulations(self) -> int: ...

    def run(self, tests: t.Sequence[TestCase], graph: ModelGraph | None = None) -> BatchTrace: ...


def make_clock(config: ODConfig, simulator: _Runner) -> Clock:
    """
    The OD deadline clock. The simulated clock charges a fixed cost per
    simulated test case, so budgets only depend on the seed.
    """
    if config.clock == WALL_CLOCK:
        return time.monotonic
    return lambda: simulator.simulations * config.simulation_cost


@dataclass
class ODState:
    pieces: int = 1
    sigma: float = 0.5
    best_suite: list[list[np.ndarray]] = field(default_factory=list)
    best_objective: float = -np.inf
    coverage: set[tuple[str, str]] = field(default_factory=set)
    elapsed: float = 0.0
    iterations: int = 0
    history: list[dict[str, t.Any]] = field(default_factory=list)


@dataclass
class ODResult:
    suite: TestSuite
    budget: Budget
    state: ODState


def _expand(pieces: np.ndarray, control_points: int) -> tuple[float, ...]:
    idx = (np.arange(control_points) * len(pieces)) // control_points
    return tuple(float(v) for v in pieces[idx])


def _refine(pieces: np.ndarray, count: int) -> np.ndarray:
    idx = (np.arange(count) * len(pieces)) // count
    return pieces[idx]


def _piece_count(spec: InputSpec, pieces: int) -> int:
    return 1 if spec.is_constant else min(pieces, spec.control_points)


def _to_test(candidate: list[np.ndarray], specs: t.Sequence[InputSpec]) -> TestCase:
    return TestCase(
        names=tuple(s.name for s in specs),
        points=tuple(_expand(p, s.control_points) for p, s in zip(candidate, specs)),
    )


def output_diversity(outputs: np.ndarray) -> float:
    """
    Mean pairwise Euclidean distance between the tests' output vectors, every
    outport min-max normalised over the suite first. `outputs` is shaped
    (tests, outports, k + 1).
    """
    m = outputs.shape[0]
    if m < 2:
        return 0.0

    lo = outputs.min(axis=(0, 2), keepdims=True)
    hi = outputs.max(axis=(0, 2), keepdims=True)
    span = np.where(hi > lo, hi - lo, 1.0)
    vectors = ((outputs - lo) / span).reshape(m, -1)

    total = 0.0
    for i in range(m - 1):
        total += float(np.sum(np.sqrt(np.sum((vectors[i + 1 :] - vectors[i]) ** 2, axis=1))))
    return total / (m * (m - 1) / 2)


def od_suite(
    model: ModelGraph,
    k: int,
    config: ODConfig = ODConfig(),
    simulator: _Runner | None = None,
    rng: np.random.Generator | None = None,
    clock: Clock | None = None,
) -> ODResult:
    """
    Output-diversity search.

    Starts from a random suite whose inputs are single pieces, then keeps
    tweaking the best suite found so far with Gaussian noise of magnitude
    sigma * range width. No new coverage for `plateau` iterations (while
    below full coverage) adds a signal piece; coverage growth moves sigma
    linearly from exploration to exploitation over the timeout.

    Raises:
        CapabilityError: If every input is constant; there is nothing to
            tweak over time.
    """
    if k < 1:
        raise ConfigurationError(f"suite size must be at least 1, got {k}")

    specs = model.inports
    if all(spec.is_constant for spec in specs):
        raise CapabilityError(f"OD is not applicable to {model.name}: all inputs are constant")

    runner: _Runner = simulator if simulator is not None else Simulator(model)
    rng = rng if rng is not None else np.random.default_rng(0)
    clock = clock or make_clock(config, runner)

    start_sims = runner.simulations
    started = clock()
    universe = model.branch_universe()

    state = ODState(pieces=1, sigma=config.sigma_start)
    candidates = [
        [rng.uniform(s.lo, s.hi, _piece_count(s, 1)) for s in specs] for _ in range(k)
    ]
    stall = 0

    while True:
        if state.iterations > 0:
            candidates = [
                [
                    np.clip(p + rng.normal(0.0, state.sigma * s.width, len(p)), s.lo, s.hi)
                    for p, s in zip(candidate, specs)
                ]
                for candidate in state.best_suite
            ]

        batch = runner.run([_to_test(c, specs) for c in candidates])

        before = len(state.coverage)
        for cov in batch.coverage:
            state.coverage |= cov
        grew = len(state.coverage) > before
        covered = len(state.coverage) / len(universe) if universe else 1.0

        objective = output_diversity(batch.outputs)
        if objective > state.best_objective:
            state.best_objective = objective
            state.best_suite = [[p.copy() for p in c] for c in candidates]

        state.elapsed = clock() - started
        stall = 0 if grew else stall + 1

        if stall >= config.plateau and covered < 1.0:
            state.pieces += 1
            state.best_suite = [
                [_refine(p, _piece_count(s, state.pieces)) for p, s in zip(c, specs)]
                for c in state.best_suite
            ]
            stall = 0
            log("gen", f"od: coverage plateau at {covered:.0%}, pieces -> {state.pieces}")

        if grew and state.iterations > 0:
            progress = min(1.0, state.elapsed / config.timeout)
            state.sigma = config.sigma_start - (config.sigma_start - config.sigma_end) * progress
            state.sigma = min(config.sigma_start, max(config.sigma_end, state.sigma))

        state.history.append(
            {
                "iteration": state.iterations,
                "pieces": state.pieces,
                "sigma": state.sigma,
                "objective": objective,
                "best_objective": state.best_objective,
                "coverage": covered,
            }
        )
        state.iterations += 1

        if state.elapsed >= config.timeout:
            break
        if config.max_iterations is not None and state.iterations >= config.max_iterations:
            break

    suite = TestSuite(_to_test(c, specs) for c in state.best_suite)
    budget = Budget(
        simulations=runner.simulations - start_sims,
        details={
            "iterations": state.iterations,
            "pieces": state.pieces,
            "sigma": state.sigma,
            "objective": state.best_objective,
        },
    )
    log("gen", f"od: {state.iterations} iterations, best diversity {state.best_objective:.4f}")
    return ODResult(suite, budget, state)
