"""
Semi-supervised suite generation by recursive FASTMAP bisection.

A large population of random test cases is split in halves along the axis
between two far-apart poles until every group holds at most `enough` test
cases. Only one representative per leaf is simulated; the representatives
are ranked by continuous domination and the whole leaf of the winner becomes
the suite.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

import numpy as np

from .antipatterns import GoalVector, goal_vector
from .domination import MEAN_LOSS, rank
from .errors import ConfigurationError, ContractError
from .model import Budget, ModelGraph, Simulator
from .signals import InputSpec, TestCase, TestSuite, sample_test_case
from .utils import Counter, log


@dataclass(frozen=True)
class GenCluConfig:
    initial_samples: int = 256
    enough: int = 4
    seed: int = 0
    ranking: str = MEAN_LOSS
    rate: bool = False

    def __post_init__(self):
        if self.initial_samples < 1 or self.enough < 1:
            raise ConfigurationError("initial_samples and enough must be positive")
        if self.enough > self.initial_samples:
            raise ConfigurationError(
                f"enough ({self.enough}) exceeds initial_samples ({self.initial_samples})"
            )


def features(tests: t.Sequence[TestCase], specs: t.Sequence[InputSpec]) -> np.ndarray:
    """
    Flattened control points of every test, each dimension min-max
    normalised by its input's range. Zero-width ranges map to 0.
    """
    columns: list[np.ndarray] = []
    for u, spec in enumerate(specs):
        values = np.array([test.points[u] for test in tests], dtype=float)
        values = values.reshape(len(tests), spec.control_points)
        if spec.width > 0:
            columns.append((values - spec.lo) / spec.width)
        else:
            columns.append(np.zeros_like(values))
    if not columns:
        return np.zeros((len(tests), 0))
    return np.hstack(columns)


@dataclass
class Split:
    east: int
    west: int
    c: float
    projection: np.ndarray  # d per item, in item order
    east_items: list[int]
    west_items: list[int]


def _distances(points: np.ndarray, origin: np.ndarray, counter: Counter | None) -> np.ndarray:
    if counter is not None:
        counter.add(len(points))
    return np.sqrt(np.sum((points - origin) ** 2, axis=1))


def split(
    points: np.ndarray,
    items: t.Sequence[int],
    rng: np.random.Generator,
    counter: Counter | None = None,
    pivot: int | None = None,
) -> Split | None:
    """
    Bisect `items` (row indices into `points`) along the east-west axis.

    A random pivot is drawn, east is the item farthest from it and west the
    item farthest from east. Every item is projected with the cosine rule
    d = (a² + c² - b²) / (2c); the lower half by d (ties by index) goes
    east. At most 4 * m distances are evaluated.

    Returns None when all items coincide (c = 0).
    """
    m = len(items)
    if m < 2:
        raise ContractError("split needs at least two points")

    ids = np.asarray(items)
    sub = points[ids]

    if pivot is None:
        pivot = int(ids[rng.integers(m)])

    from_pivot = _distances(sub, points[pivot], counter)
    east = int(ids[int(np.argmax(from_pivot))])

    a = _distances(sub, points[east], counter)
    west = int(ids[int(np.argmax(a))])
    c = float(np.max(a))

    if c == 0.0:
        return None

    b = _distances(sub, points[west], counter)
    d = (a**2 + c**2 - b**2) / (2 * c)

    order = np.lexsort((ids, d))
    half = m // 2
    sorted_ids = [int(i) for i in ids[order]]

    return Split(
        east=east,
        west=west,
        c=c,
        projection=d,
        east_items=sorted_ids[:half],
        west_items=sorted_ids[half:],
    )


@dataclass
class ClusterNode:
    members: list[int]
    left: ClusterNode | None = None
    right: ClusterNode | None = None
    east: int | None = None
    west: int | None = None
    degenerate: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaves(self) -> list[ClusterNode]:
        if self.left is None or self.right is None:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def __repr__(self):
        return f"<ClusterNode {len(self.members)} members{' leaf' if self.is_leaf else ''}>"


def cluster(
    points: np.ndarray,
    enough: int,
    rng: np.random.Generator,
    items: t.Sequence[int] | None = None,
    counter: Counter | None = None,
) -> ClusterNode:
    """
    Recursively split while a node holds more than `enough` items. A split
    whose points all coincide ends its branch as an oversized leaf.
    """
    if items is None:
        items = list(range(len(points)))
    if len(items) == 0:
        raise ContractError("cannot cluster an empty population")

    node = ClusterNode(members=list(items))
    if len(items) <= enough:
        return node

    result = split(points, items, rng, counter)
    if result is None:
        log("gen", f"degenerate split of {len(items)} identical points, keeping as leaf")
        node.degenerate = True
        return node

    node.east = result.east
    node.west = result.west
    node.left = cluster(points, enough, rng, result.east_items, counter)
    node.right = cluster(points, enough, rng, result.west_items, counter)
    return node


@dataclass
class GenCluResult:
    suite: TestSuite
    budget: Budget
    population: list[TestCase]
    tree: ClusterNode
    best_leaf: ClusterNode
    representatives: dict[int, int] = field(default_factory=dict)  # leaf -> test index
    goals: dict[int, GoalVector] = field(default_factory=dict)  # leaf -> goals


def generate_suite(
    model: ModelGraph,
    config: GenCluConfig,
    simulator: Simulator | None = None,
    rng: np.random.Generator | None = None,
) -> GenCluResult:
    """
    Sample, cluster, label one representative per leaf, and return the leaf
    whose representative ranks first.

    A representative whose simulation faults is redrawn once from its leaf;
    if that one faults too, the leaf is left out of the ranking.
    """
    simulator = simulator or Simulator(model)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    start = simulator.simulations

    specs = model.inports
    population = [sample_test_case(specs, rng) for _ in range(config.initial_samples)]
    tree = cluster(features(population, specs), config.enough, rng)
    leaves = tree.leaves()

    # all random choices are drawn up front so batching never changes them
    first = [leaf.members[int(rng.integers(len(leaf.members)))] for leaf in leaves]
    second: list[int | None] = []
    for leaf, rep in zip(leaves, first):
        others = [i for i in leaf.members if i != rep]
        second.append(others[int(rng.integers(len(others)))] if others else None)

    log("gen", f"genclu: {len(population)} samples, {len(leaves)} leaves")

    batch = simulator.run([population[i] for i in first])
    representatives: dict[int, int] = {}
    goals: dict[int, GoalVector] = {}
    retry: list[int] = []

    for n, rep in enumerate(first):
        if batch.faulted(n):
            retry.append(n)
        else:
            representatives[n] = rep
            goals[n] = goal_vector(batch.trace(n), config.rate)

    redraws = [n for n in retry if second[n] is not None]
    if redraws:
        again = simulator.run([population[t.cast(int, second[n])] for n in redraws])
        for pos, n in enumerate(redraws):
            if again.faulted(pos):
                continue
            representatives[n] = t.cast(int, second[n])
            goals[n] = goal_vector(again.trace(pos), config.rate)

    for n in retry:
        if n not in goals:
            log("log", f"genclu: leaf {n} excluded, representative simulations faulted")

    ranked_leaves = sorted(goals)
    if ranked_leaves:
        order = rank([goals[n] for n in ranked_leaves], method=config.ranking)
        winner = ranked_leaves[order[0]]
    else:
        log("err", "genclu: every representative faulted, falling back to the first leaf")
        winner = 0

    best = leaves[winner]
    if len(best.members) != config.enough:
        log("gen", f"genclu: winning leaf holds {len(best.members)} test cases")

    suite = TestSuite(population[i] for i in sorted(best.members))
    budget = Budget(
        simulations=simulator.simulations - start,
        seed=config.seed,
        details={"leaves": len(leaves), "redraws": len(redraws), "leaf_size": len(best.members)},
    )
    return GenCluResult(suite, budget, population, tree, best, representatives, goals)
