import numpy as np
import pytest

from cpsgen.antipatterns import MAXIMIZE, MINIMIZE, GoalVector
from cpsgen.domination import (
    TOURNAMENT,
    DominationContext,
    better,
    binary_dominates,
    loss_matrix,
    rank,
    rank_scores,
    zitzler_loss,
)
from cpsgen.errors import ContractError


def _pair(rng: np.random.Generator) -> tuple[GoalVector, GoalVector]:
    n = int(rng.integers(2, 9))
    directions = tuple(int(d) for d in rng.choice([MAXIMIZE, MINIMIZE], n))
    a = rng.integers(0, 4, n).astype(float)
    b = rng.integers(0, 4, n).astype(float)
    return GoalVector(tuple(a), directions), GoalVector(tuple(b), directions)


def test_binary_dominance_implies_better():
    rng = np.random.default_rng(2024)
    dominated = 0

    for _ in range(10_000):
        a, b = _pair(rng)
        ctx = DominationContext.from_population([a, b])

        if binary_dominates(a, b, ctx):
            dominated += 1
            assert better(a, b, ctx)
        assert not (better(a, b, ctx) and better(b, a, ctx))
        assert not better(a, a, ctx)

    # small integer goals make dominance frequent enough to mean something
    assert dominated > 500


def test_loss_of_equal_vectors_is_goal_count():
    v = GoalVector.maximizing([1.0, 2.0, 3.0])
    ctx = DominationContext.from_population([v])

    assert zitzler_loss(v, v, ctx) == pytest.approx(3.0)


def test_degenerate_goals_normalize_to_zero():
    ctx = DominationContext.from_population(
        [GoalVector.maximizing([1.0, 5.0]), GoalVector.maximizing([3.0, 5.0])]
    )

    assert list(ctx.normalize(np.array([2.0, 5.0]))) == [0.5, 0.0]


def test_maximizing_goals_prefer_larger_values():
    low = GoalVector.maximizing([0.0, 0.0])
    high = GoalVector.maximizing([1.0, 1.0])
    ctx = DominationContext.from_population([low, high])

    assert better(high, low, ctx)
    assert binary_dominates(high, low, ctx)
    assert not binary_dominates(low, high, ctx)


def test_rank_puts_dominating_candidate_first():
    candidates = [
        GoalVector.maximizing([1.0, 1.0, 0.0]),
        GoalVector.maximizing([5.0, 5.0, 5.0]),
        GoalVector.maximizing([0.0, 2.0, 1.0]),
    ]

    assert rank(candidates)[0] == 1
    assert rank(candidates, method=TOURNAMENT)[0] == 1

    scores = rank_scores(candidates, DominationContext.from_population(candidates))
    assert int(np.argmin(scores)) == 1


def test_rank_ties_keep_input_order():
    same = [GoalVector.maximizing([2.0, 2.0]) for _ in range(3)]

    assert rank(same) == [0, 1, 2]
    assert rank(same, method=TOURNAMENT) == [0, 1, 2]


def test_single_candidate():
    only = [GoalVector.maximizing([1.0])]

    assert rank(only) == [0]
    assert list(rank_scores(only, DominationContext.from_population(only))) == [0.0]


def test_loss_matrix_diagonal():
    candidates = [GoalVector.maximizing([float(i), float(-i)]) for i in range(4)]
    ctx = DominationContext.from_population(candidates)
    losses = loss_matrix(candidates, ctx)

    assert losses.shape == (4, 4)
    assert np.allclose(np.diag(losses), 2.0)


def test_contract_errors():
    a = GoalVector.maximizing([1.0, 2.0])
    b = GoalVector.maximizing([1.0, 2.0, 3.0])
    ctx = DominationContext.from_population([a])

    with pytest.raises(ContractError):
        zitzler_loss(a, b, ctx)
    with pytest.raises(ContractError):
        rank([])
    with pytest.raises(ContractError):
        rank([a, a], method="borda")
    with pytest.raises(ContractError):
        DominationContext((MAXIMIZE,), ((2.0, 1.0),))
