"""
Binary (Pareto) domination and continuous domination between goal vectors.

Continuous domination compares two vectors through the exponential loss
Δ(a, b) = Σ_i exp(w_i * (a_i - b_i) / n) computed on goals normalised to
[0, 1]; a is better than b when it loses less, Δ(a, b) < Δ(b, a).
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np

from .antipatterns import GoalVector, MAXIMIZE, MINIMIZE
from .errors import ContractError

MEAN_LOSS = "mean-loss"
TOURNAMENT = "tournament"


@dataclass(frozen=True)
class DominationContext:
    directions: tuple[int, ...]
    normalization: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.directions) != len(self.normalization):
            raise ContractError("domination context needs one normalisation per goal")
        if any(w not in (MAXIMIZE, MINIMIZE) for w in self.directions):
            raise ContractError("goal weights must be 1 (minimize) or -1 (maximize)")
        if any(lo > hi for lo, hi in self.normalization):
            raise ContractError("normalisation bounds must satisfy lo <= hi")

    @property
    def n(self) -> int:
        return len(self.directions)

    @classmethod
    def from_population(
        cls,
        vectors: t.Sequence[GoalVector],
        directions: t.Sequence[int] | None = None,
    ) -> DominationContext:
        """Per-goal min/max over `vectors`; directions default to theirs."""
        if len(vectors) == 0:
            raise ContractError("cannot build a domination context from no vectors")

        matrix = _matrix(vectors)
        if directions is None:
            directions = vectors[0].directions

        return cls(
            directions=tuple(int(w) for w in directions),
            normalization=tuple(
                (float(lo), float(hi)) for lo, hi in zip(matrix.min(axis=0), matrix.max(axis=0))
            ),
        )

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """Map raw goals to [0, 1] per goal; degenerate goals (lo = hi) map to 0."""
        lo = np.array([b[0] for b in self.normalization])
        hi = np.array([b[1] for b in self.normalization])
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (values - lo) / safe, 0.0)

    @property
    def weights(self) -> np.ndarray:
        return np.array(self.directions, dtype=float)


def _matrix(vectors: t.Sequence[GoalVector]) -> np.ndarray:
    sizes = {len(v) for v in vectors}
    if len(sizes) != 1:
        raise ContractError(f"goal vectors have mixed lengths {sorted(sizes)}")
    return np.array([v.values for v in vectors], dtype=float)


def _check(a: GoalVector, b: GoalVector, ctx: DominationContext):
    if len(a) != ctx.n or len(b) != ctx.n:
        raise ContractError(
            f"goal vectors of length {len(a)} and {len(b)} do not match context of {ctx.n}"
        )


def zitzler_loss(a: GoalVector, b: GoalVector, ctx: DominationContext) -> float:
    """
    How much `a` loses against `b`: Σ_i exp(w_i * (â_i - b̂_i) / n).

    Raises:
        ContractError: If the vectors and the context disagree in length.
    """
    _check(a, b, ctx)
    na = ctx.normalize(a.as_array())
    nb = ctx.normalize(b.as_array())
    return float(np.sum(np.exp(ctx.weights * (na - nb) / ctx.n)))


def better(a: GoalVector, b: GoalVector, ctx: DominationContext) -> bool:
    return zitzler_loss(a, b, ctx) < zitzler_loss(b, a, ctx)


def binary_dominates(a: GoalVector, b: GoalVector, ctx: DominationContext) -> bool:
    """No goal of `a` is worse than `b`'s, and at least one is strictly better."""
    _check(a, b, ctx)
    wa = ctx.weights * a.as_array()
    wb = ctx.weights * b.as_array()
    return bool(np.all(wa <= wb) and np.any(wa < wb))


def loss_matrix(candidates: t.Sequence[GoalVector], ctx: DominationContext) -> np.ndarray:
    """Δ(x, y) for every ordered pair of candidates, shaped (m, m)."""
    normalized = ctx.normalize(_matrix(candidates))
    if normalized.shape[1] != ctx.n:
        raise ContractError("candidates do not match the domination context")
    diff = normalized[:, np.newaxis, :] - normalized[np.newaxis, :, :]
    return np.sum(np.exp(ctx.weights * diff / ctx.n), axis=2)


def rank_scores(candidates: t.Sequence[GoalVector], ctx: DominationContext) -> np.ndarray:
    """Mean loss of each candidate against all others; lower is better."""
    m = len(candidates)
    if m == 1:
        return np.zeros(1)
    losses = loss_matrix(candidates, ctx)
    return (losses.sum(axis=1) - np.diag(losses)) / (m - 1)


def rank(
    candidates: t.Sequence[GoalVector],
    ctx: DominationContext | None = None,
    method: str = MEAN_LOSS,
) -> list[int]:
    """
    Order candidate indices best first.

    With the default `mean-loss` method candidates are sorted by their mean
    pairwise loss; `tournament` sorts by the number of pairwise `better`
    wins instead. Ties keep input order.
    """
    if len(candidates) == 0:
        raise ContractError("cannot rank an empty candidate list")

    if ctx is None:
        ctx = DominationContext.from_population(candidates)

    if method == MEAN_LOSS:
        scores = rank_scores(candidates, ctx)
        return sorted(range(len(candidates)), key=lambda i: (scores[i], i))

    if method == TOURNAMENT:
        losses = loss_matrix(candidates, ctx)
        wins = (losses < losses.T).sum(axis=1)
        return sorted(range(len(candidates)), key=lambda i: (-wins[i], i))

    raise ContractError(f"unknown ranking method {method!r}")
