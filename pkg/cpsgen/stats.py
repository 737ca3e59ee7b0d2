"""
Scott-Knott ranking of treatment groups with a Cliff's delta effect-size
check on every split.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .storage import to_csv
from .utils import log

SMALL_EFFECT = 0.147


def cliffs_delta(c1: t.Sequence[float], c2: t.Sequence[float]) -> float:
    """(#(x > y) - #(x < y)) / (len(c1) * len(c2)) over all pairs."""
    if len(c1) == 0 or len(c2) == 0:
        raise ContractError("cliffs_delta needs two nonempty samples")

    x = np.asarray(c1, dtype=float)[:, np.newaxis]
    y = np.asarray(c2, dtype=float)[np.newaxis, :]
    more = int(np.count_nonzero(x > y))
    less = int(np.count_nonzero(x < y))
    return (more - less) / (len(c1) * len(c2))


def is_significant(delta: float) -> bool:
    return abs(delta) >= SMALL_EFFECT


def expected_delta(c1: t.Sequence[float], c2: t.Sequence[float]) -> float:
    """
    Expected change of the mean when `c1 + c2` is divided into `c1` and `c2`:
    (|c1| * |mean(c1) - mean(c)| + |c2| * |mean(c2) - mean(c)|) / |c|.
    """
    if len(c1) == 0 or len(c2) == 0:
        raise ContractError("expected_delta needs two nonempty parts")

    a = np.asarray(c1, dtype=float)
    b = np.asarray(c2, dtype=float)
    mu = float(np.mean(np.concatenate([a, b])))
    n = len(a) + len(b)
    return (len(a) * abs(float(np.mean(a)) - mu) + len(b) * abs(float(np.mean(b)) - mu)) / n


def median(values: t.Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=float)))


def iqr(values: t.Sequence[float]) -> float:
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75])
    return float(q3 - q1)


@dataclass
class RankedGroups:
    """Named samples with their Scott-Knott ranks, best group first."""

    groups: dict[str, list[float]]
    ranks: dict[str, int] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    maximize: bool = True

    def median(self, name: str) -> float:
        return median(self.groups[name])

    def iqr(self, name: str) -> float:
        return iqr(self.groups[name])

    @property
    def rank_count(self) -> int:
        return max(self.ranks.values(), default=0)

    def best(self) -> list[str]:
        return [name for name in self.order if self.ranks[name] == 1]

    def rows(self) -> list[tuple[str, float, float, int]]:
        return [(name, self.median(name), self.iqr(name), self.ranks[name]) for name in self.order]

    def to_csv(self) -> str:
        return to_csv(["group", "median", "iqr", "rank"], self.rows())

    def __repr__(self):
        return f"<RankedGroups {self.ranks}>"


def scott_knott(
    groups: t.Mapping[str, t.Sequence[float]],
    maximize: bool = True,
) -> RankedGroups:
    """
    Rank `groups` (name -> sample) best first.

    Groups are sorted by median (ties by name), then the sorted list is cut
    where the expected mean change of the flattened halves is largest. A cut
    is kept only when Cliff's delta between the halves is not small; both
    halves are ranked recursively. Uncut lists share one rank.

    Raises:
        ContractError: If a group is empty.
    """
    data: dict[str, list[float]] = {}
    for name, values in groups.items():
        if len(values) == 0:
            raise ContractError(f"group {name!r} is empty")
        data[name] = [float(v) for v in values]

    sign = -1.0 if maximize else 1.0
    order = sorted(data, key=lambda name: (sign * median(data[name]), name))
    result = RankedGroups(groups=data, order=order, maximize=maximize)

    def _recurse(names: list[str], rank: int) -> int:
        """Assign ranks starting at `rank`; return the next free rank."""
        if len(names) < 2:
            for name in names:
                result.ranks[name] = rank
            return rank + 1

        best_cut, best_score = 0, -1.0
        for cut in range(1, len(names)):
            left = [v for name in names[:cut] for v in data[name]]
            right = [v for name in names[cut:] for v in data[name]]
            score = expected_delta(left, right)
            if score > best_score:
                best_cut, best_score = cut, score

        left = [v for name in names[:best_cut] for v in data[name]]
        right = [v for name in names[best_cut:] for v in data[name]]
        delta = cliffs_delta(left, right)

        if not is_significant(delta):
            for name in names:
                result.ranks[name] = rank
            return rank + 1

        log("sts", f"scott-knott: split {names[:best_cut]} | {names[best_cut:]} (delta={delta:.3f})")
        following = _recurse(names[:best_cut], rank)
        return _recurse(names[best_cut:], following)

    _recurse(order, 1)
    return result
