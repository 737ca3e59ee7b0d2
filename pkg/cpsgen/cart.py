from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError


@dataclass
class RegressionTreeNode:
    mean: float
    count: int
    feature: int | None = None
    threshold: float | None = None
    left: RegressionTreeNode | None = None
    right: RegressionTreeNode | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def predict_one(self, x: np.ndarray) -> float:
        node = self
        while node.left is not None and node.right is not None:
            assert node.feature is not None and node.threshold is not None
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.mean

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(x) for x in np.asarray(X, dtype=float)])

    def leaves(self) -> list[RegressionTreeNode]:
        if self.left is None or self.right is None:
            return [self]
        return self.left.leaves() + self.right.leaves()


def _sse(y: np.ndarray) -> float:
    return float(np.sum((y - np.mean(y)) ** 2))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float, float] | None:
    n, dims = X.shape
    parent = _sse(y)
    best: tuple[int, float, float] | None = None

    for feature in range(dims):
        order = np.argsort(X[:, feature], kind="stable")
        xs = X[order, feature]
        ys = y[order]

        csum = np.cumsum(ys)
        csq = np.cumsum(ys**2)
        total, total_sq = csum[-1], csq[-1]

        for i in range(min_leaf, n - min_leaf + 1):
            # left = first i items
            if xs[i - 1] == xs[i]:
                continue
            left = csq[i - 1] - csum[i - 1] ** 2 / i
            right = (total_sq - csq[i - 1]) - (total - csum[i - 1]) ** 2 / (n - i)
            gain = parent - (left + right)
            if best is None or gain > best[2] + 1e-12:
                threshold = float((xs[i - 1] + xs[i]) / 2)
                # adjacent floats can round the midpoint up onto the right side
                if threshold >= xs[i]:
                    threshold = float(xs[i - 1])
                best = (feature, threshold, float(gain))

    if best is None or best[2] <= 1e-12:
        return None
    return best


def fit_regression_tree(
    features: np.ndarray,
    targets: np.ndarray,
    min_leaf: int = 2,
) -> RegressionTreeNode:
    """
    Fit a CART regression tree: every split picks the feature and threshold
    that most reduce the squared error, and no leaf holds fewer than
    `min_leaf` samples. Left children hold feature <= threshold.

    Raises:
        ConfigurationError: If there are fewer samples than `min_leaf`.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)

    if X.ndim != 2 or len(X) != len(y):
        raise ContractError("features must be (n, d) with one target per row")
    if min_leaf < 1 or len(y) < min_leaf:
        raise ConfigurationError(f"need at least min_leaf={min_leaf} samples, got {len(y)}")

    return _fit(X, y, min_leaf)


def _fit(X: np.ndarray, y: np.ndarray, min_leaf: int) -> RegressionTreeNode:
    node = RegressionTreeNode(mean=float(np.mean(y)), count=len(y))

    if len(y) < 2 * min_leaf or np.all(y == y[0]):
        return node

    best = _best_split(X, y, min_leaf)
    if best is None:
        return node

    feature, threshold, _ = best
    mask = X[:, feature] <= threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _fit(X[mask], y[mask], min_leaf)
    node.right = _fit(X[~mask], y[~mask], min_leaf)
    return node


def tree_mse(tree: RegressionTreeNode, features: np.ndarray, targets: np.ndarray) -> float:
    y = np.asarray(targets, dtype=float)
    return float(np.mean((tree.predict(features) - y) ** 2))
