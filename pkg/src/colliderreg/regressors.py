"""Base regressors behind a uniform fit/predict contract.

Specs are lightweight factories with ``fit(x, y) -> fitted model``; fitted
models are immutable and predict deterministically on batches.  This is what
lets the two-stage projection plug in any base regressor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import _as_points
from .numerics import RngStream, solve_regularized


def _as_targets(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    return y


# ---------------------------------------------------------------------------
# Kernel ridge regression


@dataclass(frozen=True)
class FittedKrr:
    anchors: np.ndarray
    alpha: np.ndarray
    kernel: object
    lam: float

    def predict(self, points) -> np.ndarray:
        return self.kernel.gram(_as_points(points), self.anchors) @ self.alpha


def krr_fit(x, y, kernel, lam: float) -> FittedKrr:
    """Closed-form ridge fit: alpha = (K + lam I)^{-1} y."""
    x = _as_points(x)
    y = _as_targets(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError("sample counts disagree")
    big_k = kernel.gram(x, x)
    alpha = solve_regularized(big_k, lam, y)
    return FittedKrr(anchors=x, alpha=alpha, kernel=kernel, lam=lam)


def krr_predict(model: FittedKrr, points) -> np.ndarray:
    return model.predict(points)


@dataclass(frozen=True)
class KrrSpec:
    kernel: object
    lam: float

    def fit(self, x, y) -> FittedKrr:
        return krr_fit(x, y, self.kernel, self.lam)


# ---------------------------------------------------------------------------
# Ordinary least squares (with a tiny ridge for rank safety)

_OLS_RIDGE = 1e-8


@dataclass(frozen=True)
class FittedOls:
    weights: np.ndarray
    intercept: float

    def predict(self, points) -> np.ndarray:
        return _as_points(points) @ self.weights + self.intercept


def ols_fit(x, y) -> FittedOls:
    """Minimize ||y - Xw - b||^2 + 1e-8 ||w||^2 (intercept unpenalized)."""
    x = _as_points(x)
    y = _as_targets(y)
    if x.shape[0] == 0:
        raise ValueError("cannot fit on empty data")
    n, d = x.shape
    design = np.hstack([x, np.ones((n, 1))])
    normal = design.T @ design
    normal[:d, :d] += _OLS_RIDGE * np.eye(d)
    coef = np.linalg.solve(normal, design.T @ y)
    return FittedOls(weights=coef[:d], intercept=float(coef[d]))


def ols_predict(model: FittedOls, points) -> np.ndarray:
    return model.predict(points)


@dataclass(frozen=True)
class OlsSpec:
    def fit(self, x, y) -> FittedOls:
        return ols_fit(x, y)


# ---------------------------------------------------------------------------
# Bagged CART regression forest


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True

    def __post_init__(self):
        if (
            self.n_estimators < 1
            or (self.max_depth is not None and self.max_depth < 0)
            or self.min_samples_split < 2
            or self.min_samples_leaf < 1
        ):
            raise ValueError(f"invalid forest hyperparameters: {self}")


@dataclass
class _Tree:
    # Flat node arrays; feature == -1 marks a leaf.
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, points: np.ndarray) -> np.ndarray:
        out = np.empty(points.shape[0])
        stack = [(0, np.arange(points.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            go_left = points[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return out


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exact CART split search: all features, midpoints of sorted uniques.

    Returns (gain, feature, threshold) or None.  Gain is the reduction in
    total squared error; gains within a small tolerance count as ties and
    keep the lowest feature index then the lowest threshold, so the choice
    is deterministic even when mathematically equal gains round differently.
    """
    n = y.shape[0]
    total = y.sum()
    parent_sse = float(np.dot(y, y) - total * total / n)
    tol = 1e-10 * max(1.0, parent_sse)
    best = None
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        # candidate cut after position i (left gets i+1 rows)
        boundary = xs[:-1] < xs[1:]
        if not boundary.any():
            continue
        csum = np.cumsum(ys)[:-1]
        csq = np.cumsum(ys * ys)[:-1]
        left_n = np.arange(1, n)
        right_n = n - left_n
        sse = (
            (csq - csum * csum / left_n)
            + ((csq[-1] + ys[-1] ** 2 - csq) - (total - csum) ** 2 / right_n)
        )
        valid = boundary & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmax(sse <= sse.min() + tol))  # first near-minimum
        gain = parent_sse - float(sse[i])
        if best is None or gain > best[0] + tol:
            thr = 0.5 * (xs[i] + xs[i + 1])
            best = (gain, f, thr)
    return best


def _grow(tree: _Tree, x, y, depth: int, params: ForestParams) -> int:
    node = tree.add_node()
    n = y.shape[0]
    tree.value[node] = float(y.mean())
    if (
        (params.max_depth is not None and depth >= params.max_depth)
        or n < params.min_samples_split
        or np.all(y == y[0])
    ):
        return node
    split = _best_split(x, y, params.min_samples_leaf)
    if split is None or split[0] <= 0.0:
        return node
    _, f, thr = split
    go_left = x[:, f] <= thr
    tree.feature[node] = f
    tree.threshold[node] = thr
    tree.left[node] = _grow(tree, x[go_left], y[go_left], depth + 1, params)
    tree.right[node] = _grow(tree, x[~go_left], y[~go_left], depth + 1, params)
    return node


@dataclass(frozen=True)
class FittedForest:
    trees: tuple[_Tree, ...]
    params: ForestParams

    def predict(self, points) -> np.ndarray:
        points = _as_points(points)
        acc = np.zeros(points.shape[0])
        for tree in self.trees:
            acc += tree.predict(points)
        return acc / len(self.trees)


def forest_fit(x, y, params: ForestParams, rng: RngStream) -> FittedForest:
    """Bagged CART: each tree on a bootstrap resample from its own substream."""
    x = _as_points(x)
    y = _as_targets(y)
    if x.shape[0] == 0:
        raise ValueError("cannot fit on empty data")
    # Canonical row order makes the fit invariant to input row permutation
    # (bootstrap draws index into a sorted copy).
    order = np.lexsort((y,) + tuple(x[:, j] for j in reversed(range(x.shape[1]))))
    x, y = x[order], y[order]
    n = x.shape[0]
    trees = []
    for t in range(params.n_estimators):
        if params.bootstrap:
            idx = rng.substream(t).integers(0, n, size=n)
            xb, yb = x[idx], y[idx]
        else:
            xb, yb = x, y
        tree = _Tree()
        _grow(tree, xb, yb, 0, params)
        trees.append(tree)
    return FittedForest(trees=tuple(trees), params=params)


def forest_predict(model: FittedForest, points) -> np.ndarray:
    return model.predict(points)


@dataclass(frozen=True)
class ForestSpec:
    params: ForestParams
    rng: RngStream

    def fit(self, x, y) -> FittedForest:
        return forest_fit(x, y, self.params, self.rng)
