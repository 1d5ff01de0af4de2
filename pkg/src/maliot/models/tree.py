"""CART decision tree: Gini impurity, midpoint thresholds, flat node arrays.

The grown tree is stored as five parallel arrays (feature, threshold, left,
right, value) so it serializes to JSON directly and batch prediction can
walk all rows level by level without Python recursion.
"""

from __future__ import annotations

import numpy as np

from .base import TreeConfig, check_width

LEAF = -1


def _gini_best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    features: np.ndarray,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gini) over the candidate features.

    Thresholds are midpoints between adjacent distinct sorted values.
    Ties go to the lower feature index, then to the lower threshold;
    ``features`` must therefore be sorted ascending.
    """
    n = rows.size
    ysub = y[rows].astype(np.float64)
    total_anom = ysub.sum()
    best: tuple[int, float, float] | None = None
    for j in features:
        vals = X[rows, j]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        ca = np.cumsum(ysub[order])
        left_n = np.arange(1, n, dtype=np.float64)
        left_a = ca[:-1]
        right_n = n - left_n
        right_a = total_anom - left_a
        valid = v[1:] != v[:-1]
        if not valid.any():
            continue
        gl = 1.0 - (left_a / left_n) ** 2 - ((left_n - left_a) / left_n) ** 2
        gr = 1.0 - (right_a / right_n) ** 2 - ((right_n - right_a) / right_n) ** 2
        g = (left_n * gl + right_n * gr) / n
        g[~valid] = np.inf
        i = int(np.argmin(g))  # first minimum = lowest threshold
        gi = float(g[i])
        if best is None or gi < best[2]:
            thr = float((v[i] + v[i + 1]) / 2.0)
            best = (int(j), thr, gi)
    return best


class _Builder:
    """Accumulates nodes while growing; order is deterministic (left first)."""

    def __init__(self, X, y, config, rng, n_candidates):
        self.X = X
        self.y = y
        self.config = config
        self.rng = rng
        self.n_candidates = n_candidates  # per-split feature pool size, or None
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        return len(self.feature) - 1

    def grow(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node()
        ysub = self.y[rows]
        anom = int(ysub.sum())
        self.value[node] = anom / rows.size

        pure = anom == 0 or anom == rows.size
        if (
            pure
            or depth >= self.config.max_depth
            or rows.size < self.config.min_samples_split
        ):
            return node

        k = self.X.shape[1]
        if self.n_candidates is None or self.n_candidates >= k:
            features = np.arange(k)
        else:
            features = np.sort(
                self.rng.choice(k, size=self.n_candidates, replace=False)
            )
        split = _gini_best_split(self.X, self.y, rows, features)
        if split is None:
            return node
        j, thr, _ = split
        go_left = self.X[rows, j] <= thr
        self.feature[node] = j
        self.threshold[node] = thr
        self.left[node] = self.grow(rows[go_left], depth + 1)
        self.right[node] = self.grow(rows[~go_left], depth + 1)
        return node


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: TreeConfig,
    rng: np.random.Generator | None = None,
    n_candidates: int | None = None,
) -> dict:
    """Grow one tree and return its flat-array form (no width key)."""
    b = _Builder(X, y, config, rng, n_candidates)
    b.grow(np.arange(X.shape[0]), 0)
    return {
        "feature": np.asarray(b.feature, dtype=np.int64),
        "threshold": np.asarray(b.threshold, dtype=np.float64),
        "left": np.asarray(b.left, dtype=np.int64),
        "right": np.asarray(b.right, dtype=np.int64),
        "value": np.asarray(b.value, dtype=np.float64),
    }


def tree_scores(tree: dict, X: np.ndarray) -> np.ndarray:
    """Leaf anomaly fraction for every row, walking all rows in lockstep."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    while True:
        feat = tree["feature"][node]
        interior = feat >= 0
        if not interior.any():
            break
        r = rows[interior]
        nb = node[interior]
        go_left = X[r, tree["feature"][nb]] <= tree["threshold"][nb]
        node[interior] = np.where(go_left, tree["left"][nb], tree["right"][nb])
    return tree["value"][node]


def fit(X: np.ndarray, y: np.ndarray, config: TreeConfig, seed: int) -> dict:
    del seed  # a single CART fit is fully data-determined
    params = grow_tree(X, y, config)
    params["width"] = int(X.shape[1])
    return params


def score(params: dict, X: np.ndarray) -> np.ndarray:
    check_width(params, X)
    return tree_scores(params, X)


def tree_to_doc(tree: dict) -> dict:
    return {
        "feature": tree["feature"].tolist(),
        "threshold": tree["threshold"].tolist(),
        "left": tree["left"].tolist(),
        "right": tree["right"].tolist(),
        "value": tree["value"].tolist(),
    }


def tree_from_doc(doc: dict) -> dict:
    return {
        "feature": np.asarray(doc["feature"], dtype=np.int64),
        "threshold": np.asarray(doc["threshold"], dtype=np.float64),
        "left": np.asarray(doc["left"], dtype=np.int64),
        "right": np.asarray(doc["right"], dtype=np.int64),
        "value": np.asarray(doc["value"], dtype=np.float64),
    }


def to_doc(params: dict) -> dict:
    d = tree_to_doc(params)
    d["width"] = params["width"]
    return d


def from_doc(doc: dict) -> dict:
    params = tree_from_doc(doc)
    params["width"] = int(doc["width"])
    return params
