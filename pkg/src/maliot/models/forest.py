"""Random forest: bagged CART trees with per-split feature subsampling."""

from __future__ import annotations

import math

import numpy as np

from . import tree
from .base import ForestConfig, TreeConfig, check_width


def _n_candidates(width: int, max_features: str) -> int | None:
    if max_features == "all":
        return None
    if max_features == "sqrt":
        return max(1, int(round(math.sqrt(width))))
    raise ValueError(f"unknown max_features {max_features!r}")


def fit(X: np.ndarray, y: np.ndarray, config: ForestConfig, seed: int) -> dict:
    """Train ``n_trees`` CARTs on bootstrap resamples.

    Every tree gets its own spawned bit generator, so the forest is
    reproducible from the master seed alone and trees could in principle be
    grown in any order (each stream is independent).
    """
    n, width = X.shape
    tree_cfg = TreeConfig(
        max_depth=config.max_depth, min_samples_split=config.min_samples_split
    )
    n_cand = _n_candidates(width, config.max_features)
    children = np.random.SeedSequence(seed).spawn(config.n_trees)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        if config.bootstrap:
            rows = rng.integers(0, n, size=n)
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        trees.append(tree.grow_tree(Xb, yb, tree_cfg, rng=rng, n_candidates=n_cand))
    return {
        "width": int(width),
        "tie_break": config.tie_break,
        "trees": trees,
    }


def score(params: dict, X: np.ndarray) -> np.ndarray:
    """Fraction of trees voting anomaly."""
    check_width(params, X)
    votes = np.zeros(X.shape[0], dtype=np.float64)
    for t in params["trees"]:
        votes += tree.tree_scores(t, X) >= 0.5
    return votes / len(params["trees"])


def to_doc(params: dict) -> dict:
    return {
        "width": params["width"],
        "tie_break": params["tie_break"],
        "trees": [tree.tree_to_doc(t) for t in params["trees"]],
    }


def from_doc(doc: dict) -> dict:
    return {
        "width": int(doc["width"]),
        "tie_break": str(doc["tie_break"]),
        "trees": [tree.tree_from_doc(t) for t in doc["trees"]],
    }
