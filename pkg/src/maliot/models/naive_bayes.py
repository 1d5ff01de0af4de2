"""Gaussian naive Bayes with per-class feature means and variances."""

from __future__ import annotations

import numpy as np

from .base import GnbConfig, check_width


def fit(X: np.ndarray, y: np.ndarray, config: GnbConfig, seed: int) -> dict:
    """Estimate per-class Gaussians.  Tolerates single-class data.

    Variances are population variances with a floor applied so a constant
    feature cannot produce a zero-width Gaussian.
    """
    del seed  # closed-form fit, nothing stochastic
    classes = sorted(int(c) for c in np.unique(y))
    n = y.shape[0]
    means = []
    variances = []
    priors = []
    for c in classes:
        rows = X[y == c]
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), config.var_floor))
        priors.append(rows.shape[0] / n)
    return {
        "width": int(X.shape[1]),
        "classes": classes,
        "priors": np.asarray(priors, dtype=np.float64),
        "means": np.vstack(means),
        "variances": np.vstack(variances),
    }


def score(params: dict, X: np.ndarray) -> np.ndarray:
    """Posterior probability of the anomaly class for each row."""
    check_width(params, X)
    classes = params["classes"]
    if len(classes) == 1:
        p = 1.0 if classes[0] == 1 else 0.0
        return np.full(X.shape[0], p, dtype=np.float64)

    # Joint log-likelihood per class, then a two-way softmax.
    loglik = np.empty((X.shape[0], 2), dtype=np.float64)
    for i in range(2):
        mu = params["means"][i]
        var = params["variances"][i]
        quad = np.sum((X - mu) ** 2 / var, axis=1)
        norm = np.sum(np.log(2.0 * np.pi * var))
        loglik[:, i] = np.log(params["priors"][i]) - 0.5 * (norm + quad)
    # classes is sorted, so column index of class 1 is last
    shift = loglik.max(axis=1, keepdims=True)
    w = np.exp(loglik - shift)
    return w[:, classes.index(1)] / w.sum(axis=1)


def to_doc(params: dict) -> dict:
    return {
        "width": params["width"],
        "classes": list(params["classes"]),
        "priors": params["priors"].tolist(),
        "means": params["means"].tolist(),
        "variances": params["variances"].tolist(),
    }


def from_doc(doc: dict) -> dict:
    return {
        "width": int(doc["width"]),
        "classes": [int(c) for c in doc["classes"]],
        "priors": np.asarray(doc["priors"], dtype=np.float64),
        "means": np.asarray(doc["means"], dtype=np.float64),
        "variances": np.asarray(doc["variances"], dtype=np.float64),
    }
