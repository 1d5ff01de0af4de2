"""Random forest: vote semantics, bagging determinism, tie fail-open."""

import numpy as np
import pytest

from maliot import models
from maliot.models import ForestConfig, TreeConfig


def _toy(rng, n=120, d=5):
    X = rng.normal(0, 1, size=(n, d))
    y = (X[:, 0] + 0.3 * X[:, 1] > 0).astype(np.int8)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


def test_degenerate_forest_equals_single_tree(rng):
    # one tree, no bootstrap, all features: exactly a CART fit
    X, y = _toy(rng)
    forest = models.train(
        "random_forest", X, y,
        config=ForestConfig(n_trees=1, bootstrap=False, max_features="all"))
    tree = models.train("decision_tree", X, y)
    q = rng.normal(0, 1, size=(300, X.shape[1]))
    tree_labels = models.score_batch(tree, q) >= 0.5
    forest_votes = models.score_batch(forest, q)
    assert set(np.unique(forest_votes)) <= {0.0, 1.0}
    assert np.array_equal(forest_votes == 1.0, tree_labels)


def test_score_is_vote_fraction(rng):
    X, y = _toy(rng)
    m = models.train("random_forest", X, y, config=ForestConfig(n_trees=10))
    s = models.score_batch(m, X)
    assert np.all((s >= 0.0) & (s <= 1.0))
    # votes quantized to tenths
    assert np.allclose(np.round(s * 10), s * 10, atol=1e-12)


def test_seed_determinism(rng):
    X, y = _toy(rng)
    a = models.train("random_forest", X, y, seed=42,
                     config=ForestConfig(n_trees=20))
    b = models.train("random_forest", X, y, seed=42,
                     config=ForestConfig(n_trees=20))
    c = models.train("random_forest", X, y, seed=43,
                     config=ForestConfig(n_trees=20))
    q = rng.normal(0, 1, size=(100, X.shape[1]))
    assert np.array_equal(models.score_batch(a, q), models.score_batch(b, q))
    assert not np.array_equal(models.score_batch(a, q),
                              models.score_batch(c, q))


def test_bootstrap_varies_trees(rng):
    X, y = _toy(rng, n=60)
    m = models.train("random_forest", X, y, seed=1,
                     config=ForestConfig(n_trees=12))
    docs = m.params["trees"]
    assert len(docs) == 12
    assert len({str(t["threshold"]) for t in docs}) > 1


def test_tied_vote_fails_open_to_benign(rng):
    X, y = _toy(rng)
    m = models.train("random_forest", X, y, config=ForestConfig(n_trees=2))
    # drive labels straight from scores: exactly 0.5 must stay benign
    labels = models.labels_from_scores(m, np.array([0.0, 0.5, 0.75, 1.0]))
    assert labels.tolist() == [0, 0, 1, 1]


def test_plain_threshold_is_inclusive_for_trees(rng):
    X, y = _toy(rng)
    tree = models.train("decision_tree", X, y)
    labels = models.labels_from_scores(tree, np.array([0.49, 0.5, 0.51]))
    assert labels.tolist() == [0, 1, 1]


def test_forest_beats_or_matches_stump_on_noise(rng):
    # sanity: bagging should not be catastrophically worse than one tree
    X, y = _toy(rng, n=400)
    noise = rng.normal(0, 1, size=(400, 5))
    Xn = np.hstack([X, noise])
    forest = models.train("random_forest", Xn, y, seed=3,
                          config=ForestConfig(n_trees=30))
    assert models.evaluate(forest, Xn, y).accuracy > 0.9


def test_sqrt_feature_subsampling_recorded(rng):
    X, y = _toy(rng, d=9)
    m = models.train("random_forest", X, y,
                     config=ForestConfig(n_trees=3))
    # subsampled trees can split on any feature; all indices must be valid
    for t in m.params["trees"]:
        feats = [f for f in t["feature"] if f >= 0]
        assert all(0 <= f < 9 for f in feats)


def test_depth_config_propagates(rng):
    X, y = _toy(rng, n=300)
    m = models.train("random_forest", X, y, seed=0,
                     config=ForestConfig(n_trees=5, max_depth=1))
    for t in m.params["trees"]:
        assert len(t["feature"]) <= 3  # root plus two leaves
