"""Kind-string to implementation-module table used by dispatch and I/O."""

from __future__ import annotations

from . import forest, linear, mlp, naive_bayes, tree


class _LinearLogistic:
    fit = staticmethod(linear.fit_logistic)
    score = staticmethod(linear.score)
    to_doc = staticmethod(linear.to_doc)
    from_doc = staticmethod(linear.from_doc)


class _LinearSvm:
    fit = staticmethod(linear.fit_svm)
    score = staticmethod(linear.score)
    to_doc = staticmethod(linear.to_doc)
    from_doc = staticmethod(linear.from_doc)


KIND_IMPLS = {
    "decision_tree": tree,
    "random_forest": forest,
    "logistic_regression": _LinearLogistic,
    "linear_svm": _LinearSvm,
    "gaussian_nb": naive_bayes,
    "ann": mlp,
}
