"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .graph import AttributedGraph
from .metrics import ScoreMatrix


def check_graph(g) -> AttributedGraph:
    if not isinstance(g, AttributedGraph):
        raise TypeError(f"expected an AttributedGraph, got {type(g).__name__}")
    return g


def check_hop(k, name: str = "k") -> int:
    if isinstance(k, bool) or not isinstance(k, numbers.Integral) or k < 1:
        raise ValueError(f"{name} must be a positive integer, got {k!r}")
    return int(k)


def check_score_matrix(scores, n: int) -> ScoreMatrix:
    """Accept a ScoreMatrix or a dense n x n array of scores in [0, 1].

    A dense array covers every off-diagonal pair.
    """
    if isinstance(scores, ScoreMatrix):
        if scores.n != n:
            raise ValueError(f"score matrix is for {scores.n} nodes, graph has {n}")
        return scores
    p = check_array(scores, dtype=float, ensure_all_finite=True)
    if p.shape != (n, n):
        raise ValueError(f"expected a {n} x {n} score array, got {p.shape}")
    off = ~np.eye(n, dtype=bool)
    if p[off].size and (p[off].min() < 0 or p[off].max() > 1):
        raise ValueError("scores must lie in [0, 1]")
    return ScoreMatrix.from_dense(p)
