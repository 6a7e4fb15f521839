"""scikit-learn style wrappers around measurement and mitigation.

Estimators take an ``AttributedGraph`` as ``X``. Hyperparameters live in
``__init__`` untouched, learned state in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .khop import khop_index, meaningful_hops
from .losses import RelaxationConfig
from .metrics import ScoreMatrix, assortativity, nb
from .mitigate import post_process, pre_process_continuous, rewire_add_edges
from .validation import check_graph, check_hop, check_score_matrix


class _RelaxedMixin:
    def _cfg(self) -> RelaxationConfig:
        return RelaxationConfig(beta=self.beta, tau=self.tau, temp=self.temp)


class KHopBiasProfile(BaseEstimator, TransformerMixin):
    """Structural bias at every meaningful hop.

    ``fit`` fixes the hop set on the training graph; ``transform`` returns
    one row of NB values per graph (NaN where undefined).
    """

    def __init__(self, threshold=0.5):
        self.threshold = threshold

    def fit(self, X, y=None):
        g = check_graph(X)
        self.hops_ = tuple(meaningful_hops(g, self.threshold))
        self.nb_ = {k: _nan_if_undefined(g, k) for k in self.hops_}
        try:
            self.assortativity_ = assortativity(g)
        except ValueError:
            self.assortativity_ = float("nan")
        return self

    def transform(self, X):
        check_is_fitted(self, "hops_")
        graphs = [X] if not isinstance(X, (list, tuple)) else X
        return np.array([[_nan_if_undefined(check_graph(g), k) for k in self.hops_] for g in graphs])


def _nan_if_undefined(g, k):
    try:
        return nb(g, k)
    except ValueError:
        return float("nan")


class KHopFairPostProcessor(_RelaxedMixin, BaseEstimator, TransformerMixin):
    """Learns a perturbation of k-hop pair scores that narrows the fairness gap.

    ``fit(graph, scores)`` trains on the training graph; ``transform(scores)``
    applies the learned perturbation to the distance-k pairs of that graph and
    leaves every other score unchanged. Dense arrays in give dense arrays out.
    """

    def __init__(self, k=1, alpha=0.0, epochs=500, lr=0.01, eval_every=10,
                 beta=20.0, tau=0.5, temp=0.01, seed=0):
        self.k = k
        self.alpha = alpha
        self.epochs = epochs
        self.lr = lr
        self.eval_every = eval_every
        self.beta = beta
        self.tau = tau
        self.temp = temp
        self.seed = seed

    def fit(self, X, y=None):
        g = check_graph(X)
        k = check_hop(self.k)
        if y is None:
            raise ValueError("fit needs the score matrix as y")
        scores = check_score_matrix(y, g.n)
        self.result_ = post_process(g, k, scores, self.alpha, epochs=self.epochs, lr=self.lr,
                                    cfg=self._cfg(), seed=self.seed, eval_every=self.eval_every)
        self.mask_ = khop_index(g, k).pairs
        self.perturbation_ = self.result_.perturbation
        self.n_nodes_ = g.n
        return self

    def transform(self, X):
        check_is_fitted(self, "perturbation_")
        dense = not isinstance(X, ScoreMatrix)
        scores = check_score_matrix(X, self.n_nodes_)
        base = scores.restrict(self.mask_).toarray()
        out = scores.replace_on(self.mask_, np.clip(base + self.perturbation_, 0.0, 1.0))
        if dense:
            res = np.array(X, dtype=float, copy=True)
            m = self.mask_.toarray().astype(bool)
            res[m] = out.to_dense(fill=0.0)[m]
            return res
        return out

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(y)


class EdgeAdditionRewirer(_RelaxedMixin, BaseEstimator, TransformerMixin):
    """Greedy gradient-guided edge addition against k-hop structural bias."""

    def __init__(self, k=1, budget=100, beta=20.0, tau=0.5, temp=0.01):
        self.k = k
        self.budget = budget
        self.beta = beta
        self.tau = tau
        self.temp = temp

    def fit(self, X, y=None):
        g = check_graph(X)
        self.result_ = rewire_add_edges(g, check_hop(self.k), budget=self.budget, cfg=self._cfg())
        self.added_edges_ = list(self.result_.added_edges)
        self.status_ = self.result_.status
        return self

    def transform(self, X):
        check_is_fitted(self, "added_edges_")
        g = check_graph(X)
        if not self.added_edges_:
            return g
        return g.with_edges(np.r_[g.edges, np.array(self.added_edges_)])


class ContinuousRewirer(_RelaxedMixin, BaseEstimator, TransformerMixin):
    """Weighted adjacency optimized against the relaxed k-hop structural bias.

    ``transform`` returns the learned dense adjacency for the fitted graph.
    """

    def __init__(self, k=1, alpha=0.0, epochs=500, lr=0.01, box01=True, symmetric=True,
                 support_only=False, eval_every=10, beta=20.0, tau=0.5, temp=0.01, seed=0):
        self.k = k
        self.alpha = alpha
        self.epochs = epochs
        self.lr = lr
        self.box01 = box01
        self.symmetric = symmetric
        self.support_only = support_only
        self.eval_every = eval_every
        self.beta = beta
        self.tau = tau
        self.temp = temp
        self.seed = seed

    def fit(self, X, y=None):
        g = check_graph(X)
        self.result_ = pre_process_continuous(
            g, check_hop(self.k), self.alpha, box01=self.box01, symmetric=self.symmetric,
            support_only=self.support_only, epochs=self.epochs, lr=self.lr, cfg=self._cfg(),
            seed=self.seed, eval_every=self.eval_every)
        self.adjacency_ = self.result_.final_adjacency
        self.n_nodes_ = g.n
        return self

    def transform(self, X):
        check_is_fitted(self, "adjacency_")
        g = check_graph(X)
        if g.n != self.n_nodes_:
            raise ValueError("graph differs from the one the rewirer was fitted on")
        return self.adjacency_.copy()
