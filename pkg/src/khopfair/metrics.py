"""Exposure, k-hop fairness and structural bias, plus the dyadic baselines.

Passing ``scores=None`` to any exposure function selects indicator mode: every
pair at distance k gets score 1, which turns the fairness gap NF into the
structural bias NB.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .exceptions import DomainGapError, GraphFormatError, MetricUndefinedError
from .graph import AttributedGraph, _as_lines, _records
from .khop import KHopIndex, khop_index, khop_levels

logger = logging.getLogger(__name__)


class ScoreMatrix:
    """Pairwise link scores in [0, 1] with an explicit domain.

    The domain is the set of ordered pairs that carry a score; a score of 0 is
    different from a missing score. With ``symmetric=True`` every ``(i, j)``
    entry also sets ``(j, i)``. Later duplicates overwrite earlier ones.
    """

    def __init__(self, n: int, rows, cols, values, symmetric: bool = False):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols and values must have equal length")
        if values.size:
            if not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1:
                raise ValueError("scores must lie in [0, 1]")
            if rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n:
                raise ValueError("score pair out of range")
        if np.any(rows == cols):
            raise ValueError("diagonal pairs cannot carry a score")
        if symmetric:
            rows, cols = np.r_[rows, cols], np.r_[cols, rows]
            values = np.r_[values, values]
        keys = rows * n + cols
        # last occurrence wins
        _, last = np.unique(keys[::-1], return_index=True)
        keep = np.sort(len(keys) - 1 - last)
        rows, cols, values = rows[keep], cols[keep], values[keep]
        self.n = n
        self.symmetric = bool(symmetric)
        self.values = sp.csr_matrix((values, (rows, cols)), shape=(n, n))
        self.values.sort_indices()
        self.domain = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
        self.domain.sort_indices()

    @classmethod
    def from_dense(cls, p, mask=None, symmetric: bool = False) -> "ScoreMatrix":
        """All off-diagonal entries of ``p`` (or those selected by ``mask``)."""
        p = np.asarray(p, dtype=float)
        n = p.shape[0]
        sel = ~np.eye(n, dtype=bool)
        if mask is not None:
            sel &= np.asarray(mask, dtype=bool)
        r, c = np.nonzero(sel)
        return cls(n, r, c, p[r, c], symmetric=symmetric)

    @classmethod
    def from_graph(cls, g: AttributedGraph) -> "ScoreMatrix":
        """Indicator of the graph's edges, defined on the edges only."""
        e = g.edges
        return cls(g.n, e[:, 0], e[:, 1], np.ones(g.m), symmetric=not g.directed)

    @property
    def nnz(self) -> int:
        return int(self.domain.nnz)

    def triplets(self):
        """Sorted ``(i, j, score)`` rows over the whole domain."""
        d = self.domain.tocoo()
        vals = self.lookup(list(zip(d.row, d.col))) if d.nnz else np.array([])
        order = np.lexsort((d.col, d.row))
        return [(int(d.row[o]), int(d.col[o]), float(vals[o])) for o in order]

    def covers(self, pattern) -> bool:
        pattern = sp.csr_matrix(pattern)
        return (pattern - pattern.multiply(self.domain)).nnz == 0 if pattern.nnz else True

    def _check_covers(self, pattern):
        gap = sp.csr_matrix(pattern) - sp.csr_matrix(pattern).multiply(self.domain)
        gap.eliminate_zeros()
        if gap.nnz:
            c = gap.tocoo()
            first = np.lexsort((c.col, c.row))[0]
            raise DomainGapError(int(c.row[first]), int(c.col[first]))

    def restrict(self, pattern) -> sp.csr_matrix:
        """Scores on the nonzero pattern of ``pattern``; raises on a domain gap."""
        pattern = sp.csr_matrix(pattern)
        self._check_covers(pattern)
        h = self.values.multiply(pattern.astype(bool)).tocsr()
        h.sort_indices()
        return h

    def lookup(self, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if not pairs.size:
            return np.array([])
        r, c = pairs[:, 0], pairs[:, 1]
        present = np.asarray(self.domain[r, c]).ravel()
        if not present.all():
            i = int(np.flatnonzero(~present.astype(bool))[0])
            raise DomainGapError(int(r[i]), int(c[i]))
        return np.asarray(self.values[r, c]).ravel().astype(float)

    def get(self, i: int, j: int) -> float:
        return float(self.lookup([(i, j)])[0])

    def to_dense(self, fill: Optional[float] = None) -> np.ndarray:
        """Dense matrix; pairs outside the domain take ``fill`` (error if None)."""
        if fill is None:
            off = ~np.eye(self.n, dtype=bool)
            dom = self.domain.toarray().astype(bool)
            if not dom[off].all():
                r, c = np.argwhere(off & ~dom)[0]
                raise DomainGapError(int(r), int(c))
            fill = 0.0
        out = np.full((self.n, self.n), float(fill))
        out[np.eye(self.n, dtype=bool)] = 0.0
        d = self.domain.tocoo()
        out[d.row, d.col] = np.asarray(self.values[d.row, d.col]).ravel()
        return out

    def replace_on(self, pattern, dense_values) -> "ScoreMatrix":
        """Copy with entries on ``pattern`` taken from ``dense_values``.

        Every other entry, and the domain, are carried over unchanged.
        """
        pattern = sp.csr_matrix(pattern)
        self._check_covers(pattern)
        d = self.domain.tocoo()
        vals = np.asarray(self.values[d.row, d.col]).ravel().astype(float)
        on = np.asarray(pattern[d.row, d.col]).ravel() != 0
        vals[on] = np.asarray(dense_values)[d.row[on], d.col[on]]
        return ScoreMatrix(self.n, d.row, d.col, vals)

    def __repr__(self):
        return f"ScoreMatrix(n={self.n}, pairs={self.nnz})"


def load_scores(g: AttributedGraph, source, symmetric: Optional[bool] = None) -> ScoreMatrix:
    """Parse ``"i j score"`` triplet lines keyed by original node ids."""
    if symmetric is None:
        symmetric = not g.directed
    index = {int(v): k for k, v in enumerate(g.node_ids)}
    rows, cols, vals = [], [], []
    for lineno, tok in _records(_as_lines(source)):
        if len(tok) != 3:
            raise GraphFormatError(f"score line {lineno}: expected 'i j score'")
        try:
            i, j, s = index[int(tok[0])], index[int(tok[1])], float(tok[2])
        except (KeyError, ValueError):
            raise GraphFormatError(f"score line {lineno}: unknown node or malformed score") from None
        if not 0 <= s <= 1:
            raise GraphFormatError(f"score line {lineno}: score {s} outside [0, 1]")
        if i == j:
            raise GraphFormatError(f"score line {lineno}: diagonal pair")
        rows.append(i)
        cols.append(j)
        vals.append(s)
    return ScoreMatrix(g.n, rows, cols, vals, symmetric=symmetric)


def format_scores(g: AttributedGraph, scores: ScoreMatrix) -> str:
    ids = g.node_ids
    return "".join(f"{ids[i]} {ids[j]} {s!r}\n" for i, j, s in scores.triplets())


@dataclass
class ExposureTable:
    """Per-node exposures and the group-to-group exposure matrix at hop k.

    ``f`` is n x g with NaN rows for nodes whose exposure is undefined;
    ``phi[s, t]`` averages ``f[v, t]`` over the defined nodes of group ``s``
    and is NaN for groups without any.
    """

    k: int
    f: np.ndarray
    phi: np.ndarray
    group_counts: np.ndarray
    undefined_groups: list = field(default_factory=list)

    @property
    def per_node_f(self) -> dict:
        ok = ~np.isnan(self.f[:, 0]) if self.f.size else np.array([], bool)
        return {int(v): self.f[v] for v in np.flatnonzero(ok)}

    @property
    def defined_groups(self) -> np.ndarray:
        return np.flatnonzero(self.group_counts > 0)


def _resolve_index(g, k, idx, method) -> KHopIndex:
    if idx is None:
        return khop_index(g, k, method=method)
    if idx.k != k:
        raise ValueError(f"index is for k={idx.k}, not {k}")
    return idx


def _walk_weights(g: AttributedGraph, idx: KHopIndex) -> sp.csr_matrix:
    # sum over length-k walks of the product of edge weights, kept on the distance-k pairs
    a = g.adjacency.astype(float)
    power = a
    for _ in range(idx.k - 1):
        power = power @ a
    return power.multiply(idx.pairs.astype(bool)).tocsr()


def _onehot(groups: np.ndarray, g: int) -> sp.csr_matrix:
    n = groups.shape[0]
    return sp.csr_matrix((np.ones(n), (np.arange(n), groups)), shape=(n, g))


def _flow(g, idx, scores, weighted):
    """Score mass (n x n sparse) and normalizer per node at hop k."""
    if weighted:
        w = _walk_weights(g, idx)
        h = w if scores is None else w.multiply(scores.restrict(idx.pairs)).tocsr()
        return h, np.asarray(w.sum(axis=1)).ravel()
    pattern = idx.pairs.astype(float)
    h = pattern if scores is None else scores.restrict(idx.pairs)
    return h, idx.sizes.astype(float)


def node_exposure(g: AttributedGraph, idx: KHopIndex, scores: Optional[ScoreMatrix], v: int,
                  weighted: bool = False) -> np.ndarray:
    """Exposure of node ``v`` toward every group among its k-hop neighbors.

    Evaluated directly from the neighbor list, one pair at a time.
    """
    nbrs = idx.neighbors(v)
    if nbrs.size == 0:
        raise MetricUndefinedError(f"empty k-neighborhood for node {v} at k={idx.k}")
    if weighted:
        w = _walk_weights(g, idx)
        wv = np.asarray(w[v, nbrs].todense()).ravel()
    else:
        wv = np.ones(nbrs.size)
    if scores is None:
        h = np.ones(nbrs.size)
    else:
        h = scores.lookup([(v, u) for u in nbrs])
    out = np.zeros(g.n_groups)
    for u, hu, wu in zip(nbrs, h, wv):
        out[g.groups[u]] += hu * wu
    return out / wv.sum()


def group_exposure(g: AttributedGraph, idx: Optional[KHopIndex] = None,
                   scores: Optional[ScoreMatrix] = None, k: Optional[int] = None,
                   weighted: bool = False, normalizer: str = "count",
                   method: str = "bfs") -> ExposureTable:
    """Group-to-group exposure at hop k via sparse indicator products.

    ``normalizer="count"`` divides by the neighborhood size (or total walk
    weight when ``weighted``). ``"presence"`` divides by the number of groups
    with positive mass in the neighborhood instead; it is kept for auditing
    and is not what the fairness definitions use.
    """
    if idx is None:
        if k is None:
            raise ValueError("pass either idx or k")
        idx = khop_index(g, k, method=method)
    ng = g.n_groups
    h, total = _flow(g, idx, scores, weighted)
    psi = np.asarray((h @ _onehot(g.groups, ng)).todense()) if ng else np.zeros((g.n, 0))
    if normalizer == "count":
        lam = total
    elif normalizer == "presence":
        lam = (psi > 0).sum(axis=1).astype(float)
    else:
        raise ValueError(f"unknown normalizer {normalizer!r}")
    ok = (lam > 0) & (idx.sizes > 0)
    f = np.full((g.n, ng), np.nan)
    f[ok] = psi[ok] / lam[ok, None]

    counts = np.bincount(g.groups[ok], minlength=ng)
    sums = np.asarray(_onehot(g.groups[ok], ng).T @ f[ok])
    phi = np.full((ng, ng), np.nan)
    has = counts > 0
    phi[has] = sums[has] / counts[has, None]
    undefined = [int(s) for s in np.flatnonzero(~has)]
    return ExposureTable(idx.k, f, phi, counts, undefined)


def _gap(table: ExposureTable) -> float:
    defined = table.defined_groups
    if defined.size < 2:
        raise MetricUndefinedError(
            f"fewer than 2 groups have a nonempty {table.k}-hop neighborhood"
        )
    if table.undefined_groups:
        logger.warning("k=%d: groups %s have no node with a k-neighborhood; excluded",
                       table.k, table.undefined_groups)
    phi = table.phi[defined]
    return float((phi.max(axis=0) - phi.min(axis=0)).max())


def nf(g: AttributedGraph, k: int, scores: Optional[ScoreMatrix], idx: Optional[KHopIndex] = None,
       weighted: bool = False, normalizer: str = "count", method: str = "bfs") -> float:
    """k-hop fairness gap: largest difference between two source groups'
    exposure toward a common target group."""
    idx = _resolve_index(g, k, idx, method)
    return _gap(group_exposure(g, idx, scores, weighted=weighted, normalizer=normalizer))


def nb(g: AttributedGraph, k: int, idx: Optional[KHopIndex] = None, weighted: bool = False,
       normalizer: str = "count", method: str = "bfs") -> float:
    """k-hop structural bias: the fairness gap of the graph's own k-hop indicator."""
    return nf(g, k, None, idx=idx, weighted=weighted, normalizer=normalizer, method=method)


def nb_binary(g: AttributedGraph, k: int, idx: Optional[KHopIndex] = None, method: str = "bfs") -> float:
    """Two-group shortcut ``|phi_00 + phi_11 - 1|``."""
    if g.n_groups != 2:
        raise MetricUndefinedError("nb_binary needs exactly two groups")
    idx = _resolve_index(g, k, idx, method)
    t = group_exposure(g, idx)
    if t.undefined_groups:
        raise MetricUndefinedError(f"group {t.undefined_groups[0]} has no k-neighborhood")
    return float(abs(t.phi[0, 0] + t.phi[1, 1] - 1.0))


def nb_profile(g: AttributedGraph, hops=None, method: str = "bfs") -> dict:
    """NB for every hop in ``hops`` (default: every nonempty level)."""
    levels = khop_levels(g, None if hops is None else max(hops), method=method)
    wanted = set(hops) if hops is not None else None
    out = {}
    for idx in levels:
        if idx.is_empty() or (wanted is not None and idx.k not in wanted):
            continue
        try:
            out[idx.k] = nb(g, idx.k, idx=idx)
        except MetricUndefinedError:
            out[idx.k] = None
    return out


def mixing_matrix(g: AttributedGraph) -> np.ndarray:
    """Fraction of edges per (group, group) cell, symmetrized when undirected."""
    if g.m == 0:
        raise MetricUndefinedError("mixing matrix needs at least one edge")
    ng = g.n_groups
    c = np.zeros((ng, ng))
    np.add.at(c, (g.groups[g.edges[:, 0]], g.groups[g.edges[:, 1]]), 1.0)
    if not g.directed:
        c = (c + c.T) / 2.0
    return c / g.m


def assortativity(g: AttributedGraph) -> float:
    """Attribute assortativity ``(tr e - sum(e @ e)) / (1 - sum(e @ e))``."""
    e = mixing_matrix(g)
    s = float((e @ e).sum())
    if np.isclose(1.0 - s, 0.0):
        raise MetricUndefinedError("assortativity undefined: a single group carries all edges")
    return float((np.trace(e) - s) / (1.0 - s))


def assortativity_binary(g: AttributedGraph) -> float:
    """Closed form for two groups, written with the three distinct cells of e."""
    if g.n_groups != 2:
        raise MetricUndefinedError("assortativity_binary needs exactly two groups")
    e = mixing_matrix(g)
    e00, e11, e01 = e[0, 0], e[1, 1], e[0, 1]
    r0, r1 = (e00 + e01) ** 2, (e11 + e01) ** 2
    den = (0.5 - r0) + (0.5 - r1)
    if np.isclose(den, 0.0):
        raise MetricUndefinedError("assortativity undefined")
    return float(((e00 - r0) + (e11 - r1)) / den)


@dataclass
class DyadicReport:
    dp: Optional[float]
    eo: Optional[float]
    undefined: list = field(default_factory=list)


def dyadic_metrics(scores: ScoreMatrix, pairs: Sequence, labels: Sequence, groups) -> DyadicReport:
    """Demographic parity and equal opportunity gaps over the given pairs.

    Strata are same-group versus cross-group pairs. A stratum without pairs
    leaves the corresponding metric as ``None`` and names it in ``undefined``.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        raise MetricUndefinedError("no pairs supplied")
    labels = np.asarray(labels).ravel()
    groups = np.asarray(groups)
    yhat = scores.lookup(pairs)
    same = groups[pairs[:, 0]] == groups[pairs[:, 1]]

    def gap(sel):
        a, b = yhat[sel & same], yhat[sel & ~same]
        if not a.size or not b.size:
            return None
        return float(abs(a.mean() - b.mean()))

    dp = gap(np.ones(len(pairs), bool))
    eo = gap(labels == 1)
    undefined = [name for name, v in (("dp", dp), ("eo", eo)) if v is None]
    return DyadicReport(dp, eo, undefined)


def auc_from_values(pos, neg) -> float:
    pos, neg = np.asarray(pos, float), np.asarray(neg, float)
    if not pos.size or not neg.size:
        raise ValueError("auc needs at least one positive and one negative")
    ranks = rankdata(np.r_[pos, neg])
    u = ranks[:pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def auc(scores: ScoreMatrix, positives: Sequence, negatives: Sequence) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    return auc_from_values(scores.lookup(positives), scores.lookup(negatives))


@dataclass
class DpDecomposition:
    direct_dp: float
    decomposed_dp: float
    terms: dict
    p_same: float
    contributions: dict

    @property
    def residual(self) -> float:
        return abs(self.direct_dp - self.decomposed_dp)


def dp_decomposition(g: AttributedGraph, scores: ScoreMatrix, fill: Optional[float] = None) -> DpDecomposition:
    """Demographic parity over all ordered distinct pairs, directly and split by distance.

    The split weights each node's within/cross-group exposure at hop k by the
    fraction of ordered pairs it starts at that distance. ``fill`` supplies a
    score for pairs outside the domain; with ``None`` full coverage is required.
    """
    from .graph import validate

    if g.n_groups != 2:
        raise MetricUndefinedError("the decomposition needs exactly two groups")
    if not validate(g).connected:
        raise MetricUndefinedError("the decomposition needs a connected graph")
    n = g.n
    p = scores.to_dense(fill)
    full = ScoreMatrix.from_dense(p)
    s = g.groups
    same = (s[:, None] == s[None, :]) & ~np.eye(n, dtype=bool)
    diff = s[:, None] != s[None, :]
    if not same.any() or not diff.any():
        raise MetricUndefinedError("a pair stratum is empty")
    direct = float(abs(p[same].mean() - p[diff].mean()))

    sizes = g.group_sizes()
    p_same = float((sizes * (sizes - 1)).sum() / (n * (n - 1)))
    terms, contributions = {}, {}
    total = 0.0
    for idx in khop_levels(g):
        if idx.is_empty():
            continue
        t = group_exposure(g, idx, full)
        part = 0.0
        for v in idx.v_k:
            omega = idx.sizes[v] / (n * (n - 1))
            f_same, f_diff = t.f[v, s[v]], t.f[v, 1 - s[v]]
            terms[(idx.k, int(v))] = {"omega": float(omega), "f_same": float(f_same), "f_diff": float(f_diff)}
            part += omega * (f_same / p_same - f_diff / (1 - p_same))
        contributions[idx.k] = float(part)
        total += part
    return DpDecomposition(direct, float(abs(total)), terms, p_same, contributions)
