"""Exact-distance-k pair structure.

Three interchangeable constructions of the distance-k indicator matrix:
per-source breadth-first search, positivity of adjacency powers, and the
level-by-level recursion. All treat the graph as unweighted (hop count on the
nonzero support of the adjacency).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph


@dataclass(frozen=True, eq=False)
class KHopIndex:
    """Pairs at shortest-path distance exactly ``k``."""

    k: int
    pairs: sp.csr_matrix

    @cached_property
    def sizes(self) -> np.ndarray:
        """|N^(k)(v)| for every node."""
        return np.diff(self.pairs.indptr)

    @cached_property
    def v_k(self) -> np.ndarray:
        """Nodes with a nonempty k-neighborhood."""
        return np.flatnonzero(self.sizes)

    def neighbors(self, v: int) -> np.ndarray:
        p = self.pairs
        return p.indices[p.indptr[v]:p.indptr[v + 1]]

    @property
    def neighbor_lists(self) -> list:
        return [self.neighbors(v) for v in range(self.pairs.shape[0])]

    @property
    def nnz(self) -> int:
        return int(self.pairs.nnz)

    def support(self) -> set:
        c = self.pairs.tocoo()
        return set(zip(c.row.tolist(), c.col.tolist()))

    def is_empty(self) -> bool:
        return self.pairs.nnz == 0


@dataclass(frozen=True)
class HopSet:
    hops: tuple
    fraction_threshold: float

    def __iter__(self):
        return iter(self.hops)

    def __len__(self):
        return len(self.hops)

    def __contains__(self, k):
        return k in self.hops


def _pattern(adj) -> sp.csr_matrix:
    a = sp.csr_matrix(adj, dtype=float, copy=True)
    a.setdiag(0)
    a.eliminate_zeros()
    a.data[:] = 1.0
    a.sort_indices()
    return a


def _bool_csr(rows, cols, n) -> sp.csr_matrix:
    m = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    m.sort_indices()
    return m


def bfs_distances(adj, source: int, max_depth: Optional[int] = None) -> np.ndarray:
    """Hop distances from ``source``; -1 for unreached nodes."""
    a = sp.csr_matrix(adj)
    n = a.shape[0]
    indptr, indices = a.indptr, a.indices
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source])
    depth = 0
    while frontier.size and (max_depth is None or depth < max_depth):
        depth += 1
        starts, stops = indptr[frontier], indptr[frontier + 1]
        lens = stops - starts
        total = int(lens.sum())
        if total == 0:
            break
        # gather all neighbor slices of the frontier in one shot
        offsets = np.repeat(starts - np.cumsum(np.r_[0, lens[:-1]]), lens)
        nbrs = indices[offsets + np.arange(total)]
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        dist[nbrs] = depth
        frontier = nbrs
    return dist


def _bfs_block(a, sources, k_max):
    rows, cols, levels = [], [], []
    for s in sources:
        d = bfs_distances(a, s, k_max)
        hit = np.flatnonzero(d > 0)
        rows.append(np.full(hit.size, s))
        cols.append(hit)
        levels.append(d[hit])
    if not rows:
        return np.array([], int), np.array([], int), np.array([], int)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(levels)


def _n_jobs(n_jobs):
    if n_jobs is None:
        n_jobs = int(os.environ.get("KHOPFAIR_THREADS", "1") or 1)
    return max(1, n_jobs)


def khop_bfs(g, k_max: Optional[int], n_jobs: Optional[int] = None) -> list:
    """Distance-k indices for ``k = 1..k_max`` by BFS from every node.

    ``g`` may be an AttributedGraph or an adjacency matrix. With
    ``k_max=None`` the search is unbounded and levels run up to the largest
    finite distance. Sources are split into contiguous blocks when
    ``n_jobs > 1``; merging is by source index so the output does not depend
    on scheduling.
    """
    if k_max is not None and k_max < 1:
        raise ValueError("k_max must be >= 1")
    a = _pattern(g.adjacency if isinstance(g, AttributedGraph) else g)
    n = a.shape[0]
    jobs = _n_jobs(n_jobs)
    blocks = np.array_split(np.arange(n), jobs) if n else []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(lambda b: _bfs_block(a, b, k_max), blocks))
    else:
        parts = [_bfs_block(a, b, k_max) for b in blocks]
    if parts:
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        lev = np.concatenate([p[2] for p in parts])
    else:
        rows = cols = lev = np.array([], int)
    if k_max is None:
        k_max = max(1, int(lev.max()) if lev.size else 1)
    # sort once by level so each level is a contiguous slice
    order = np.argsort(lev, kind="stable")
    rows, cols, lev = rows[order], cols[order], lev[order]
    bounds = np.searchsorted(lev, np.arange(1, k_max + 2))
    return [
        KHopIndex(k, _bool_csr(rows[bounds[k - 1]:bounds[k]], cols[bounds[k - 1]:bounds[k]], n))
        for k in range(1, k_max + 1)
    ]


def _chi(m: sp.csr_matrix) -> sp.csr_matrix:
    # positivity indicator; resetting to 1 keeps walk counts from growing
    m = m.tocsr()
    m.eliminate_zeros()
    m.data = np.ones_like(m.data, dtype=float)
    return m


def _without_diag(m: sp.csr_matrix) -> sp.csr_matrix:
    c = m.tocoo()
    keep = (c.row != c.col) & (c.data != 0)
    return sp.csr_matrix((c.data[keep], (c.row[keep], c.col[keep])), shape=m.shape)


def _as_index(k, m) -> KHopIndex:
    m = sp.csr_matrix(m, dtype=np.int8)
    m.sort_indices()
    return KHopIndex(k, m)


def khop_power(g, k: int) -> KHopIndex:
    """Pairs at distance ``k`` from powers of the adjacency.

    chi(chi(A^k) - chi(A + ... + A^(k-1))) with the diagonal removed. Powers
    are taken in the boolean semiring so counts never overflow.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    a = _pattern(g.adjacency if isinstance(g, AttributedGraph) else g)
    power = a.copy()
    reached = sp.csr_matrix(a.shape)
    for _ in range(k - 1):
        reached = _chi(reached + power)
        power = _chi(power @ a)
    exact = _chi(power - reached.multiply(power))
    return _as_index(k, _without_diag(exact))


def khop_recursive(g, k_max: int, stop_early: bool = True) -> list:
    """Levels 1..k_max from the previous level times the adjacency.

    Stops at the first empty level when ``stop_early``; the returned list is
    then shorter than ``k_max``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    a = _pattern(g.adjacency if isinstance(g, AttributedGraph) else g)
    level = _without_diag(a)
    reached = level.copy()
    out = [_as_index(1, level)]
    for k in range(2, k_max + 1):
        if stop_early and level.nnz == 0:
            break
        nxt = _chi(level @ a)
        nxt = _without_diag(nxt - nxt.multiply(reached))
        nxt = _chi(nxt)
        reached = _chi(reached + nxt)
        level = nxt
        if stop_early and level.nnz == 0:
            break
        out.append(_as_index(k, level))
    return out


def khop_levels(g, k_max: Optional[int] = None, method: str = "bfs") -> list:
    """All nonempty levels up to ``k_max`` (or up to the diameter)."""
    if method == "bfs":
        levels = khop_bfs(g, k_max)
        while len(levels) > 1 and levels[-1].is_empty():
            levels.pop()
        return levels
    if method == "recursive":
        return khop_recursive(g, k_max if k_max is not None else 10**9)
    if method == "power":
        if k_max is None:
            raise ValueError("power method needs k_max")
        return [khop_power(g, k) for k in range(1, k_max + 1)]
    raise ValueError(f"unknown method {method!r}")


def khop_index(g, k: int, method: str = "bfs") -> KHopIndex:
    if k < 1:
        raise ValueError("k must be >= 1")
    if method == "bfs":
        return khop_bfs(g, k)[-1]
    if method == "power":
        return khop_power(g, k)
    if method == "recursive":
        levels = khop_recursive(g, k)
        if len(levels) < k:
            n = levels[0].pairs.shape[0]
            return _as_index(k, sp.csr_matrix((n, n)))
        return levels[-1]
    raise ValueError(f"unknown method {method!r}")


def meaningful_hops(g, threshold: float = 0.5) -> HopSet:
    """Hops where at least ``threshold * n`` nodes have a nonempty k-neighborhood."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    levels = khop_recursive(g, 10**9)
    n = levels[0].pairs.shape[0]
    hops = tuple(idx.k for idx in levels if idx.v_k.size and idx.v_k.size >= threshold * n)
    return HopSet(hops, threshold)


def target_hops(nb_values: dict, count: int = 3) -> list:
    """The ``count`` most biased hops; ties go to the smaller hop."""
    if not nb_values:
        raise ValueError("nb_values is empty")
    ranked = sorted(nb_values.items(), key=lambda kv: (-kv[1], kv[0]))
    return [k for k, _ in ranked[:count]]
