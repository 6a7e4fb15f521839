"""Attributed graph container, text ingestion and the train/test split."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import GraphFormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Immutable graph with one sensitive group label per node.

    Nodes are dense integers ``0..n-1``. ``node_ids`` maps them back to the
    identifiers found in the input files, ``group_labels`` does the same for
    group ids. Undirected edges are stored once with ``i < j``.
    """

    n: int
    edges: np.ndarray
    groups: np.ndarray
    weights: Optional[np.ndarray] = None
    directed: bool = False
    node_ids: Optional[np.ndarray] = None
    group_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        groups = np.asarray(self.groups, dtype=np.int64).reshape(-1)
        if groups.shape[0] != self.n:
            raise ValueError(f"expected {self.n} group labels, got {groups.shape[0]}")
        if self.n and (groups.min() < 0 or np.unique(groups).size != groups.max() + 1):
            raise ValueError("group ids must be contiguous from 0")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            i = int(edges[edges[:, 0] == edges[:, 1]][0, 0])
            raise ValueError(f"self-loop on node {i}")
        weights = self.weights
        if weights is not None:
            weights = np.asarray(weights, dtype=float).reshape(-1)
            if weights.shape[0] != edges.shape[0]:
                raise ValueError("one weight per edge required")
            if np.any(weights <= 0):
                raise ValueError("edge weights must be strictly positive")
        if not self.directed:
            edges = np.sort(edges, axis=1)
        # canonical order, duplicates collapsed (first occurrence wins)
        keys = edges[:, 0] * max(self.n, 1) + edges[:, 1]
        _, first = np.unique(keys, return_index=True)
        edges = edges[first]
        if weights is not None:
            weights = weights[first]
        edges.setflags(write=False)
        groups.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "weights", weights)
        if self.node_ids is None:
            object.__setattr__(self, "node_ids", np.arange(self.n))
        if self.group_labels is None:
            object.__setattr__(self, "group_labels", np.arange(self.n_groups))

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    @property
    def n_groups(self) -> int:
        return int(self.groups.max()) + 1 if self.n else 0

    @property
    def weighted(self) -> bool:
        return self.weights is not None

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Row-compressed adjacency; symmetric for undirected graphs."""
        w = self.weights if self.weights is not None else np.ones(self.m)
        rows, cols = self.edges[:, 0], self.edges[:, 1]
        if not self.directed:
            rows, cols, w = np.r_[rows, cols], np.r_[cols, rows], np.r_[w, w]
        adj = sp.csr_matrix((w, (rows, cols)), shape=(self.n, self.n))
        adj.sort_indices()
        return adj

    @cached_property
    def support(self) -> sp.csr_matrix:
        """0/1 pattern of the adjacency (weights dropped)."""
        s = self.adjacency.copy()
        s.data = np.ones_like(s.data)
        return s

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.n_groups)

    def has_edge(self, i: int, j: int) -> bool:
        a = self.support
        return bool(a[i, j])

    def with_edges(self, edges: np.ndarray, weights: Optional[np.ndarray] = None) -> "AttributedGraph":
        """New graph on the same nodes and groups with a different edge set."""
        return AttributedGraph(
            n=self.n,
            edges=edges,
            groups=self.groups,
            weights=weights,
            directed=self.directed,
            node_ids=self.node_ids,
            group_labels=self.group_labels,
        )

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"AttributedGraph(n={self.n}, m={self.m}, groups={self.n_groups}, {kind})"


def from_adjacency(adj, groups, directed: bool = False) -> AttributedGraph:
    """Build a graph from a dense or sparse 0/1 (or weighted) adjacency matrix."""
    a = sp.coo_matrix(adj)
    mask = (a.data != 0) & (a.row != a.col)
    rows, cols, vals = a.row[mask], a.col[mask], a.data[mask]
    if not directed:
        keep = rows < cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    weights = None if np.all(vals == 1) else vals
    return AttributedGraph(
        n=a.shape[0], edges=np.c_[rows, cols], groups=groups, weights=weights, directed=directed
    )


def _records(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _as_lines(source) -> Iterable[str]:
    if isinstance(source, str):
        return source.splitlines()
    return source


def load_graph(edge_source, attr_source, directed: bool = False, weighted: bool = False) -> AttributedGraph:
    """Parse ``"i j [w]"`` edge lines and ``"i group"`` attribute lines.

    Either source may be a string holding the whole file or any iterable of
    lines (an open file works). Node ids are remapped to ``0..n-1`` in sorted
    order of the original ids; group labels likewise.
    """
    attrs = {}
    for lineno, tok in _records(_as_lines(attr_source)):
        if len(tok) != 2:
            raise GraphFormatError(f"attribute line {lineno}: expected 'node group', got {' '.join(tok)!r}")
        try:
            node, grp = int(tok[0]), int(tok[1])
        except ValueError:
            raise GraphFormatError(f"attribute line {lineno}: non-integer field") from None
        if node < 0:
            raise GraphFormatError(f"attribute line {lineno}: negative node id {node}")
        attrs[node] = grp

    raw_edges, raw_w = [], []
    for lineno, tok in _records(_as_lines(edge_source)):
        if len(tok) not in (2, 3):
            raise GraphFormatError(f"edge line {lineno}: expected 'i j [w]', got {' '.join(tok)!r}")
        try:
            i, j = int(tok[0]), int(tok[1])
            w = float(tok[2]) if len(tok) == 3 else 1.0
        except ValueError:
            raise GraphFormatError(f"edge line {lineno}: malformed field") from None
        if i < 0 or j < 0:
            raise GraphFormatError(f"edge line {lineno}: negative node id")
        if i == j:
            raise GraphFormatError(f"edge line {lineno}: self-loop on node {i}")
        if w < 0:
            raise GraphFormatError(f"edge line {lineno}: negative weight {w}")
        if w == 0:
            raise GraphFormatError(f"edge line {lineno}: zero weight")
        for v in (i, j):
            if v not in attrs:
                raise GraphFormatError(f"unattributed node {v} (edge line {lineno})")
        raw_edges.append((i, j))
        raw_w.append(w)

    if not attrs:
        raise GraphFormatError("attribute source is empty")
    node_ids = np.array(sorted(attrs))
    index = {v: k for k, v in enumerate(node_ids)}
    raw_groups = np.array([attrs[v] for v in node_ids])
    group_labels, groups = np.unique(raw_groups, return_inverse=True)
    edges = np.array([(index[i], index[j]) for i, j in raw_edges], dtype=np.int64).reshape(-1, 2)
    return AttributedGraph(
        n=len(node_ids),
        edges=edges,
        groups=groups,
        weights=np.array(raw_w) if weighted and raw_edges else None,
        directed=directed,
        node_ids=node_ids,
        group_labels=group_labels,
    )


def load_graph_files(edge_path, attr_path, directed=False, weighted=False) -> AttributedGraph:
    with open(edge_path, encoding="utf-8") as fe, open(attr_path, encoding="utf-8") as fa:
        return load_graph(fe, fa, directed=directed, weighted=weighted)


def format_edges(g: AttributedGraph) -> str:
    """Serialize edges with original node ids, one ``"i j [w]"`` line each."""
    ids = g.node_ids
    out = []
    for e, (i, j) in enumerate(g.edges):
        if g.weights is None:
            out.append(f"{ids[i]} {ids[j]}")
        else:
            out.append(f"{ids[i]} {ids[j]} {float(g.weights[e])!r}")
    return "\n".join(out) + ("\n" if out else "")


def format_attrs(g: AttributedGraph) -> str:
    return "".join(f"{g.node_ids[v]} {g.group_labels[s]}\n" for v, s in enumerate(g.groups))


def format_pairs(g: AttributedGraph, pairs: Sequence) -> str:
    ids = g.node_ids
    return "".join(f"{ids[i]} {ids[j]}\n" for i, j in pairs)


def parse_pairs(g: AttributedGraph, source) -> list:
    """Read ``"i j"`` lines (original ids) into dense-index pairs."""
    index = {int(v): k for k, v in enumerate(g.node_ids)}
    pairs = []
    for lineno, tok in _records(_as_lines(source)):
        if len(tok) < 2:
            raise GraphFormatError(f"pair line {lineno}: expected 'i j'")
        try:
            pairs.append((index[int(tok[0])], index[int(tok[1])]))
        except (KeyError, ValueError):
            raise GraphFormatError(f"pair line {lineno}: unknown or malformed node id") from None
    return pairs


@dataclass
class ValidationReport:
    connected: bool
    group_sizes: np.ndarray
    density: float
    warnings: list = field(default_factory=list)


def validate(g: AttributedGraph) -> ValidationReport:
    """Diagnostics only; disconnected graphs are reported, not rejected."""
    from .khop import bfs_distances

    sym = g.support if not g.directed else ((g.support + g.support.T) > 0).astype(float).tocsr()
    reached = bfs_distances(sym, 0) >= 0 if g.n else np.array([], bool)
    connected = bool(reached.all())
    pairs = g.n * (g.n - 1)
    if not g.directed:
        pairs //= 2
    density = g.m / pairs if pairs else 0.0
    warnings = []
    if not connected:
        msg = f"graph is disconnected: {int((~reached).sum())} nodes unreachable from node 0"
        logger.warning(msg)
        warnings.append(msg)
    return ValidationReport(connected, g.group_sizes(), density, warnings)


@dataclass
class SplitResult:
    train_graph: AttributedGraph
    test_positives: list
    test_negatives: list
    seed: int


def split_edges(g: AttributedGraph, train_fraction: float = 0.8, seed: int = 0) -> SplitResult:
    """Random edge split with an equal number of sampled non-edges for testing.

    Negatives are drawn uniformly without replacement from the non-edges of the
    full graph.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(g.m)
    n_train = int(round(train_fraction * g.m))
    train_idx, test_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    n_neg = len(test_idx)

    n_pairs = g.n * (g.n - 1) if g.directed else g.n * (g.n - 1) // 2
    if n_pairs - g.m < n_neg:
        raise ValueError("insufficient non-edges to sample negatives")

    existing = set(map(tuple, g.edges.tolist()))
    negatives = []
    if n_pairs - g.m <= 4 * n_neg:
        # dense regime: enumerate the complement
        if g.directed:
            cand = [(i, j) for i in range(g.n) for j in range(g.n) if i != j and (i, j) not in existing]
        else:
            cand = [(i, j) for i in range(g.n) for j in range(i + 1, g.n) if (i, j) not in existing]
        pick = rng.choice(len(cand), size=n_neg, replace=False)
        negatives = [cand[p] for p in sorted(pick)]
    else:
        seen = set()
        while len(negatives) < n_neg:
            i, j = (int(x) for x in rng.integers(0, g.n, size=2))
            if i == j:
                continue
            if not g.directed and i > j:
                i, j = j, i
            if (i, j) in existing or (i, j) in seen:
                continue
            seen.add((i, j))
            negatives.append((i, j))

    train = g.with_edges(g.edges[train_idx], None if g.weights is None else g.weights[train_idx])
    positives = [tuple(map(int, e)) for e in g.edges[test_idx]]
    return SplitResult(train, positives, negatives, seed)
