"""Small graphs with known bias values, and a seeded stochastic block model.

Group 0 plays the "blue" role and group 1 the "red" one. In every toy graph
node 0 is the blue bridge (or the star center) and node 1 the red bridge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .graph import AttributedGraph

logger = logging.getLogger(__name__)

BLUE, RED = 0, 1


def _frac(p) -> Fraction:
    if isinstance(p, float):
        return Fraction(p).limit_denominator(10**6)
    return Fraction(p)


def gen_star(n: int, p) -> AttributedGraph:
    """Blue center attached to ``n*p`` blue and ``n*(1-p)`` red leaves."""
    p = _frac(p)
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    n_blue = n * p
    if n_blue.denominator != 1:
        raise ValueError(f"n*p = {n_blue} is not an integer")
    n_blue = int(n_blue)
    groups = [BLUE] + [BLUE] * n_blue + [RED] * (n - n_blue)
    edges = [(0, v) for v in range(1, n + 1)]
    return AttributedGraph(n=n + 1, edges=np.array(edges), groups=np.array(groups))


class _Builder:
    def __init__(self):
        self.groups = []
        self.edges = []

    def node(self, group, parent=None):
        v = len(self.groups)
        self.groups.append(group)
        if parent is not None:
            self.edges.append((parent, v))
        return v

    def build(self):
        return AttributedGraph(n=len(self.groups), edges=np.array(self.edges), groups=np.array(self.groups))


def gen_toy(variant: str, n: int) -> AttributedGraph:
    """One of the three bridge graphs with 4n+2 nodes and 4n+1 edges.

    a: each bridge carries n blue and n red leaves.
    b: each bridge carries n children of its own color, each child one leaf
       of the opposite color.
    c: the blue bridge carries n blue leaves; the red bridge carries n red
       children, each extended by a blue node and then a red leaf.
    """
    if n < 1:
        raise ValueError("n must be positive")
    b = _Builder()
    blue_bridge = b.node(BLUE)
    red_bridge = b.node(RED, blue_bridge)
    if variant == "a":
        for bridge in (blue_bridge, red_bridge):
            for _ in range(n):
                b.node(BLUE, bridge)
            for _ in range(n):
                b.node(RED, bridge)
    elif variant == "b":
        for _ in range(n):
            b.node(RED, b.node(BLUE, blue_bridge))
        for _ in range(n):
            b.node(BLUE, b.node(RED, red_bridge))
    elif variant == "c":
        for _ in range(n):
            b.node(BLUE, blue_bridge)
        for _ in range(n):
            b.node(RED, b.node(BLUE, b.node(RED, red_bridge)))
    else:
        raise ValueError(f"unknown toy variant {variant!r}")
    return b.build()


def gen_sbm(block_sizes: Sequence[int], block_probs, groups: Sequence[int] = None,
            seed: int = 0) -> AttributedGraph:
    """Undirected stochastic block model with independent Bernoulli edges.

    ``groups[b]`` is the sensitive group of every node in block ``b``
    (defaults to the block index).
    """
    sizes = np.asarray(block_sizes, dtype=int)
    probs = np.asarray(block_probs, dtype=float)
    nb = sizes.size
    if np.any(sizes <= 0):
        raise ValueError("block sizes must be positive")
    if probs.shape != (nb, nb):
        raise ValueError("block_probs must be a square matrix matching block_sizes")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.allclose(probs, probs.T):
        raise ValueError("block_probs must be symmetric for an undirected graph")
    block_groups = np.arange(nb) if groups is None else np.asarray(groups, dtype=int)
    if block_groups.shape != (nb,):
        raise ValueError("one group label per block required")

    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(nb), sizes)
    n = block.size
    iu, ju = np.triu_indices(n, k=1)
    draw = rng.random(iu.size) < probs[block[iu], block[ju]]
    edges = np.c_[iu[draw], ju[draw]]
    labels = block_groups[block]
    _, labels = np.unique(labels, return_inverse=True)
    g = AttributedGraph(n=n, edges=edges, groups=labels)
    if g.m == 0 or len(set(edges.ravel().tolist())) < n:
        logger.warning("SBM sample has isolated nodes; graph is disconnected")
    return g


def synthetic_profile(seed: int = 0, intra: float = 0.05, inter: float = 0.003) -> AttributedGraph:
    """Three-block, three-group graph sized like the 950-node synthetic benchmark.

    Block shares are 52/32/16 percent; the probabilities are not published, so
    strongly homophilic defaults are used.
    """
    probs = np.full((3, 3), inter)
    np.fill_diagonal(probs, intra)
    return gen_sbm((494, 304, 152), probs, (0, 1, 2), seed=seed)


@dataclass(frozen=True)
class ToyOracle:
    assortativity: Fraction
    nb: dict


def oracle(variant: str, n: int, p=None) -> ToyOracle:
    """Exact assortativity and NB values for the toy generators."""
    if variant == "star":
        if p is None:
            raise ValueError("star oracle needs p")
        p = _frac(p)
        if (n * p).denominator != 1 or not 0 < p < 1:
            raise ValueError("invalid star parameters")
        return ToyOracle(-(1 - p) / (p + 1), {1: (1 - p) / (n * p + 1)})
    if n < 3:
        # below 3 some closed forms turn negative (they drop an absolute value)
        raise ValueError("toy oracles need n >= 3")
    F = Fraction
    a = F(-1, 4 * n + 1)
    if variant == "a":
        nbv = {1: F(1, (2 * n + 1) ** 2), 2: F(1, 2 * n + 1), 3: F(0)}
    elif variant == "b":
        nbv = {1: F(n * n + 1, (n + 1) * (2 * n + 1)), 2: F(3, 2 * n + 1), 3: F(2 * n - 3, 2 * n + 1)}
    elif variant == "c":
        nbv = {
            1: F(n * n - n + 2, 2 * (n + 1) * (2 * n + 1)),
            2: F(n * n - 2 * n - 2, (n + 1) * (2 * n + 1)),
            3: F(n - 2, 2 * n + 1),
        }
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return ToyOracle(a, nbv)
