"""Relaxed k-hop bias objectives recorded on a differentiation tape.

Both losses replace the hard max over group-exposure differences by a
LogSumExp with a small temperature, shifted down by ``temp * log(count)`` by
default so that tied differences (always the case for two groups in
indicator mode) are not overestimated. The pre-processing loss additionally
rebuilds the distance-k indicator from the adjacency with sigmoid
positivity tests, so it is differentiable through the hop structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .autodiff import Node, Tape
from .exceptions import MetricUndefinedError
from .graph import AttributedGraph
from .khop import KHopIndex, khop_index
from .metrics import ScoreMatrix


@dataclass(frozen=True)
class RelaxationConfig:
    beta: float = 20.0
    tau: float = 0.5
    temp: float = 0.01
    abs_eps: float = 0.0
    centered_max: bool = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.temp > 0:
            raise ValueError("temp must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.abs_eps < 0:
            raise ValueError("abs_eps must be nonnegative")


@dataclass
class LossGraph:
    """A recorded loss: the tape, its scalar output and the parameter leaf."""

    tape: Tape
    loss: Node
    param: Node
    bias: Node

    @property
    def value(self) -> float:
        return float(self.loss.value)

    @property
    def bias_value(self) -> float:
        return float(self.bias.value)


def _pair_selectors(d: int):
    # rows pick phi[s1] and phi[s2] for every unordered pair of defined groups
    pairs = list(combinations(range(d), 2))
    left = np.zeros((len(pairs), d))
    right = np.zeros((len(pairs), d))
    for r, (a, b) in enumerate(pairs):
        left[r, a] = 1.0
        right[r, b] = 1.0
    return left, right


def _relaxed_gap(tape: Tape, phi: Node, cfg: RelaxationConfig) -> Node:
    left, right = _pair_selectors(phi.shape[0])
    diffs = tape.abs_sub(tape.matmul(left, phi), tape.matmul(right, phi), eps=cfg.abs_eps)
    return tape.logsumexp_max(diffs, temp=cfg.temp, centered=cfg.centered_max)


def _onehot_dense(groups: np.ndarray, ng: int) -> np.ndarray:
    out = np.zeros((groups.size, ng))
    out[np.arange(groups.size), groups] = 1.0
    return out


def checked_index(g: AttributedGraph, k: int) -> KHopIndex:
    """Distance-k index, requiring at least two groups with a k-neighborhood."""
    idx = khop_index(g, k)
    present = np.unique(g.groups[idx.v_k])
    if present.size < 2:
        raise MetricUndefinedError(f"k={k} is not a usable hop: fewer than 2 groups reach it")
    return idx


def relaxed_nf_loss(g: AttributedGraph, k: int, base: ScoreMatrix, U, alpha: float,
                    cfg: RelaxationConfig = RelaxationConfig(), idx: KHopIndex = None) -> LossGraph:
    """Post-processing objective on the perturbation ``U``.

    The perturbed scores are ``clip01(P + U * A_k)`` on the fixed distance-k
    mask ``A_k`` of ``g``; the penalty is ``alpha * ||U * A_k||_F``.
    """
    if idx is None:
        idx = checked_index(g, k)
    n = g.n
    mask = idx.pairs.toarray().astype(float)
    p = base.restrict(idx.pairs).toarray()
    sizes = idx.sizes.astype(float)
    inv = np.where(sizes > 0, 1.0 / np.maximum(sizes, 1.0), 0.0)[:, None]

    groups = g.groups
    defined = np.unique(groups[idx.v_k])
    avg = np.zeros((defined.size, n))
    for r, s in enumerate(defined):
        members = idx.v_k[groups[idx.v_k] == s]
        avg[r, members] = 1.0 / members.size
    onehot = _onehot_dense(groups, g.n_groups)

    tape = Tape()
    u = tape.leaf(U, "U")
    masked_u = tape.hadamard(u, mask)
    h = tape.hadamard(tape.clip01(tape.add(p, masked_u)), mask)
    f = tape.hadamard(tape.matmul(h, onehot), inv)
    phi = tape.matmul(avg, f)
    bias = _relaxed_gap(tape, phi, cfg)
    loss = tape.add(bias, tape.scalar_mul(tape.frobenius(masked_u), float(alpha)))
    return LossGraph(tape, loss, u, bias)


def soft_khop(tape: Tape, a: Node, k: int, cfg: RelaxationConfig) -> Node:
    """Relaxed distance-k indicator built level by level from ``a``."""
    n = a.shape[0]
    off = 1.0 - np.eye(n)
    level = tape.hadamard(a, off)
    reached = level
    for _ in range(2, k + 1):
        walk = tape.sigmoid_chi(tape.matmul(level, a), cfg.beta, cfg.tau)
        seen = tape.sigmoid_chi(reached, cfg.beta, cfg.tau)
        level = tape.hadamard(tape.sigmoid_chi(tape.sub(walk, seen), cfg.beta, cfg.tau), off)
        reached = tape.add(reached, level)
    return level


def relaxed_nb_loss(A_var, A_orig, k: int, alpha: float, cfg: RelaxationConfig = RelaxationConfig(),
                    groups=None) -> LossGraph:
    """Pre-processing objective ``relaxed NB(A') + alpha * ||A' - A||_F``.

    Only groups that have a node with a nonempty k-neighborhood in the hard
    graph ``A_orig`` enter the gap.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if groups is None:
        raise ValueError("group labels are required")
    A_orig = np.asarray(A_orig, dtype=float)
    groups = np.asarray(groups, dtype=np.int64)
    n = A_orig.shape[0]
    if A_orig.shape != (n, n) or np.shape(A_var) != (n, n) or groups.shape != (n,):
        raise ValueError("A_var, A_orig and groups must agree on n")

    hard = khop_index((A_orig > 0).astype(float), k)
    defined = np.unique(groups[hard.v_k])
    if defined.size < 2:
        raise MetricUndefinedError(f"k={k} is not a usable hop: fewer than 2 groups reach it")
    onehot = _onehot_dense(groups, int(groups.max()) + 1)
    sel = onehot[:, defined].T

    tape = Tape()
    a = tape.leaf(A_var, "A")
    t = soft_khop(tape, a, k, cfg)
    psi = tape.matmul(t, onehot)
    cnt = tape.sum(t, axis=1, keepdims=True)
    f = tape.safe_div(psi, cnt)
    member = tape.sigmoid_chi(cnt, cfg.beta, cfg.tau)
    phi = tape.safe_div(tape.matmul(sel, tape.hadamard(f, member)), tape.matmul(sel, member))
    bias = _relaxed_gap(tape, phi, cfg)
    loss = tape.add(bias, tape.scalar_mul(tape.frobenius(tape.sub(a, A_orig)), float(alpha)))
    return LossGraph(tape, loss, a, bias)
