"""Post-processing of scores, graph rewiring, and cross-hop trajectory analysis."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .autodiff import backward
from .exceptions import DomainGapError, MetricUndefinedError, NonFiniteError
from .graph import AttributedGraph, from_adjacency
from .khop import HopSet, khop_levels, meaningful_hops
from .losses import RelaxationConfig, checked_index, relaxed_nb_loss, relaxed_nf_loss
from .metrics import ScoreMatrix, auc, dyadic_metrics, nb, nf
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)

STATUS_DONE = "completed"
STATUS_BUDGET = "budget exhausted"
STATUS_NO_EDGE = "no reducing edge"
STATUS_COMPLETE = "graph complete"


@dataclass
class MitigationResult:
    """Outcome of one mitigation run.

    ``bias_trajectories`` and ``relaxed_trajectories`` map a hop to
    ``(iteration, value)`` pairs; a value is None where the metric is
    undefined at that iteration.
    """

    mode: str
    config: dict
    final_scores: Optional[ScoreMatrix] = None
    final_adjacency: Optional[np.ndarray] = None
    perturbation: Optional[np.ndarray] = None
    added_edges: list = field(default_factory=list)
    loss_trajectory: list = field(default_factory=list)
    bias_trajectories: dict = field(default_factory=dict)
    relaxed_trajectories: dict = field(default_factory=dict)
    before: dict = field(default_factory=dict)
    after: dict = field(default_factory=dict)
    status: str = STATUS_DONE
    best_iteration: Optional[int] = None

    def trajectory(self, hop: int) -> list:
        return [v for _, v in self.bias_trajectories.get(hop, [])]

    def to_dict(self, node_ids=None) -> dict:
        ids = (lambda v: int(node_ids[v])) if node_ids is not None else int
        out = {
            "mode": self.mode,
            "status": self.status,
            "config": self.config,
            "best_iteration": self.best_iteration,
            "before": _jsonable(self.before),
            "after": _jsonable(self.after),
            "loss_trajectory": [float(x) for x in self.loss_trajectory],
            "bias_trajectories": {str(k): [[i, v] for i, v in t] for k, t in self.bias_trajectories.items()},
            "relaxed_trajectories": {str(k): [[i, v] for i, v in t] for k, t in self.relaxed_trajectories.items()},
        }
        if self.added_edges:
            out["added_edges"] = [[ids(i), ids(j)] for i, j in self.added_edges]
        if self.perturbation is not None:
            out["perturbation_norm"] = float(np.linalg.norm(self.perturbation))
        return out

    def to_json(self, node_ids=None) -> str:
        return json.dumps(self.to_dict(node_ids), indent=2, sort_keys=True)

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "hop", "exact_value", "relaxed_value"])
        for hop in sorted(set(self.bias_trajectories) | set(self.relaxed_trajectories)):
            exact = dict(self.bias_trajectories.get(hop, []))
            relaxed = dict(self.relaxed_trajectories.get(hop, []))
            for it in sorted(set(exact) | set(relaxed)):
                w.writerow([it, hop, _cell(exact.get(it)), _cell(relaxed.get(it))])
        return buf.getvalue()


def _cell(v):
    return "" if v is None else repr(float(v))


def _jsonable(d):
    if isinstance(d, dict):
        return {str(k): _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, (np.floating, np.integer)):
        return d.item()
    return d


def _usable_hops(g: AttributedGraph) -> list:
    # every hop with a nonempty level reached by at least two groups
    return [idx.k for idx in khop_levels(g)
            if not idx.is_empty() and np.unique(g.groups[idx.v_k]).size >= 2]


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (MetricUndefinedError, DomainGapError):
        return None


def _score_snapshot(g, scores, hops, test_positives, test_negatives) -> dict:
    snap = {"nf": {k: _safe(nf, g, k, scores) for k in hops}}
    if test_positives is not None and test_negatives is not None:
        pairs = list(test_positives) + list(test_negatives)
        labels = [1] * len(test_positives) + [0] * len(test_negatives)
        try:
            rep = dyadic_metrics(scores, pairs, labels, g.groups)
            snap["dp"], snap["eo"] = rep.dp, rep.eo
            snap["auc"] = auc(scores, test_positives, test_negatives)
        except DomainGapError as exc:
            logger.warning("test pairs not fully scored (%s); DP/EO/AUC skipped", exc)
    return snap


def post_process(train_graph: AttributedGraph, k: int, scores: ScoreMatrix, alpha: float,
                 epochs: int = 500, lr: float = 0.01, cfg: RelaxationConfig = RelaxationConfig(),
                 seed: int = 0, eval_every: int = 10, test_positives=None,
                 test_negatives=None) -> MitigationResult:
    """Perturb the scores of distance-k pairs to shrink the k-hop fairness gap.

    ``U`` starts at zero and is trained with Adam on the relaxed objective.
    Every ``eval_every`` epochs (and at the start and end) the exact
    objective, exact NF plus ``alpha`` times the perturbation norm, is
    evaluated; the best of these iterates is returned. With ``alpha = 0`` this
    never increases the exact NF. The run is deterministic; ``seed`` is
    echoed for provenance.
    """
    if epochs < 0 or eval_every < 1:
        raise ValueError("epochs must be >= 0 and eval_every >= 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    idx = checked_index(train_graph, k)
    mask = idx.pairs.toarray().astype(bool)
    base = scores.restrict(idx.pairs).toarray()
    hops = _usable_hops(train_graph)
    before = _score_snapshot(train_graph, scores, hops, test_positives, test_negatives)

    def candidate(u):
        return scores.replace_on(idx.pairs, np.clip(base + u * mask, 0.0, 1.0))

    u = np.zeros((train_graph.n, train_graph.n))
    state = AdamState(lr=lr)
    result = MitigationResult("post", {"k": k, "alpha": alpha, "epochs": epochs, "lr": lr,
                                       "seed": seed, "eval_every": eval_every, **asdict(cfg)})
    result.before = before
    best = (np.inf, 0, u.copy())
    for epoch in range(epochs + 1):
        lg = relaxed_nf_loss(train_graph, k, scores, u, alpha, cfg, idx=idx)
        result.loss_trajectory.append(lg.value)
        if epoch % eval_every == 0 or epoch == epochs:
            exact = nf(train_graph, k, candidate(u), idx=idx)
            objective = exact + alpha * float(np.linalg.norm(u * mask))
            result.bias_trajectories.setdefault(k, []).append((epoch, exact))
            result.relaxed_trajectories.setdefault(k, []).append((epoch, lg.bias_value))
            if objective < best[0]:
                best = (objective, epoch, u.copy())
        if epoch == epochs:
            break
        grad = backward(lg.tape, lg.loss)[lg.param]
        u, state = adam_step(u, grad, state)
        if not np.all(np.isfinite(u)):
            raise NonFiniteError(f"perturbation became non-finite at epoch {epoch}")

    _, result.best_iteration, u = best
    result.perturbation = u * mask
    result.final_scores = candidate(u)
    result.after = _score_snapshot(train_graph, result.final_scores, hops, test_positives, test_negatives)
    return result


@dataclass
class SweepTable:
    rows: list

    @property
    def norm_nonincreasing(self) -> bool:
        """Soft check: the perturbation norm does not grow with alpha."""
        norms = [r["perturbation_norm"] for r in self.rows]
        return all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "nf", "auc", "perturbation_norm", "best_iteration"])
        for r in self.rows:
            w.writerow([repr(r["alpha"]), _cell(r["nf"]), _cell(r["auc"]),
                        repr(r["perturbation_norm"]), r["best_iteration"]])
        return buf.getvalue()


def alpha_sweep(train_graph: AttributedGraph, k: int, scores: ScoreMatrix, alphas: Sequence[float],
                test_positives=None, test_negatives=None, **kwargs) -> SweepTable:
    """Run ``post_process`` for each distinct alpha (ascending)."""
    alphas = sorted({float(a) for a in alphas})
    if not alphas:
        raise ValueError("alphas must be nonempty")
    rows = []
    for a in alphas:
        res = post_process(train_graph, k, scores, a, test_positives=test_positives,
                           test_negatives=test_negatives, **kwargs)
        rows.append({
            "alpha": a,
            "nf": res.after["nf"][k],
            "auc": res.after.get("auc"),
            "perturbation_norm": float(np.linalg.norm(res.perturbation)),
            "best_iteration": res.best_iteration,
        })
    table = SweepTable(rows)
    if not table.norm_nonincreasing:
        logger.info("perturbation norm is not monotone in alpha on this input")
    return table


def _hard_graph(template: AttributedGraph, a: np.ndarray) -> AttributedGraph:
    g = from_adjacency((a > 0.5).astype(float), template.groups)
    return template.with_edges(g.edges)


def _nb_or_none(g, k):
    return _safe(nb, g, k)


def pre_process_continuous(g: AttributedGraph, k: int, alpha: float, box01: bool = True,
                           symmetric: bool = True, support_only: bool = False, epochs: int = 500,
                           lr: float = 0.01, cfg: RelaxationConfig = RelaxationConfig(), seed: int = 0,
                           eval_every: int = 10) -> MitigationResult:
    """Optimize a weighted adjacency ``A'`` against the relaxed k-hop bias.

    After every Adam step ``A'`` is projected: symmetrized, clipped to
    [0, 1], diagonal zeroed and, with ``support_only``, zero outside the
    support of ``A``. The iterate with the lowest relaxed objective is
    returned; exact NB of its hardening ``A' > 0.5`` is reported alongside.
    """
    if symmetric and g.directed:
        raise ValueError("symmetric projection requires an undirected graph")
    if epochs < 0 or eval_every < 1:
        raise ValueError("epochs must be >= 0 and eval_every >= 1")
    a0 = g.support.toarray().astype(float)
    support = a0 > 0
    a = a0.copy()
    state = AdamState(lr=lr)
    result = MitigationResult("pre-continuous", {
        "k": k, "alpha": alpha, "epochs": epochs, "lr": lr, "seed": seed, "eval_every": eval_every,
        "box01": box01, "symmetric": symmetric, "support_only": support_only, **asdict(cfg)})
    result.before = {"nb": {k: _nb_or_none(g, k)}, "relaxed_nb": None}
    best = (np.inf, 0, a.copy(), None)
    for epoch in range(epochs + 1):
        lg = relaxed_nb_loss(a, a0, k, alpha, cfg, g.groups)
        if epoch == 0:
            result.before["relaxed_nb"] = lg.bias_value
        result.loss_trajectory.append(lg.value)
        if lg.value < best[0]:
            best = (lg.value, epoch, a.copy(), lg.bias_value)
        if epoch % eval_every == 0 or epoch == epochs:
            result.bias_trajectories.setdefault(k, []).append((epoch, _nb_or_none(_hard_graph(g, a), k)))
            result.relaxed_trajectories.setdefault(k, []).append((epoch, lg.bias_value))
        if epoch == epochs:
            break
        grad = backward(lg.tape, lg.loss)[lg.param]
        if support_only:
            grad = grad * support
        a, state = adam_step(a, grad, state)
        if symmetric:
            a = (a + a.T) / 2.0
        if box01:
            a = np.clip(a, 0.0, 1.0)
        np.fill_diagonal(a, 0.0)
        if support_only:
            a[~support] = 0.0
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"adjacency became non-finite at epoch {epoch}")

    _, result.best_iteration, a, relaxed = best
    result.final_adjacency = a
    hard = _hard_graph(g, a)
    result.after = {"nb": {k: _nb_or_none(hard, k)}, "relaxed_nb": relaxed,
                    "distance_from_input": float(np.linalg.norm(a - a0))}
    return result


def edge_gradient_scores(a: np.ndarray, groups, k: int, cfg: RelaxationConfig = RelaxationConfig()):
    """Symmetric gradient ``grad[i, j] + grad[j, i]`` of relaxed NB at ``a``."""
    lg = relaxed_nb_loss(a, a, k, 0.0, cfg, groups)
    grad = backward(lg.tape, lg.loss)[lg.param]
    return grad + grad.T, lg.bias_value


def rewire_add_edges(g: AttributedGraph, k_target: int, budget: int = 100,
                     cfg: RelaxationConfig = RelaxationConfig(),
                     track: Optional[HopSet] = None) -> MitigationResult:
    """Greedy edge addition guided by the gradient of relaxed NB at hop ``k_target``.

    Each round adds the non-edge whose symmetric gradient is most negative
    (ties: smallest ``(i, j)``), then recomputes the hop structure. Stops early
    with status ``"no reducing edge"`` when no gradient is negative.
    """
    if g.directed:
        raise ValueError("edge addition rewiring expects an undirected graph")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    a = g.support.toarray().astype(float)
    n = g.n
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    if not (upper & (a == 0)).any():
        raise ValueError("graph is already complete")
    checked_index(g, k_target)
    hops = sorted(set(track if track is not None else meaningful_hops(g)) | {k_target})

    result = MitigationResult("pre-add", {"k": k_target, "budget": budget, "track": hops, **asdict(cfg)})
    cur = g

    def record(it, graph, relaxed_target):
        for h in hops:
            result.bias_trajectories.setdefault(h, []).append((it, _nb_or_none(graph, h)))
        result.relaxed_trajectories.setdefault(k_target, []).append((it, relaxed_target))

    result.before = {"nb": {h: _nb_or_none(g, h) for h in hops}}
    result.status = STATUS_BUDGET
    for it in range(budget + 1):
        score, relaxed = edge_gradient_scores(a, g.groups, k_target, cfg)
        result.loss_trajectory.append(relaxed)
        record(it, cur, relaxed)
        if it == budget:
            break
        cand = upper & (a == 0)
        if not cand.any():
            result.status = STATUS_COMPLETE
            break
        masked = np.where(cand, score, np.inf)
        flat = int(np.argmin(masked))  # row-major: first minimum is the smallest (i, j)
        if not masked.flat[flat] < 0:
            result.status = STATUS_NO_EDGE
            break
        i, j = divmod(flat, n)
        a[i, j] = a[j, i] = 1.0
        result.added_edges.append((i, j))
        cur = cur.with_edges(np.r_[cur.edges, [[i, j]]])
    result.final_adjacency = a
    result.after = {"nb": {h: _nb_or_none(cur, h) for h in hops}}
    result.best_iteration = len(result.added_edges)
    return result


def pearson(x, y):
    """Pearson r and two-sided p-value; ``(None, None)`` when undefined."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size != y.size:
        raise ValueError("trajectories differ in length")
    if x.size < 3:
        return None, None
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        return None, None
    r = float(np.clip((xc @ yc) / np.sqrt(sxx * syy), -1.0, 1.0))
    dof = x.size - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt(dof / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(t), dof))


def bias_trajectory_correlation(result: MitigationResult, target_k: int) -> dict:
    """Pearson r between the target hop's exact trajectory and every tracked hop.

    Iterations where either value is undefined are dropped. A hop whose
    trajectory is constant, or shorter than 3 points, maps to
    ``{"pearson_r": None, "p_value": None}``.
    """
    if target_k not in result.bias_trajectories:
        raise ValueError(f"hop {target_k} was not tracked")
    target = dict(result.bias_trajectories[target_k])
    if len(target) < 3:
        raise ValueError("at least 3 recorded iterations are required")
    out = {}
    for hop, traj in sorted(result.bias_trajectories.items()):
        both = [(target[i], v) for i, v in traj if v is not None and target.get(i) is not None]
        if not both:
            out[hop] = {"pearson_r": None, "p_value": None}
            continue
        xs, ys = zip(*both)
        r, p = pearson(xs, ys)
        out[hop] = {"pearson_r": r, "p_value": p}
    return out
