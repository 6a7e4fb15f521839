"""Command-line entry point: ``khopfair <command> [options]``.

Every command that takes ``--out`` writes a JSON report holding the command,
its full configuration, library versions and results. Wall-clock data sit in
the single ``timing`` field, so reruns differ only there.

Exit codes: 0 success, 2 input error, 3 metric undefined, 4 non-finite
optimization values.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from .exceptions import DomainGapError, GraphFormatError, MetricUndefinedError, NonFiniteError
from .graph import (format_attrs, format_edges, format_pairs, load_graph_files,
                    parse_pairs, split_edges, validate)
from .khop import khop_index, meaningful_hops
from .losses import RelaxationConfig
from .metrics import (assortativity, auc, dp_decomposition, dyadic_metrics,
                      format_scores, load_scores, nb, nf)
from .mitigate import (alpha_sweep, bias_trajectory_correlation, post_process,
                       pre_process_continuous, rewire_add_edges)
from .toygen import gen_star, gen_toy, oracle

EXIT_OK, EXIT_INPUT, EXIT_UNDEFINED, EXIT_NONFINITE = 0, 2, 3, 4

logger = logging.getLogger("khopfair")


def _int_list(text):
    try:
        vals = [int(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("hops must be positive integers")
    return vals


def _float_list(text):
    try:
        return [float(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _emit_list(text):
    return [t for t in str(text).replace(",", " ").split() if t]


# -- shared pieces ----------------------------------------------------------

def _add_graph_args(p):
    p.add_argument("--edges", required=True, help="edge list: 'u v' or 'u v w' per line")
    p.add_argument("--attrs", required=True, help="attribute file: 'v group' per line")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--weighted", action="store_true", help="read a third weight column")


def _add_output_args(p, default_emit="json"):
    p.add_argument("--out", help="output directory for the report and data files")
    p.add_argument("--emit", type=_emit_list, default=[default_emit],
                   help="comma-separated formats to write: json, csv")


def _add_relax_args(p):
    p.add_argument("--beta", type=float, default=20.0, help="sigmoid steepness")
    p.add_argument("--tau", type=float, default=0.5, help="sigmoid center")
    p.add_argument("--temp", type=float, default=0.01, help="LogSumExp temperature")


def _cfg(args) -> RelaxationConfig:
    return RelaxationConfig(beta=args.beta, tau=args.tau, temp=args.temp)


def _load(args):
    g = load_graph_files(args.edges, args.attrs, directed=args.directed, weighted=args.weighted)
    validate(g)  # logs a warning on stderr when disconnected
    return g


def _load_pairs(g, path):
    return parse_pairs(g, Path(path).read_text()) if path else None


def _config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _versions() -> dict:
    return {"khopfair": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def _write_report(args, results, started, t0):
    if not args.out:
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if "json" in args.emit:
        report = {
            "command": args.command,
            "config": _config(args),
            "versions": _versions(),
            "results": results,
            "timing": {"started_at": started, "wall_seconds": time.perf_counter() - t0},
        }
        (out / "report.json").write_text(json.dumps(_plain(report), indent=2, sort_keys=True) + "\n")


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def _fmt(v):
    return "undefined" if v is None else repr(float(v))


def _hops(args, g):
    return args.hops if getattr(args, "hops", None) else list(meaningful_hops(g, args.threshold))


# -- commands ---------------------------------------------------------------

def cmd_bias(args):
    g = _load(args)
    hops = _hops(args, g)
    table = {}
    for k in hops:
        try:
            table[k] = nb(g, k)
        except MetricUndefinedError:
            table[k] = None
    try:
        a = assortativity(g)
    except MetricUndefinedError:
        a = None
    print("k,nb")
    for k, v in table.items():
        print(f"{k},{_fmt(v)}")
    print(f"assortativity,{_fmt(a)}")
    return {"hops": hops, "nb": table, "assortativity": a}, _csv_table("k,nb", table)


def _csv_table(header, table):
    return header + "\n" + "".join(f"{k},{_fmt(v)}\n" for k, v in table.items())


def cmd_fairness(args):
    g = _load(args)
    scores = load_scores(g, Path(args.scores).read_text())
    hops = args.k if args.k else _hops(args, g)
    table = {}
    for k in hops:
        try:
            table[k] = nf(g, k, scores)
        except MetricUndefinedError:
            table[k] = None
    print("k,nf")
    for k, v in table.items():
        print(f"{k},{_fmt(v)}")
    results = {"hops": hops, "nf": table}
    pos, neg = _load_pairs(g, args.test_pos), _load_pairs(g, args.test_neg)
    if pos is not None and neg is not None:
        rep = dyadic_metrics(scores, pos + neg, [1] * len(pos) + [0] * len(neg), g.groups)
        results.update(dp=rep.dp, eo=rep.eo, auc=auc(scores, pos, neg))
        for name in ("dp", "eo", "auc"):
            print(f"{name},{_fmt(results[name])}")
    return results, _csv_table("k,nf", table)


def cmd_decompose_dp(args):
    g = _load(args)
    scores = load_scores(g, Path(args.scores).read_text())
    d = dp_decomposition(g, scores, fill=args.fill)
    lines = ["hop,contribution"] + [f"{k},{v!r}" for k, v in d.contributions.items()]
    lines += [f"direct,{d.direct_dp!r}", f"decomposed,{d.decomposed_dp!r}", f"residual,{d.residual!r}"]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    results = {"direct_dp": d.direct_dp, "decomposed_dp": d.decomposed_dp, "p_same": d.p_same,
               "contributions": d.contributions, "residual": d.residual}
    return results, text


def _write(args, name, text):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def cmd_mitigate_post(args):
    g = _load(args)
    scores = load_scores(g, Path(args.scores).read_text())
    pos, neg = _load_pairs(g, args.test_pos), _load_pairs(g, args.test_neg)
    res = post_process(g, args.k, scores, args.alpha, epochs=args.epochs, lr=args.lr, cfg=_cfg(args),
                       seed=args.seed, eval_every=args.eval_every, test_positives=pos,
                       test_negatives=neg)
    _write(args, "scores.txt", format_scores(g, res.final_scores))
    print(f"nf_before,{_fmt(res.before['nf'].get(args.k))}")
    print(f"nf_after,{_fmt(res.after['nf'].get(args.k))}")
    return res.to_dict(g.node_ids), res.trajectory_csv()


def cmd_mitigate_sweep(args):
    g = _load(args)
    scores = load_scores(g, Path(args.scores).read_text())
    pos, neg = _load_pairs(g, args.test_pos), _load_pairs(g, args.test_neg)
    table = alpha_sweep(g, args.k, scores, args.alphas, test_positives=pos, test_negatives=neg,
                        epochs=args.epochs, lr=args.lr, cfg=_cfg(args), seed=args.seed,
                        eval_every=args.eval_every)
    text = table.to_csv()
    sys.stdout.write(text)
    return {"rows": table.rows, "norm_nonincreasing": table.norm_nonincreasing}, text


def cmd_mitigate_pre_add(args):
    g = _load(args)
    track = set(args.hops) if args.hops else None
    res = rewire_add_edges(g, args.k, budget=args.budget, cfg=_cfg(args), track=track)
    out = res.to_dict(g.node_ids)
    if len(res.trajectory(args.k)) >= 3:
        out["correlation"] = bias_trajectory_correlation(res, args.k)
    rewired = g.with_edges(np.r_[g.edges, np.array(res.added_edges).reshape(-1, 2)])
    _write(args, "edges.txt", format_edges(rewired))
    print(f"status,{res.status}")
    print(f"added,{len(res.added_edges)}")
    return out, res.trajectory_csv()


def cmd_mitigate_pre_cont(args):
    g = _load(args)
    res = pre_process_continuous(g, args.k, args.alpha, box01=not args.no_box,
                                 symmetric=not args.no_symmetric, support_only=args.support_only,
                                 epochs=args.epochs, lr=args.lr, cfg=_cfg(args), seed=args.seed,
                                 eval_every=args.eval_every)
    a = res.final_adjacency
    ids = g.node_ids
    r, c = np.nonzero(np.triu(a, 1) if not g.directed else a)
    _write(args, "adjacency.txt", "".join(f"{ids[i]} {ids[j]} {float(a[i, j])!r}\n" for i, j in zip(r, c)))
    print(f"relaxed_nb_before,{_fmt(res.before['relaxed_nb'])}")
    print(f"relaxed_nb_after,{_fmt(res.after['relaxed_nb'])}")
    print(f"nb_hardened,{_fmt(res.after['nb'][args.k])}")
    return res.to_dict(ids), res.trajectory_csv()


def cmd_toygraph(args):
    if args.variant == "star":
        if args.p is None:
            raise ValueError("--p is required for the star variant")
        g = gen_star(args.n, args.p)
    else:
        g = gen_toy(args.variant, args.n)
    parts = {}
    if "edges" in args.emit:
        parts["edges.txt"] = format_edges(g)
    if "attrs" in args.emit:
        parts["attrs.txt"] = format_attrs(g)
    results = {"n_nodes": g.n, "n_edges": g.m}
    if "oracle" in args.emit:
        o = oracle(args.variant, args.n, args.p)
        results["oracle"] = {"assortativity": str(o.assortativity),
                             "nb": {k: str(v) for k, v in o.nb.items()}}
        parts["oracle.json"] = json.dumps(results["oracle"], indent=2, sort_keys=True) + "\n"
    if args.out:
        for name, text in parts.items():
            _write(args, name, text)
    else:
        for name, text in parts.items():
            sys.stdout.write(f"# {name}\n{text}")
    return results, None


def cmd_split(args):
    g = _load(args)
    s = split_edges(g, args.train_fraction, seed=args.seed)
    _write(args, "train_edges.txt", format_edges(s.train_graph))
    _write(args, "attrs.txt", format_attrs(g))
    _write(args, "test_pos.txt", format_pairs(g, s.test_positives))
    _write(args, "test_neg.txt", format_pairs(g, s.test_negatives))
    print(f"train_edges,{s.train_graph.m}")
    print(f"test_positives,{len(s.test_positives)}")
    print(f"test_negatives,{len(s.test_negatives)}")
    return {"train_edges": s.train_graph.m, "test_positives": len(s.test_positives),
            "test_negatives": len(s.test_negatives)}, None


def cmd_khops(args):
    g = _load(args)
    idx = khop_index(g, args.k)
    ids = g.node_ids
    c = idx.pairs.tocoo()
    rows = sorted((int(ids[i]), int(ids[j])) for i, j in zip(c.row, c.col))
    sys.stdout.write("".join(f"{i} {j} 1\n" for i, j in rows))
    return {"k": args.k, "pairs": len(rows)}, None


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="khopfair", description="k-hop fairness for link prediction")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bias", help="structural bias NB per hop and assortativity")
    _add_graph_args(p)
    p.add_argument("--threshold", type=float, default=0.5, help="meaningful-hop node fraction")
    p.add_argument("--hops", type=_int_list, help="explicit hops instead of the meaningful set")
    _add_output_args(p)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("fairness", help="k-hop fairness gap NF of a score file")
    _add_graph_args(p)
    p.add_argument("--scores", required=True, help="'i j score' triplets")
    p.add_argument("--k", type=_int_list, help="hops (default: the meaningful set)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--test-pos", help="positive test pairs for DP/EO/AUC")
    p.add_argument("--test-neg", help="negative test pairs for DP/EO/AUC")
    _add_output_args(p)
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("decompose-dp", help="demographic parity split by hop distance")
    _add_graph_args(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--fill", type=float, default=0.0, help="score for pairs missing from the file")
    _add_output_args(p)
    p.set_defaults(func=cmd_decompose_dp)

    p = sub.add_parser("mitigate", help="post-processing and rewiring")
    msub = p.add_subparsers(dest="mode", required=True)

    def common(mp, scores=False, alpha=True, epochs=True):
        _add_graph_args(mp)
        if scores:
            mp.add_argument("--scores", required=True)
            mp.add_argument("--test-pos")
            mp.add_argument("--test-neg")
        mp.add_argument("--k", type=int, required=True, help="target hop")
        if alpha:
            mp.add_argument("--alpha", type=float, default=0.0)
        if epochs:
            mp.add_argument("--epochs", type=int, default=500)
            mp.add_argument("--lr", type=float, default=0.01)
            mp.add_argument("--eval-every", type=int, default=10)
        mp.add_argument("--seed", type=int, default=0)
        _add_relax_args(mp)
        _add_output_args(mp)

    mp = msub.add_parser("post", help="perturb k-hop pair scores")
    common(mp, scores=True)
    mp.set_defaults(func=cmd_mitigate_post)

    mp = msub.add_parser("sweep", help="post-processing over several alphas")
    common(mp, scores=True, alpha=False)
    mp.add_argument("--alphas", type=_float_list, required=True, help="comma-separated alphas")
    mp.set_defaults(func=cmd_mitigate_sweep)

    mp = msub.add_parser("pre-add", help="greedy edge addition")
    common(mp, alpha=False, epochs=False)
    mp.add_argument("--budget", type=int, default=100)
    mp.add_argument("--hops", type=_int_list, help="hops to track (default: meaningful set)")
    mp.set_defaults(func=cmd_mitigate_pre_add)

    mp = msub.add_parser("pre-cont", help="continuous adjacency optimization")
    common(mp)
    mp.add_argument("--support-only", action="store_true", help="only reweight existing edges")
    mp.add_argument("--no-symmetric", action="store_true", help="skip the symmetric projection")
    mp.add_argument("--no-box", action="store_true", help="skip clipping to [0, 1]")
    mp.set_defaults(func=cmd_mitigate_pre_cont)

    p = sub.add_parser("toygraph", help="emit a toy graph and its exact bias values")
    p.add_argument("--variant", choices=["star", "a", "b", "c"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", help="blue share for the star variant, e.g. 2/3")
    p.add_argument("--out")
    p.add_argument("--emit", type=_emit_list, default=["edges", "attrs", "oracle"],
                   help="comma-separated parts: edges, attrs, oracle")
    p.set_defaults(func=cmd_toygraph)

    p = sub.add_parser("split", help="train/test edge split with sampled negatives")
    _add_graph_args(p)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split, emit=["json"])

    p = sub.add_parser("khops", help="print the pairs at distance exactly k")
    _add_graph_args(p)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_khops, out=None, emit=[])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s: %(message)s")
    if args.command == "mitigate":
        args.command = f"mitigate {args.mode}"
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        results, csv_text = args.func(args)
    except MetricUndefinedError as exc:
        print(f"error: metric undefined: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (GraphFormatError, DomainGapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "out", None) and csv_text is not None and "csv" in args.emit:
        name = "trajectory.csv" if args.command.startswith("mitigate") else "table.csv"
        if args.command == "mitigate sweep":
            name = "sweep.csv"
        _write(args, name, csv_text)
    _write_report(args, results, started, t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
