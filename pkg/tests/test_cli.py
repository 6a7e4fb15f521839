import json
import logging
from fractions import Fraction

import numpy as np
import pytest

from khopfair.cli import main
from khopfair.graph import format_attrs, format_edges
from khopfair.toygen import gen_sbm, gen_toy, oracle


def _write_graph(tmp_path, g, name="g"):
    e, a = tmp_path / f"{name}_edges.txt", tmp_path / f"{name}_attrs.txt"
    e.write_text(format_edges(g))
    a.write_text(format_attrs(g))
    return ["--edges", str(e), "--attrs", str(a)]


def _rows(text):
    return dict(line.split(",", 1) for line in text.strip().splitlines()[1:])


def test_bias_on_toy_matches_oracle(tmp_path, capsys):
    g = gen_toy("a", 5)
    assert main(["bias", *_write_graph(tmp_path, g), "--hops", "1,2,3"]) == 0
    rows = _rows(capsys.readouterr().out)
    want = oracle("a", 5)
    for k in (1, 2, 3):
        assert float(rows[str(k)]) == pytest.approx(float(want.nb[k]), abs=1e-12)
    assert float(rows["assortativity"]) == pytest.approx(float(want.assortativity), abs=1e-12)


def test_bias_on_star(tmp_path, capsys):
    assert main(["toygraph", "--variant", "star", "--n", "12", "--p", "2/3", "--out", str(tmp_path)]) == 0
    orc = json.loads((tmp_path / "oracle.json").read_text())
    assert Fraction(orc["nb"]["1"]) == Fraction(1, 27)
    capsys.readouterr()
    assert main(["bias", "--edges", str(tmp_path / "edges.txt"), "--attrs", str(tmp_path / "attrs.txt"),
                 "--hops", "1"]) == 0
    assert float(_rows(capsys.readouterr().out)["1"]) == pytest.approx(1 / 27, abs=1e-12)


def test_toygraph_prints_without_out(capsys):
    assert main(["toygraph", "--variant", "c", "--n", "3"]) == 0
    out = capsys.readouterr().out
    assert "# edges.txt" in out and "# oracle.json" in out


def test_disconnected_input_warns(tmp_path, caplog):
    (tmp_path / "e.txt").write_text("0 1\n2 3\n")
    (tmp_path / "a.txt").write_text("0 0\n1 1\n2 0\n3 1\n")
    with caplog.at_level(logging.WARNING):
        code = main(["bias", "--edges", str(tmp_path / "e.txt"), "--attrs", str(tmp_path / "a.txt"), "--hops", "1"])
    assert code == 0
    assert any("disconnected" in r.message for r in caplog.records)


def test_fairness_indicator_scores_equal_nb(tmp_path, capsys):
    g = gen_toy("b", 4)
    args = _write_graph(tmp_path, g)
    scores = tmp_path / "s.txt"
    scores.write_text("".join(f"{i} {j} 1\n" for i, j in g.edges.tolist()))
    assert main(["fairness", *args, "--scores", str(scores), "--k", "1"]) == 0
    nf_rows = _rows(capsys.readouterr().out)
    assert main(["bias", *args, "--hops", "1"]) == 0
    assert float(nf_rows["1"]) == pytest.approx(float(_rows(capsys.readouterr().out)["1"]), abs=1e-12)


def test_fairness_on_path(tmp_path, capsys):
    (tmp_path / "e.txt").write_text("0 1\n1 2\n")
    (tmp_path / "a.txt").write_text("0 0\n1 1\n2 0\n")
    (tmp_path / "s.txt").write_text("0 1 1.0\n1 2 0.0\n")
    assert main(["fairness", "--edges", str(tmp_path / "e.txt"), "--attrs", str(tmp_path / "a.txt"),
                 "--scores", str(tmp_path / "s.txt"), "--k", "1"]) == 0
    assert float(_rows(capsys.readouterr().out)["1"]) == pytest.approx(0.5)


def test_fairness_domain_gap_exits_2(tmp_path):
    (tmp_path / "e.txt").write_text("0 1\n1 2\n")
    (tmp_path / "a.txt").write_text("0 0\n1 1\n2 0\n")
    (tmp_path / "s.txt").write_text("0 1 1.0\n")
    assert main(["fairness", "--edges", str(tmp_path / "e.txt"), "--attrs", str(tmp_path / "a.txt"),
                 "--scores", str(tmp_path / "s.txt"), "--k", "1"]) == 2


def test_exit_codes(tmp_path, capsys):
    (tmp_path / "e.txt").write_text("0 1\n1 2\n")
    (tmp_path / "one.txt").write_text("0 0\n1 0\n2 0\n")
    (tmp_path / "bad.txt").write_text("0 0\n1\n")
    base = ["--edges", str(tmp_path / "e.txt")]
    assert main(["mitigate", "pre-add", *base, "--attrs", str(tmp_path / "one.txt"), "--k", "1"]) == 3
    assert main(["bias", *base, "--attrs", str(tmp_path / "bad.txt")]) == 2
    assert main(["bias", *base, "--attrs", str(tmp_path / "missing.txt")]) == 2


def test_decompose_dp_csv(tmp_path, capsys):
    g = gen_sbm((10, 10), [[0.4, 0.1], [0.1, 0.4]], seed=0)
    args = _write_graph(tmp_path, g)
    p = np.random.default_rng(0).uniform(size=(g.n, g.n))
    s = tmp_path / "s.txt"
    s.write_text("".join(f"{i} {j} {float(p[i, j])!r}\n" for i in range(g.n) for j in range(g.n) if i != j))
    out = tmp_path / "out"
    assert main(["decompose-dp", *args, "--scores", str(s), "--out", str(out), "--emit", "json,csv"]) == 0
    table = (out / "table.csv").read_text().splitlines()
    assert table[0] == "hop,contribution"
    rows = dict(line.split(",") for line in table[1:])
    assert abs(float(rows["residual"])) <= 1e-9
    report = json.loads((out / "report.json").read_text())
    assert set(report) == {"command", "config", "versions", "results", "timing"}


def _strip_timing(path):
    d = json.loads(path.read_text())
    d.pop("timing")
    d["config"].pop("out")
    return d


def test_mitigate_post_is_reproducible(tmp_path, capsys):
    g = gen_sbm((12, 12), [[0.4, 0.05], [0.05, 0.4]], seed=1)
    args = _write_graph(tmp_path, g)
    p = np.random.default_rng(3).uniform(size=(g.n, g.n))
    s = tmp_path / "s.txt"
    s.write_text("".join(f"{i} {j} {float(p[i, j])!r}\n" for i in range(g.n) for j in range(g.n) if i != j))
    runs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["mitigate", "post", *args, "--scores", str(s), "--k", "1", "--epochs", "20",
                     "--seed", "5", "--out", str(out), "--emit", "json,csv"]) == 0
        runs.append(out)
    assert _strip_timing(runs[0] / "report.json") == _strip_timing(runs[1] / "report.json")
    assert (runs[0] / "trajectory.csv").read_text() == (runs[1] / "trajectory.csv").read_text()
    assert (runs[0] / "scores.txt").read_text() == (runs[1] / "scores.txt").read_text()


def test_mitigate_sweep_and_pre_cont(tmp_path, capsys):
    g = gen_toy("b", 3)
    args = _write_graph(tmp_path, g)
    s = tmp_path / "s.txt"
    s.write_text("".join(f"{i} {j} 0.5\n" for i in range(g.n) for j in range(g.n) if i != j))
    out = tmp_path / "sw"
    assert main(["mitigate", "sweep", *args, "--scores", str(s), "--k", "1", "--alphas", "1,0",
                 "--epochs", "5", "--out", str(out), "--emit", "json,csv"]) == 0
    assert (out / "sweep.csv").read_text().splitlines()[1].startswith("0.0,")
    out = tmp_path / "pc"
    assert main(["mitigate", "pre-cont", *args, "--k", "1", "--epochs", "5", "--out", str(out)]) == 0
    assert (out / "adjacency.txt").exists()
    assert json.loads((out / "report.json").read_text())["results"]["mode"] == "pre-continuous"


def test_mitigate_pre_add_reports_status(tmp_path, capsys):
    g = gen_sbm((10, 10), [[0.4, 0.05], [0.05, 0.4]], seed=0)
    out = tmp_path / "pa"
    assert main(["mitigate", "pre-add", *_write_graph(tmp_path, g), "--k", "1", "--budget", "3",
                 "--out", str(out)]) == 0
    res = json.loads((out / "report.json").read_text())["results"]
    assert res["status"] in {"budget exhausted", "no reducing edge", "graph complete"}
    assert "correlation" in res
    assert len((out / "edges.txt").read_text().splitlines()) == g.m + len(res.get("added_edges", []))


def test_split_and_khops(tmp_path, capsys):
    g = gen_sbm((10, 10), [[0.4, 0.1], [0.1, 0.4]], seed=0)
    args = _write_graph(tmp_path, g)
    out = tmp_path / "split"
    assert main(["split", *args, "--seed", "1", "--out", str(out)]) == 0
    pos = (out / "test_pos.txt").read_text().splitlines()
    neg = (out / "test_neg.txt").read_text().splitlines()
    train = (out / "train_edges.txt").read_text().splitlines()
    assert len(pos) == len(neg) and len(train) + len(pos) == g.m
    capsys.readouterr()
    (tmp_path / "e.txt").write_text("0 1\n1 2\n2 3\n")
    (tmp_path / "a.txt").write_text("0 0\n1 1\n2 0\n3 1\n")
    assert main(["khops", "--edges", str(tmp_path / "e.txt"), "--attrs", str(tmp_path / "a.txt"), "--k", "2"]) == 0
    assert capsys.readouterr().out == "0 2 1\n1 3 1\n2 0 1\n3 1 1\n"


def test_split_requires_seed(tmp_path):
    with pytest.raises(SystemExit):
        main(["split", "--edges", "x", "--attrs", "y", "--out", str(tmp_path)])
