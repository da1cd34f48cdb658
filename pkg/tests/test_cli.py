import csv
import subprocess
import sys

import pytest

from rnndescent.cli import main
from rnndescent.dataset import load_ivecs, synth_uniform, write_fvecs
from rnndescent.graph import deserialize


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    write_fvecs(d / "base.fvecs", synth_uniform(300, 8, seed=1))
    write_fvecs(d / "query.fvecs", synth_uniform(25, 8, seed=2))
    assert main(["gt", "--base", str(d / "base.fvecs"), "--queries", str(d / "query.fvecs"),
                 "--k", "3", "--out", str(d / "gt.ivecs"), "--threads", "1"]) == 0
    assert main(["build", "--input", str(d / "base.fvecs"), "--out", str(d / "g.rnnd"),
                 "--S", "10", "--R", "32", "--T1", "2", "--T2", "3", "--threads", "2"]) == 0
    return d


def test_build_and_gt_outputs(files):
    assert deserialize(files / "g.rnnd").n == 300
    gt = load_ivecs(files / "gt.ivecs", n=300)
    assert (gt.n_queries, gt.k) == (25, 3)


def test_nndescent_build(files, capsys):
    out = files / "nnd.rnnd"
    assert main(["nndescent-build", "--input", str(files / "base.fvecs"), "--out", str(out),
                 "--K", "8", "--S", "4", "--iter", "2", "--threads", "1"]) == 0
    assert "K=inf edges=2400" in capsys.readouterr().out


def test_search_writes_ids(files, capsys):
    out = files / "res.ivecs"
    code = main(["search", "--index", str(files / "g.rnnd"), "--base", str(files / "base.fvecs"),
                 "--queries", str(files / "query.fvecs"), "--L", "16", "--K", "8", "--k", "2",
                 "--out", str(out), "--threads", "1"])
    assert code == 0
    res = load_ivecs(out, n=300)
    assert (res.n_queries, res.k) == (25, 2)
    assert "qps=" in capsys.readouterr().out


def test_bench_csv(files, capsys):
    out = files / "bench.csv"
    code = main(["bench", "--index", str(files / "g.rnnd"), "--base", str(files / "base.fvecs"),
                 "--queries", str(files / "query.fvecs"), "--gt", str(files / "gt.ivecs"),
                 "--L", "4,16,64", "--K", "8,inf", "--csv", str(out), "--repeats", "1",
                 "--dataset", "toy", "--threads", "1"])
    assert code == 0
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    assert {r["K"] for r in rows} == {"8", "inf"}
    # recheck the Pareto column from the recorded numbers
    pts = [(float(r["recall_at_1"]), float(r["qps"])) for r in rows]
    for r, (rec, qps) in zip(rows, pts):
        dominated = any((a >= rec and b >= qps) and (a > rec or b > qps) for a, b in pts)
        assert r["pareto"] == ("0" if dominated else "1")
    assert "threads=1" in capsys.readouterr().out


def test_sweep_t(files):
    out = files / "sweep.csv"
    code = main(["sweep-t", "--base", str(files / "base.fvecs"), "--queries", str(files / "query.fvecs"),
                 "--gt", str(files / "gt.ivecs"), "--pairs", "1x4,2x2", "--S", "8", "--R", "24",
                 "--csv", str(out), "--repeats", "1", "--threads", "1"])
    assert code == 0
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert [(r["T1"], r["T2"]) for r in rows] == [("1", "4"), ("2", "2")]


def test_stats(files, capsys):
    assert main(["stats", "--index", str(files / "g.rnnd"), "--K", "4,8", "--base", str(files / "base.fvecs")]) == 0
    out = capsys.readouterr().out
    assert "AOD K=4:" in out and "AOD K=inf:" in out
    assert "out-degree histogram" in out
    assert main(["stats", "--index", str(files / "g.rnnd")]) == 0


def test_stats_empty_list_entry(files, capsys):
    with pytest.raises(SystemExit) as e:
        main(["stats", "--index", str(files / "g.rnnd"), "--K", "4,,8"])
    assert e.value.code == 1


def test_missing_input_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["build", "--out", "x.rnnd"])
    assert e.value.code == 1
    assert "--input" in capsys.readouterr().err


def test_zero_S_names_flag(files, capsys):
    with pytest.raises(SystemExit) as e:
        main(["build", "--input", str(files / "base.fvecs"), "--out", str(files / "x.rnnd"), "--S", "0"])
    assert e.value.code == 1
    assert "--S" in capsys.readouterr().err


def test_S_too_large_is_parameter_error(files, capsys):
    code = main(["build", "--input", str(files / "base.fvecs"), "--out", str(files / "x.rnnd"), "--S", "300"])
    assert code == 1
    assert "--S" in capsys.readouterr().err


def test_gt_k_larger_than_n(files, capsys):
    code = main(["gt", "--base", str(files / "base.fvecs"), "--queries", str(files / "query.fvecs"),
                 "--k", "301", "--out", str(files / "bad.ivecs")])
    assert code == 1
    assert "--k" in capsys.readouterr().err


def test_corrupt_index_is_data_error(files, capsys):
    raw = bytearray((files / "g.rnnd").read_bytes())
    raw[40] ^= 0xFF
    bad = files / "bad.rnnd"
    bad.write_bytes(bytes(raw))
    code = main(["stats", "--index", str(bad)])
    assert code == 2
    assert "checksum" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path, capsys):
    code = main(["build", "--input", str(tmp_path / "nope.fvecs"), "--out", str(tmp_path / "g.rnnd")])
    assert code == 2


def test_index_base_size_mismatch(files, tmp_path):
    write_fvecs(tmp_path / "small.fvecs", synth_uniform(10, 8, seed=1))
    code = main(["search", "--index", str(files / "g.rnnd"), "--base", str(tmp_path / "small.fvecs"),
                 "--queries", str(files / "query.fvecs"), "--out", str(tmp_path / "r.ivecs")])
    assert code == 2


def test_module_entry_point(files):
    proc = subprocess.run(
        [sys.executable, "-m", "rnndescent", "stats", "--index", str(files / "g.rnnd")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "AOD K=inf" in proc.stdout
