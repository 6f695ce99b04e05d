import json
import subprocess
import sys

import numpy as np
import pytest

from dpkme.cli import main
from dpkme.data import read_csv, read_release


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def private_csv(tmp_path):
    p = tmp_path / "private.csv"
    assert run("generate", "--dim", 2, "--n", 1000, "--seed", 1, "--out", p) == 0
    return p


def test_generate(private_csv, tmp_path):
    ds = read_csv(private_csv)
    assert ds.n == 1000 and ds.dim == 2
    side = json.loads(private_csv.with_suffix(".spec.json").read_text())
    assert side["dim"] == 2 and side["n"] == 1000 and side["seed"] == 1


def test_generate_rejects_zero_rows(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("generate", "--dim", 2, "--n", 0, "--out", tmp_path / "x.csv")
    assert exc.value.code == 2


def test_release_subspace(private_csv, tmp_path, capsys):
    out = tmp_path / "rel.csv"
    assert run("release", "--alg", "subspace", "--in", private_csv, "--epsilon", 1.0,
               "--m", 20, "--seed", 4, "--out", out) == 0
    # sqrt(8 ln(1.25e6)) / 1000
    assert "noise_std = 0.010598" in capsys.readouterr().out
    rel, meta = read_release(out)
    assert rel.size == 20 and meta.algorithm == "subspace" and meta.n_private == 1000
    assert meta.gamma == pytest.approx(5e-5)
    assert "delta_rkhs" not in out.with_suffix(".meta.json").read_text()


def test_release_rff_public_rows(private_csv, tmp_path):
    out = tmp_path / "rel.csv"
    assert run("release", "--alg", "rff", "--in", private_csv, "--epsilon", 1.0, "--m", 5,
               "--j", 64, "--max-iters", 5, "--public-rows", "--out", out) == 0
    rel, meta = read_release(out)
    assert meta.j_features == 64 and rel.l1_bound == 1.0 and rel.l1_norm <= 1 + 1e-9


def test_release_regularized(private_csv, tmp_path):
    out = tmp_path / "rel.csv"
    assert run("release", "--in", private_csv, "--epsilon", 0.1, "--m", 10, "--c", 1.0,
               "--public-rows", "--out", out) == 0
    rel, meta = read_release(out)
    assert meta.l1_bound == 1.0 and rel.l1_norm <= 1 + 1e-9


def test_release_config_file_and_override(private_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(private_csv), "epsilon": 0.5, "m": 7,
                               "out": str(tmp_path / "a.csv"), "seed": 2}))
    assert run("release", "--config", cfg) == 0
    assert run("release", "--config", cfg, "--m", 9, "--out", tmp_path / "b.csv") == 0
    assert read_release(tmp_path / "a.csv")[0].size == 7
    assert read_release(tmp_path / "b.csv")[0].size == 9


def test_release_missing_input(tmp_path, capsys):
    assert run("release", "--epsilon", 1, "--m", 3, "--out", tmp_path / "r.csv") == 2
    assert "--in" in capsys.readouterr().err


def test_release_bad_input_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    assert run("release", "--in", bad, "--epsilon", 1, "--m", 1, "--out", tmp_path / "r.csv") == 1
    assert "ragged" in capsys.readouterr().err


def test_report_delta_and_eval(private_csv, tmp_path, capsys):
    out = tmp_path / "rel.csv"
    assert run("release", "--in", private_csv, "--epsilon", 1, "--m", 20, "--public-rows",
               "--report-delta", "--out", out) == 0
    captured = capsys.readouterr()
    assert "curator" in captured.err
    reported = float(captured.out.split("delta_rkhs = ")[1])
    assert run("eval", "--private", private_csv, "--release", out) == 0
    evaluated = float(capsys.readouterr().out.split("delta_rkhs = ")[1])
    assert evaluated == pytest.approx(reported, rel=1e-5)


@pytest.mark.parametrize("alg", ["subspace", "rff"])
def test_release_bit_reproducible(private_csv, tmp_path, alg):
    for name in ("a", "b"):
        assert run("release", "--alg", alg, "--in", private_csv, "--epsilon", 1, "--m", 4,
                   "--j", 32, "--max-iters", 3, "--seed", 11, "--out", tmp_path / f"{name}.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.meta.json").read_bytes() == (tmp_path / "b.meta.json").read_bytes()


def test_grid_and_plot(tmp_path):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"dims": [2], "n_private": 300, "m_values": [5, 10],
                               "epsilons": [0.1, 1.0], "repeats": 2}))
    assert run("grid", "--config", cfg, "--out", tmp_path / "r1.csv", "--workers", 1) == 0
    assert run("grid", "--config", cfg, "--out", tmp_path / "r2.csv", "--workers", 2) == 0
    assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
    assert run("plot", "--results", tmp_path / "r1.csv", "--out-svg", tmp_path / "a.svg") == 0
    assert run("plot", "--results", tmp_path / "r1.csv", "--out-svg", tmp_path / "b.svg") == 0
    svg = (tmp_path / "a.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    assert svg == (tmp_path / "b.svg").read_text()


def test_grid_reports_failures(tmp_path):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"dims": [2], "n_private": 10, "m_values": [20],
                               "epsilons": [1.0]}))
    assert run("grid", "--config", cfg, "--out", tmp_path / "r.csv", "--workers", 1) == 1


def test_generate_reproducible(tmp_path):
    for name in ("a", "b"):
        run("generate", "--dim", 3, "--n", 50, "--seed", 9, "--out", tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dpkme", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "release" in res.stdout
