import json
import subprocess
import sys

import pytest

from pbitsparse import __version__
from pbitsparse.cli import EXIT_CAPACITY, EXIT_CONFIG, main
from pbitsparse.experiments import read_table
from pbitsparse.ising import load_model
from pbitsparse.sparsify import load_embedding


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline_gen_sparsify_anneal_sample(tmp_path, capsys):
    g, e = tmp_path / "g.txt", tmp_path / "e.txt"
    assert run("gen", "--n", 8, "--instance-seed", 2, "--output", g) == 0
    model = load_model(g)
    assert model.n == 8 and "config_hash=" in g.read_text()
    assert run("sparsify", "--input", g, "--copies", 2, "--w0", 3.0, "--output", e) == 0
    emb = load_embedding(e)
    assert emb.logical_n == 8 and len(emb.copy_map[0]) == 2

    a1, a2, traj = tmp_path / "a1.csv", tmp_path / "a2.csv", tmp_path / "traj.csv"
    for out in (a1, a2):
        assert run("anneal", "--input", e, "--trials", 5, "--sweeps-per-beta", 200,
                   "--readout-tail", 10, "--workers", 2, "--output", out, "--trajectory", traj) == 0
    assert a1.read_text() == a2.read_text()
    rows = read_table(a1)
    assert len(rows) == 5 and all(len(r["state"]) == 8 for r in rows)
    assert traj.exists()

    s = tmp_path / "s.csv"
    assert run("sample", "--input", g, "--beta", 0.5, "--sweeps", 20_000, "--output", s) == 0
    assert "kl=" in capsys.readouterr().out
    rows = read_table(s)
    assert len(rows) == 256
    assert sum(float(r["probability"]) for r in rows) == pytest.approx(1.0)


def test_sample_reduces_embeddings(tmp_path):
    g, e, s = tmp_path / "g.txt", tmp_path / "e.txt", tmp_path / "s.csv"
    run("gen", "--n", 5, "--output", g)
    run("sparsify", "--input", g, "--k", 3, "--output", e)
    assert run("sample", "--input", e, "--sweeps", 5000, "--output", s) == 0
    assert len(read_table(s)) == 32


def test_experiment_subcommands(tmp_path):
    c = tmp_path / "c.csv"
    assert run("cost-model", "--output", c) == 0
    assert {r["topology"] for r in read_table(c)} == {"all_to_all", "sparse"}
    f = tmp_path / "f.csv"
    assert run("factor", "--trials", 3, "--output", f) == 0
    assert (tmp_path / "f_summary.csv").exists()
    w = tmp_path / "w.csv"
    assert run("w0-sweep", "--kind", "maxcut_grid", "--n", 8, "--trials", 3, "--w0-grid", "2,4",
               "--sweeps-per-beta", 50, "--readout-tail", 5, "--output", w) == 0
    assert [r["W0"] for r in read_table(w)] == ["2.0", "4.0"]
    fs = tmp_path / "fss.csv"
    assert run("fss", "--synthetic", "--bracket", "0,8", "--output", fs) == 0
    mu = float(read_table(tmp_path / "fss_collapse.csv")[0]["mu"])
    assert mu == pytest.approx(3.0, abs=0.1)


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "cost_model", "n_grid": [70, 80], "seed": 5}))
    out = tmp_path / "o.csv"
    assert run("cost-model", "--config", cfg, "--n-grid", "90,100", "--output", out) == 0
    rows = read_table(out)
    assert sorted({r["N"] for r in rows}) == ["100", "90"]
    assert {r["seed"] for r in rows} == {"5"}


def test_exit_codes(tmp_path, capsys):
    assert run("w0-sweep", "--w0-grid", "", "--output", tmp_path / "x.csv") == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "w0_sweep", "colour": 3}')
    assert run("w0-sweep", "--config", bad) == EXIT_CONFIG
    assert run("anneal", "--output", tmp_path / "y.csv") == EXIT_CONFIG
    assert run("factor", "--semiprime", 100, "--output", tmp_path / "z.csv") == EXIT_CAPACITY
    g = tmp_path / "g.txt"
    run("gen", "--n", 10, "--output", g)
    assert run("sparsify", "--input", g, "--k", 2, "--output", tmp_path / "e.txt") == EXIT_CAPACITY
    big = tmp_path / "big.txt"
    run("gen", "--n", 30, "--output", big)
    assert run("w0-sweep", "--kind", "maxcut_grid", "--n", 30, "--trials", 1) == EXIT_CAPACITY
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        run("w0-sweep", "--trials", "many")
    assert exc.value.code == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pbitsparse", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
