from __future__ import annotations

import json

import numpy as np
import pytest

from fluctlab import cli
from fluctlab.grid import PeriodicGrid
from fluctlab.io import (RunManifest, hash_artifacts, read_csv, read_field, read_snapshot,
                         verify_artifacts, write_csv, write_field, write_snapshot)
from fluctlab.scenario.config import save_config
from fluctlab.statlab.pool import resolve_threads

from conftest import small_config


# -- persistence -----------------------------------------------------------------------------


def test_snapshot_round_trip(tmp_path):
    X = np.random.default_rng(0).standard_normal((17, 2))
    p = write_snapshot(tmp_path / "s.bin", X, 0.25, replica=3)
    Y, t = read_snapshot(p)
    assert np.array_equal(X, Y) and t == 0.25
    meta = json.loads((tmp_path / "s.bin.json").read_text())
    assert meta["N"] == 17 and meta["replica"] == 3


def test_field_round_trip(tmp_path):
    grid = PeriodicGrid(2, 4.0, 16)
    v = np.random.default_rng(1).random(grid.shape)
    p = write_field(tmp_path / "f.bin", v, grid, 1.5)
    w, g2, t = read_field(p)
    assert np.array_equal(v, w) and g2.M == 16 and g2.L == 4.0 and t == 1.5
    with pytest.raises(ValueError):
        write_field(tmp_path / "g.bin", v[:8], grid, 0.0)


def test_csv_round_trip_exact_floats(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, -2.5e17]
    write_csv(tmp_path / "t.csv", ("a", "b", "c"), [(i, v, "x") for i, v in enumerate(vals)])
    cols, rows = read_csv(tmp_path / "t.csv")
    assert cols == ["a", "b", "c"]
    assert [float(r[1]) for r in rows] == vals


def test_manifest_round_trip_and_verification(tmp_path):
    write_csv(tmp_path / "t.csv", ("a",), [(1,)])
    man = RunManifest({"command": "x", "params": {}}, None, None, "0", artifacts=hash_artifacts(tmp_path))
    man.write(tmp_path)
    assert RunManifest.load(tmp_path) == man
    assert verify_artifacts(tmp_path, man) == ([], [])
    (tmp_path / "t.csv").write_text("a\n2\n")
    assert verify_artifacts(tmp_path, man) == ([], ["t.csv"])
    (tmp_path / "t.csv").unlink()
    assert verify_artifacts(tmp_path, man) == (["t.csv"], [])


# -- command line ----------------------------------------------------------------------------


@pytest.fixture
def small_ini(tmp_path):
    path = tmp_path / "small.ini"
    save_config(small_config(kernel="gaussian(amplitude=0.5, width=1.0)", replicas=3), path)
    return path


def test_help_and_usage_errors(tmp_path, capsys):
    assert cli.main(["--help"]) == 0
    assert cli.main(["meanfield", "--bogus"]) == 2
    assert cli.main([]) == 2
    assert cli.main(["meanfield", "--config", str(tmp_path / "missing.ini")]) == 2


def test_invalid_config_is_usage_error(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nd = 2\nalpha = 1.0\n")
    assert cli.main(["meanfield", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_meanfield_ok(small_ini, tmp_path):
    out = tmp_path / "mf"
    assert cli.main(["meanfield", "--config", str(small_ini), "--out", str(out)]) == 0
    assert (out / "manifest.json").is_file()
    assert cli.main(["meanfield", "--config", str(small_ini), "--out", str(out)]) == 2  # not empty


def test_numerical_abort_exit_code(tmp_path):
    path = tmp_path / "atom.ini"
    save_config(small_config(kernel="zero()", sigma="constant(0.0)", nu="constant(1.0)",
                             rho0="atom(at=0.0)"), path)
    assert cli.main(["meanfield", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_verdict_exit_code_and_report(small_ini, tmp_path):
    run = tmp_path / "runs"
    code = cli.main(["converge", "--config", str(small_ini), "--out", str(run / "converge"), "--runs", "4"])
    verdicts = json.loads((run / "converge" / "verdict.json").read_text())
    assert code == (0 if all(v["pass"] for v in verdicts) else 1)
    assert code == 1  # four replicas cannot pin the scaling slopes
    assert cli.main(["report", str(run)]) == 0
    text = (run / "report" / "report.md").read_text()
    assert "| criterion | estimate | band | 95% CI | pass |" in text
    assert "slope" in text


def test_report_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    assert cli.main(["report", str(tmp_path / "empty")]) == 0
    assert "No campaigns found." in (tmp_path / "empty" / "report" / "report.md").read_text()


def test_report_detects_tampering_and_incomplete_runs(small_ini, tmp_path):
    run = tmp_path / "mf"
    assert cli.main(["meanfield", "--config", str(small_ini), "--out", str(run)]) == 0
    csv = next(p for p in run.iterdir() if p.suffix == ".csv")
    csv.write_text(csv.read_text() + "0\n")
    assert cli.main(["report", str(run)]) == 2
    csv.unlink()
    assert cli.main(["report", str(run)]) == 2
    (run / "manifest.json").unlink()
    (run / "sub").mkdir()
    assert cli.main(["report", str(run)]) == 2


def test_replay_reproduces_hashes(small_ini, tmp_path, capsys):
    a = tmp_path / "a"
    assert cli.main(["meanfield", "--config", str(small_ini), "--out", str(a)]) == 0
    capsys.readouterr()
    assert cli.main(["replay", str(a / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert "all artifact hashes reproduced" in capsys.readouterr().out
    old, new = RunManifest.load(a), RunManifest.load(tmp_path / "b")
    assert old.artifacts == new.artifacts


def test_threads_environment(monkeypatch):
    monkeypatch.delenv("FLUCTLAB_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("FLUCTLAB_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv("FLUCTLAB_THREADS", "many")
    with pytest.raises(ValueError):
        resolve_threads(None)
    with pytest.raises(ValueError):
        resolve_threads(0)


def test_threads_do_not_change_output(small_ini, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["crossterms", "--config", str(small_ini), "--out", str(a), "--threads", "1",
                     "--N", "50"]) in (0, 1)
    assert cli.main(["crossterms", "--config", str(small_ini), "--out", str(b), "--threads", "3",
                     "--N", "50"]) in (0, 1)
    assert RunManifest.load(a).artifacts == RunManifest.load(b).artifacts
