import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from dnalpha.cli import main
from dnalpha.experiments import HEADERS, WORKERS_ENV, worker_count
from dnalpha.grid import read_snapshot
from dnalpha.params import ParameterError


def _run(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "dnalpha.cli", *args], capture_output=True, text=True,
        env=None if env is None else {**os.environ, **env},
    )


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_lc_modal_stable_exit_zero(tmp_path):
    out = tmp_path / "lc.csv"
    assert main(["simulate", "--scheme", "lc", "--level", "modal", "--alpha", "0.02",
                 "--n_steps", "2000", "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert tuple(rows[0]) == HEADERS["simulate"]
    eta = np.array([float(r[2]) for r in rows[1:]])
    assert len(eta) == 2001 and np.max(np.abs(eta)) < 1e-2


def test_lc_modal_unstable_exit_two(tmp_path):
    p = _run("simulate", "--scheme", "lc", "--level", "modal", "--alpha", "0.5", "--n_steps", "500",
             "--out", str(tmp_path / "x.csv"))
    assert p.returncode == 2
    assert "unstable" in p.stderr


def test_config_error_exit_one(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scheme = lc\n\n# step\ndt = -1\n")
    p = _run("simulate", "--config", str(cfg))
    assert p.returncode == 1
    assert f"{cfg}:4: dt must be > 0" in p.stderr


def test_unknown_key_exit_one(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("foo = 1\n")
    assert _run("bounds", "--config", str(cfg)).returncode == 1


def test_installed_script():
    p = subprocess.run(["dnalpha", "eigs", "--nx", "12", "--ny", "4", "--n_modes", "3"],
                       capture_output=True, text=True)
    assert p.returncode == 0
    assert p.stdout.splitlines()[0] == ",".join(HEADERS["eigs"])


def test_stdout_when_no_out(capsys):
    assert main(["bounds", "--n_modes", "3"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert tuple(rows[0]) == HEADERS["bounds"] and len(rows) == 4
    assert float(rows[1][2]) == pytest.approx(0.8756, abs=5e-4)
    assert float(rows[1][5]) == pytest.approx(0.02906, abs=2e-4)


def test_eigs(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["eigs", "--n_modes", "4", "--out", str(out)]) == 0
    rows = _rows(out.read_text())[1:]
    mu, mu_h, closed, err = (float(x) for x in rows[0][1:])
    assert mu == pytest.approx(7.461, abs=1e-3)
    assert mu_h == pytest.approx(closed, rel=1e-9)
    assert err < 0.02


def test_jury_small(tmp_path):
    out = tmp_path / "j.csv"
    assert main(["jury", "--n_samples", "300", "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert len(rows) == 301 and all(r[-1] == "1" for r in rows[1:])


def test_richardson(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["richardson", "--nx", "24", "--ny", "6", "--alpha", "0.5", "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert tuple(rows[0]) == HEADERS["richardson"]
    assert float(rows[-1][3]) < 1e-4
    assert "deviation" in capsys.readouterr().err


def test_grid_simulate_with_snapshot(tmp_path):
    snap = tmp_path / "p.txt"
    out = tmp_path / "s.csv"
    code = main(["simulate", "--level", "grid", "--nx", "24", "--ny", "6", "--scheme", "sc",
                 "--alpha", "0.5", "--n_steps", "3", "--snapshot", str(snap), "--out", str(out)])
    assert code == 0
    head, field = read_snapshot(snap)
    assert (head["nx"], head["ny"]) == (24, 6)
    assert head["t"] == pytest.approx(3e-3)
    assert field.shape == (7, 25)
    rows = _rows(out.read_text())
    assert [int(r[4]) > 0 for r in rows[2:]] == [True, True, True]


def test_sc_grid_divergence_exit_two(tmp_path):
    code = main(["simulate", "--level", "grid", "--nx", "24", "--ny", "6", "--scheme", "sc",
                 "--alpha", "0.95", "--n_steps", "2", "--out", str(tmp_path / "d.csv")])
    assert code == 2


def test_csv_deterministic(tmp_path):
    args = ["sweep", "--param", "alpha", "--from", "0.1", "--to", "0.9", "--steps", "5",
            "--scheme", "sc", "--level", "modal", "--n_steps", "20"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*args, "--out", str(a)]) == 0
    p = _run(*args, "--out", str(b), env={WORKERS_ENV: "3"})
    assert p.returncode == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a.read_text())
    assert tuple(rows[0]) == HEADERS["sweep"]
    assert [float(r[1]) for r in rows[1:]] == pytest.approx(np.linspace(0.1, 0.9, 5))
    assert rows[-1][4] == "1" and rows[1][4] == "0"


def test_csv_round_trip_floats(tmp_path):
    out = tmp_path / "b.csv"
    main(["bounds", "--n_modes", "5", "--out", str(out)])
    from dnalpha.analysis import added_mass_eigenvalue

    rows = _rows(out.read_text())[1:]
    for k, r in enumerate(rows, start=1):
        assert float(r[1]) == added_mass_eigenvalue(k, 6.0, 0.5)


def test_refine_unstable_exit_two(tmp_path):
    code = main(["refine", "--scheme", "lc", "--level", "modal", "--alpha", "0.5", "--t_final", "0.2",
                 "--dt_list", "1e-3,5e-4", "--out", str(tmp_path / "r.csv")])
    assert code == 2


def test_refine_modal(tmp_path):
    out = tmp_path / "r.csv"
    code = main(["refine", "--scheme", "lc", "--level", "modal", "--alpha", "0.1", "--rho_s", "10",
                 "--forcing", "pulse", "--eta0", "0", "--t_final", "0.1", "--out", str(out)])
    assert code == 0
    rows = _rows(out.read_text())
    assert tuple(rows[0]) == HEADERS["refine"] and rows[1][2] == ""
    errs = [float(r[1]) for r in rows[1:]]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_worker_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert worker_count() == 3
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ParameterError):
        worker_count()
    monkeypatch.setenv(WORKERS_ENV, "0")
    with pytest.raises(ParameterError):
        worker_count()
    monkeypatch.delenv(WORKERS_ENV)
    assert worker_count() == (os.cpu_count() or 1)


def test_bad_worker_env_exit_one(tmp_path):
    p = _run("sweep", "--steps", "2", "--n_steps", "5", "--out", str(tmp_path / "s.csv"),
             env={WORKERS_ENV: "-2"})
    assert p.returncode == 1 and WORKERS_ENV in p.stderr
