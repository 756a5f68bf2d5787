import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from clwave.cli import OUT_ENV, main, parse_vector
from clwave.models import ising_delta_n, ising_rate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def column(path, name):
    header, rows = read_csv(path)
    j = header.index(name)
    return np.array([float(r[j]) for r in rows])


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_ising_boundary_matches_closed_form(tmp_path):
    assert main(["--config", str(CONFIGS / "ising.ini"), "--out", str(tmp_path), "--quiet", "boundary"]) == 0
    path = tmp_path / "ising.csv"
    dn = column(path, "delta_n")
    t = column(path, "t")
    closed = ising_delta_n(dn[0], dn[-1], ising_rate(2.0, 1.0), 0.0, 40.0, t)
    assert np.abs(dn - closed).max() < 1e-10
    assert np.abs(column(path, "p_1") + column(path, "p_2") - 1).max() < 1e-9
    assert "max_abs_delta_n_deviation" in (tmp_path / "summary.txt").read_text()


def test_four_state_period_four(tmp_path):
    assert main(["--config", str(CONFIGS / "four_state.ini"), "--out", str(tmp_path), "--quiet", "boundary"]) == 0
    header, rows = read_csv(tmp_path / "four_state.csv")
    P = np.array([[float(r[header.index(f"p_{k}")]) for k in range(1, 5)] for r in rows])
    assert len(P) == 13
    assert np.array_equal(P[4:], P[:-4])
    assert not np.array_equal(P[1], P[0])
    assert np.abs(P.sum(axis=1) - 1).max() < 1e-9


def test_byte_reproducible(tmp_path):
    cfg = write(tmp_path, "[model]\nid = random\nM = 2\n[grid]\nG = 6\n[boundary]\npreset = random\n"
                          "[observables]\na = s1\nb = [1, 2, 3, 4]\n[run]\nseed = 11\n")
    outs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        assert main(["--config", cfg, "--out", str(d), "--quiet", "boundary"]) == 0
        outs.append((d / "boundary.csv").read_bytes())
    assert outs[0] == outs[1]
    d = tmp_path / "other"
    main(["--config", cfg, "--out", str(d), "--seed", "12", "--quiet", "boundary"])
    assert (d / "boundary.csv").read_bytes() != outs[0]


def test_csv_round_trips_floats(tmp_path):
    main(["--config", str(CONFIGS / "ising.ini"), "--out", str(tmp_path), "--quiet", "boundary"])
    header, rows = read_csv(tmp_path / "ising.csv")
    for r in rows:
        for v in r:
            assert float(repr(float(v))) == float(v)


def test_oracle_check_pass(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "--seed", "3", "oracle-check"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("PASS max|Δ|=")
    assert float(line.split("=")[1]) < 1e-12


def test_oracle_check_with_model(tmp_path, capsys):
    cfg = write(tmp_path, "[model]\nid = ising\nbeta = 0.7\n[grid]\nG = 5\n[boundary]\nq_in = [0.6, 0.4]\nq_f = [0.5, 0.5]\n"
                          "[run]\nworkers = 3\n")
    assert main(["--config", cfg, "--out", str(tmp_path), "oracle-check"]) == 0
    assert capsys.readouterr().out.startswith("PASS")


def test_spectrum_four_state(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "spectrum", "--model", "four_state", "--param", "eta=0.5"]) == 0
    lines = capsys.readouterr().out.split()
    vals = [complex(x) for x in lines[:4]]
    ref = [1, 0.5 + 0.5j, 0.5 - 0.5j, 0]
    for r in ref:
        assert min(abs(v - r) for v in vals) < 1e-12
    header, rows = read_csv(tmp_path / "spectrum.csv")
    assert sum(r[0] == "W" for r in rows) == 4


def test_gates_hh_returns(tmp_path):
    cfg = write(tmp_path, "[run]\nbloch = [0.3, -0.2, 0.5]\n")
    assert main(["--config", cfg, "--out", str(tmp_path), "--quiet", "gates", "--word", "H H"]) == 0
    header, rows = read_csv(tmp_path / "gates.csv")
    last = [float(rows[-1][header.index(c)]) for c in ("r1", "r2", "r3")]
    assert np.allclose(last, [0.3, -0.2, 0.5], atol=1e-14)
    assert max(float(r[-1]) for r in rows) < 1e-14


@pytest.mark.parametrize("name", ["heisenberg", "global", "local", "sign-gauge", "basis-change", "unitary-basis"])
def test_transform_reports(tmp_path, name):
    assert main(["--config", str(CONFIGS / "ising.ini"), "--out", str(tmp_path), "--quiet", "transform", name]) == 0
    text = (tmp_path / "summary.txt").read_text()
    dev = float(text.split("max_deviation: ")[1].split()[0])
    assert dev < 1e-10


def test_transform_classical_basis(tmp_path):
    cfg = write(tmp_path, "[model]\nid = unique_jump\nperm = [2, 0, 3, 1]\n[grid]\nG = 10\n")
    assert main(["--config", cfg, "--out", str(tmp_path), "--quiet", "transform", "classical-basis"]) == 0
    text = (tmp_path / "summary.txt").read_text()
    assert float(text.split("max_deviation: ")[1].split()[0]) < 1e-10


def test_simulate_period(tmp_path):
    cfg = write(tmp_path, "[model]\nid = four_state\neta = 1\n[grid]\nG = 8\n[boundary]\npreset = delta:2\n")
    assert main(["--config", cfg, "--out", str(tmp_path), "--quiet", "simulate"]) == 0
    p3 = column(tmp_path / "simulate.csv", "p_3")
    assert np.array_equal(p3[::4], [1, 1, 1])


def test_mixed_and_columns(tmp_path):
    cfg = write(tmp_path, "[model]\nid = ising\nbeta = 1\n[grid]\nG = 4\n[boundary]\nkind = mixed\n"
                          "weights = [0.25, 0.75]\nq_in1 = [1, 0]\nq_f1 = [1, 1]\nq_in2 = [0, 1]\nq_f2 = [1, 1]\n"
                          "[output]\ncolumns = t, p_1\n")
    assert main(["--config", cfg, "--out", str(tmp_path), "--quiet", "boundary"]) == 0
    header, rows = read_csv(tmp_path / "boundary.csv")
    assert header == ["t", "p_1"]
    assert float(rows[0][1]) == pytest.approx(0.25)


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, f"[model]\nid = ising\n[grid]\nG = 2\n[output]\ndir = {tmp_path / 'cfg'}\n")
    main(["--config", cfg, "--quiet", "boundary"])
    assert (tmp_path / "cfg" / "boundary.csv").exists()
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    main(["--config", cfg, "--quiet", "boundary"])
    assert (tmp_path / "env" / "boundary.csv").exists()
    main(["--config", cfg, "--out", str(tmp_path / "flag"), "--quiet", "boundary"])
    assert (tmp_path / "flag" / "boundary.csv").exists()


@pytest.mark.parametrize("text", [
    "[model]\nid = nonsense\n",
    "[model]\nid = ising\n[boundary]\nq_in = [1, 0, 0]\nq_f = [1, 1]\n",
    "[model]\nid = ising\n[boundary]\nq_in = 1, 0\nq_f = [1, 1]\n",
    "[model]\nid = ising\n[observables]\nx = q7\n",
    "[model]\nid = four_state\neta = 2\n",
    "[model]\nid = ising\n[grid]\nG = many\n",
    "no section header\n",
])
def test_validation_exit_code(tmp_path, text):
    assert main(["--config", write(tmp_path, text), "--out", str(tmp_path), "boundary"]) == 2


def test_missing_config_and_bad_seed(tmp_path):
    assert main(["--config", str(tmp_path / "absent.ini"), "boundary"]) == 2
    assert main(["--out", str(tmp_path), "--seed", "-1", "boundary"]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_numerical_failure_exit_code(tmp_path):
    zero_Z = "[model]\nid = unique_jump\nperm = [0, 1]\n[grid]\nG = 3\n[boundary]\nq_in = [1, 0]\nq_f = [0, 1]\n"
    assert main(["--config", write(tmp_path, zero_Z), "--out", str(tmp_path), "boundary"]) == 3
    singular = "[model]\nid = four_state\neta = 0.5\n[grid]\nG = 3\n"
    assert main(["--config", write(tmp_path, singular, "s.ini"), "--out", str(tmp_path), "boundary"]) == 3


def test_parse_vector():
    assert np.array_equal(parse_vector("[1, 2.5e-1 ,3]"), [1, 0.25, 3])
    assert parse_vector("[]").size == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "clwave.cli", "--out", str(tmp_path), "oracle-check"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("PASS")
