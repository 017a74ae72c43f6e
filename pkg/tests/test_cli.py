from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from bwlab import __version__
from bwlab import cli
from bwlab.eigensolver import ConvergenceError


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def exit_code(argv) -> int:
    try:
        return cli.main(argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def test_harmonic_spectrum(tmp_path, capsys):
    code, _, _ = run(["spectrum", "--family", "beta", "--beta", "0", "--window", "0,12", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    E = sorted(lv["re_E"] for lv in doc["levels"])
    assert np.allclose(E, [1, 3, 5, 7, 9, 11], atol=1e-8)


def test_hbar4_spectrum_real_increasing(tmp_path, capsys):
    code, _, _ = run(["spectrum", "--family", "hbar", "--hbar", "4", "--out", str(tmp_path)], capsys)
    assert code == 0
    levels = json.loads((tmp_path / "spectrum.json").read_text())["levels"]
    re = [lv["re_E"] for lv in levels]
    assert levels and all(abs(lv["im_E"]) < 1e-8 for lv in levels)
    assert all(x > 0 for x in re) and all(np.diff(re) > 0)


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum", "--family", "nope"],
        ["spectrum", "--window", "5,1"],
        ["spectrum", "--family", "beta", "--beta", "1,2,3"],
        ["branchpoint", "--family", "beta"],
        ["branchpoint", "--n", "-1"],
        ["stokes"],
        ["zeros"],
        ["report", "--n-max", "9"],
        ["spectrum", "--no-such-flag"],
    ],
)
def test_config_errors_exit_3(argv, capsys):
    assert exit_code(argv) == 3


def test_bad_thread_env_exit_3(monkeypatch, capsys):
    monkeypatch.setenv("BWLAB_THREADS", "zero")
    code, _, err = run(["spectrum", "--family", "beta", "--beta", "0", "--window", "0,4"], capsys)
    assert code == 3 and "BWLAB_THREADS" in err


def test_solver_error_exit_2(monkeypatch, capsys):
    import bwlab.eigensolver as es

    def boom(*a, **k):
        raise ConvergenceError("no convergence", [1.0])

    monkeypatch.setattr(es, "spectrum_scan", boom)
    code, _, err = run(["spectrum", "--family", "beta", "--beta", "0"], capsys)
    assert code == 2 and "solver error" in err


def test_output_headers(tmp_path, capsys):
    run(["spectrum", "--family", "beta", "--beta", "0", "--window", "0,6", "--out", str(tmp_path)], capsys)
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    assert doc["run_config"]["version"] == __version__
    assert doc["run_config"]["command"] == "spectrum"
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == f"# bwlab {__version__}"
    assert lines[1].startswith("# run_config: ")
    assert json.loads(lines[1][len("# run_config: "):])["spec"]["family"] == "beta"


def test_deterministic_outputs(tmp_path, capsys):
    argv = ["spectrum", "--family", "hbar", "--hbar", "2", "--window", "0.001,15", "--out", str(tmp_path)]
    run(argv, capsys)
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    run(argv, capsys)
    second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert first == second and first


def test_critical_energy_command(tmp_path, capsys):
    code, out, _ = run(["stokes", "--E-critical", "--out", str(tmp_path)], capsys)
    assert code == 0
    val = json.loads((tmp_path / "critical_energy.json").read_text())["E_critical"]
    assert abs(val - 0.352268) < 5e-4
    assert "E_critical" in out


def test_stokes_diagram_files(tmp_path, capsys):
    code, out, _ = run(["stokes", "--E", "0.5", "--out", str(tmp_path)], capsys)
    assert code == 0 and "I+-I-" in out
    topo = json.loads((tmp_path / "stokes.json").read_text())["topology"]
    assert ["I+", "I-"] in topo["connections"]
    assert (tmp_path / "stokes.csv").read_text().startswith("# bwlab")


def test_zeros_command(tmp_path, capsys):
    code, out, _ = run(["zeros", "--family", "hbar", "--hbar", "3", "--m", "3", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "zeros.json").read_text())
    assert doc["nodes"] == 3 and doc["imaginary_nodes"] == 1


def test_wkb_command(tmp_path, capsys):
    code, out, _ = run(["wkb", "--family", "beta", "--beta", "0", "--label", "2", "--exact", "--out", str(tmp_path)],
                       capsys)
    assert code == 0
    doc = json.loads((tmp_path / "wkb.json").read_text())
    assert abs(doc["E_wkb"][0] - 5) < 1e-10 and doc["difference"] < 1e-8


def test_branchpoint_command(tmp_path, capsys):
    code, out, _ = run(["branchpoint", "--n", "0", "--monodromy", "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "branchpoint_n0.json").read_text())
    bp = doc["branch_point"]
    assert bp["pair"] == [0, 1] and bp["hbar_n"] > 0 and bp["E_c"] > 0
    assert 0.45 <= bp["sqrt_fit"]["exponent"] <= 0.55
    assert doc["monodromy"]["permutation"] == "(0 1)"
    assert "monodromy: (0 1)" in out
    assert (tmp_path / "branchpoint_n0.md").read_text().startswith("<!-- bwlab")


def test_branchpoint_n1_pair(tmp_path, capsys):
    code, _, _ = run(["branchpoint", "--n", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads((tmp_path / "branchpoint_n1.json").read_text())["branch_point"]["pair"] == [2, 3]


def test_report_command(tmp_path, capsys):
    code, out, _ = run(["report", "--n-max", "0", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "2n hbar_n" in (tmp_path / "report.md").read_text()
    rows = json.loads((tmp_path / "report.json").read_text())["rows"]
    assert rows[0]["E_c"] > 0 and rows[0]["pair"] == [0, 1]


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "bwlab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
