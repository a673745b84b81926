import csv
import json
from pathlib import Path

import pytest

from semiclassical.cli.main import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

HARMONIC = """
h = [0.2, 0.1]
n = [[0, 4]]

[potential]
kind = "harmonic"
omega = 1.0
"""

QUARTIC = """
h = [0.2, 0.1, 0.05]
n = [[0, 2]]

[potential]
kind = "polynomial"
coefficients = [0.0, 0.0, 0.0, 0.0, 1.0]
domain = [-4.0, 4.0]
"""


def _cfg(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


def test_spectrum_success(tmp_path):
    out = tmp_path / "o"
    assert _run("spectrum", _cfg(tmp_path, HARMONIC), out) == 0
    rows = _rows(out / "spectrum.csv")
    assert len(rows) == 10
    assert all(r["status"] == "ok" for r in rows)
    assert max(float(r["abs_err"]) for r in rows) < 1e-7


def test_manifest_complete(tmp_path):
    out = tmp_path / "o"
    _run("spectrum", _cfg(tmp_path, HARMONIC), out)
    m = json.loads((out / "spectrum_manifest.json").read_text())
    for key in ("command", "package_version", "versions", "config", "tolerances", "files",
                "columns", "failures", "summary", "timings_s"):
        assert key in m
    header = next(csv.reader(open(out / "spectrum.csv")))
    assert set(header) <= set(m["columns"])
    for f in m["files"]:
        assert (out / f).exists()


def test_spectrum_deterministic_across_jobs(tmp_path):
    cfg = _cfg(tmp_path, HARMONIC)
    _run("spectrum", cfg, tmp_path / "a")
    _run("spectrum", cfg, tmp_path / "b")
    _run("spectrum", cfg, tmp_path / "c", "--jobs", "3")
    a = (tmp_path / "a" / "spectrum.csv").read_bytes()
    assert a == (tmp_path / "b" / "spectrum.csv").read_bytes()
    assert a == (tmp_path / "c" / "spectrum.csv").read_bytes()


def test_unbound_levels_partial_failure(tmp_path):
    text = (CONFIGS / "morse.toml").read_text().replace("n = [[0, 9]]", "n = [[8, 11]]")
    text = text.replace("h = [0.1, 0.05]", "h = [0.1]")
    out = tmp_path / "o"
    assert _run("spectrum", _cfg(tmp_path, text), out) == 1
    status = {int(r["n1"]): r["status"] for r in _rows(out / "spectrum.csv")}
    assert status[8] == "ok" and status[9] == "ok"
    assert status[10] != "ok" and status[11] != "ok"
    m = json.loads((out / "spectrum_manifest.json").read_text())
    assert len(m["failures"]) >= 2


@pytest.mark.parametrize("text", [
    HARMONIC + "\nbogus = 1\n",
    HARMONIC.replace('kind = "harmonic"', 'kind = "sextic"'),
    HARMONIC.replace("n = [[0, 4]]", "n = [[4, 0]]"),
    HARMONIC.replace("h = [0.2, 0.1]", "h = []"),
    "h = [0.1\n",
])
def test_config_errors(tmp_path, text):
    assert _run("spectrum", _cfg(tmp_path, text), tmp_path / "o") == 2


def test_converge_needs_three_h(tmp_path):
    assert _run("converge", _cfg(tmp_path, HARMONIC), tmp_path / "o") == 2


def test_missing_config_and_bad_jobs(tmp_path):
    assert _run("spectrum", tmp_path / "nope.toml", tmp_path / "o") == 2
    assert _run("spectrum", _cfg(tmp_path, HARMONIC), tmp_path / "o", "--jobs", "0") == 2
    assert main(["frobnicate", "--config", "x.toml"]) == 2


def test_converge_outputs(tmp_path):
    text = QUARTIC.replace("h = [0.2, 0.1, 0.05]", "h = [0.2, 0.1, 0.05, 0.025]")
    out = tmp_path / "o"
    assert _run("converge", _cfg(tmp_path, text), out) == 0
    slopes = {(r["observable"], r["n"]): float(r["slope"]) for r in _rows(out / "slopes.csv")}
    assert slopes[("eigenvalue_error", "0")] == pytest.approx(4 / 3, abs=0.05)
    assert slopes[("residual_norm_fixed_E", "0")] == pytest.approx(2.0, abs=0.3)
    assert 0.8 <= slopes[("stationary_phase_error", "-")] <= 1.2


def test_eigfn_outputs(tmp_path):
    text = QUARTIC.replace("h = [0.2, 0.1, 0.05]", "h = [0.1]")
    out = tmp_path / "o"
    assert _run("eigfn", _cfg(tmp_path, text), out) == 0
    rows = _rows(out / "eigfn_summary.csv")
    assert [int(r["node_count"]) for r in rows] == [0, 1, 2]
    assert all(float(r["oracle_overlap"]) > 0.97 for r in rows)
    u = _rows(out / "eigfn_h=0.1_n=1.csv")
    assert set(u[0]) == {"x", "re_u", "im_u", "abs2_u"}
    meta = json.loads((out / "eigfn_h=0.1_n=1.json").read_text())
    assert meta["node_count"] == 1 and len(meta["patches"]) == 2


def test_eigfn_detuned_is_inconsistent(tmp_path):
    text = QUARTIC.replace("h = [0.2, 0.1, 0.05]", "h = [0.1]") + "\n[eigfn]\ndetune = 0.01\n"
    out = tmp_path / "o"
    assert _run("eigfn", _cfg(tmp_path, text), out) == 1
    rows = _rows(out / "eigfn_summary.csv")
    assert {r["status"] for r in rows} == {"inconsistent"}
    assert not list(out.glob("eigfn_h=*"))


def test_eigfn_rejects_two_axes(tmp_path):
    assert _run("eigfn", CONFIGS / "check_resonance.toml", tmp_path / "o") == 2


@pytest.mark.parametrize("name,expected", [
    ("check_harmonic.toml", None),
    ("check_resonance.toml", "ResonanceError"),
    ("check_degenerate.toml", "DegenerateCausticError"),
])
def test_check_configs(tmp_path, name, expected):
    out = tmp_path / "o"
    assert _run("check", CONFIGS / name, out) == 0
    rows = _rows(out / "check.csv")
    assert not [r for r in rows if r["status"] in ("fail", "error")]
    modules = {r["module"] for r in rows}
    assert modules == {"symbols", "torus", "caustics", "transport", "quantize", "lagdist", "oracle",
                       "cli"}
    if expected:
        assert any(r["check"] == f"expected_{expected}" and r["status"] == "pass" for r in rows)
        assert any(r["status"] == "expected-fail" for r in rows)
