import csv
import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from fracbubble.cli import main
from fracbubble.config import ExperimentConfig, load_config
from fracbubble.errors import ConfigurationError

DESK = os.path.join(os.path.dirname(__file__), "..", "configs", "desk.ini")


def run(cmd, out, *extra, config=DESK):
    argv = [cmd, "--out", str(out)] + (["--config", config] if config else []) + list(extra)
    return main(argv)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_ini(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return str(p)


# configuration ----------------------------------------------------------

def test_desk_config_matches_defaults():
    assert load_config(DESK).config_hash() == ExperimentConfig().config_hash()


def test_hash_ignores_out_and_threads():
    a = load_config(DESK, {"out": "x", "threads": 4})
    b = load_config(DESK, {"out": "y", "threads": 1})
    assert a.config_hash() == b.config_hash()
    assert load_config(DESK, {"tol": 1e-9}).config_hash() != a.config_hash()


@pytest.mark.parametrize("text, needle", [
    ("[constants_profiles]\ns = 1.5\n", "s"),
    ("[constants_profiles]\nbogus = 1\n", "bogus"),
    ("[nowhere]\nx = 1\n", "nowhere"),
    ("[discrete_operators]\nkind = magic\n", "kind"),
    ("[reduced_energy]\nxi_range = 0.5, -0.5\n", "xi_range"),
    ("[discrete_operators]\nholes = 0.1\n", "lo:hi"),
])
def test_bad_config_rejected(tmp_path, text, needle):
    with pytest.raises(ConfigurationError, match=needle):
        load_config(write_ini(tmp_path, text))
    assert run("constants", tmp_path / "o", config=write_ini(tmp_path, text)) == 2


def test_missing_config_file(tmp_path):
    assert run("constants", tmp_path, config=str(tmp_path / "none.ini")) == 2


# outputs ----------------------------------------------------------------

def test_constants_deterministic(tmp_path):
    assert run("constants", tmp_path / "a") == 0
    assert run("constants", tmp_path / "b", "--threads", "3") == 0
    a = (tmp_path / "a" / "constants.json").read_bytes()
    assert a == (tmp_path / "b" / "constants.json").read_bytes()
    c = json.loads(a)
    assert c["residuals_below_tol"]
    assert c["config_hash"] == load_config(DESK).config_hash()


def test_numeric_failure_exit_code(tmp_path):
    assert run("constants", tmp_path, "--tol", "1e-30") == 3
    man = json.loads((tmp_path / "manifest_constants.json").read_text())
    assert man["status"] == "numeric-error"


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    for cmd in ("constants", "green", "robin", "psi-scan", "find-critical"):
        assert run(cmd, out) == 0, cmd
    return out


def test_every_file_hashed(outdir):
    h = load_config(DESK).config_hash()
    for name in os.listdir(outdir):
        path = os.path.join(outdir, name)
        if name.endswith(".json"):
            assert json.load(open(path))["config_hash"] == h, name
        else:
            assert all(r["config_hash"] == h for r in rows(path)), name


def test_only_manifest_has_timings(outdir):
    for name in os.listdir(outdir):
        text = open(os.path.join(outdir, name)).read()
        assert ("timings" in text) == name.startswith("manifest_"), name


def test_psi_scan_grid(outdir):
    cfg = load_config(DESK)
    r = rows(outdir / "psi_scan.csv")
    assert len(r) == cfg.xi_count ** cfg.m * cfg.Lambda_count
    assert all(np.isfinite(float(x["Psi"])) for x in r if x["admissible"] == "1")


def test_robin_monotone(outdir):
    r = rows(outdir / "robin.csv")
    R = np.array([float(x["R"]) for x in r])
    assert np.all(np.diff(R) > 0)  # grows toward the boundary
    closed = np.array([float(x["R_closed"]) for x in r])
    assert np.max(np.abs(R / closed - 1)) < 5e-3


def test_find_critical_center(outdir):
    c = json.load(open(outdir / "critical_points.json"))
    pts = c["points"]
    assert any(abs(p["xi"][0][0]) < 1e-6 and p["stable"] for p in pts)


def test_verify_refuses_mixed_hashes(outdir, tmp_path):
    mixed = tmp_path / "mixed"
    shutil.copytree(outdir, mixed)
    assert run("constants", mixed, "--tol", "1e-9") == 0
    assert run("verify", mixed, "--criteria", "3") == 2


def test_verify_subset(tmp_path, capsys):
    assert run("verify", tmp_path, "--criteria", "3") == 0
    rep = json.load(open(tmp_path / "acceptance.json"))["reports"]
    assert [r["criterion"] for r in rep] == [3] and rep[0]["passed"]
    assert "PASS" in capsys.readouterr().out


def test_console_script(tmp_path):
    exe = shutil.which("fracbubble")
    cmd = [exe] if exe else [sys.executable, "-m", "fracbubble.cli"]
    p = subprocess.run(cmd + ["constants", "--config", DESK, "--out", str(tmp_path)], capture_output=True, text=True)
    assert p.returncode == 0, p.stderr
    p = subprocess.run(cmd + ["constants", "--config", DESK, "--out", str(tmp_path), "--tol", "-1"],
                       capture_output=True, text=True)
    assert p.returncode == 2 and "tol" in p.stderr
