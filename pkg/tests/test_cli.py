import filecmp
import json

import pytest

from srblab.cli import main
from srblab.io import header_digest

SMALL = """
[run]
seed = 3
[system]
t_transient = 20
[simulate]
n = 300
[shadow]
n = 10
n_list = 5, 10
n_orbits = 3
"""


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(SMALL)
    return p


def run(*argv):
    return main([*map(str, argv), "--quiet"])


def test_simulate_outputs(ini, tmp_path):
    out = tmp_path / "o"
    assert run("simulate", "--config", ini, "--out", out) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# srblab") and lines[5] == "index,t,x0,x1,x2"
    assert len(lines) == 6 + 301
    man = json.loads((out / "manifest_simulate.json").read_text())
    assert man["config_digest"] == header_digest(out / "trajectory.csv")
    assert man["seed"] == 3


@pytest.mark.parametrize("cmd", ["simulate", "shadow", "chain"])
def test_byte_identical_reruns(ini, tmp_path, cmd):
    for d in ("a", "b"):
        assert run(cmd, "--config", ini, "--out", tmp_path / d) in (0, 1)
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert names
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors


def test_seed_flag_changes_chain(ini, tmp_path):
    run("chain", "--config", ini, "--out", tmp_path / "a")
    run("chain", "--config", ini, "--out", tmp_path / "b", "--seed", 4)
    assert (tmp_path / "a" / "chain.csv").read_text() != (tmp_path / "b" / "chain.csv").read_text()


def test_manifest_reruns_identically(ini, tmp_path):
    run("chain", "--config", ini, "--out", tmp_path / "a")
    run("chain", "--config", tmp_path / "a" / "manifest_chain.json", "--out", tmp_path / "b")
    assert filecmp.cmp(tmp_path / "a" / "chain.csv", tmp_path / "b" / "chain.csv", shallow=False)


def test_figures_opt_in(ini, tmp_path):
    run("simulate", "--config", ini, "--out", tmp_path / "a")
    assert not list((tmp_path / "a").glob("*.png"))
    run("simulate", "--config", ini, "--out", tmp_path / "b", "--figures")
    assert (tmp_path / "b" / "trajectory.png").stat().st_size > 0


def test_usage_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nname = nosuch\n")
    assert run("simulate", "--config", bad, "--out", tmp_path) == 2
    bad.write_text("[stability]\neps_list =\n")
    assert run("stability", "--config", bad, "--out", tmp_path) == 2
    assert run("simulate", "--config", tmp_path / "missing.ini") == 2
    assert main(["bogus"]) == 2
    assert run("verify", "--criteria", "12", "--out", tmp_path) == 2


def test_numerical_failure_exit(tmp_path):
    p = tmp_path / "esc.ini"
    p.write_text("[parameters]\nrho = 500\n[system]\nt_transient = 0\n[simulate]\nn = 2000\n")
    assert run("simulate", "--config", p, "--out", tmp_path) == 3


def test_wrong_jacobian_fails_verify(tmp_path):
    assert run("verify", "--criteria", "1", "--out", tmp_path / "ok") == 0
    assert run("verify", "--criteria", "1", "--out", tmp_path / "bad", "--inject-fault", "jacobian") == 1
    summary = (tmp_path / "bad" / "verify_summary.csv").read_text()
    assert "jacobian" in summary


def test_against_refuses_digest_mismatch(ini, tmp_path):
    assert run("verify", "--criteria", "1", "--out", tmp_path / "a") == 0
    assert run("verify", "--criteria", "1,11", "--out", tmp_path / "b", "--against", tmp_path / "a") == 0
    assert run("verify", "--criteria", "1,11", "--config", ini, "--out", tmp_path / "c",
               "--against", tmp_path / "a") == 2


def test_systems_listing(capsys):
    assert main(["systems"]) == 0
    assert "lorenz" in capsys.readouterr().out
