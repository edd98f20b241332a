import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srblab.config import ConfigError, default_config, load_config, parse_string
from srblab.io import header_digest, read_header, write_csv, write_record


def test_defaults_validate():
    cfg = default_config()
    assert cfg["system"]["name"] == "lorenz"
    assert cfg["grid"]["resolution"] == (64, 64, 64)
    assert len(cfg.digest) == 16


@pytest.mark.parametrize("text, fragment", [
    ("[system]\nname = nosuch\n", "unknown system"),
    ("[nosuch]\nx = 1\n", "unknown section"),
    ("[map]\ntaux = 1\n", "unknown key"),
    ("[parameters]\nkappa = 1\n", "unknown keys"),
    ("[map]\ntau = -1\n", "tau"),
    ("[stability]\neps_list =\n", "eps_list"),
    ("[stability]\neps_list = 0.1, 0.2, 0.05, 0.01\n", "eps_list"),
    ("[simulate]\nn = ten\n", "n"),
    ("[map]\nboundary_policy = wrap\n", "boundary_policy"),
    ("[system]\nx0 = 1, 2\n", "x0"),
])
def test_rejects(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_string(text)


def test_dimension_adapts_for_ou():
    cfg = parse_string("[system]\nname = ou1d\n")
    assert cfg["system"]["x0"] == (1.0,)
    assert cfg["grid"]["resolution"] == (64,)


def test_digest_ignores_workers_and_formatting():
    a = parse_string("[map]\ntau = 1.5\n[run]\nworkers = 4\n")
    b = parse_string("# comment\n[run]\nworkers=1\nfigures = yes\n\n[map]\ntau=1.50\n")
    assert a.digest == b.digest == default_config().digest
    assert parse_string("[run]\nseed = 1\n").digest != a.digest


@given(st.integers(0, 2**31), st.floats(0.2, 5.0), st.sampled_from(["lorenz", "linear3d", "saddle_focus3d"]))
def test_normalized_round_trip(seed, tau, name):
    cfg = parse_string(f"[run]\nseed = {seed}\n[map]\ntau = {tau!r}\n[system]\nname = {name}\n")
    again = parse_string(cfg.normalized())
    assert again.values == cfg.values and again.digest == cfg.digest


def test_overrides():
    cfg = default_config().with_overrides(run={"seed": 5})
    assert cfg.seed == 5
    with pytest.raises(ConfigError):
        default_config().with_overrides(map={"nope": 1})


def test_load_from_manifest(tmp_path):
    cfg = parse_string("[run]\nseed = 9\n[simulate]\nn = 5\n")
    (tmp_path / "m.json").write_text(json.dumps({"config": cfg.normalized()}))
    assert load_config(tmp_path / "m.json").digest == cfg.digest
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.ini")


def test_csv_header_and_formatting(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["i", "x"], np.array([[0, 0.1], [1, 1 / 3]]), ["config_digest=abc", "seed=1"],
                  int_cols=1)
    assert read_header(p) == ["config_digest=abc", "seed=1"]
    assert header_digest(p) == "abc"
    lines = p.read_text().splitlines()
    assert lines[2] == "i,x" and lines[3] == "0,0.1" and lines[4] == f"1,{1 / 3!r}"
    q = write_record(tmp_path / "b.csv", {"ok": True, "n": np.int64(3)})
    assert q.read_text().splitlines()[1:] == ["ok,1", "n,3"]
