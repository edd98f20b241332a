"""Run configuration: an INI file with one section per study.

Every key has a type and a default; unknown sections or keys are
errors. The normalised form (all sections, all keys, canonical value
strings) is hashed to the digest written into every output file.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError
from .systems import SystemConfig, list_systems


class ConfigError(InputError):
    pass


def _floats(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(float(v) for v in s.replace(";", ",").split(","))


def _ints(s):
    return tuple(int(v) for v in _floats(s))


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s):
    return s.strip()


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "workers": (int, 1),
        "figures": (_bool, False),
    },
    "system": {
        "name": (_str, "lorenz"),
        "tolerance": (float, 1e-10),
        "base_time_step": (float, 0.01),
        "x0": (_floats, (1.0, 1.0, 1.0)),
        "t_transient": (float, 100.0),
    },
    # parameter overrides for the selected system, validated against its defaults
    "parameters": {},
    "map": {
        "tau": (float, 1.5),
        "tolerance": (float, 1e-8),
        "boundary_policy": (_str, "resample"),
    },
    "grid": {
        "resolution": (_ints, (64, 64, 64)),
    },
    "simulate": {
        "dt": (float, 0.01),
        "n": (int, 10_000),
    },
    "lyapunov": {
        "t_transient": (float, 100.0),
        "t_average": (float, 2000.0),
        "qr_interval": (float, 0.5),
        "tolerance": (float, 1e-9),
    },
    "diagnose": {
        "dt": (float, 0.1),
        "n_steps": (int, 1500),
        "stable_dim": (int, 1),
        "horizon": (float, 15.0),
        "n_base": (int, 200),
        "exclusion": (float, 0.5),
        "residual_threshold": (float, 0.1),
        "trim_time": (float, 5.0),
        "hyperbolic": (_bool, False),
    },
    "shadow": {
        "delta": (float, 1e-6),
        "n": (int, 20),
        "n_list": (_ints, (5, 10, 20, 40)),
        "n_orbits": (int, 30),
        "c_est": (float, 10.0),
        "max_iter": (int, 30),
        "tolerance": (float, 1e-10),
    },
    "volume": {
        "rho": (float, 0.1),
        "rho_tilde": (float, 1.0),
        "n_list": (_ints, (2, 4, 6, 8)),
        "n_points": (int, 20),
        "samples": (int, 10_000),
        "max_spread": (float, 50.0),
    },
    "stationary": {
        "epsilon": (float, 0.1),
        "burn_in": (int, 1000),
        "n_samples": (int, 1_000_000),
        "n_chains": (int, 100),
        "min_samples": (int, 100_000),
        "n_test": (int, 100_000),
        "n_boot": (int, 20),
    },
    "chapman_kolmogorov": {
        "epsilon": (float, 0.1),
        "l": (int, 7),
        "k_total": (int, 20),
        "n_mc": (int, 100_000),
    },
    "avoidance": {
        "eps_list": (_floats, (0.2, 0.1, 0.05, 0.025)),
        "gamma": (float, 0.5),
        "n_mc": (int, 100_000),
        "min_slope": (float, 0.3),
    },
    "rectangle": {
        "epsilon": (float, 0.1),
        "eta0": (float, 1.0),
        "rho": (float, 0.2),
        "thickness": (float, 0.2),
        "n_rectangles": (int, 10),
        "max_ratio": (float, 4.0),
    },
    "stability": {
        "eps_list": (_floats, (0.5, 0.2, 0.1, 0.05)),
        "srb_average": (float, 1e5),
        "srb_sample_dt": (float, 0.1),
        "n_starts": (int, 3),
    },
    "verify": {
        "criteria": (_ints, tuple(range(1, 12))),
    },
}


def _canon(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_canon(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    values: dict
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    @property
    def workers(self):
        return self.values["run"]["workers"]

    def normalized(self):
        """Canonical INI text; ``run.workers`` and ``run.figures`` do not change results and are left out."""
        buf = io.StringIO()
        for sec in sorted(self.values):
            buf.write(f"[{sec}]\n")
            for k in sorted(self.values[sec]):
                if sec == "run" and k in ("workers", "figures"):
                    continue
                buf.write(f"{k} = {_canon(self.values[sec][k])}\n")
        return buf.getvalue()

    @property
    def digest(self):
        return hashlib.sha256(self.normalized().encode()).hexdigest()[:16]

    def system_config(self):
        s = self.values["system"]
        return SystemConfig(s["name"], dict(self.values["parameters"]), s["tolerance"],
                            s["base_time_step"])

    def build_system(self):
        return self.system_config().build()

    def with_overrides(self, **sections):
        """Copy with {section: {key: value}} replaced (values already typed)."""
        vals = {s: dict(v) for s, v in self.values.items()}
        for sec, kv in sections.items():
            if sec not in vals:
                raise ConfigError(f"unknown section [{sec}]")
            for k, v in kv.items():
                if sec != "parameters" and k not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {k!r} in [{sec}]")
                vals[sec][k] = v
        return validate(vals, self.source)


def _system_defaults():
    return {d["name"]: d for d in list_systems()}


def validate(values, source="<dict>"):
    sysinfo = _system_defaults()
    name = values["system"]["name"]
    if name not in sysinfo:
        raise ConfigError(f"[system] name: unknown system {name!r}; known: {sorted(sysinfo)}")
    unknown = set(values["parameters"]) - set(sysinfo[name]["parameters"])
    if unknown:
        raise ConfigError(f"[parameters] unknown keys for {name}: {sorted(unknown)}")
    dim = sysinfo[name]["dimension"]
    if len(values["system"]["x0"]) != dim:
        if values["system"]["x0"] == SCHEMA["system"]["x0"][1]:
            values["system"]["x0"] = (1.0,) * dim
        else:
            raise ConfigError(f"[system] x0: expected {dim} coordinates")
    if len(values["grid"]["resolution"]) == 3 and dim != 3:
        values["grid"]["resolution"] = (values["grid"]["resolution"][0],) * dim
    checks = [
        ("system", "tolerance", lambda v: v > 0, "must be positive"),
        ("system", "base_time_step", lambda v: v > 0, "must be positive"),
        ("map", "tau", lambda v: v > 0, "must be positive"),
        ("map", "tolerance", lambda v: v > 0, "must be positive"),
        ("map", "boundary_policy", lambda v: v in ("resample", "reflect", "clamp"),
         "must be resample, reflect or clamp"),
        ("grid", "resolution", lambda v: len(v) == dim and min(v) >= 2, f"needs {dim} entries >= 2"),
        ("run", "workers", lambda v: v >= 1, "must be >= 1"),
        ("simulate", "n", lambda v: v >= 1, "must be >= 1"),
        ("simulate", "dt", lambda v: v > 0, "must be positive"),
        ("lyapunov", "t_average", lambda v: v >= 100 * values["lyapunov"]["qr_interval"],
         "must be >= 100 * qr_interval"),
        ("lyapunov", "qr_interval", lambda v: v > 0, "must be positive"),
        ("shadow", "delta", lambda v: v >= 0, "must be nonnegative"),
        ("shadow", "n", lambda v: v >= 1, "must be >= 1"),
        ("stationary", "epsilon", lambda v: v > 0, "must be positive"),
        ("stationary", "burn_in", lambda v: v >= 1000, "must be >= 1000"),
        ("stationary", "n_samples", lambda v: v >= values["stationary"]["min_samples"],
         "must be >= min_samples"),
        ("chapman_kolmogorov", "l", lambda v: 0 < v < values["chapman_kolmogorov"]["k_total"],
         "needs 0 < l < k_total"),
        ("avoidance", "eps_list", lambda v: len(v) >= 2 and all(e > 0 for e in v), "needs >= 2 positive values"),
        ("avoidance", "gamma", lambda v: 0 < v < 1, "must lie in (0, 1)"),
        ("rectangle", "eta0", lambda v: v > 0, "must be positive"),
        ("stability", "eps_list", lambda v: len(v) >= 4 and all(e > 0 for e in v)
         and all(a > b for a, b in zip(v, v[1:])), "needs >= 4 strictly decreasing positive values"),
        ("volume", "rho", lambda v: 0 < v <= values["volume"]["rho_tilde"], "must lie in (0, rho_tilde]"),
        ("verify", "criteria", lambda v: all(1 <= c <= 11 for c in v), "entries must lie in 1..11"),
    ]
    for sec, key, ok, msg in checks:
        if not ok(values[sec][key]):
            raise ConfigError(f"[{sec}] {key}: {msg}")
    return RunConfig(values, source)


def default_config():
    return parse_string("")


def parse_string(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if sec == "parameters":
                try:
                    values[sec][key] = float(raw)
                except ValueError:
                    raise ConfigError(f"{source}: [parameters] {key}: not a number: {raw!r}") from None
                continue
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")
            parser = SCHEMA[sec][key][0]
            try:
                values[sec][key] = parser(raw)
            except ValueError as e:
                raise ConfigError(f"{source}: [{sec}] {key}: {e}") from None
    return validate(values, source)


def load_config(path):
    """Read an INI file, or the ``config`` field of a run manifest (.json)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            text = json.loads(text)["config"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError(f"{path}: not a run manifest") from None
    return parse_string(text, str(path))
