"""Strict TOML run configuration for the command-line front-end."""
import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import TABLE1_CASES

SCENARIOS = ("validate", "evolve", "fcs", "excess-work", "geodesic", "sweep")
SHAPES = ("exponential", "linear", "optimal", "table1", "static")
MAX_SWEEP_AXES = 3


class ConfigError(ValueError):
    """Bad configuration; the message names the offending key."""


_POS = "positive"
_INT = "int"
_NUM = "number"
_STR = "str"
_BOOL = "bool"
_LIST = "list"

# section -> key -> (kind, default); default None means optional without value
SCHEMA = {
    "model": {
        "kind": (_STR, "qbm"),
        "m": (_POS, 1.0),
        "kappa": (_POS, 1.0),
        "beta": (_POS, 1.0),
        "dim": (_INT, None),
        "omega_ref": (_POS, None),
        "gammas": (_LIST, [1.0]),
        "betas": (_LIST, [1.0]),
    },
    "protocol": {
        "shape": (_STR, "exponential"),
        "omega0": (_POS, 1.0),
        "omega_tau": (_POS, 2.0),
        "tau": (_POS, 50.0),
        "case": (_STR, "high-T underdamped"),
    },
    "numerics": {
        "rtol": (_POS, 1e-10),
        "n_samples": (_INT, 101),
        "n_grid": (_INT, 4001),
        "engine": (_STR, "fock"),
        "basis": (_STR, "fixed"),
    },
    "fcs": {
        "mode": (_STR, "work"),
        "u_min": (_NUM, -2.5),
        "u_max": (_NUM, 0.5),
        "n_u": (_INT, 13),
        "moment_order": (_INT, 2),
        "beta_s": (_POS, None),
    },
    "excess_work": {
        "compare": (_BOOL, False),
    },
    "geodesic": {
        "n_metric": (_INT, 201),
    },
    "sweep": {
        "scenario": (_STR, "excess-work"),
        "axes": ("table", {}),
        "workers": (_INT, 1),
    },
    "output": {
        "dir": (_STR, "out"),
        "float_format": (_STR, "%.12e"),
    },
}


def _check_value(where, kind, value):
    if kind in (_POS, _NUM):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        if kind == _POS and not value > 0:
            raise ConfigError(f"{where}: must be positive, got {value}")
        return float(value)
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise ConfigError(f"{where}: expected a positive integer, got {value!r}")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind == _LIST:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where}: expected a non-empty list")
        return [_check_value(f"{where}[{i}]", _POS, v) for i, v in enumerate(value)]
    if kind == "table":
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a table")
        return value
    raise AssertionError(kind)


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    sections: dict

    def __getitem__(self, section):
        return self.sections[section]

    def canonical(self) -> dict:
        return {"scenario": self.scenario, **copy.deepcopy(self.sections)}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_value(self, dotted, value) -> "RunConfig":
        raw = self.canonical()
        section, key = _split_axis(dotted)
        raw[section][key] = value
        raw["scenario"] = raw["sweep"]["scenario"] if self.scenario == "sweep" else self.scenario
        return from_dict(raw)


def _split_axis(dotted):
    parts = dotted.split(".")
    if len(parts) != 2 or parts[0] not in SCHEMA or parts[1] not in SCHEMA[parts[0]]:
        raise ConfigError(f"sweep.axes: unknown parameter {dotted!r}")
    if parts[0] in ("sweep", "output"):
        raise ConfigError(f"sweep.axes: {dotted!r} cannot be swept")
    return parts[0], parts[1]


def from_dict(raw: dict) -> RunConfig:
    raw = copy.deepcopy(raw)
    scenario = raw.pop("scenario", None)
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: expected one of {SCENARIOS}, got {scenario!r}")
    sections = {}
    for name, table in raw.items():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
    for name, fields in SCHEMA.items():
        table = raw.get(name, {})
        for key in table:
            if key not in fields:
                raise ConfigError(f"[{name}]: unknown key {key!r}")
        sec = {}
        for key, (kind, default) in fields.items():
            if key in table and table[key] is not None:
                sec[key] = _check_value(f"{name}.{key}", kind, table[key])
            else:
                sec[key] = copy.deepcopy(default)
        sections[name] = sec
    _cross_checks(scenario, sections)
    return RunConfig(scenario, sections)


def _cross_checks(scenario, s):
    model, proto, num, fcs = s["model"], s["protocol"], s["numerics"], s["fcs"]
    if model["kind"] not in ("qbm", "qubit"):
        raise ConfigError(f"model.kind: expected 'qbm' or 'qubit', got {model['kind']!r}")
    if len(model["gammas"]) != len(model["betas"]):
        raise ConfigError("model.gammas and model.betas must have equal length")
    if proto["shape"] not in SHAPES:
        raise ConfigError(f"protocol.shape: expected one of {SHAPES}, got {proto['shape']!r}")
    if proto["case"] not in TABLE1_CASES:
        raise ConfigError(f"protocol.case: expected one of {TABLE1_CASES}")
    if proto["shape"] == "optimal" and model["kind"] != "qbm":
        raise ConfigError("protocol.shape = 'optimal' is defined for the qbm model only")
    if num["engine"] not in ("fock", "gaussian"):
        raise ConfigError("numerics.engine: expected 'fock' or 'gaussian'")
    if num["engine"] == "gaussian" and model["kind"] != "qbm":
        raise ConfigError("numerics.engine = 'gaussian' needs model.kind = 'qbm'")
    if num["basis"] not in ("fixed", "balanced"):
        raise ConfigError("numerics.basis: expected 'fixed' or 'balanced'")
    if num["basis"] == "balanced" and model["kind"] != "qbm":
        raise ConfigError("numerics.basis = 'balanced' needs model.kind = 'qbm'")
    if num["n_samples"] < 2:
        raise ConfigError("numerics.n_samples: need at least 2 samples")
    if fcs["mode"] not in ("work", "heat_exchange", "joint"):
        raise ConfigError("fcs.mode: expected 'work', 'heat_exchange' or 'joint'")
    if fcs["u_max"] < fcs["u_min"]:
        raise ConfigError("fcs.u_max must not be below fcs.u_min")
    if fcs["moment_order"] > 4:
        raise ConfigError("fcs.moment_order: at most 4")
    if scenario in ("excess-work", "geodesic") and model["kind"] != "qbm":
        raise ConfigError(f"scenario {scenario!r} is defined for the qbm model only")
    sw = s["sweep"]
    if sw["scenario"] not in SCENARIOS or sw["scenario"] == "sweep":
        raise ConfigError("sweep.scenario: expected a non-sweep scenario")
    if len(sw["axes"]) > MAX_SWEEP_AXES:
        raise ConfigError(f"sweep.axes: at most {MAX_SWEEP_AXES} ranged parameters")
    for dotted, values in sw["axes"].items():
        section, key = _split_axis(dotted)
        if not isinstance(values, list):
            raise ConfigError(f"sweep.axes.{dotted}: expected a list of values")
        kind = SCHEMA[section][key][0]
        for i, v in enumerate(values):
            _check_value(f"sweep.axes.{dotted}[{i}]", kind, v)


def load_raw(path) -> dict:
    """Parsed TOML without validation; decode errors carry line and column."""
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load(path) -> RunConfig:
    return from_dict(load_raw(path))
