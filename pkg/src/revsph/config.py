"""Scenario configuration files (TOML).

A file has up to five tables: ``[scenario]``, ``[physics]``,
``[integrator]``, ``[isc]`` and ``[output]``. Every key is optional; missing
keys take the default of the chosen scenario (``dambreak`` or ``gresho``).
Unknown tables or keys, wrong types and violated constraints are rejected
with a message naming the key.

Thread count is deliberately not part of the file: results must not depend
on it, and the config hash stored in checkpoints should not either. For the
same reason the hash skips ``[output] dir``.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

import tomli_w

from .bench import GRESHO_ROWS, DamBreakScenario, GreshoScenario
from .integrate import IntegratorConfig
from .kernels import _FAMILIES


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# Each entry: key -> (type, dambreak default, gresho default, check, description).
# A default of None means "unset"; such keys are omitted when rendering.
_POS = (lambda v: v > 0, "must be > 0")
_NONNEG = (lambda v: v >= 0, "must be >= 0")
_ANY = (lambda v: True, "")


def _one_of(*opts):
    return (lambda v: v in opts, "must be one of " + ", ".join(map(str, opts)))


SCHEMA = {
    "scenario": {
        "name": (str, "dambreak", "gresho", _one_of("dambreak", "gresho"), "benchmark to run"),
        "dr": (float, 0.005, 0.01, _POS, "particle spacing"),
        "kernel": (str, "wendland2", "wendland2", _one_of(*sorted(_FAMILIES)), "kernel family"),
        "wall_model": (str, "lj", "dummy", _one_of("lj", "dummy"), "wall treatment"),
        "arrangement": (str, "square", "square", _one_of(*GRESHO_ROWS), "initial lattice (gresho)"),
        "seed": (int, 0, 0, _NONNEG, "random seed"),
    },
    "physics": {
        "rho0": (float, 1000.0, 1.0, _POS, "reference density"),
        "c": (float, 120.0, 20.0, _POS, "numerical sound speed"),
        "g": (float, 9.8, 0.0, _NONNEG, "gravity"),
        "h_factor": (float, 3.0, 3.0, _POS, "support radius / dr"),
        "r_wall_factor": (float, 0.95, 0.95, _POS, "LJ radius / dr"),
        "e_wall_factor": (float, 10.0, 10.0, _NONNEG, "E_wall / (m g l_wch)"),
        "p0": (float, 0.0, 10.0, _NONNEG, "anti-clump pressure"),
        "l_wcw": (float, 1.0, 1.0, _POS, "water column width"),
        "l_wch": (float, 2.0, 2.0, _POS, "water column height"),
        "l_bw": (float, 4.0, 4.0, _POS, "box width"),
        "l_bh": (float, 3.0, 3.0, _POS, "box height"),
        "box": (float, 1.0, 1.0, _POS, "Gresho box side"),
        "wall_layers": (int, 2, 2, _POS, "dummy wall layers"),
    },
    "integrator": {
        "arithmetic": (str, "fixpa", "flopa", _one_of("fixpa", "flopa"), "state arithmetic"),
        "scheme": (str, "sym", "sym", _one_of("sym", "std"), "density treatment"),
        "density_mode": (str, "offset", "offset", _one_of("raw", "offset"), "density offsets"),
        "dt_factor": (float, 0.2, 0.1, _POS, "dt / (h/c)"),
        "end_time": (float, 1.0, 1.0, _NONNEG, "end time"),
        "reverse_at": (float, None, None, _POS, "velocity reversal time"),
        "filter": (str, "none", "none", _one_of("none", "active"), "in-loop Shepard filter"),
        "filter_every": (int, 30, 30, _POS, "active filter period M"),
        "watchdog_factor": (float, 1000.0, 1000.0, (lambda v: v > 1, "must be > 1"), "energy watchdog"),
    },
    "isc": {
        "enabled": (bool, False, False, _ANY, "run initial state correction"),
        "tol": (float, 1e-10, 1e-10, _POS, "density tolerance"),
        "seed": (int, 0, 0, _NONNEG, "noise seed"),
    },
    "output": {
        "dir": (str, "out", "out", (lambda v: len(v) > 0, "must be non-empty"), "output directory"),
        "every": (int, 50, 50, _POS, "diagnostic period (steps)"),
        "checkpoint_every": (int, 0, 0, _NONNEG, "snapshot period in outputs (0 = final only)"),
        "entropy_bins": (int, 50, 50, (lambda v: v >= 2, "must be >= 2"), "histogram bins"),
        "snapshot_text": (bool, False, False, _ANY, "also write text particle tables"),
    },
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved configuration: ``{table: {key: value}}``."""

    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def name(self) -> str:
        return self.values["scenario"]["name"]

    def hash(self) -> bytes:
        """SHA-256 of the canonical text, ignoring where outputs are written."""
        vals = {s: dict(v) for s, v in self.values.items()}
        vals["output"].pop("dir")
        return hashlib.sha256(render_config(ScenarioConfig(vals)).encode()).digest()

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.values == other.values

    def __hash__(self):
        return hash(self.hash())


def _coerce(section, key, value, typ):
    where = f"[{section}] {key}"
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {type(value).__name__}")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected {typ.__name__}, got a boolean")
    if typ is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return value
    if typ is int:
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {type(value).__name__}")
        return value
    if not isinstance(value, typ):
        raise ConfigError(f"{where}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def from_dict(data: dict) -> ScenarioConfig:
    for section in data:
        if section not in SCHEMA:
            raise ConfigError(f"unknown table [{section}]; allowed: {', '.join(SCHEMA)}")
        if not isinstance(data[section], dict):
            raise ConfigError(f"[{section}] must be a table")
    name = data.get("scenario", {}).get("name", "dambreak")
    if name not in ("dambreak", "gresho"):
        raise ConfigError(f"[scenario] name: must be one of dambreak, gresho (got {name!r})")
    col = 1 if name == "dambreak" else 2
    out = {}
    for section, keys in SCHEMA.items():
        given = data.get(section, {})
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key [{section}] {key}; allowed: {', '.join(keys)}")
        sec = {}
        for key, spec in keys.items():
            typ, check = spec[0], spec[3]
            if key in given:
                val = _coerce(section, key, given[key], typ)
            else:
                val = spec[col]
            if val is not None and not check[0](val):
                raise ConfigError(f"[{section}] {key} = {val!r}: {check[1]}")
            sec[key] = val
        out[section] = sec
    cfg = ScenarioConfig(out)
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: ScenarioConfig):
    try:
        if cfg.name == "dambreak":
            to_dambreak(cfg)
        else:
            to_gresho(cfg)
        integrator_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    integ = cfg["integrator"]
    if integ["reverse_at"] is not None and integ["reverse_at"] > integ["end_time"]:
        raise ConfigError("[integrator] reverse_at: must not exceed end_time")


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config(name: str = "dambreak") -> ScenarioConfig:
    return from_dict({"scenario": {"name": name}})


def render_config(cfg: ScenarioConfig) -> str:
    """Canonical TOML with every set key (unset optionals are omitted)."""
    data = {s: {k: v for k, v in cfg[s].items() if v is not None} for s in SCHEMA}
    return tomli_w.dumps(data)


def with_overrides(cfg: ScenarioConfig, **sections) -> ScenarioConfig:
    """New config with ``section={key: value}`` replacements, revalidated."""
    data = {s: dict(v) for s, v in cfg.values.items()}
    for s, kv in sections.items():
        data.setdefault(s, {}).update(kv)
    data = {s: {k: v for k, v in sec.items() if v is not None} for s, sec in data.items()}
    return from_dict(data)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def to_dambreak(cfg: ScenarioConfig) -> DamBreakScenario:
    s, p = cfg["scenario"], cfg["physics"]
    return DamBreakScenario(
        dr=s["dr"], l_wcw=p["l_wcw"], l_wch=p["l_wch"], l_bw=p["l_bw"], l_bh=p["l_bh"],
        rho0=p["rho0"], c=p["c"], g=p["g"], h_factor=p["h_factor"],
        r_wall_factor=p["r_wall_factor"], e_wall_factor=p["e_wall_factor"],
        dt_factor=cfg["integrator"]["dt_factor"], wall_model=s["wall_model"], kernel=s["kernel"],
        apply_isc=cfg["isc"]["enabled"], seed=cfg["isc"]["seed"])


def to_gresho(cfg: ScenarioConfig) -> GreshoScenario:
    s, p, i = cfg["scenario"], cfg["physics"], cfg["integrator"]
    return GreshoScenario(
        dr=s["dr"], rho0=p["rho0"], c=p["c"], h_factor=p["h_factor"], p0=p["p0"],
        dt_factor=i["dt_factor"], filter_every=i["filter_every"], end_time=i["end_time"],
        box=p["box"], wall_layers=p["wall_layers"], kernel=s["kernel"],
        arithmetic=i["arithmetic"], seed=cfg["isc"]["seed"])


def integrator_config(cfg: ScenarioConfig) -> IntegratorConfig:
    i = cfg["integrator"]
    sc = to_dambreak(cfg) if cfg.name == "dambreak" else to_gresho(cfg)
    return IntegratorConfig(
        dt=sc.dt, arithmetic=i["arithmetic"], scheme=i["scheme"], density_mode=i["density_mode"],
        reverse_at=i["reverse_at"], end_time=i["end_time"],
        active_filter_every=i["filter_every"] if i["filter"] == "active" else None,
        watchdog_factor=i["watchdog_factor"])
