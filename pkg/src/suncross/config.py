"""Scenario configuration: JSON files with an explicit schema version."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .grid import Grid
from .systems import LinearDDE, NonlinearDDE, PointNonlinearity, cubic, polynomial, wright

SCHEMA_VERSION = 1
ANALYSES = ("spectrum", "trichotomy", "admissibility", "simulate", "center-manifold", "verify")
# dependency order used by ``run``
ORDER = ANALYSES

DEFAULTS = {
    "name": "scenario",
    "seed": 0,
    "analyses": ["spectrum"],
    "spectrum": {"region": None, "max_count": 64},
    "decomposition": {"gap": 1e-3},
    "trichotomy": {"epsilon": None, "t_max": None, "probes": 8},
    "admissibility": {"forcings": 9, "pairs": 20},
    "simulate": {"t_end": 20.0, "history": {"kind": "constant", "value": None}, "samples": 401,
                 "linearization": True},
    "center_manifold": {"radii": [0.5, 0.25], "angles": 6, "eta": None, "T_inf": None, "dt": None,
                        "delta": None, "cutoff_order": 5, "invariance": True, "t_span": [0.0, 10.0],
                        "convergence_study": False, "lipschitz_pairs": 30},
    "numerics": {"N": 20, "rtol": 1e-10, "atol": 1e-12, "truncation_tol": 1e-10},
    "verify": {"level": "quick", "criteria": None, "faults": {}},
}

_SECTIONS = set(DEFAULTS) | {"schema_version", "system"}


@dataclass
class ScenarioConfig:
    raw: dict
    name: str
    seed: int
    linear: LinearDDE
    nonlinear: Optional[NonlinearDDE]
    analyses: list
    sections: dict = field(default_factory=dict)
    source: Optional[str] = None

    def section(self, key):
        return self.sections[key]

    @property
    def grid(self) -> Grid:
        return Grid(self.linear.h, int(self.sections["numerics"]["N"]))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _matrix(x, n, what):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{what}: not a numeric matrix") from e
    if a.ndim == 0 and n == 1:
        a = a.reshape(1, 1)
    if a.shape != (n, n):
        raise ConfigError(f"{what}: expected shape ({n}, {n}), got {a.shape}")
    return a


def _nonlinearity(spec, n, h) -> PointNonlinearity:
    if not isinstance(spec, dict) or "id" not in spec:
        raise ConfigError("system.nonlinearity must be an object with an 'id'")
    p = dict(spec.get("params", {}))
    kind = spec["id"]
    try:
        if kind == "wright":
            if n != 1:
                raise ConfigError("the wright nonlinearity is scalar")
            return wright(float(p["alpha"]), float(p.get("tau", h)))
        if kind == "cubic":
            return cubic(float(p.get("tau", h)), p["A0"], p["A1"], p["C"])
        if kind == "polynomial":
            return polynomial(p["sigmas"], p["terms"], n)
    except KeyError as e:
        raise ConfigError(f"nonlinearity '{kind}' is missing parameter {e}") from e
    raise ConfigError(f"unknown nonlinearity id '{kind}'")


def parse_system(block):
    if not isinstance(block, dict):
        raise ConfigError("'system' must be an object")
    try:
        n = int(block["n"])
        h = float(block["h"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("system needs numeric 'n' and 'h'") from e
    if n < 1:
        raise ConfigError("system.n must be positive")
    B = _matrix(block.get("B", np.zeros((n, n))), n, "system.B")
    delays = []
    for i, d in enumerate(block.get("delays", [])):
        if "tau" not in d or "A" not in d:
            raise ConfigError(f"system.delays[{i}] needs 'tau' and 'A'")
        delays.append((float(d["tau"]), _matrix(d["A"], n, f"system.delays[{i}].A")))
    kernel = block.get("kernel")
    if kernel is not None:
        coefs = kernel.get("coefficients") if isinstance(kernel, dict) else None
        if coefs is None:
            raise ConfigError("system.kernel needs 'coefficients' (power basis in theta/h)")
        kernel = np.array([_matrix(c, n, f"system.kernel.coefficients[{k}]") for k, c in enumerate(coefs)])
    lin = LinearDDE(B, h, tuple(delays), kernel)
    nl = block.get("nonlinearity")
    if nl is None:
        return lin, None
    F = _nonlinearity(nl, n, h)
    return lin, NonlinearDDE(lin, F, int(nl.get("smoothness", 2)))


def validate(raw: dict, source=None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "system" not in raw and raw.get("analyses", ["verify"]) != ["verify"]:
        raise ConfigError("a 'system' block is required unless only 'verify' is requested")
    merged = _merge(DEFAULTS, {k: v for k, v in raw.items() if k != "system"})
    analyses = list(merged["analyses"])
    bad = [a for a in analyses if a not in ANALYSES]
    if bad:
        raise ConfigError(f"unknown analyses {bad}; choose from {list(ANALYSES)}")
    try:
        seed = int(merged["seed"])
    except (TypeError, ValueError) as e:
        raise ConfigError("seed must be an integer") from e
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    if "system" in raw:
        lin, nl = parse_system(raw["system"])
    else:
        from .scenarios import hayes

        lin, nl = hayes(), None
    if "center-manifold" in analyses and nl is None:
        raise ConfigError("center-manifold analysis needs system.nonlinearity")
    if merged["verify"]["level"] not in ("quick", "full"):
        raise ConfigError("verify.level must be 'quick' or 'full'")
    if int(merged["numerics"]["N"]) < 4:
        raise ConfigError("numerics.N must be at least 4")
    sections = {k: merged[k] for k in DEFAULTS if isinstance(DEFAULTS[k], dict)}
    return ScenarioConfig(raw, str(merged["name"]), seed, lin, nl, analyses, sections, source)


def load(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return validate(raw, str(p))


def bundled(name) -> Path:
    """Path of a bundled config such as 'hayes.json'."""
    p = Path(__file__).parent / "configs" / name
    if not p.exists():
        raise ConfigError(f"no bundled config named {name}")
    return p
