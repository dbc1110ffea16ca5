"""Scenario files, their validation, and the built-in preset catalog.

A scenario file is YAML (JSON is valid YAML too) with the top-level keys
``sorts``, ``grid``, ``potential``, ``time`` and ``state``; see
``docs/scenario.md`` for the full schema.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .lattice import AxisSpec, ConfigurationGrid, GridError, SortSpec
from .model import Envelope, Harmonic, Potential, PotentialError, SoftCoulomb, UniformField
from .propagator import evolve
from .snapshot import SnapshotSeries
from .states import CoherentState, GaussianPacket, HarmonicEigenstate, StateSpec, sample_state


class ScenarioError(ValueError):
    """Schema or semantic error in a scenario; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


_NUM = {"type": "number"}
_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 3}]}
_PER_SORT = {"oneOf": [_NUM, {"type": "object", "additionalProperties": _NUM}]}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["sorts", "grid", "potential", "time", "state"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "hbar": {"type": "number", "exclusiveMinimum": 0},
        "sorts": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["label", "count", "mass"], "additionalProperties": False,
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "count": {"type": "integer", "minimum": 1},
                    "mass": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "grid": {
            "type": "object", "required": ["lo", "hi", "n"], "additionalProperties": False,
            "properties": {
                "lo": _VEC, "hi": _VEC,
                "n": {"type": "integer", "minimum": 2},
                "spatial_dim": {"type": "integer", "enum": [1, 2, 3]},
                "max_axes": {"type": "integer", "minimum": 1},
            },
        },
        "potential": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "free": {"type": ["object", "null"]},
                "harmonic": {
                    "type": "object", "additionalProperties": False, "required": ["omega"],
                    "properties": {"omega": _PER_SORT, "center": _VEC},
                },
                "soft_coulomb": {
                    "type": "object", "additionalProperties": False, "required": ["strength", "softening"],
                    "properties": {"strength": _NUM, "softening": {"type": "number", "exclusiveMinimum": 0},
                                   "charges": {"type": "object", "additionalProperties": _NUM}},
                },
                "uniform_field": {
                    "type": "object", "additionalProperties": False, "required": ["amplitude"],
                    "properties": {
                        "amplitude": _NUM, "direction": _VEC,
                        "charges": {"type": "object", "additionalProperties": _NUM},
                        "envelope": {
                            "type": "object", "additionalProperties": False, "required": ["kind"],
                            "properties": {"kind": {"enum": ["constant", "cos", "sin2"]}, "omega": _NUM,
                                           "phase": _NUM, "duration": _NUM},
                        },
                    },
                },
            },
        },
        "time": {
            "type": "object", "required": ["dt", "steps"], "additionalProperties": False,
            "properties": {
                "t0": _NUM,
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": "integer", "minimum": 2},
                "substeps": {"type": "integer", "minimum": 1},
                "source": {"enum": ["propagate", "exact"]},
            },
        },
        "state": {
            "type": "object", "required": ["orbitals"], "additionalProperties": False,
            "properties": {
                "symmetry": {"type": "object",
                             "additionalProperties": {"enum": ["none", "symmetric", "antisymmetric"]}},
                "orbitals": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "array", "minItems": 1,
                        "items": {
                            "type": "object", "required": ["type"],
                            "properties": {"type": {"enum": ["gaussian", "coherent", "eigenstate"]}},
                        },
                    },
                },
            },
        },
        "analysis": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "node_eps": {"type": "number", "exclusiveMinimum": 0},
                "rho_eps": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "trajectories": {
            "type": "object", "additionalProperties": False,
            "properties": {"count": {"type": "integer", "minimum": 1},
                           "substeps": {"type": "integer", "minimum": 1}},
        },
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
    },
}


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def validate_config(cfg: Any) -> None:
    """Raise :class:`ScenarioError` naming the first schema violation."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return
    err = errors[0]
    parts = list(err.absolute_path)
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        raise ScenarioError(_path(parts + missing[:1]), "required field is missing")
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = [k for k in err.instance if k not in allowed]
        raise ScenarioError(_path(parts + extra[:1]), "unknown field")
    raise ScenarioError(_path(parts), err.message)


@dataclass
class Scenario:
    """Everything needed to produce and analyze a snapshot series."""

    name: str
    grid: ConfigurationGrid
    potential: Potential
    state: StateSpec
    t0: float = 0.0
    dt: float = 1e-3
    steps: int = 2
    substeps: int = 1
    source: str = "propagate"
    hbar: float = 1.0
    node_eps: float = 1e-10
    rho_eps: float = 1e-10
    description: str = ""
    tolerances: dict[str, float] = field(default_factory=dict)
    trajectory_count: int = 1000
    trajectory_substeps: int = 1
    config: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.steps < 2:
            raise ScenarioError("time.steps", "at least 3 snapshots (2 steps) are required")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def initial_state(self, dtype=np.complex128):
        return sample_state(self.state, self.grid, self.t0, potential=self.potential, hbar=self.hbar, dtype=dtype)

    def series(self, dtype=np.complex128) -> SnapshotSeries:
        """Snapshots at ``times``: closed-form samples or split-operator propagation."""
        if self.source == "exact":
            return SnapshotSeries([
                sample_state(self.state, self.grid, t, potential=self.potential, hbar=self.hbar, dtype=dtype)
                for t in self.times
            ])
        psi0 = self.initial_state(dtype)
        h = self.dt / self.substeps
        return evolve(psi0, self.potential, h, self.steps * self.substeps, every=self.substeps)

    def with_overrides(self, *, n: int | None = None, lo=None, hi=None, dt: float | None = None,
                       steps: int | None = None, substeps: int | None = None) -> "Scenario":
        """A copy with grid or time settings replaced (re-validated)."""
        cfg = copy.deepcopy(self.config)
        if n is not None:
            cfg["grid"]["n"] = int(n)
        if lo is not None:
            cfg["grid"]["lo"] = lo
        if hi is not None:
            cfg["grid"]["hi"] = hi
        if dt is not None:
            cfg["time"]["dt"] = float(dt)
        if steps is not None:
            cfg["time"]["steps"] = int(steps)
        if substeps is not None:
            cfg["time"]["substeps"] = int(substeps)
        return from_config(cfg)


def _orbital(d: dict, where: str):
    kind = d["type"]
    rest = {k: v for k, v in d.items() if k != "type"}
    try:
        if kind == "gaussian":
            return GaussianPacket(rest.get("center", 0.0), float(rest.get("width", 1.0)), rest.get("wavenumber", 0.0))
        if kind == "coherent":
            a = rest.get("alpha", 0.0)
            # alpha given as [re, im] or a list of such pairs (one per direction)
            a = np.asarray(a, dtype=float)
            alpha = complex(a[0], a[1]) if a.ndim == 1 and a.size == 2 else (
                [complex(x, y) for x, y in a] if a.ndim == 2 else complex(float(a)))
            return CoherentState(alpha)
        if kind == "eigenstate":
            return HarmonicEigenstate(rest.get("n", 0))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(where, str(exc)) from exc
    raise ScenarioError(where + ".type", f"unknown orbital type {kind!r}")


def _potential(d: dict) -> Potential:
    parts = []
    if "harmonic" in d:
        h = d["harmonic"]
        parts.append(Harmonic(h["omega"], h.get("center", 0.0)))
    if "soft_coulomb" in d:
        c = d["soft_coulomb"]
        try:
            parts.append(SoftCoulomb(c["strength"], c["softening"], c.get("charges")))
        except PotentialError as exc:
            raise ScenarioError("potential.soft_coulomb.softening", str(exc)) from exc
    if "uniform_field" in d:
        u = d["uniform_field"]
        env = None
        if "envelope" in u:
            e = u["envelope"]
            env = Envelope(e["kind"], e.get("omega", 0.0), e.get("phase", 0.0), e.get("duration", 1.0))
        parts.append(UniformField(u["amplitude"], u.get("direction", 1.0), env, u.get("charges")))
    return Potential(tuple(parts))


def from_config(cfg: dict) -> Scenario:
    """Build a :class:`Scenario` from a parsed config mapping."""
    validate_config(cfg)
    sorts = []
    for k, s in enumerate(cfg["sorts"]):
        if s["label"] == "tot":
            raise ScenarioError(f"sorts[{k}].label", "'tot' is reserved for ensemble totals")
        sorts.append(SortSpec(s["label"], int(s["count"]), float(s["mass"])))
    g = cfg["grid"]
    nu = int(g.get("spatial_dim", 1))
    lo = np.broadcast_to(np.asarray(g["lo"], dtype=float), (nu,))
    hi = np.broadcast_to(np.asarray(g["hi"], dtype=float), (nu,))
    try:
        axes = tuple(AxisSpec(float(lo[a]), float(hi[a]), int(g["n"])) for a in range(nu))
        grid = ConfigurationGrid(tuple(sorts), axes, max_axes=int(g.get("max_axes", 4)))
    except GridError as exc:
        raise ScenarioError("grid", str(exc)) from exc
    st = cfg["state"]
    orbitals = {}
    for label, orbs in st["orbitals"].items():
        orbitals[label] = tuple(_orbital(o, f"state.orbitals.{label}[{i}]") for i, o in enumerate(orbs))
    try:
        state = StateSpec(orbitals, st.get("symmetry", {}))
        state.validate(grid)
    except ValueError as exc:
        raise ScenarioError("state", str(exc)) from exc
    t = cfg["time"]
    an = cfg.get("analysis", {})
    return Scenario(
        name=cfg.get("name", "scenario"),
        description=cfg.get("description", ""),
        grid=grid,
        potential=_potential(cfg["potential"]),
        state=state,
        t0=float(t.get("t0", 0.0)),
        dt=float(t["dt"]),
        steps=int(t["steps"]),
        substeps=int(t.get("substeps", 1)),
        source=t.get("source", "propagate"),
        hbar=float(cfg.get("hbar", 1.0)),
        node_eps=float(an.get("node_eps", 1e-10)),
        rho_eps=float(an.get("rho_eps", 1e-10)),
        tolerances=dict(cfg.get("tolerances", {})),
        trajectory_count=int(cfg.get("trajectories", {}).get("count", 1000)),
        trajectory_substeps=int(cfg.get("trajectories", {}).get("substeps", 1)),
        config=copy.deepcopy(cfg),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ScenarioError("", f"{path} does not contain a mapping")
    cfg.setdefault("name", path.stem)
    return from_config(cfg)


# ---------------------------------------------------------------------------
# presets

PRESETS: dict[str, dict] = {
    "stationary": {
        "description": "harmonic-oscillator ground state; |Psi| is time independent and w = 0",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}],
        "grid": {"lo": -10.0, "hi": 10.0, "n": 128},
        "potential": {"harmonic": {"omega": 1.0}},
        "time": {"dt": 1e-3, "steps": 4, "source": "exact"},
        "state": {"orbitals": {"A": [{"type": "eigenstate", "n": 0}]}},
    },
    "free_gaussian": {
        "description": "free Gaussian packet with mean momentum; spreads and translates",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}],
        "grid": {"lo": -16.0, "hi": 16.0, "n": 256},
        "potential": {"free": {}},
        "time": {"dt": 1e-3, "steps": 10},
        "state": {"orbitals": {"A": [{"type": "gaussian", "center": -1.0, "width": 1.0, "wavenumber": 1.0}]}},
    },
    "coherent": {
        "description": "harmonic coherent state; rigid Gaussian following the classical orbit",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}],
        "grid": {"lo": -12.0, "hi": 12.0, "n": 256},
        "potential": {"harmonic": {"omega": 1.0}},
        "time": {"t0": 0.3, "dt": 1e-3, "steps": 10},
        "state": {"orbitals": {"A": [{"type": "coherent", "alpha": [1.0, 0.5]}]}},
    },
    "two_sort_product": {
        "description": "two sorts (m_B = 4 m_A) in a common trap, product of displaced Gaussians",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}, {"label": "B", "count": 1, "mass": 4.0}],
        "grid": {"lo": -12.0, "hi": 12.0, "n": 128},
        "potential": {"harmonic": {"omega": 1.0}},
        "time": {"dt": 1e-3, "steps": 4},
        "state": {"orbitals": {
            "A": [{"type": "gaussian", "center": -1.0, "width": 0.9, "wavenumber": 0.5}],
            "B": [{"type": "gaussian", "center": 1.0, "width": 0.8, "wavenumber": -1.0}],
        }},
    },
    "symmetrized_pair": {
        "description": "two identical bosons in a trap, symmetrized product of two displaced Gaussians",
        "sorts": [{"label": "A", "count": 2, "mass": 1.0}],
        "grid": {"lo": -12.0, "hi": 12.0, "n": 128},
        "potential": {"harmonic": {"omega": 1.0}},
        "time": {"dt": 1e-3, "steps": 4},
        "state": {"symmetry": {"A": "symmetric"}, "orbitals": {"A": [
            {"type": "gaussian", "center": -1.5, "width": 0.8, "wavenumber": 0.5},
            {"type": "gaussian", "center": 1.5, "width": 0.9, "wavenumber": -0.3},
        ]}},
    },
    "opposite_boost_pair": {
        "description": "two sorts of equal mass sharing one Gaussian profile with opposite momenta; j_tot = 0",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}, {"label": "B", "count": 1, "mass": 1.0}],
        "grid": {"lo": -12.0, "hi": 12.0, "n": 128},
        "potential": {"free": {}},
        "time": {"dt": 1e-3, "steps": 4},
        "state": {"orbitals": {
            "A": [{"type": "gaussian", "center": 0.0, "width": 1.0, "wavenumber": 1.5}],
            "B": [{"type": "gaussian", "center": 0.0, "width": 1.0, "wavenumber": -1.5}],
        }},
    },
    "interacting_pair": {
        "description": "two sorts coupled by a soft-Coulomb attraction in a trap; no closed form, propagated",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}, {"label": "B", "count": 1, "mass": 2.0}],
        "grid": {"lo": -12.0, "hi": 12.0, "n": 256},
        "potential": {"harmonic": {"omega": 1.0},
                      "soft_coulomb": {"strength": -1.0, "softening": 1.0}},
        "time": {"dt": 1e-3, "steps": 4},
        "state": {"orbitals": {
            "A": [{"type": "gaussian", "center": -1.0, "width": 1.0, "wavenumber": 0.5}],
            "B": [{"type": "gaussian", "center": 1.0, "width": 0.8, "wavenumber": 0.0}],
        }},
    },
    "coherent_2d": {
        "description": "planar coherent state in an isotropic trap (spatial_dim = 2); exercises full tensors",
        "sorts": [{"label": "A", "count": 1, "mass": 1.0}],
        "grid": {"lo": -10.0, "hi": 10.0, "n": 128, "spatial_dim": 2},
        "potential": {"harmonic": {"omega": 1.0}},
        "time": {"dt": 1e-3, "steps": 4},
        "state": {"orbitals": {"A": [{"type": "coherent", "alpha": [[1.0, 0.0], [0.0, 0.8]]}]}},
    },
}


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[name])
    cfg["name"] = name
    return cfg


def preset(name: str) -> Scenario:
    return from_config(preset_config(name))


def list_scenarios() -> dict[str, str]:
    """Preset name -> one-line description."""
    return {name: cfg["description"] for name, cfg in PRESETS.items()}
