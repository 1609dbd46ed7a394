"""Declarative experiment configuration.

A config is a JSON object::

    {
      "kind": "convergence",          # convergence | drift | compare-averaged |
                                      # recover-window | diagnostics | timing | solve
      "problem": "hh3",               # registry name (family or preset)
      "eps": [[0.1], [0.01]],         # scale tuples; omitted -> the problem's own
      "dt": [0.1, 0.05, 0.025],
      "T_final": 1.0,
      "reference": {"method": "rk45", "samples": 20},
      "gates": {"slope_min": 1.7},
      "solver": {"fp_tol": 1e-14},    # SolverConfig overrides
      "options": {},                  # kind-specific settings
      "out": "results/fig1"
    }

Omitted fields take the defaults of :class:`ExperimentSpec`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..errors import ConfigurationError
from ..problems import list_problems
from ..scales import SolverConfig

KINDS = ("convergence", "drift", "compare-averaged", "recover-window", "diagnostics", "timing",
         "solve")

_REFERENCE_METHODS = ("rk45", "self", "none")


@dataclass
class ExperimentSpec:
    kind: str
    problem: str
    eps: Optional[list] = None
    dt: list = field(default_factory=lambda: [0.1])
    T_final: float = 1.0
    reference: dict = field(default_factory=lambda: {"method": "rk45", "samples": 20})
    gates: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    out: Optional[str] = None
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        known = list_problems()
        if self.problem not in known and self.problem.split("-")[0] not in known:
            raise ConfigurationError(f"unknown problem {self.problem!r}; known: {', '.join(known)}")
        if not self.dt or any(not float(h) > 0 for h in self.dt):
            raise ConfigurationError("dt grid must be non-empty and positive")
        if self.eps is not None:
            if not self.eps:
                raise ConfigurationError("eps grid must be non-empty when given")
            self.eps = [list(e) if isinstance(e, (list, tuple)) else [e] for e in self.eps]
        if not self.T_final > 0:
            raise ConfigurationError("T_final must be positive")
        method = self.reference.get("method", "rk45")
        if method not in _REFERENCE_METHODS:
            raise ConfigurationError(f"reference method must be one of {_REFERENCE_METHODS}")
        for key, val in self.gates.items():
            vals = val.values() if isinstance(val, dict) else [val]
            for v in vals:
                if not isinstance(v, (int, float)) or v < 0:
                    raise ConfigurationError(f"gate {key!r} must be a non-negative number")
        unknown = set(self.solver) - set(SolverConfig.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown solver settings: {sorted(unknown)}")

    def solver_config(self, dt: float, T_final: Optional[float] = None) -> SolverConfig:
        T = self.T_final if T_final is None else T_final
        return SolverConfig(dt=float(dt), T_final=float(T), **self.solver)

    def eps_grid(self) -> list:
        return [None] if self.eps is None else [tuple(e) for e in self.eps]

    def to_dict(self) -> dict:
        return asdict(self)


def spec_from_dict(data: dict) -> ExperimentSpec:
    allowed = set(ExperimentSpec.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if "kind" not in data or "problem" not in data:
        raise ConfigurationError("config needs 'kind' and 'problem'")
    return ExperimentSpec(**data)


def load_spec(path) -> ExperimentSpec:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    spec = spec_from_dict(data)
    if not spec.name:
        spec.name = Path(path).stem
    return spec


def preset_names() -> list:
    root = resources.files(__package__) / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentSpec:
    root = resources.files(__package__) / "presets"
    path = root / f"{name}.json"
    if not path.is_file():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    spec = spec_from_dict(json.loads(path.read_text()))
    spec.name = spec.name or name
    return spec
