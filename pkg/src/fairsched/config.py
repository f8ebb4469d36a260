"""Experiment configuration: JSON schema, validation, serialization.

Schema (JSON object):
  case        "rate" | "activation"
  systems     list of {label, A, C, Q, R_meas} with matrices as nested arrays
  q_values    nonempty list of reals >= 0
  R_total     positive real (rate case)
  Z           positive integer (activation case)
  method      "subgradient" | "mdp" | "greedy" | "all"
  solver      optional {alpha, gamma0, max_iter, tol_violation, tol_objective, seed}
  mdp         optional {tau_max, tol_span, max_sweeps, damping}
  greedy      optional {horizon}
  seed        optional integer
  output      optional output directory

Semantic violations are reported with the JSON path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from fairsched.greedy import GreedyConfig
from fairsched.mdp import MdpConfig
from fairsched.models import ModelError, SystemModel
from fairsched.rate import SolverConfig


class ConfigError(ValueError):
    """Raised for malformed or semantically invalid experiment configs."""


VALID_CASES = ("rate", "activation")
VALID_METHODS = ("subgradient", "mdp", "greedy", "all")


@dataclass
class ExperimentConfig:
    case: str
    systems: list[SystemModel]
    q_values: list[float]
    method: str
    R_total: float = None
    Z: int = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    mdp: MdpConfig = field(default_factory=MdpConfig)
    greedy: GreedyConfig = field(default_factory=GreedyConfig)
    seed: int = 0
    output: str = "out"

    def to_dict(self) -> dict:
        d = {
            "case": self.case,
            "systems": [
                {
                    "label": s.label,
                    "A": s.A.tolist(),
                    "C": s.C.tolist(),
                    "Q": s.Q.tolist(),
                    "R_meas": s.R_meas.tolist(),
                }
                for s in self.systems
            ],
            "q_values": list(self.q_values),
            "method": self.method,
            "solver": asdict(self.solver),
            "mdp": asdict(self.mdp),
            "greedy": {"horizon": self.greedy.horizon},
            "seed": self.seed,
            "output": self.output,
        }
        if self.case == "rate":
            d["R_total"] = self.R_total
        else:
            d["Z"] = self.Z
        return d

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _require(data: dict, key: str, where: str = ""):
    if key not in data:
        raise ConfigError(f"missing field {where}{key!r}")
    return data[key]


def _parse_system(entry: dict, idx: int) -> SystemModel:
    where = f"systems[{idx}]."
    if not isinstance(entry, dict):
        raise ConfigError(f"systems[{idx}] must be an object")
    label = entry.get("label", f"sensor{idx + 1}")
    try:
        return SystemModel(
            A=_require(entry, "A", where),
            C=_require(entry, "C", where),
            Q=_require(entry, "Q", where),
            R_meas=_require(entry, "R_meas", where),
            label=label,
        )
    except ModelError as exc:
        raise ConfigError(f"systems[{idx}] ({label!r}): {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    case = _require(data, "case")
    if case not in VALID_CASES:
        raise ConfigError(f"case must be one of {VALID_CASES}, got {case!r}")

    raw_systems = _require(data, "systems")
    if not isinstance(raw_systems, list) or not raw_systems:
        raise ConfigError("systems must be a nonempty list")
    systems = [_parse_system(s, i) for i, s in enumerate(raw_systems)]

    q_values = _require(data, "q_values")
    if not isinstance(q_values, list) or not q_values:
        raise ConfigError("q_values must be a nonempty list")
    for i, q in enumerate(q_values):
        if not isinstance(q, (int, float)) or not np.isfinite(q) or q < 0:
            raise ConfigError(f"q_values[{i}] must be a finite real >= 0, got {q!r}")

    method = data.get("method", "all")
    if method not in VALID_METHODS:
        raise ConfigError(f"method must be one of {VALID_METHODS}, got {method!r}")

    R_total = None
    Z = None
    if case == "rate":
        R_total = _require(data, "R_total")
        if not isinstance(R_total, (int, float)) or R_total <= 0:
            raise ConfigError(f"R_total must be a positive number, got {R_total!r}")
        if method in ("mdp", "greedy"):
            raise ConfigError(f"method {method!r} is not valid for the rate case")
    else:
        Z = _require(data, "Z")
        if not isinstance(Z, int) or Z < 1 or Z > len(systems):
            raise ConfigError(
                f"Z must be an integer in [1, {len(systems)}], got {Z!r}"
            )
        if method == "subgradient":
            raise ConfigError("method 'subgradient' is not valid for the activation case")

    try:
        solver = SolverConfig(**data.get("solver", {}))
        mdp = MdpConfig(**data.get("mdp", {}))
        greedy = GreedyConfig(**data.get("greedy", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sub-config: {exc}") from exc
    if Z is not None and mdp.tau_max * Z < len(systems):
        raise ConfigError(
            f"mdp.tau_max={mdp.tau_max} too small: need tau_max >= N/Z"
        )

    return ExperimentConfig(
        case=case,
        systems=systems,
        q_values=[float(q) for q in q_values],
        method=method,
        R_total=None if R_total is None else float(R_total),
        Z=Z,
        solver=solver,
        mdp=mdp,
        greedy=greedy,
        seed=int(data.get("seed", 0)),
        output=str(data.get("output", "out")),
    )


def parse_config(path) -> ExperimentConfig:
    """Load and fully validate a JSON experiment config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level value must be an object")
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
