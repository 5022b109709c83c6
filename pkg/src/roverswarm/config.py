"""Scenario configuration: dataclass, built-in simulations and INI-file IO.

Scenario files are INI documents with the sections ``scenario``,
``formation``, ``grid``, ``smoothing`` and ``solver``; see
``docs/scenario-format.md`` for every key. Angles are degrees in files and
radians everywhere else.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .objectives import GridSpec, ObjectiveWeights, SmoothingParams
from .sqp.solver import SolverConfig
from .swarm import SwarmState, diamond_formation

PHI1_VARIANTS = ("paper_literal", "ratio")
CONSENSUS_UTOPIA = ("solve", "metropolis")

_DIAMOND = diamond_formation()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    steps: int = 20
    a1: float = 0.5
    a2: float = 0.5
    min_tol: float = 0.2
    max_tol: float = 5.0
    target: tuple[float, float] = (0.0, 20.0)
    step_length: float = 1.0
    formation_positions: tuple = tuple(map(tuple, _DIAMOND.positions.tolist()))
    formation_headings: tuple = tuple(_DIAMOND.headings.tolist())  # radians
    cell_size: float | None = None
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    phi1_variant: str = "paper_literal"
    consensus_utopia: str = "solve"
    weight_lower_bound: float = 0.1
    tol_eq: float = 1e-6
    tol_ineq: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))
        object.__setattr__(self, "formation_positions", tuple((float(x), float(y)) for x, y in self.formation_positions))
        object.__setattr__(self, "formation_headings", tuple(float(h) for h in self.formation_headings))
        if self.steps < 1:
            raise ConfigError("steps must be at least 1", key="scenario.steps")
        if self.a1 < 0 or self.a2 < 0 or abs(self.a1 + self.a2 - 1.0) > 1e-12:
            raise ConfigError(f"a1 + a2 must equal 1 with both non-negative, got {self.a1} + {self.a2}", key="scenario.a1")
        if not 0 < self.min_tol < self.max_tol:
            raise ConfigError("need 0 < min_tol < max_tol", key="scenario.min_tol")
        if not self.step_length > 0:
            raise ConfigError("step_length must be positive", key="scenario.step_length")
        if len(self.formation_positions) != len(self.formation_headings) or len(self.formation_positions) < 2:
            raise ConfigError("formation needs matching positions and headings for at least two agents", key="formation")
        if self.phi1_variant not in PHI1_VARIANTS:
            raise ConfigError(f"phi1_variant must be one of {PHI1_VARIANTS}", key="scenario.phi1_variant")
        if self.consensus_utopia not in CONSENSUS_UTOPIA:
            raise ConfigError(f"consensus_utopia must be one of {CONSENSUS_UTOPIA}", key="scenario.consensus_utopia")
        m = self.agent_count
        if not 0 <= self.weight_lower_bound <= 1.0 / m:
            raise ConfigError(f"weight_lower_bound must lie in [0, 1/{m}]", key="scenario.weight_lower_bound")
        if self.cell_size is not None and not self.cell_size > 0:
            raise ConfigError("cell_size must be positive", key="grid.cell_size")
        start = np.asarray(self.formation_positions[-1])
        dist = float(np.hypot(*(np.asarray(self.target) - start)))
        if dist > self.steps * self.step_length + 1e-12:
            raise ConfigError(
                f"target is {dist:.4g} away but the leader can travel only {self.steps * self.step_length:.4g}",
                key="scenario.target_x",
            )

    @property
    def agent_count(self) -> int:
        return len(self.formation_positions)

    @property
    def initial_state(self) -> SwarmState:
        return SwarmState(np.array(self.formation_headings), np.array(self.formation_positions), 0)

    @property
    def objective_weights(self) -> ObjectiveWeights:
        return ObjectiveWeights(self.a1, self.a2)

    @property
    def grid(self) -> GridSpec:
        return GridSpec.covering(self.formation_positions[-1], self.formation_positions, self.steps,
                                 self.step_length, self.cell_size)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def builtin_scenarios() -> dict[str, ScenarioConfig]:
    """The three published simulations."""
    return {
        "sim1": ScenarioConfig(name="sim1", steps=20, a1=0.5, a2=0.5, min_tol=0.2, max_tol=5.0, target=(-3.0, 11.0)),
        "sim2": ScenarioConfig(name="sim2", steps=30, a1=0.5, a2=0.5, min_tol=0.1, max_tol=5.0, target=(5.0, 24.0)),
        "sim3": ScenarioConfig(name="sim3", steps=30, a1=0.25, a2=0.75, min_tol=0.1, max_tol=5.0, target=(5.0, 24.0)),
    }


# Published optimal follower weights, rows = followers 1..3, columns = agents 1..4.
REFERENCE_WEIGHTS = {
    "sim1": np.array([[0.1, 0.1, 0.1, 0.7], [0.1, 0.1, 0.1, 0.7], [0.1, 0.1, 0.1, 0.7]]),
    "sim2": np.array([[0.1, 0.1, 0.2477, 0.5523], [0.3591, 0.1, 0.1, 0.4409], [0.2665, 0.1, 0.1, 0.5335]]),
    "sim3": np.array([[0.2067, 0.1, 0.1, 0.5933], [0.1, 0.1, 0.1, 0.7], [0.1, 0.1, 0.1478, 0.6522]]),
}


# ---------------------------------------------------------------- INI files

_SCENARIO_KEYS = {
    "name": str,
    "steps": int,
    "a1": float,
    "a2": float,
    "min_tol": float,
    "max_tol": float,
    "target_x": float,
    "target_y": float,
    "step_length": float,
    "phi1_variant": str,
    "consensus_utopia": str,
    "weight_lower_bound": float,
    "tol_eq": float,
    "tol_ineq": float,
}
_FORMATION_KEYS = ("x", "y", "heading_deg")
_GRID_KEYS = {"cell_size": float}
_SMOOTHING_KEYS = {f.name: float for f in dataclasses.fields(SmoothingParams)}
_SOLVER_KEYS = {f.name: (int if f.type in ("int", int) else float) for f in dataclasses.fields(SolverConfig)}
SECTIONS = {
    "scenario": _SCENARIO_KEYS,
    "formation": {k: str for k in _FORMATION_KEYS},
    "grid": _GRID_KEYS,
    "smoothing": _SMOOTHING_KEYS,
    "solver": _SOLVER_KEYS,
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def scenario_to_sections(cfg: ScenarioConfig) -> dict[str, dict[str, str]]:
    xs = ", ".join(_fmt(p[0]) for p in cfg.formation_positions)
    ys = ", ".join(_fmt(p[1]) for p in cfg.formation_positions)
    hs = ", ".join(_fmt(math.degrees(h)) for h in cfg.formation_headings)
    return {
        "scenario": {
            "name": cfg.name,
            "steps": str(cfg.steps),
            "a1": _fmt(float(cfg.a1)),
            "a2": _fmt(float(cfg.a2)),
            "min_tol": _fmt(float(cfg.min_tol)),
            "max_tol": _fmt(float(cfg.max_tol)),
            "target_x": _fmt(cfg.target[0]),
            "target_y": _fmt(cfg.target[1]),
            "step_length": _fmt(float(cfg.step_length)),
            "phi1_variant": cfg.phi1_variant,
            "consensus_utopia": cfg.consensus_utopia,
            "weight_lower_bound": _fmt(float(cfg.weight_lower_bound)),
            "tol_eq": _fmt(float(cfg.tol_eq)),
            "tol_ineq": _fmt(float(cfg.tol_ineq)),
        },
        "formation": {"x": xs, "y": ys, "heading_deg": hs},
        "grid": {} if cfg.cell_size is None else {"cell_size": _fmt(float(cfg.cell_size))},
        "smoothing": {k: _fmt(float(getattr(cfg.smoothing, k))) for k in _SMOOTHING_KEYS},
        "solver": {k: _fmt(getattr(cfg.solver, k)) for k in _SOLVER_KEYS},
    }


def dump_scenario(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for section, values in scenario_to_sections(cfg).items():
        parser[section] = values
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _convert(section: str, key: str, raw: str):
    types = SECTIONS.get(section)
    if types is None:
        raise ConfigError(f"unknown section [{section}]", key=section)
    if key not in types:
        raise ConfigError(f"unknown key {section}.{key}", key=f"{section}.{key}")
    try:
        kind = types[key]
        if kind is int:
            return int(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}", key=f"{section}.{key}") from exc


def _float_list(section: str, key: str, raw: str) -> list[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list for {section}.{key}: {raw!r}", key=f"{section}.{key}") from exc


def scenario_from_sections(sections: Mapping[str, Mapping[str, str]], base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build a scenario from section dictionaries, starting from ``base`` defaults."""
    base = ScenarioConfig() if base is None else base
    for section in sections:
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", key=section)
    sc = {k: _convert("scenario", k, v) for k, v in sections.get("scenario", {}).items()}
    grid = {k: _convert("grid", k, v) for k, v in sections.get("grid", {}).items()}
    smooth = {k: _convert("smoothing", k, v) for k, v in sections.get("smoothing", {}).items()}
    solver = {k: _convert("solver", k, v) for k, v in sections.get("solver", {}).items()}
    form = dict(sections.get("formation", {}))
    for k in form:
        if k not in _FORMATION_KEYS:
            raise ConfigError(f"unknown key formation.{k}", key=f"formation.{k}")

    changes = {}
    target = list(base.target)
    for k, v in sc.items():
        if k == "target_x":
            target[0] = v
        elif k == "target_y":
            target[1] = v
        else:
            changes[k] = v
    changes["target"] = tuple(target)
    if form:
        xs = _float_list("formation", "x", form["x"]) if "x" in form else [p[0] for p in base.formation_positions]
        ys = _float_list("formation", "y", form["y"]) if "y" in form else [p[1] for p in base.formation_positions]
        if "heading_deg" in form:
            hs = [math.radians(h) for h in _float_list("formation", "heading_deg", form["heading_deg"])]
        else:
            hs = list(base.formation_headings)
        if not len(xs) == len(ys) == len(hs):
            raise ConfigError("formation.x, formation.y and formation.heading_deg differ in length", key="formation.x")
        changes["formation_positions"] = tuple(zip(xs, ys))
        changes["formation_headings"] = tuple(hs)
    if "cell_size" in grid:
        changes["cell_size"] = grid["cell_size"]
    try:
        if smooth:
            changes["smoothing"] = dataclasses.replace(base.smoothing, **smooth)
        if solver:
            changes["solver"] = dataclasses.replace(base.solver, **solver)
    except ValueError as exc:
        section = "smoothing" if smooth and "smoothing" not in changes else "solver"
        raise ConfigError(str(exc), key=section) from exc
    try:
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_overrides(items) -> dict[str, dict[str, str]]:
    """Turn ``["solver.max_iters=5", ...]`` into section dictionaries."""
    out: dict[str, dict[str, str]] = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}", key=item)
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        out.setdefault(section.strip(), {})[key.strip()] = value.strip()
    return out


def load_scenario(source: str | Path, overrides=None) -> ScenarioConfig:
    """Resolve a built-in name or an INI path, then apply ``section.key=value`` overrides."""
    builtins = builtin_scenarios()
    text = str(source)
    if text in builtins:
        cfg = builtins[text]
    else:
        path = Path(text)
        if not path.is_file():
            raise ConfigError(f"scenario {text!r} is neither a built-in name nor a readable file", key="scenario")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}", key="scenario") from exc
        sections = {s: dict(parser[s]) for s in parser.sections()}
        cfg = scenario_from_sections(sections)
    if overrides:
        cfg = scenario_from_sections(parse_overrides(overrides), base=cfg)
    return cfg
