"""Result files: heading and path series, weight matrix, JSON summaries.

Every number is written with ``repr``, which is locale independent and
round-trips floats exactly, so a file read back reproduces the values it
was written from. The path and heading series are always derived from
the serialised weights and degree headings, which makes a replay of the
written files reproduce them byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .config import REFERENCE_WEIGHTS, ScenarioConfig, scenario_to_sections
from .constraints import DesignLayout, simulate_designs
from .errors import ConfigError, DimensionError, InvalidWeightsError
from .swarm import SwarmTrajectory

HEADINGS_FILE = "headings.csv"
PATH_FILE = "path.csv"
WEIGHTS_FILE = "weights.csv"
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"
UTOPIA_FILE = "utopia.json"


def _num(value) -> str:
    return repr(float(value))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def headings_csv(traj: SwarmTrajectory, leader_deg=None) -> str:
    """``time, agent1..agentm`` with headings in degrees, one row per step.

    ``leader_deg`` supplies the leader column for ``t = 1..T`` verbatim;
    converting the stored radians back to degrees need not reproduce the
    commanded values bit for bit.
    """
    m = traj.agent_count
    deg = np.degrees(traj.headings)
    if leader_deg is not None:
        deg[1:, -1] = np.asarray(leader_deg, dtype=float)
    rows = ([str(t)] + [_num(v) for v in deg[t]] for t in range(traj.steps + 1))
    return _csv_text(["time"] + [f"agent{i + 1}" for i in range(m)], rows)


def path_csv(traj: SwarmTrajectory) -> str:
    """``time, X1, Y1, .., Xm, Ym`` positions, one row per step."""
    m = traj.agent_count
    header = ["time"]
    for i in range(m):
        header += [f"X{i + 1}", f"Y{i + 1}"]
    rows = ([str(t)] + [_num(v) for v in traj.positions[t].ravel()] for t in range(traj.steps + 1))
    return _csv_text(header, rows)


def weights_csv(weights) -> str:
    """Weight rows under an ``agent1..agentm`` header."""
    w = np.asarray(weights, dtype=float)
    return _csv_text([f"agent{j + 1}" for j in range(w.shape[1])], ([_num(v) for v in row] for row in w))


def _read_rows(path: Path) -> tuple[list[str], list[list[float]]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", key=str(path)) from exc
    reader = csv.reader(io.StringIO(text))
    lines = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not lines:
        raise ConfigError(f"{path} is empty", key=str(path))
    header = []
    try:
        [float(v) for v in lines[0]]
    except ValueError:
        header, lines = [c.strip() for c in lines[0]], lines[1:]
    try:
        return header, [[float(v) for v in row] for row in lines]
    except ValueError as exc:
        raise ConfigError(f"{path} holds a non-numeric entry: {exc}", key=str(path)) from exc


def read_weights(path, agent_count: int) -> np.ndarray:
    """Follower weight rows from a CSV file with ``m - 1`` or ``m`` rows of ``m`` values."""
    _, rows = _read_rows(Path(path))
    w = np.array(rows, dtype=float)
    if w.ndim != 2 or w.shape[1] != agent_count or w.shape[0] not in (agent_count - 1, agent_count):
        raise DimensionError(f"{path}: expected {agent_count - 1} or {agent_count} rows of {agent_count} weights, "
                             f"got shape {w.shape}")
    return w[: agent_count - 1]


def read_leader_headings_deg(path, agent_count: int) -> np.ndarray:
    """Leader headings for ``t = 1..T`` in degrees.

    Accepts a heading series written by this package (the leader column,
    skipping ``t = 0``) or a bare list with one heading per line.
    """
    header, rows = _read_rows(Path(path))
    if header and header[0] == "time":
        if any(len(r) != agent_count + 1 for r in rows):
            raise DimensionError(f"{path}: heading series must have {agent_count + 1} columns")
        return np.array([r[-1] for r in rows[1:]], dtype=float)
    if any(len(r) != 1 for r in rows):
        raise DimensionError(f"{path}: expected one heading per line")
    return np.array([r[0] for r in rows], dtype=float)


def replay(scenario: ScenarioConfig, follower_weights, leader_headings_deg) -> SwarmTrajectory:
    """Roll out weights and degree headings without any optimisation.

    Raises:
        InvalidWeightsError: a row is negative somewhere or its sum misses 1
            by more than the scenario's equality tolerance; the message
            lists every row sum.
    """
    m = scenario.agent_count
    w = np.asarray(follower_weights, dtype=float)
    if w.shape != (m - 1, m):
        raise DimensionError(f"expected follower weights of shape {(m - 1, m)}, got {w.shape}")
    sums = w.sum(axis=1)
    if np.any(w < 0) or np.any(np.abs(sums - 1.0) > scenario.tol_eq):
        listing = ", ".join(_num(s) for s in sums)
        raise InvalidWeightsError(f"weights must be non-negative with unit row sums (row sums: {listing})",
                                  row_sums=sums)
    headings = np.radians(np.asarray(leader_headings_deg, dtype=float).ravel())
    steps = headings.size
    if steps < 1:
        raise DimensionError("need at least one leader heading")
    full = np.vstack([w, np.full((1, m), 1.0 / m)])
    layout = DesignLayout(m, steps)
    _, hs, ps = simulate_designs(layout.pack(full, headings)[None], scenario.initial_state, layout,
                                 scenario.step_length)
    return SwarmTrajectory(hs[0], ps[0], scenario.step_length)


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _clean(value):
    """JSON-ready copy: numpy scalars and arrays become Python floats and lists."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def bundle_summary(bundle, trajectory: SwarmTrajectory) -> dict:
    """Machine-readable summary of a result bundle (no timing, so runs compare byte for byte)."""
    from .runner import compare_to_reference

    rep = bundle.report
    weights = bundle.weights
    summary = {
        "scenario": bundle.scenario.name,
        "status": rep.status,
        "message": rep.message,
        "feasible": bool(bundle.feasibility.feasible),
        "func_evals": int(rep.func_evals),
        "total_func_evals": int(sum(s["func_evals"] or 0 for s in bundle.starts)),
        "iterations": int(rep.iterations),
        "kkt_residual": rep.kkt_residual,
        "max_violation": bundle.feasibility.max_inequality,
        "max_equality_error": bundle.feasibility.max_equality_error,
        "objectives": bundle.breakdown,
        "utopia": bundle.utopia.to_dict(),
        "weights": np.round(weights, 4),
        "leader_headings_deg": np.round(np.degrees(trajectory.headings[1:, -1]), 4),
        "leader_final_position": trajectory.positions[-1, -1],
        "starts": bundle.starts,
        "config": scenario_to_sections(bundle.scenario),
    }
    ref = REFERENCE_WEIGHTS.get(bundle.scenario.name)
    if ref is not None and ref.shape == weights[:-1].shape:
        summary["reference_comparison"] = compare_to_reference(weights[:-1], ref,
                                                               bundle.scenario.weight_lower_bound).to_dict()
    return _clean(summary)


def write_series(out_dir: Path, trajectory: SwarmTrajectory, leader_deg=None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / HEADINGS_FILE, out_dir / PATH_FILE]
    paths[0].write_text(headings_csv(trajectory, leader_deg))
    paths[1].write_text(path_csv(trajectory))
    return paths


def write_bundle(bundle, out_dir, wall_time: Optional[float] = None) -> list[Path]:
    """Write the four artifacts of a result bundle.

    The series are rolled out again from the serialised weights and degree
    headings, so the files describe exactly what a replay would produce.
    A ``wall_time`` (seconds) goes to a separate ``timing.json`` so the
    four artifacts stay byte-identical between runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = bundle.scenario.agent_count
    weights = bundle.weights
    lead_deg = np.degrees(DesignLayout(m, bundle.scenario.steps).unpack(bundle.design)[1])
    traj = replay(bundle.scenario, weights[:-1], lead_deg)
    paths = write_series(out, traj, lead_deg)
    (out / WEIGHTS_FILE).write_text(weights_csv(weights))
    (out / SUMMARY_FILE).write_text(_json(bundle_summary(bundle, traj)))
    paths += [out / WEIGHTS_FILE, out / SUMMARY_FILE]
    if wall_time is not None:
        (out / TIMING_FILE).write_text(_json({"wall_time_s": float(wall_time)}))
        paths.append(out / TIMING_FILE)
    return paths


def write_utopia(utopia, scenario: ScenarioConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _clean({"scenario": scenario.name, "utopia": utopia.to_dict()})
    path = out / UTOPIA_FILE
    path.write_text(_json(data))
    return path


def load_summary(path) -> dict:
    return json.loads(Path(path).read_text())
