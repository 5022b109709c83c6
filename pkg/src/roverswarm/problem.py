"""Batched nonlinear programs for the swarm: joint, exploration-only and consensus-only."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .constraints import DesignLayout, equality_residuals, simulate_designs, spacing_margins
from .objectives import (
    UtopiaPoints,
    consensus_rss_batch,
    explored_area_smooth_batch,
    pseudo_objectives,
)
from .sqp.solver import NonlinearProgram

Mode = Literal["joint", "explore", "consensus"]


@dataclass
class SwarmProblem:
    """Objective and constraint evaluation for one scenario.

    ``mode`` selects what is minimised: ``joint`` is the scalarised
    pseudo-objective (needs ``utopia``), ``explore`` is the negated smoothed
    exploration value divided by ``explore_scale``, ``consensus`` is the
    heading RSS.
    """

    scenario: object
    mode: Mode = "joint"
    utopia: Optional[UtopiaPoints] = None
    explore_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("joint", "explore", "consensus"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "joint" and self.utopia is None:
            raise ValueError("joint mode needs utopia points")
        sc = self.scenario
        self.layout = DesignLayout(sc.agent_count, sc.steps)
        self.grid = sc.grid
        self.initial = sc.initial_state

    def rollout(self, ys):
        return simulate_designs(ys, self.initial, self.layout, self.scenario.step_length)

    def parts(self, ys):
        """Smoothed f1, f2 and the raw constraint residuals for a (B, n) batch."""
        sc = self.scenario
        w, headings, positions = self.rollout(ys)
        f1s = explored_area_smooth_batch(positions, self.grid, sc.smoothing)
        f2 = consensus_rss_batch(headings)
        h = equality_residuals(w, positions, sc.target)
        g = spacing_margins(positions, sc.min_tol, sc.max_tol).reshape(len(ys), -1)
        return f1s, f2, h, g

    def objective_from_parts(self, f1s, f2):
        sc = self.scenario
        if self.mode == "consensus":
            return f2
        if self.mode == "explore":
            return -f1s / self.explore_scale
        phi1, phi2 = pseudo_objectives(f1s, f2, self.utopia, sc.smoothing.epsilon, sc.phi1_variant)
        return sc.a1 * phi1 + sc.a2 * phi2

    def evaluate(self, ys):
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        f1s, f2, h, g = self.parts(ys)
        return self.objective_from_parts(f1s, f2), h, g

    def bounds(self):
        lb = np.full(self.layout.size, -np.inf)
        ub = np.full(self.layout.size, np.inf)
        lb[: self.layout.n_weights] = self.scenario.weight_lower_bound
        ub[: self.layout.n_weights] = 1.0
        return lb, ub

    def program(self) -> NonlinearProgram:
        lb, ub = self.bounds()
        return NonlinearProgram(self.layout.size, self.evaluate, lb, ub)


def arc_headings(start, target, steps: int, step_length: float) -> np.ndarray:
    """Leader headings that trace a circular arc of ``steps`` unit moves ending on ``target``.

    Headings change by a constant ``delta`` per step around the chord
    direction; ``delta`` is found by bisection so the chord length matches.
    Returns straight-line headings when the target lies exactly ``steps``
    moves away.
    """
    dx = float(target[0]) - float(start[0])
    dy = float(target[1]) - float(start[1])
    dist = math.hypot(dx, dy)
    ratio = dist / (steps * step_length)
    psi = math.atan2(dx, dy)
    offsets = np.arange(1, steps + 1) - (steps + 1) / 2.0
    if steps == 1 or ratio >= 1.0 - 1e-15:
        return np.full(steps, psi)

    def chord(delta):
        # |sum_t exp(i * delta * offset_t)| / steps
        return math.sin(steps * delta / 2.0) / (steps * math.sin(delta / 2.0))

    lo, hi = 0.0, 2.0 * math.pi / steps
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == 0.0 or chord(mid) > ratio:
            lo = mid
        else:
            hi = mid
    delta = 0.5 * (lo + hi)
    return psi + delta * offsets


def canonical_start(scenario) -> np.ndarray:
    """Uniform weights with straight-ahead headings, dithered onto an arc when needed.

    Straight-ahead (zero) headings only reach a target exactly ``T`` steps
    up the initial heading. Otherwise the headings follow the circular arc
    that lands on the target, which satisfies the position equalities.
    """
    m, T = scenario.agent_count, scenario.steps
    layout = DesignLayout(m, T)
    weights = np.full((m, m), 1.0 / m)
    start = scenario.formation_positions[-1]
    lead0 = scenario.formation_headings[-1]
    zero = np.full(T, lead0)
    end = np.asarray(start) + scenario.step_length * T * np.array([math.sin(lead0), math.cos(lead0)])
    if np.allclose(end, scenario.target, atol=1e-12, rtol=0):
        return layout.pack(weights, zero)
    return layout.pack(weights, arc_headings(start, scenario.target, T, scenario.step_length))
