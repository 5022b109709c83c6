"""Design-vector layout, equality/inequality residuals and finite-difference Jacobians.

The design vector stacks the full ``m x m`` weight matrix row by row,
followed by the leader headings for ``t = 1..T``. Only the first ``m - 1``
weight rows drive the dynamics; the leader's own row is carried so that
its row-sum equality can be stated, but it never enters a rollout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericalEvaluationError
from .swarm import SwarmState, rollout_arrays

SPACING_AXES = ("X", "Y")


@dataclass(frozen=True)
class DesignLayout:
    agent_count: int
    steps: int

    @property
    def n_weights(self) -> int:
        return self.agent_count * self.agent_count

    @property
    def size(self) -> int:
        return self.n_weights + self.steps

    @property
    def heading_slice(self) -> slice:
        return slice(self.n_weights, self.size)

    def weight_index(self, i: int, j: int) -> int:
        return i * self.agent_count + j

    def heading_index(self, t: int) -> int:
        """Flat index of the leader heading commanded at step ``t`` (1-based)."""
        if not 1 <= t <= self.steps:
            raise IndexError(t)
        return self.n_weights + t - 1

    def role(self, k: int) -> tuple:
        """``("w", i, j)`` or ``("x", t)`` for flat position ``k``."""
        if 0 <= k < self.n_weights:
            return ("w",) + divmod(k, self.agent_count)
        if self.n_weights <= k < self.size:
            return ("x", k - self.n_weights + 1)
        raise IndexError(k)

    def pack(self, weights, headings) -> np.ndarray:
        w = np.asarray(weights, dtype=float)
        x = np.asarray(headings, dtype=float).ravel()
        if w.shape != (self.agent_count, self.agent_count) or x.size != self.steps:
            raise DimensionError(
                f"expected weights {(self.agent_count,) * 2} and {self.steps} headings, "
                f"got {w.shape} and {x.size}"
            )
        return np.concatenate([w.ravel(), x])

    def unpack(self, y) -> tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.size:
            raise DimensionError(f"design vector has {y.shape[-1]} entries, expected {self.size}")
        lead = y.shape[:-1]
        w = y[..., : self.n_weights].reshape(lead + (self.agent_count, self.agent_count))
        return w, y[..., self.heading_slice]


@dataclass(frozen=True)
class DesignVector:
    values: np.ndarray
    layout: DesignLayout

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.layout.size,):
            raise DimensionError(f"design vector has shape {v.shape}, expected ({self.layout.size},)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def weights(self) -> np.ndarray:
        return self.layout.unpack(self.values)[0]

    @property
    def leader_headings(self) -> np.ndarray:
        return self.layout.unpack(self.values)[1]


def residual_names(agent_count: int = 4) -> tuple[list[str], list[str]]:
    """Labels of the equality and aggregated inequality residuals, in order."""
    eq = [f"row_sum[{i + 1}]" for i in range(agent_count)]
    eq += [f"X{agent_count}(T)-X_target", f"Y{agent_count}(T)-Y_target"]
    ineq = []
    for bound in ("min", "max"):
        for axis in SPACING_AXES:
            for i in range(agent_count - 1):
                ineq.append(f"{bound}_spacing[{axis}{i + 1}-{axis}{agent_count}]")
    return eq, ineq


@dataclass(frozen=True)
class ConstraintSet:
    min_tol: float
    max_tol: float
    target: tuple[float, float]
    tol_eq: float = 1e-6
    tol_ineq: float = 1e-8
    agent_count: int = 4
    equalities: tuple[str, ...] = field(default=())
    inequalities: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not 0 < self.min_tol < self.max_tol:
            raise ValueError("need 0 < min_tol < max_tol")
        eq, ineq = residual_names(self.agent_count)
        object.__setattr__(self, "equalities", tuple(eq))
        object.__setattr__(self, "inequalities", tuple(ineq))

    @classmethod
    def from_scenario(cls, scenario) -> "ConstraintSet":
        return cls(scenario.min_tol, scenario.max_tol, scenario.target, scenario.tol_eq,
                   scenario.tol_ineq, scenario.agent_count)


def simulate_designs(ys, initial: SwarmState, layout: DesignLayout, step_length: float):
    """Roll out a (B, n) batch of design vectors; returns (weights, headings, positions)."""
    w, lead = layout.unpack(np.atleast_2d(ys))
    headings, positions = rollout_arrays(initial.headings, initial.positions, w[:, :-1, :], lead, step_length)
    return w, headings, positions


def equality_residuals(weights, positions, target) -> np.ndarray:
    """(B, m + 2) residuals: row sums minus one, then leader final X and Y offsets."""
    rows = weights.sum(axis=-1) - 1.0
    final = positions[:, -1, -1, :]
    return np.concatenate([rows, final - np.asarray(target, dtype=float)], axis=1)


def spacing_residuals(positions, min_tol: float, max_tol: float) -> np.ndarray:
    """Squared spacing residuals per step, shape (B, 4*(m-1), T).

    Row order: min-spacing X for each follower, min-spacing Y, max-spacing
    X, max-spacing Y. ``minTol^2 - gap^2 <= 0`` and ``gap^2 - maxTol^2 <= 0``
    describe the same set as ``minTol <= |gap| <= maxTol``.
    """
    p = positions[:, 1:, :, :]
    gap2 = (p[:, :, :-1, :] - p[:, :, -1:, :]) ** 2  # (B, T, m-1, 2)
    per_axis = np.moveaxis(gap2, 1, -1)  # (B, m-1, 2, T)
    low = min_tol**2 - per_axis
    high = per_axis - max_tol**2
    stack = [low[:, :, 0], low[:, :, 1], high[:, :, 0], high[:, :, 1]]
    return np.concatenate(stack, axis=1)


def spacing_margins(positions, min_tol: float, max_tol: float, kink: float = 1e-5) -> np.ndarray:
    """Solver-side spacing rows with the same feasible set as :func:`spacing_residuals`.

    The minimum-spacing rows become ``minTol - sqrt(gap^2 + kink^2)``, whose
    gradient keeps unit length at zero separation, where the squared row has
    a vanishing gradient and gives the QP nothing to act on. Maximum-spacing
    rows keep the squared form, scaled by ``1 / (2 maxTol)`` so both blocks
    are measured in length units. ``kink`` rounds off the corner at zero gap
    and loosens the squared row by at most ``kink^2``.
    """
    p = positions[:, 1:, :, :]
    gap2 = np.moveaxis((p[:, :, :-1, :] - p[:, :, -1:, :]) ** 2, 1, -1)  # (B, m-1, 2, T)
    low = min_tol - np.sqrt(gap2 + kink * kink)
    high = (gap2 - max_tol**2) / (2.0 * max_tol)
    return np.concatenate([low[:, :, 0], low[:, :, 1], high[:, :, 0], high[:, :, 1]], axis=1)


def _scenario_parts(scenario):
    layout = DesignLayout(scenario.agent_count, scenario.steps)
    return layout, scenario.initial_state


def eval_equalities(y, scenario) -> np.ndarray:
    """Row-sum and final-position equality residuals for one design vector."""
    layout, initial = _scenario_parts(scenario)
    y = np.asarray(y, dtype=float)
    if y.shape != (layout.size,):
        raise DimensionError(f"design vector has shape {y.shape}, expected ({layout.size},)")
    w, _, pos = simulate_designs(y, initial, layout, scenario.step_length)
    return equality_residuals(w, pos, scenario.target)[0]


def eval_inequalities(y, scenario, per_step: bool = False) -> np.ndarray:
    """Spacing residuals; aggregated to the worst step per row unless ``per_step``."""
    layout, initial = _scenario_parts(scenario)
    y = np.asarray(y, dtype=float)
    if y.shape != (layout.size,):
        raise DimensionError(f"design vector has shape {y.shape}, expected ({layout.size},)")
    _, _, pos = simulate_designs(y, initial, layout, scenario.step_length)
    g = spacing_residuals(pos, scenario.min_tol, scenario.max_tol)[0]
    return g.ravel() if per_step else g.max(axis=1)


def jacobian_fd(residual_fn: Callable, y, h: float = 1e-6, vectorized: bool = False) -> np.ndarray:
    """Central-difference Jacobian.

    Column ``k`` perturbs ``y[k]`` by ``+-h * max(1, |y[k]|)``. With
    ``vectorized=True`` the function receives all 2n perturbed points as a
    (2n, n) array and must return (2n, m).
    """
    if not h > 0:
        raise ValueError("step must be positive")
    y = np.asarray(y, dtype=float)
    n = y.size
    steps = h * np.maximum(1.0, np.abs(y))
    pts = np.repeat(y[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    pts[idx, idx] += steps
    pts[n + idx, idx] -= steps
    if vectorized:
        vals = np.asarray(residual_fn(pts), dtype=float).reshape(2 * n, -1)
    else:
        vals = np.array([np.atleast_1d(residual_fn(p)) for p in pts], dtype=float).reshape(2 * n, -1)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0] % n)
        raise NumericalEvaluationError(f"non-finite residual while perturbing index {k}", index=k)
    return ((vals[:n] - vals[n:]) / (2.0 * steps)[:, None]).T


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    equalities: np.ndarray
    inequalities: np.ndarray
    violations: dict

    @property
    def max_equality_error(self) -> float:
        return float(np.max(np.abs(self.equalities)))

    @property
    def max_inequality(self) -> float:
        return float(np.max(self.inequalities))


def check_feasibility(y, scenario, tol_eq: float | None = None, tol_ineq: float | None = None) -> FeasibilityReport:
    """Independent pass/fail verdict on a design vector.

    Feasible iff every equality residual is within ``tol_eq`` and every
    aggregated spacing residual is at most ``tol_ineq``.
    """
    tol_eq = scenario.tol_eq if tol_eq is None else tol_eq
    tol_ineq = scenario.tol_ineq if tol_ineq is None else tol_ineq
    h = eval_equalities(y, scenario)
    g = eval_inequalities(y, scenario)
    eq_names, in_names = residual_names(scenario.agent_count)
    violations = {}
    for name, r in zip(eq_names, h):
        if abs(r) > tol_eq:
            violations[name] = float(r)
    for name, r in zip(in_names, g):
        if r > tol_ineq:
            violations[name] = float(r)
    return FeasibilityReport(not violations, h, g, violations)
