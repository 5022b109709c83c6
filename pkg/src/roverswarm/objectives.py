"""Exploration and consensus objectives, exact and smoothed.

The exploration objective multiplies the pooled bounding-box area of every
visited position by the number of grid cells entered. The consensus
objective is the residual sum of squares between follower and leader
headings. The smoothed exploration value replaces the hard max/min and the
cell indicator with differentiable surrogates so the optimizer sees a
usable gradient; reports always use the exact value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .swarm import SwarmTrajectory

PhiVariant = Literal["paper_literal", "ratio"]


@dataclass(frozen=True)
class GridSpec:
    """Square grid of ``extent`` x ``extent`` cells.

    ``origin`` is the lower-left corner. Cells are half-open on the low
    side, ``(lo, hi]``, so a point on a shared edge belongs to the cell with
    the lower index.
    """

    cell_size: float
    origin: tuple[float, float]
    extent: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.extent < 1:
            raise ValueError("extent must be at least 1")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def covering(cls, anchor, start_positions, steps: int, step_length: float, cell_size: float | None = None):
        """Grid centred on ``anchor`` that contains every reachable position.

        ``anchor`` sits at the centre of a cell so that a formation starting on
        integer multiples of the cell size does not straddle cell edges.
        """
        c = step_length if cell_size is None else cell_size
        ax, ay = float(anchor[0]), float(anchor[1])
        pts = np.asarray(start_positions, dtype=float).reshape(-1, 2)
        reach = np.max(np.abs(pts - [ax, ay])) + steps * step_length
        half = int(math.ceil(reach / c)) + 1
        return cls(c, (ax - (half + 0.5) * c, ay - (half + 0.5) * c), 2 * half + 1)

    def cell_coordinates(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Integer (column, row) of each point; may fall outside ``[0, extent)``."""
        pts = np.asarray(points, dtype=float)
        u = (pts[..., 0] - self.origin[0]) / self.cell_size
        v = (pts[..., 1] - self.origin[1]) / self.cell_size
        return np.ceil(u).astype(np.int64) - 1, np.ceil(v).astype(np.int64) - 1


@dataclass(frozen=True)
class ObjectiveWeights:
    a1: float = 0.5
    a2: float = 0.5

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0 or abs(self.a1 + self.a2 - 1.0) > 1e-12:
            raise ValueError(f"objective weights must be a convex pair, got ({self.a1}, {self.a2})")


@dataclass(frozen=True)
class UtopiaPoints:
    f_min1: float
    f_min2: float

    def __post_init__(self):
        if not self.f_min1 > 0:
            raise ValueError(f"exploration utopia must be positive, got {self.f_min1}")
        if self.f_min2 < 0:
            raise ValueError(f"consensus utopia must be non-negative, got {self.f_min2}")


@dataclass(frozen=True)
class SmoothingParams:
    """Surrogate sharpness.

    ``beta`` is the log-sum-exp sharpness (1/length) of the soft bounding box.
    ``sigma`` is the half-width (length) of the band around each cell edge in
    which a sample's membership ramps between neighbouring cells.
    ``epsilon`` guards the pseudo-objective denominators.
    """

    beta: float = 10.0
    sigma: float = 0.5
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (self.beta > 0 and self.sigma > 0 and self.epsilon > 0):
            raise ValueError("smoothing parameters must be positive")


def _pooled_points(traj: SwarmTrajectory) -> np.ndarray:
    return traj.positions.reshape(-1, 2)


def explored_area_exact(traj: SwarmTrajectory, grid: GridSpec) -> float:
    """Bounding-box area of all visited positions times the number of cells entered."""
    pts = _pooled_points(traj)
    if pts.size == 0:
        raise ValueError("empty trajectory")
    width = pts[:, 0].max() - pts[:, 0].min()
    height = pts[:, 1].max() - pts[:, 1].min()
    return float(width * height * cells_entered(pts, grid))


def cells_entered(points, grid: GridSpec) -> int:
    p, q = grid.cell_coordinates(points)
    inside = (p >= 0) & (p < grid.extent) & (q >= 0) & (q < grid.extent)
    keys = p[inside] * grid.extent + q[inside]
    return int(np.unique(keys).size)


def _soft_max(values: np.ndarray, beta: float) -> np.ndarray:
    """Log-sum-exp along the last axis."""
    top = values.max(axis=-1, keepdims=True)
    return top[..., 0] + np.log(np.exp(beta * (values - top)).sum(axis=-1)) / beta


def _ramp(z: np.ndarray, half_width: float) -> np.ndarray:
    """C1 step from 0 (z <= -w) to 1 (z >= w) with ramp(z) + ramp(-z) = 1."""
    s = np.clip((z + half_width) / (2.0 * half_width), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def soft_cell_count(points: np.ndarray, grid: GridSpec, sigma: float) -> np.ndarray:
    """Differentiable count of entered cells for a batch of point clouds.

    Args:
        points: (B, N, 2) sample positions.
        grid: cell layout.
        sigma: half-width of the membership ramp, length units (<= cell/2).

    Returns:
        (B,) soft counts. A sample farther than ``sigma`` from every cell edge
        belongs to exactly one cell; closer samples split their membership
        between neighbours, and a cell's visit value is
        ``1 - prod(1 - membership)`` over all samples.
    """
    pts = np.asarray(points, dtype=float)
    nb = pts.shape[0]
    c = grid.cell_size
    w = min(sigma / c, 0.5)
    u = (pts[..., 0] - grid.origin[0]) / c
    v = (pts[..., 1] - grid.origin[1]) / c
    # with w <= 1/2 a sample overlaps at most two cells per axis: the cells
    # meeting the interval [coord - w, coord + w]
    base_u = np.ceil(u - w).astype(np.int64) - 1
    base_v = np.ceil(v - w).astype(np.int64) - 1
    n_cells = grid.extent * grid.extent
    batch_offset = (np.arange(nb, dtype=np.int64) * n_cells)[:, None]
    idx_parts, logm_parts = [], []
    rows = []
    for base, coord in ((base_u, u), (base_v, v)):
        axis = []
        for shift in (0, 1):
            k = base + shift
            weight = _ramp(coord - k, w) * _ramp(k + 1 - coord, w)
            weight[(k < 0) | (k >= grid.extent)] = 0.0
            axis.append((k, weight))
        rows.append(axis)
    for ku, mu in rows[0]:
        for kv, mv in rows[1]:
            m = mu * mv
            ok = m > 0
            idx_parts.append((batch_offset + ku * grid.extent + kv)[ok])
            logm_parts.append(m[ok])
    idx = np.concatenate(idx_parts)
    m = np.concatenate(logm_parts)
    cells, slot = np.unique(idx, return_inverse=True)
    with np.errstate(divide="ignore"):
        log_miss = np.bincount(slot, weights=np.log1p(-m), minlength=cells.size)
    visit = -np.expm1(log_miss)
    return np.bincount(cells // n_cells, weights=visit, minlength=nb)


def explored_area_smooth_batch(positions: np.ndarray, grid: GridSpec, s: SmoothingParams) -> np.ndarray:
    """Smoothed exploration value for a batch of trajectories.

    ``positions`` has shape (B, T+1, m, 2).
    """
    pts = np.asarray(positions, dtype=float).reshape(positions.shape[0], -1, 2)
    xs, ys = pts[..., 0], pts[..., 1]
    width = _soft_max(xs, s.beta) + _soft_max(-xs, s.beta)
    height = _soft_max(ys, s.beta) + _soft_max(-ys, s.beta)
    return width * height * soft_cell_count(pts, grid, s.sigma)


def explored_area_smooth(traj: SwarmTrajectory, grid: GridSpec, s: SmoothingParams) -> float:
    return float(explored_area_smooth_batch(traj.positions[None], grid, s)[0])


def consensus_rss_batch(headings: np.ndarray) -> np.ndarray:
    """Heading RSS for (B, T+1, m) heading arrays, skipping t = 0."""
    h = np.asarray(headings, dtype=float)
    diff = h[:, 1:, :-1] - h[:, 1:, -1:]
    return np.einsum("btm,btm->b", diff, diff)


def consensus_rss(traj: SwarmTrajectory) -> float:
    """Sum over t = 1..T and followers of the squared heading gap to the leader (rad^2)."""
    if len(traj) < 2:
        raise ValueError("consensus RSS needs at least one step")
    return float(consensus_rss_batch(traj.headings[None])[0])


def pseudo_objectives(f1, f2, u: UtopiaPoints, eps: float = 1e-8, variant: PhiVariant = "paper_literal"):
    """Utopia-normalised objectives ``(phi1, phi2)``.

    ``paper_literal``: ``phi1 = f_min1 / |f1 - f_min1|``. ``ratio``:
    ``phi1 = f_min1 / f1``, which decreases as exploration grows. Both
    guard their denominators with ``eps``. Works elementwise on arrays.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if variant == "paper_literal":
        phi1 = u.f_min1 / np.maximum(np.abs(f1 - u.f_min1), eps)
    elif variant == "ratio":
        phi1 = u.f_min1 / np.maximum(f1, eps)
    else:
        raise ValueError(f"unknown pseudo-objective variant {variant!r}")
    phi2 = np.abs(f2 - u.f_min2) / max(u.f_min2, eps)
    if phi1.ndim == 0:
        return float(phi1), float(phi2)
    return phi1, phi2


def scalarize(phi1, phi2, w: ObjectiveWeights):
    return w.a1 * phi1 + w.a2 * phi2
