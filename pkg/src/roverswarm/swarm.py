"""Leader-follower rover network: graph, weights, consensus headings and kinematics.

Agents are indexed ``0 .. m-1`` internally and the leader (the single
non-cooperative agent) is always the last one. Headings are radians,
unwrapped, measured from the +Y ("forward") axis; a step of length ``alpha``
along heading ``x`` moves a rover by ``(alpha*sin(x), alpha*cos(x))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError, InvalidWeightsError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class AgentGraph:
    """Directed information graph of the swarm.

    ``neighbor_sets[i]`` holds the agents whose heading agent ``i`` reads;
    an edge ``(j, i)`` in ``edges`` means information flows from ``j`` to ``i``.
    Self-weights are implicit and never stored as edges.
    """

    agent_count: int
    neighbor_sets: tuple[frozenset[int], ...]

    def __post_init__(self):
        if len(self.neighbor_sets) != self.agent_count:
            raise DimensionError(
                f"expected {self.agent_count} neighbor sets, got {len(self.neighbor_sets)}"
            )
        for i, nbrs in enumerate(self.neighbor_sets):
            if i in nbrs:
                raise ValueError(f"agent {i} lists itself as a neighbor")
            if any(j < 0 or j >= self.agent_count for j in nbrs):
                raise ValueError(f"agent {i} has an out-of-range neighbor")

    @classmethod
    def leader_follower(cls, agent_count: int = 4) -> "AgentGraph":
        """Followers fully connected to each other, all reading the leader.

        The leader reads nobody.
        """
        if agent_count < 2:
            raise ValueError("need at least one follower and a leader")
        sets = []
        for i in range(agent_count - 1):
            sets.append(frozenset(j for j in range(agent_count) if j != i))
        sets.append(frozenset())
        return cls(agent_count, tuple(sets))

    @property
    def leader_index(self) -> int:
        return self.agent_count - 1

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((j, i) for i, nbrs in enumerate(self.neighbor_sets) for j in nbrs)

    def adjacency(self) -> np.ndarray:
        """Matrix ``A[i, j] = 1`` when agent ``i`` reads agent ``j``."""
        a = np.zeros((self.agent_count, self.agent_count))
        for i, nbrs in enumerate(self.neighbor_sets):
            for j in nbrs:
                a[i, j] = 1.0
        return a


@dataclass(frozen=True)
class WeightMatrix:
    """Row-stochastic consensus weights of the cooperative agents.

    ``rows`` has shape ``(m - 1, m)``: row ``i`` mixes the headings of all
    ``m`` agents into follower ``i``'s next heading. Construction validates
    non-negativity and unit row sums.
    """

    rows: np.ndarray
    lower_bound: float = 0.0

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != rows.shape[0] + 1:
            raise DimensionError(f"weight rows must have shape (m-1, m), got {rows.shape}")
        sums = rows.sum(axis=1)
        if np.any(rows < 0.0):
            raise InvalidWeightsError("weights must be non-negative", row_sums=sums)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            listing = ", ".join(f"{s:.12g}" for s in sums)
            raise InvalidWeightsError(f"weight rows must sum to 1 (row sums: {listing})", row_sums=sums)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def agent_count(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def uniform(cls, agent_count: int = 4) -> "WeightMatrix":
        return cls(np.full((agent_count - 1, agent_count), 1.0 / agent_count))

    def respects_lower_bound(self, graph: AgentGraph, tol: float = 1e-12) -> bool:
        for i in range(self.rows.shape[0]):
            for j in graph.neighbor_sets[i]:
                if self.rows[i, j] < self.lower_bound - tol:
                    return False
        return True


@dataclass(frozen=True)
class SwarmState:
    headings: np.ndarray  # (m,) radians
    positions: np.ndarray  # (m, 2)
    t: int = 0

    def __post_init__(self):
        h = np.array(self.headings, dtype=float)
        p = np.array(self.positions, dtype=float)
        if h.ndim != 1 or p.shape != (h.size, 2):
            raise DimensionError(f"headings {h.shape} and positions {p.shape} disagree")
        h.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "headings", h)
        object.__setattr__(self, "positions", p)

    @property
    def agent_count(self) -> int:
        return self.headings.size


@dataclass(frozen=True)
class SwarmTrajectory:
    """Headings and positions of every agent for ``t = 0 .. T``."""

    headings: np.ndarray  # (T+1, m)
    positions: np.ndarray  # (T+1, m, 2)
    step_length: float = 1.0

    def __post_init__(self):
        h = np.array(self.headings, dtype=float)
        p = np.array(self.positions, dtype=float)
        if h.ndim != 2 or p.shape != h.shape + (2,):
            raise DimensionError(f"headings {h.shape} and positions {p.shape} disagree")
        h.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "headings", h)
        object.__setattr__(self, "positions", p)

    @property
    def steps(self) -> int:
        return self.headings.shape[0] - 1

    @property
    def agent_count(self) -> int:
        return self.headings.shape[1]

    def __len__(self) -> int:
        return self.headings.shape[0]

    def state(self, t: int) -> SwarmState:
        return SwarmState(self.headings[t], self.positions[t], t)

    @property
    def states(self) -> Iterator[SwarmState]:
        return (self.state(t) for t in range(len(self)))


def diamond_formation(agent_count: int = 4) -> SwarmState:
    """Default start: leader trailing at the origin, followers in a diamond ahead.

    All agents face forward (heading 0).
    """
    if agent_count != 4:
        raise DimensionError("the default diamond is defined for four agents")
    positions = np.array([[-1.0, 1.0], [1.0, 1.0], [0.0, 2.0], [0.0, 0.0]])
    return SwarmState(np.zeros(4), positions, 0)


def kinematics_step(position: Sequence[float], heading: float, step_length: float) -> tuple[float, float]:
    """Advance one rover by ``step_length`` along ``heading`` (radians)."""
    x, y = position
    return (x + step_length * math.sin(heading), y + step_length * math.cos(heading))


def _check_weights(weights, agent_count: int) -> np.ndarray:
    rows = weights.rows if isinstance(weights, WeightMatrix) else np.asarray(weights, dtype=float)
    if rows.shape != (agent_count - 1, agent_count):
        raise DimensionError(
            f"weights of shape {rows.shape} do not fit a swarm of {agent_count} agents"
        )
    if not isinstance(weights, WeightMatrix):
        # validates and raises InvalidWeightsError with the row sums
        WeightMatrix(rows)
    return rows


def consensus_step(state: SwarmState, weights, leader_heading_next: float, step_length: float = 1.0) -> SwarmState:
    """One synchronous update: followers average, the leader obeys its command.

    Followers take ``x_i(t+1) = sum_j w_ij x_j(t)``; then every agent moves
    ``step_length`` along its new heading.
    """
    m = state.agent_count
    rows = _check_weights(weights, m)
    headings = np.empty(m)
    headings[:-1] = rows @ state.headings
    headings[-1] = leader_heading_next
    positions = np.array(
        [kinematics_step(state.positions[i], headings[i], step_length) for i in range(m)]
    )
    return SwarmState(headings, positions, state.t + 1)


def rollout_arrays(
    initial_headings: np.ndarray,
    initial_positions: np.ndarray,
    coop_weights: np.ndarray,
    leader_headings: np.ndarray,
    step_length: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised rollout over a batch of designs.

    Args:
        initial_headings: (m,) headings at t = 0.
        initial_positions: (m, 2) positions at t = 0.
        coop_weights: (B, m-1, m) follower weight rows, not validated.
        leader_headings: (B, T) leader commands for t = 1..T.
        step_length: distance covered by every rover per step.

    Returns:
        ``(headings, positions)`` with shapes (B, T+1, m) and (B, T+1, m, 2).
    """
    w = np.asarray(coop_weights, dtype=float)
    lead = np.asarray(leader_headings, dtype=float)
    nb, steps = lead.shape
    m = initial_headings.shape[0]
    headings = np.empty((nb, steps + 1, m))
    headings[:, 0, :] = initial_headings
    for t in range(1, steps + 1):
        headings[:, t, :-1] = np.einsum("bij,bj->bi", w, headings[:, t - 1, :])
        headings[:, t, -1] = lead[:, t - 1]
    moves = np.empty((nb, steps + 1, m, 2))
    moves[:, 0] = initial_positions
    moves[:, 1:, :, 0] = step_length * np.sin(headings[:, 1:, :])
    moves[:, 1:, :, 1] = step_length * np.cos(headings[:, 1:, :])
    return headings, np.cumsum(moves, axis=1)


def rollout(initial: SwarmState, weights, leader_headings: Sequence[float], step_length: float) -> SwarmTrajectory:
    """Simulate ``len(leader_headings)`` steps of the formation."""
    if step_length <= 0:
        raise ValueError("step_length must be positive")
    m = initial.agent_count
    rows = _check_weights(weights, m)
    lead = np.asarray(leader_headings, dtype=float).reshape(1, -1)
    headings, positions = rollout_arrays(initial.headings, initial.positions, rows[None], lead, step_length)
    return SwarmTrajectory(headings[0], positions[0], step_length)


def metropolis_matrix(adjacency: np.ndarray, degrees: Sequence[int] | None = None) -> np.ndarray:
    """Metropolis-Hastings weights of an undirected graph.

    ``W[i, j] = 1 / (1 + max(d_i, d_j))`` on edges and the diagonal takes the
    remainder, so every row sums to one.
    """
    a = np.asarray(adjacency, dtype=float)
    a = ((a + a.T) > 0).astype(float)
    np.fill_diagonal(a, 0.0)
    n = a.shape[0]
    d = a.sum(axis=1) if degrees is None else np.asarray(degrees, dtype=float)
    if len(d) != n:
        raise DimensionError(f"{len(d)} degrees for {n} nodes")
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if a[i, j]:
                w[i, j] = 1.0 / (1.0 + max(d[i], d[j]))
        w[i, i] = 1.0 - w[i].sum()
    return w


def _connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    if n == 0:
        return True
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adjacency[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == n


def metropolis_weights(graph: AgentGraph, degrees: Sequence[int] | None = None) -> WeightMatrix:
    """Baseline consensus weights from the symmetrised swarm graph.

    Edges are symmetrised before the Metropolis rule is applied, so the
    cooperative block comes out symmetric. Only the follower rows are
    returned since the leader ignores its neighbours.
    """
    adj = graph.adjacency()
    sym = ((adj + adj.T) > 0).astype(float)
    coop = sym[:-1, :-1]
    if not _connected(coop):
        logger.warning("cooperative subgraph is disconnected; Metropolis weights will not reach consensus")
    w = metropolis_matrix(sym, degrees)
    return WeightMatrix(w[:-1])
