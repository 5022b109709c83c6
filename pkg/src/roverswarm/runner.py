"""End-to-end pipeline: utopia points, multistart joint solve, rollout and result bundles."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .constraints import DesignLayout, FeasibilityReport, check_feasibility, simulate_designs
from .errors import DimensionError, InfeasibleSolutionError, QPError, SwarmError
from .objectives import (
    UtopiaPoints,
    consensus_rss,
    explored_area_exact,
    explored_area_smooth,
    pseudo_objectives,
)
from .problem import SwarmProblem, canonical_start
from .sqp.solver import SolveReport, SolverConfig, sqp_minimize
from .swarm import AgentGraph, SwarmTrajectory, metropolis_matrix, rollout

logger = logging.getLogger(__name__)

HEADING_JITTER = math.radians(15.0)


# ---------------------------------------------------------------- starts


def start_points(scenario: ScenarioConfig, count: int, seed: int) -> list[np.ndarray]:
    """Initial design vectors for a multistart run.

    The first point is the canonical start (uniform weights, straight or
    arc headings). The second keeps those headings and puts every weight
    row on the leader-column vertex (lower bound everywhere else). After
    that, odd-numbered points lean every row on the leader column with a
    small Dirichlet blend and even-numbered points use plain Dirichlet
    rows, both with headings jittered uniformly within 15 degrees. Weights always respect the lower
    bound and sum to one per row.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    m, T = scenario.agent_count, scenario.steps
    layout = DesignLayout(m, T)
    base = canonical_start(scenario)
    _, base_headings = layout.unpack(base)
    lb = scenario.weight_lower_bound
    spread = 1.0 - m * lb
    rng = np.random.default_rng(seed)
    points = [base]
    leader = np.zeros((m, m))
    leader[:, -1] = 1.0
    if count > 1:
        points.append(layout.pack(lb + spread * leader, base_headings))
    for k in range(2, count):
        mix = rng.dirichlet(np.ones(m), size=m)
        if k % 2 == 1:
            mix = 0.9 * leader + 0.1 * mix
        weights = lb + spread * mix
        headings = base_headings + rng.uniform(-HEADING_JITTER, HEADING_JITTER, size=T)
        points.append(layout.pack(weights, headings))
    return points


# ---------------------------------------------------------------- multistart


@dataclass
class StartOutcome:
    index: int
    report: Optional[SolveReport]
    feasibility: Optional[FeasibilityReport]
    error: str = ""

    @property
    def feasible(self) -> bool:
        return self.feasibility is not None and self.feasibility.feasible

    def summary(self) -> dict:
        rep = self.report
        return {
            "start": self.index,
            "status": rep.status if rep is not None else "error",
            "objective": rep.objective if rep is not None else None,
            "func_evals": rep.func_evals if rep is not None else None,
            "iterations": rep.iterations if rep is not None else None,
            "feasible": self.feasible,
            "error": self.error,
        }


@dataclass
class MultistartResult:
    best: Optional[StartOutcome]
    outcomes: list[StartOutcome]

    @property
    def report(self) -> SolveReport:
        return self.best.report

    @property
    def func_evals(self) -> int:
        return sum(o.report.func_evals for o in self.outcomes if o.report is not None)


def multistart(problem: SwarmProblem, cfg: SolverConfig, count: Optional[int] = None,
               seed: Optional[int] = None) -> MultistartResult:
    """Solve ``problem`` from several starts and keep the best feasible one.

    Feasibility is judged by the independent checker, not by the solver.
    Candidates are ranked by objective, then by function evaluations, then
    by start index, so the choice does not depend on run order.

    Raises:
        InfeasibleSolutionError: no start produced a feasible point; the
            exception lists every start's status.
    """
    scenario = problem.scenario
    count = cfg.multistart_count if count is None else count
    seed = cfg.rng_seed if seed is None else seed
    program = problem.program()
    outcomes = []
    for k, y0 in enumerate(start_points(scenario, count, seed)):
        try:
            rep = sqp_minimize(program, y0, cfg)
        except (QPError, SwarmError, np.linalg.LinAlgError) as exc:
            logger.warning("start %d failed: %s", k, exc)
            outcomes.append(StartOutcome(k, None, None, str(exc)))
            continue
        feas = check_feasibility(rep.y, scenario)
        logger.info("start %d: %s f=%.6g evals=%d feasible=%s", k, rep.status, rep.objective, rep.func_evals,
                    feas.feasible)
        outcomes.append(StartOutcome(k, rep, feas))
    feasible = [o for o in outcomes if o.feasible]
    if not feasible:
        lines = "; ".join(f"start {o.index}: {o.summary()['status']}" for o in outcomes)
        raise InfeasibleSolutionError(f"no feasible solution from {count} starts ({lines})",
                                      violations={o.index: o.summary() for o in outcomes})
    best = min(feasible, key=lambda o: (o.report.objective, o.report.func_evals, o.index))
    return MultistartResult(best, outcomes)


# ---------------------------------------------------------------- utopia


@dataclass
class UtopiaResult:
    """Both utopia values plus how they were obtained.

    ``points`` feeds the joint objective and uses the smoothed exploration
    value, since that is what the optimizer sees. ``f_min1_exact`` is the
    exact exploration value at the same design.
    """

    points: UtopiaPoints
    f_min1_exact: Optional[float]
    f_min2_solved: Optional[float]
    metropolis_f2: float
    consensus_source: str
    explore: Optional[MultistartResult] = None
    consensus: Optional[MultistartResult] = None
    notices: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "f_min1": self.points.f_min1,
            "f_min1_exact": self.f_min1_exact,
            "f_min2": self.points.f_min2,
            "f_min2_solved": self.f_min2_solved,
            "f_min2_metropolis": self.metropolis_f2,
            "consensus_source": self.consensus_source,
            "notices": list(self.notices),
        }
        for name, res in (("explore", self.explore), ("consensus", self.consensus)):
            if res is not None:
                out[f"{name}_status"] = res.report.status
                out[f"{name}_func_evals"] = res.func_evals
                out[f"{name}_starts"] = [o.summary() for o in res.outcomes]
        return out


def metropolis_design(scenario: ScenarioConfig) -> np.ndarray:
    """Design vector with Metropolis weights and canonical leader headings."""
    m = scenario.agent_count
    graph = AgentGraph.leader_follower(m)
    weights = metropolis_matrix(graph.adjacency())
    layout = DesignLayout(m, scenario.steps)
    _, headings = layout.unpack(canonical_start(scenario))
    return layout.pack(weights, headings)


def metropolis_baseline(scenario: ScenarioConfig) -> float:
    """Heading RSS of the Metropolis-weighted formation on the canonical headings."""
    layout = DesignLayout(scenario.agent_count, scenario.steps)
    w, headings = layout.unpack(metropolis_design(scenario))
    traj = rollout(scenario.initial_state, w[:-1], headings, scenario.step_length)
    return consensus_rss(traj)


def compute_utopia(scenario: ScenarioConfig, cfg: Optional[SolverConfig] = None, starts: int = 2) -> UtopiaResult:
    """Utopia points from single-objective solves under the full constraint set.

    The exploration utopia maximises the smoothed exploration value. The
    consensus utopia minimises the heading RSS, or is the Metropolis
    rollout's RSS when ``scenario.consensus_utopia == "metropolis"``. Each
    solve uses ``starts`` multistart points. A single-objective scenario
    skips the solve whose objective carries zero weight.

    Raises:
        InfeasibleSolutionError: a needed utopia solve found no feasible point.
    """
    cfg = scenario.solver if cfg is None else cfg
    notices = []
    metro = metropolis_baseline(scenario)

    explore = None
    f_min1 = 1.0
    f_min1_exact = None
    if scenario.a1 > 0:
        probe = SwarmProblem(scenario, "explore")
        y0 = canonical_start(scenario)[None]
        scale = float(probe.parts(y0)[0][0])
        problem = SwarmProblem(scenario, "explore", explore_scale=scale if scale > 0 else 1.0)
        explore = multistart(problem, cfg, count=starts)
        y = explore.report.y
        f_min1 = float(problem.parts(y[None])[0][0])
        f_min1_exact = explored_area_exact(_trajectory(scenario, y), scenario.grid)
        if not explore.report.converged:
            notices.append(f"exploration utopia stopped with status {explore.report.status}; "
                           "using the best feasible value found")
    else:
        notices.append("a1 = 0: exploration utopia skipped")

    consensus = None
    solved = None
    if scenario.consensus_utopia == "metropolis":
        f_min2 = metro
    elif scenario.a2 > 0:
        consensus = multistart(SwarmProblem(scenario, "consensus"), cfg, count=starts)
        solved = consensus.report.objective
        f_min2 = solved
        if not consensus.report.converged:
            notices.append(f"consensus utopia stopped with status {consensus.report.status}")
    else:
        f_min2 = metro
        notices.append("a2 = 0: consensus utopia solve skipped, Metropolis value used")
    return UtopiaResult(UtopiaPoints(f_min1, f_min2), f_min1_exact, solved, metro,
                        scenario.consensus_utopia, explore, consensus, notices)


# ---------------------------------------------------------------- bundles


def _trajectory(scenario: ScenarioConfig, y) -> SwarmTrajectory:
    """Exact rollout of design ``y``.

    Goes through the batched simulator rather than :func:`rollout`, whose
    weight validation is stricter (1e-9) than the scenario's equality
    tolerance that the feasibility checker applies.
    """
    layout = DesignLayout(scenario.agent_count, scenario.steps)
    _, headings, positions = simulate_designs(np.asarray(y, dtype=float)[None], scenario.initial_state, layout,
                                              scenario.step_length)
    return SwarmTrajectory(headings[0], positions[0], scenario.step_length)


def objective_breakdown(scenario: ScenarioConfig, y, utopia: UtopiaResult) -> dict:
    """Every objective term of design ``y``, recomputed from its rollout.

    ``phi1``, ``phi2`` and ``f`` use the smoothed exploration value the
    optimizer minimised; ``phi1_exact`` and ``f_exact`` use the exact value
    against the exact utopia.
    """
    traj = _trajectory(scenario, y)
    f1 = explored_area_exact(traj, scenario.grid)
    f1s = explored_area_smooth(traj, scenario.grid, scenario.smoothing)
    f2 = consensus_rss(traj)
    eps = scenario.smoothing.epsilon
    phi1, phi2 = pseudo_objectives(f1s, f2, utopia.points, eps, scenario.phi1_variant)
    out = {
        "f1_exact": f1,
        "f1_smooth": f1s,
        "f2": f2,
        "phi1": phi1,
        "phi2": phi2,
        "f": scenario.a1 * phi1 + scenario.a2 * phi2,
    }
    if utopia.f_min1_exact:
        exact_points = UtopiaPoints(utopia.f_min1_exact, utopia.points.f_min2)
        phi1e, _ = pseudo_objectives(f1, f2, exact_points, eps, scenario.phi1_variant)
        out["phi1_exact"] = phi1e
        out["f_exact"] = scenario.a1 * phi1e + scenario.a2 * phi2
    return out


@dataclass
class ResultBundle:
    scenario: ScenarioConfig
    design: np.ndarray
    trajectory: SwarmTrajectory
    breakdown: dict
    utopia: UtopiaResult
    report: SolveReport
    feasibility: FeasibilityReport
    starts: list = field(default_factory=list)
    wall_time: float = 0.0
    outcomes: list = field(default_factory=list, repr=False)

    @property
    def weights(self) -> np.ndarray:
        """Full ``m x m`` weight block; the last row is the leader's inert row."""
        return DesignLayout(self.scenario.agent_count, self.scenario.steps).unpack(self.design)[0]

    @property
    def follower_weights(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def leader_headings_deg(self) -> np.ndarray:
        return np.degrees(DesignLayout(self.scenario.agent_count, self.scenario.steps).unpack(self.design)[1])

    def heading_table_deg(self) -> np.ndarray:
        """(T+1, m) headings of every agent in degrees."""
        return np.degrees(self.trajectory.headings)


def run_scenario(scenario: ScenarioConfig, seed: Optional[int] = None) -> ResultBundle:
    """Utopia points, multistart joint solve and verified rollout for one scenario.

    Raises:
        InfeasibleSolutionError: the best solution fails the independent
            feasibility check.
    """
    t0 = time.perf_counter()
    cfg = scenario.solver
    if seed is not None:
        cfg = _with_seed(cfg, seed)
    utopia = compute_utopia(scenario, cfg)
    joint = multistart(SwarmProblem(scenario, "joint", utopia=utopia.points), cfg)
    return _bundle(scenario, joint.report, utopia, joint.outcomes, time.perf_counter() - t0)


def _with_seed(cfg: SolverConfig, seed: int) -> SolverConfig:
    return dataclasses.replace(cfg, rng_seed=int(seed))


def _bundle(scenario, report, utopia, outcomes, wall_time) -> ResultBundle:
    y = report.y
    feas = check_feasibility(y, scenario)
    traj = _trajectory(scenario, y)
    bundle = ResultBundle(scenario, y.copy(), traj, objective_breakdown(scenario, y, utopia), utopia, report,
                          feas, [o.summary() for o in outcomes], wall_time, list(outcomes))
    if not feas.feasible:
        raise InfeasibleSolutionError("best solution violates the scenario constraints", bundle, feas.violations)
    return bundle


# ---------------------------------------------------------------- reference


@dataclass(frozen=True)
class RowDiff:
    leader_dominant: bool
    at_lower_bound: int
    row_sum_residual: float
    deltas: tuple


@dataclass(frozen=True)
class StructuralDiffReport:
    rows: tuple

    @property
    def leader_dominant_rows(self) -> int:
        return sum(r.leader_dominant for r in self.rows)

    @property
    def all_leader_dominant(self) -> bool:
        return all(r.leader_dominant for r in self.rows)

    @property
    def bound_active(self) -> int:
        return sum(r.at_lower_bound for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "leader_dominant": [r.leader_dominant for r in self.rows],
            "at_lower_bound": [r.at_lower_bound for r in self.rows],
            "row_sum_residuals": [r.row_sum_residual for r in self.rows],
            "deltas": [list(r.deltas) for r in self.rows],
        }


def compare_to_reference(weights, reference, lower_bound: float = 0.1, tol: float = 5e-5) -> StructuralDiffReport:
    """Row-by-row structure of ``weights`` against a published matrix.

    Reports whether the leader column holds the row maximum, how many
    entries sit on the lower bound (within ``tol``), the row-sum residual
    and element-wise differences. It passes no judgement on the values.
    ``weights`` may be a :class:`ResultBundle` or an array of follower rows.
    """
    w = weights.follower_weights if isinstance(weights, ResultBundle) else np.asarray(weights, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if w.shape != ref.shape:
        raise DimensionError(f"weights {w.shape} and reference {ref.shape} differ in shape")
    rows = []
    for row, ref_row in zip(w, ref):
        rows.append(RowDiff(
            leader_dominant=bool(row[-1] >= row.max()),
            at_lower_bound=int(np.sum(np.abs(row - lower_bound) <= tol)),
            row_sum_residual=float(row.sum() - 1.0),
            deltas=tuple(float(v) for v in row - ref_row),
        ))
    return StructuralDiffReport(tuple(rows))
