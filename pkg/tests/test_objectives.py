import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roverswarm.config import builtin_scenarios
from roverswarm.objectives import (
    GridSpec,
    ObjectiveWeights,
    SmoothingParams,
    UtopiaPoints,
    cells_entered,
    consensus_rss,
    explored_area_exact,
    explored_area_smooth,
    pseudo_objectives,
    scalarize,
    soft_cell_count,
)
from roverswarm.problem import SwarmProblem, canonical_start
from roverswarm.swarm import SwarmTrajectory, diamond_formation, rollout

from conftest import random_rows


def brute_force_cells(points, grid):
    """Every cell (lo, hi] x (lo, hi] that holds a point, by scanning the whole grid."""
    hit = set()
    c = grid.cell_size
    for x, y in np.asarray(points).reshape(-1, 2):
        for p, q in itertools.product(range(grid.extent), repeat=2):
            x0 = grid.origin[0] + p * c
            y0 = grid.origin[1] + q * c
            if x0 < x <= x0 + c and y0 < y <= y0 + c:
                hit.add((p, q))
    return len(hit)


def brute_force_area(traj, grid):
    xs = [p[0] for p in traj.positions.reshape(-1, 2)]
    ys = [p[1] for p in traj.positions.reshape(-1, 2)]
    return (max(xs) - min(xs)) * (max(ys) - min(ys)) * brute_force_cells(traj.positions, grid)


def brute_force_rss(traj):
    total = 0.0
    for t in range(1, len(traj)):
        lead = traj.headings[t, -1]
        for i in range(traj.agent_count - 1):
            total += (traj.headings[t, i] - lead) ** 2
    return total


def random_trajectory(rng, steps=12):
    return rollout(diamond_formation(), random_rows(rng), rng.normal(0, 1.2, steps), 1.0)


def grid_for(traj_steps, cell=1.0):
    return GridSpec.covering((0.0, 0.0), diamond_formation().positions, traj_steps, 1.0, cell)


# ------------------------------------------------------------ grid


def test_grid_cells_are_half_open_on_low_side():
    g = GridSpec(1.0, (0.0, 0.0), 4)
    p, q = g.cell_coordinates(np.array([[1.0, 1.0], [1.0 + 1e-12, 0.5]]))
    assert list(p) == [0, 1]
    assert list(q) == [0, 0]


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(0.0, (0, 0), 3)
    with pytest.raises(ValueError):
        GridSpec(1.0, (0, 0), 0)


def test_covering_grid_centres_anchor_in_a_cell():
    g = grid_for(5)
    p, q = g.cell_coordinates(np.array([[0.0, 0.0]]))
    assert p[0] == q[0] == g.extent // 2
    u = (0.0 - g.origin[0]) / g.cell_size
    assert math.isclose(u - math.floor(u), 0.5)


@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_covering_grid_contains_every_reachable_point(seed, steps):
    traj = random_trajectory(np.random.default_rng(seed), steps)
    g = grid_for(steps)
    p, q = g.cell_coordinates(traj.positions.reshape(-1, 2))
    assert np.all((p >= 0) & (p < g.extent) & (q >= 0) & (q < g.extent))


# ------------------------------------------------------------ exact f1


def test_exact_area_straight_line():
    traj = rollout(diamond_formation(), np.full((3, 4), 0.25), np.zeros(3), 1.0)
    # x spans [-1, 1]; y spans [0, 5]; every agent stays in its column
    g = grid_for(3)
    cells = brute_force_cells(traj.positions, g)
    assert explored_area_exact(traj, g) == pytest.approx(2.0 * 5.0 * cells)
    assert cells_entered(traj.positions.reshape(-1, 2), g) == cells


def test_exact_area_matches_brute_force_on_random_trajectories(rng):
    for _ in range(20):
        traj = random_trajectory(rng, 8)
        g = grid_for(8)
        assert explored_area_exact(traj, g) == brute_force_area(traj, g)


def test_cells_outside_grid_are_ignored():
    g = GridSpec(1.0, (0.0, 0.0), 2)
    assert cells_entered(np.array([[0.5, 0.5], [5.0, 5.0], [-1.0, 0.5]]), g) == 1


# ------------------------------------------------------------ RSS


def test_rss_example():
    h = np.radians([[0, 0, 0, 0], [10, 20, 30, 20], [0, 0, 0, 0]])
    traj = SwarmTrajectory(h, np.zeros((3, 4, 2)), 1.0)
    assert consensus_rss(traj) == pytest.approx(2 * math.radians(10) ** 2, rel=1e-15)


def test_rss_ignores_initial_headings():
    h = np.array([[1.0, 2.0, 3.0, 0.0], [0.5, 0.5, 0.5, 0.5]])
    assert consensus_rss(SwarmTrajectory(h, np.zeros((2, 4, 2)), 1.0)) == 0.0


def test_rss_needs_a_step():
    with pytest.raises(ValueError):
        consensus_rss(SwarmTrajectory(np.zeros((1, 4)), np.zeros((1, 4, 2)), 1.0))


@given(st.integers(0, 2**32 - 1))
def test_rss_matches_loop_oracle(seed):
    traj = random_trajectory(np.random.default_rng(seed), 10)
    ref = brute_force_rss(traj)
    assert abs(consensus_rss(traj) - ref) <= 1e-12 * max(1.0, abs(ref))


# ------------------------------------------------------------ pseudo objectives


def test_pseudo_objectives_examples():
    u = UtopiaPoints(100.0, 2.0)
    assert pseudo_objectives(150.0, 3.0, u) == pytest.approx((2.0, 0.5))
    assert pseudo_objectives(150.0, 3.0, u, variant="ratio") == pytest.approx((100.0 / 150.0, 0.5))
    phi1, _ = pseudo_objectives(100.0, 2.0, u, eps=1e-8)
    assert phi1 == pytest.approx(1e10)


def test_pseudo_objectives_zero_consensus_utopia_uses_eps():
    _, phi2 = pseudo_objectives(1.0, 0.5, UtopiaPoints(1.0, 0.0), eps=1e-4)
    assert phi2 == pytest.approx(0.5e4)


def test_pseudo_objectives_unknown_variant():
    with pytest.raises(ValueError):
        pseudo_objectives(1.0, 1.0, UtopiaPoints(1.0, 1.0), variant="other")


def test_pseudo_objectives_arrays():
    phi1, phi2 = pseudo_objectives(np.array([150.0, 50.0]), np.array([2.0, 4.0]), UtopiaPoints(100.0, 2.0))
    assert np.allclose(phi1, [2.0, 2.0])
    assert np.allclose(phi2, [0.0, 1.0])


def test_scalarize_example():
    assert scalarize(2.0, 0.5, ObjectiveWeights(0.25, 0.75)) == pytest.approx(0.875)


def test_objective_weight_and_utopia_validation():
    with pytest.raises(ValueError):
        ObjectiveWeights(0.6, 0.6)
    with pytest.raises(ValueError):
        ObjectiveWeights(-0.1, 1.1)
    with pytest.raises(ValueError):
        UtopiaPoints(0.0, 1.0)
    with pytest.raises(ValueError):
        UtopiaPoints(1.0, -1.0)
    with pytest.raises(ValueError):
        SmoothingParams(beta=0.0)


# ------------------------------------------------------------ smoothed f1


def test_soft_count_splits_edge_sample_evenly():
    g = GridSpec(1.0, (0.0, 0.0), 4)
    counts = soft_cell_count(np.array([[[1.0, 1.5]]]), g, 0.2)
    assert counts[0] == pytest.approx(1.0)
    counts = soft_cell_count(np.array([[[1.0, 1.0]]]), g, 0.2)
    assert counts[0] == pytest.approx(1.0)


def test_soft_count_two_samples_same_cell():
    g = GridSpec(1.0, (0.0, 0.0), 4)
    counts = soft_cell_count(np.array([[[1.5, 1.5], [1.6, 1.4]], [[0.5, 0.5], [2.5, 2.5]]]), g, 0.2)
    assert np.allclose(counts, [1.0, 2.0])


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.floats(0.21, 0.79), st.floats(0.21, 0.79)),
                min_size=1, max_size=30))
def test_soft_count_exact_away_from_edges(samples):
    g = GridSpec(1.0, (0.0, 0.0), 6)
    pts = np.array([[p + a, q + b] for p, q, a, b in samples])
    assert soft_cell_count(pts[None], g, 0.2)[0] == pytest.approx(cells_entered(pts, g), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_soft_count_bounded_by_cells_within_ramp(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(1.0, (0.0, 0.0), 8)
    pts = rng.uniform(0.5, 7.5, size=(15, 2))
    soft = soft_cell_count(pts[None], g, 0.3)[0]
    shifted = [pts + d for d in itertools.product((-0.3, 0.3), repeat=2)]
    upper = cells_entered(np.concatenate(shifted + [pts]), g)
    assert 0.0 < soft <= upper + 1e-9


def test_smooth_area_approaches_exact_when_sharp_and_off_edge():
    # positions at cell centres: the ramp contributes nothing, the soft box tends to the true box
    h = np.zeros((2, 4))
    pos = np.array([[[-1, 1], [1, 1], [0, 2], [0, 0]], [[-1, 2], [1, 2], [0, 3], [0, 1]]], dtype=float)
    traj = SwarmTrajectory(h, pos, 1.0)
    g = grid_for(1)
    exact = explored_area_exact(traj, g)
    errs = [abs(explored_area_smooth(traj, g, SmoothingParams(beta=b, sigma=0.3)) - exact) / exact
            for b in (10.0, 100.0, 1000.0)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_smooth_f1_is_c1_in_the_design():
    # Richardson check: central differences at h and h/2 agree on the smoothed objective
    sc = builtin_scenarios()["sim1"]
    prob = SwarmProblem(sc, mode="explore")
    y = canonical_start(sc)
    rng = np.random.default_rng(3)
    d = rng.normal(size=y.size)
    d /= np.linalg.norm(d)

    def f(t):
        return float(prob.evaluate(y + t * d)[0][0])

    for h in (1e-3,):
        g1 = (f(h) - f(-h)) / (2 * h)
        g2 = (f(h / 2) - f(-h / 2)) / h
        assert abs(g1 - g2) <= 1e-3 * max(1.0, abs(g2))


# ------------------------------------------------------------ worked examples


def single_agent(points):
    pts = np.asarray(points, dtype=float)[:, None, :]
    return SwarmTrajectory(np.zeros(pts.shape[:2]), pts, 1.0)


def test_two_cells_single_agent_example():
    traj = single_agent([(0.5, 0.5), (1.5, 1.5)])
    assert explored_area_exact(traj, GridSpec(1.0, (0.0, 0.0), 4)) == 2.0


def test_axis_degenerate_trajectory_has_zero_area():
    traj = single_agent([(0.5, 0.5), (0.5, 1.5), (0.5, 2.5)])
    g = GridSpec(1.0, (0.0, 0.0), 4)
    assert explored_area_exact(traj, g) == 0.0
    values = [explored_area_smooth(traj, g, SmoothingParams(beta=b, sigma=0.1)) for b in (10.0, 100.0, 1e4)]
    assert values[0] > values[1] > values[2] > 0
    assert values[2] < 0.01


def test_smoothing_error_shrinks_with_temperature(rng):
    traj = random_trajectory(rng, 12)
    g = grid_for(12)
    exact = explored_area_exact(traj, g)
    errs = [abs(explored_area_smooth(traj, g, SmoothingParams(beta=b, sigma=0.1)) - exact) for b in (1.0, 10.0, 100.0)]
    assert errs[0] >= errs[1] >= errs[2]


def test_stationary_agent_soft_count():
    g = GridSpec(1.0, (0.0, 0.0), 5)
    pts = np.array([[[2.5, 2.5]] * 4])
    count = soft_cell_count(pts, g, 0.1)[0]
    assert 0 < count < g.extent**2
    assert count > 1 - 1e-12


def test_rss_three_followers_example():
    h = np.radians([[0, 0, 0, 0], [10, 20, 30, 0]])
    one = consensus_rss(SwarmTrajectory(h, np.zeros((2, 4, 2)), 1.0))
    assert one == pytest.approx(np.radians(1.0) ** 2 * 1400, rel=1e-14)
    h2 = np.radians([[0, 0, 0, 0], [10, 20, 30, 0], [10, 20, 30, 0]])
    two = consensus_rss(SwarmTrajectory(h2, np.zeros((3, 4, 2)), 1.0))
    assert two == pytest.approx(np.radians(1.0) ** 2 * 2800, rel=1e-14)


def test_pseudo_and_scalar_examples():
    u = UtopiaPoints(100.0, 3.0)
    assert pseudo_objectives(200.0, 3.0, u) == pytest.approx((1.0, 0.0))
    assert scalarize(1.0, 1.0, ObjectiveWeights(0.5, 0.5)) == 1.0
    assert scalarize(2.0, 0.0, ObjectiveWeights(0.25, 0.75)) == 0.5
    assert scalarize(3.7, 9.0, ObjectiveWeights(1.0, 0.0)) == 3.7


@given(st.floats(0, 1), st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_scalarization_monotone_in_phi2(a1, phi1, phi2, bump):
    w = ObjectiveWeights(a1, 1.0 - a1)
    assert scalarize(phi1, phi2 + bump, w) >= scalarize(phi1, phi2, w)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_rss_zero_iff_followers_match_leader(seed, match):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(5, 4))
    if match:
        h[1:, :3] = h[1:, 3:]
    f2 = consensus_rss(SwarmTrajectory(h, np.zeros((5, 4, 2)), 1.0))
    assert f2 >= 0
    assert (f2 == 0) == match


@given(st.integers(0, 2**32 - 1))
def test_area_zero_iff_degenerate(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.5, 3.5, size=(6, 2))
    if rng.random() < 0.5:
        pts[:, rng.integers(2)] = 1.5
    g = GridSpec(1.0, (0.0, 0.0), 4)
    degenerate = np.ptp(pts[:, 0]) == 0 or np.ptp(pts[:, 1]) == 0
    assert (explored_area_exact(single_agent(pts), g) == 0) == degenerate
