import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roverswarm.errors import DimensionError, InvalidWeightsError
from roverswarm.swarm import (
    AgentGraph,
    SwarmState,
    WeightMatrix,
    consensus_step,
    diamond_formation,
    kinematics_step,
    metropolis_matrix,
    metropolis_weights,
    rollout,
)

from conftest import random_rows

UNIFORM = np.full((3, 4), 0.25)
SIM1 = np.array([[0.1, 0.1, 0.1, 0.7]] * 3)


def state_deg(headings_deg, positions=None):
    pos = diamond_formation().positions if positions is None else positions
    return SwarmState(np.radians(headings_deg), pos)


# ------------------------------------------------------------ graph


def test_leader_follower_graph_structure():
    g = AgentGraph.leader_follower(4)
    assert g.leader_index == 3
    assert g.neighbor_sets[3] == frozenset()
    for i in range(3):
        assert 3 in g.neighbor_sets[i]
        assert (3, i) in g.edges
        assert (i, 3) not in g.edges
    for i in range(3):
        for j in range(3):
            if i != j:
                assert (i, j) in g.edges and (j, i) in g.edges
    assert all(i != j for i, j in g.edges)


def test_graph_rejects_self_loop_and_bad_neighbour():
    with pytest.raises(ValueError):
        AgentGraph(2, (frozenset({0}), frozenset()))
    with pytest.raises(ValueError):
        AgentGraph(2, (frozenset({5}), frozenset()))
    with pytest.raises(DimensionError):
        AgentGraph(3, (frozenset(),))


# ------------------------------------------------------------ weights


def test_weight_matrix_validation_lists_row_sums():
    with pytest.raises(InvalidWeightsError) as err:
        WeightMatrix(np.array([[0.5, 0.5, 0.5, 0.5]] * 3))
    assert "2" in str(err.value)
    assert np.allclose(err.value.row_sums, 2.0)
    with pytest.raises(InvalidWeightsError):
        WeightMatrix(np.array([[1.2, -0.2, 0.0, 0.0]] * 3))
    with pytest.raises(DimensionError):
        WeightMatrix(np.full((4, 4), 0.25))


def test_weight_lower_bound_check():
    g = AgentGraph.leader_follower(4)
    assert WeightMatrix(SIM1, lower_bound=0.1).respects_lower_bound(g)
    rows = np.array([[0.05, 0.15, 0.1, 0.7]] * 3)
    assert not WeightMatrix(rows, lower_bound=0.1).respects_lower_bound(g)


# ------------------------------------------------------------ consensus_step


def test_consensus_step_uniform_row():
    nxt = consensus_step(state_deg([0, 0, 0, 40]), UNIFORM, math.radians(40))
    assert np.allclose(np.degrees(nxt.headings[:3]), 10.0)
    assert nxt.t == 1


def test_consensus_step_equal_headings_fixed_point(rng):
    c = math.radians(23.0)
    nxt = consensus_step(state_deg([23, 23, 23, 23]), random_rows(rng), c)
    assert np.allclose(nxt.headings, c, atol=1e-15)


def test_consensus_step_sim1_row():
    nxt = consensus_step(state_deg([0, 0, 0, 90]), SIM1, math.radians(90))
    assert np.allclose(np.degrees(nxt.headings[:3]), 63.0)


def test_consensus_step_leader_ignores_followers():
    nxt = consensus_step(state_deg([50, -20, 10, 0]), UNIFORM, math.radians(-5))
    assert math.isclose(nxt.headings[3], math.radians(-5))


def test_consensus_step_moves_agents_along_new_headings():
    nxt = consensus_step(state_deg([0, 0, 0, 40]), UNIFORM, math.radians(40), step_length=2.0)
    start = diamond_formation().positions
    for i in range(4):
        expected = kinematics_step(start[i], nxt.headings[i], 2.0)
        assert np.allclose(nxt.positions[i], expected)


def test_consensus_step_errors():
    with pytest.raises(InvalidWeightsError):
        consensus_step(state_deg([0, 0, 0, 0]), np.full((3, 4), 0.3), 0.0)
    with pytest.raises(DimensionError):
        consensus_step(state_deg([0, 0, 0, 0]), np.full((2, 3), 1 / 3), 0.0)


# ------------------------------------------------------------ kinematics


def test_kinematics_examples():
    assert np.allclose(kinematics_step((0, 0), 0.0, 1.0), (0, 1))
    assert np.allclose(kinematics_step((0, 0), math.radians(90), 1.0), (1, 0))
    assert np.allclose(kinematics_step((2, 3), math.radians(30), 1.0), (2.5, 3 + math.sqrt(3) / 2))


# ------------------------------------------------------------ rollout


def test_rollout_straight_ahead():
    traj = rollout(diamond_formation(), UNIFORM, np.zeros(20), 1.0)
    assert len(traj) == 21
    assert np.allclose(traj.headings, 0.0)
    assert np.allclose(traj.positions[-1], diamond_formation().positions + [0, 20])


def test_rollout_single_step_length():
    traj = rollout(diamond_formation(), SIM1, [0.3], 1.0)
    assert len(traj) == 2
    assert traj.steps == 1


def test_rollout_is_bit_deterministic(rng):
    w = random_rows(rng)
    lead = rng.normal(size=15)
    a = rollout(diamond_formation(), w, lead, 1.0)
    b = rollout(diamond_formation(), w, lead, 1.0)
    assert a.headings.tobytes() == b.headings.tobytes()
    assert a.positions.tobytes() == b.positions.tobytes()


def test_rollout_matches_repeated_consensus_steps(rng):
    w = random_rows(rng)
    lead = rng.normal(size=6)
    traj = rollout(diamond_formation(), w, lead, 0.7)
    s = diamond_formation()
    for t, x in enumerate(lead, start=1):
        s = consensus_step(s, w, x, 0.7)
        assert np.allclose(s.headings, traj.headings[t], atol=1e-14)
        assert np.allclose(s.positions, traj.positions[t], atol=1e-12)


def test_rollout_rejects_bad_step_length():
    with pytest.raises(ValueError):
        rollout(diamond_formation(), UNIFORM, [0.0], 0.0)


# ------------------------------------------------------------ metropolis


def test_metropolis_path_graph():
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    w = metropolis_matrix(adj)
    assert math.isclose(w[0, 1], 1 / 3)
    assert math.isclose(w[0, 0], 2 / 3)
    assert math.isclose(w[1, 1], 1 / 3)


def test_metropolis_complete_graph_on_three_nodes():
    w = metropolis_matrix(np.ones((3, 3)) - np.eye(3))
    assert np.allclose(w, 1 / 3)


def test_metropolis_isolated_node():
    assert np.allclose(metropolis_matrix(np.zeros((1, 1))), [[1.0]])


def test_metropolis_swarm_weights_are_uniform_on_complete_symmetrised_graph():
    w = metropolis_weights(AgentGraph.leader_follower(4))
    assert np.allclose(w.rows, 0.25)


def test_metropolis_disconnected_warns(caplog):
    g = AgentGraph(4, (frozenset({3}), frozenset({3}), frozenset({3}), frozenset()))
    with caplog.at_level("WARNING"):
        w = metropolis_weights(g)
    assert "disconnected" in caplog.text
    assert np.allclose(w.rows.sum(axis=1), 1.0)


# ------------------------------------------------------------ properties

headings_st = st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4)
seeds = st.integers(0, 2**32 - 1)


@given(headings_st, seeds, st.floats(-math.pi, math.pi))
def test_consensus_step_stays_within_previous_range(h, seed, lead):
    rows = random_rows(np.random.default_rng(seed))
    s = SwarmState(np.array(h), diamond_formation().positions)
    nxt = consensus_step(s, rows, lead)
    assert np.all(nxt.headings[:3] <= max(h) + 1e-12)
    assert np.all(nxt.headings[:3] >= min(h) - 1e-12)


@given(st.lists(st.floats(-math.pi / 2, math.pi / 2), min_size=3, max_size=3), seeds,
       st.floats(-math.pi / 4, math.pi / 4))
def test_consensus_contracts_to_constant_leader(follower_h, seed, c):
    # leader column at least 0.4, initial spread at most 90 degrees
    rng = np.random.default_rng(seed)
    rows = 0.6 * rng.dirichlet(np.ones(4), size=3)
    rows[:, 3] += 0.4
    start = np.array(follower_h + [c])
    start[:3] = c + np.clip(start[:3] - c, -math.pi / 4, math.pi / 4)
    traj = rollout(SwarmState(start, diamond_formation().positions), rows, np.full(30, c), 1.0)
    assert np.max(np.abs(traj.headings[-1, :3] - c)) < 1e-3


@given(seeds, st.integers(1, 25), st.floats(0.1, 3.0))
def test_rollout_conserves_step_length(seed, steps, alpha):
    rng = np.random.default_rng(seed)
    traj = rollout(diamond_formation(), random_rows(rng), rng.normal(0, 2, steps), alpha)
    d = np.linalg.norm(np.diff(traj.positions, axis=0), axis=-1)
    assert np.allclose(d, alpha, atol=1e-12, rtol=0)


@given(st.integers(1, 7), seeds)
def test_metropolis_symmetric_and_row_stochastic(n, seed):
    rng = np.random.default_rng(seed)
    adj = (rng.random((n, n)) < 0.5).astype(float)
    w = metropolis_matrix(adj)
    assert np.allclose(w, w.T, atol=1e-12)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w >= -1e-15)
    sym = ((adj + adj.T) > 0) & ~np.eye(n, dtype=bool)
    assert np.all(w[~sym & ~np.eye(n, dtype=bool)] == 0.0)
