"""Leader-follower rover swarm: consensus weights and leader headings optimised by SQP."""

from .config import REFERENCE_WEIGHTS, ScenarioConfig, builtin_scenarios, load_scenario
from .constraints import ConstraintSet, DesignLayout, DesignVector, check_feasibility
from .errors import (
    ConfigError,
    DimensionError,
    InfeasibleSolutionError,
    InvalidWeightsError,
    NumericalEvaluationError,
    QPError,
    SwarmError,
)
from .objectives import (
    GridSpec,
    ObjectiveWeights,
    SmoothingParams,
    UtopiaPoints,
    consensus_rss,
    explored_area_exact,
    explored_area_smooth,
    pseudo_objectives,
    scalarize,
)
from .runner import ResultBundle, compare_to_reference, compute_utopia, multistart, run_scenario
from .sqp import SolveReport, SolverConfig, sqp_minimize
from .swarm import (
    AgentGraph,
    SwarmState,
    SwarmTrajectory,
    WeightMatrix,
    consensus_step,
    kinematics_step,
    metropolis_weights,
    rollout,
)

__version__ = "0.1.0"
