"""From-scratch SQP: active-set QP subproblem, damped BFGS and l1 merit line search."""

from .qp import QPResult, active_set_qp, solve_qp_subproblem
from .solver import (
    NonlinearProgram,
    SolveReport,
    SolverConfig,
    SqpState,
    bfgs_update,
    kkt_residual,
    line_search,
    sqp_minimize,
)
