"""Sequential quadratic programming with damped BFGS and an l1 merit line search."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import NumericalEvaluationError, QPError
from .qp import QPResult, solve_qp_subproblem

logger = logging.getLogger(__name__)

STATUSES = ("converged", "max_evals", "max_iters", "line_search_failure", "qp_infeasible")


@dataclass(frozen=True)
class SolverConfig:
    kkt_tol: float = 1e-6
    step_tol: float = 1e-10
    max_iters: int = 200
    max_func_evals: int = 10000
    bfgs_damping: float = 0.2
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    multistart_count: int = 8
    rng_seed: int = 42
    fd_step: float = 1e-6
    feas_tol: float = 1e-8
    hessian_reset: int = 3

    def __post_init__(self):
        for name in ("kkt_tol", "step_tol", "fd_step", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not 0 <= self.bfgs_damping < 1:
            raise ValueError("bfgs_damping must lie in [0, 1)")
        if self.hessian_reset < 0:
            raise ValueError("hessian_reset must be non-negative")
        if self.max_iters < 1 or self.max_func_evals < 1 or self.multistart_count < 1:
            raise ValueError("budgets and multistart_count must be at least 1")


BatchEvaluator = Callable[[np.ndarray], tuple]


@dataclass
class NonlinearProgram:
    """Smooth NLP ``min f(y)`` s.t. ``h(y) = 0``, ``g(y) <= 0``, ``lower <= y <= upper``.

    ``evaluate`` maps a (B, n) batch of points to ``(f (B,), h (B, me), g (B, mi))``.
    Batching lets finite-difference gradients run as one vectorised call.
    """

    n: int
    evaluate: BatchEvaluator
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.lower = np.full(self.n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(self.n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)

    @classmethod
    def from_functions(cls, objective, n, equalities=None, inequalities=None, lower=None, upper=None):
        """Wrap pointwise callables into a batch evaluator."""

        def evaluate(ys):
            f = np.array([objective(y) for y in ys], dtype=float)
            h = np.array([np.atleast_1d(equalities(y)) for y in ys], dtype=float) if equalities else np.zeros((len(ys), 0))
            g = np.array([np.atleast_1d(inequalities(y)) for y in ys], dtype=float) if inequalities else np.zeros((len(ys), 0))
            return f, h.reshape(len(ys), -1), g.reshape(len(ys), -1)

        return cls(n, evaluate, lower, upper)


@dataclass
class SqpState:
    """Iterate-level solver state."""

    y: np.ndarray
    hessian: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    active_set: tuple[int, ...] = ()
    iteration: int = 0
    func_evals: int = 0


@dataclass
class SolveReport:
    y: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int
    func_evals: int
    wall_time: float
    objective_history: list = field(default_factory=list)
    merit_history: list = field(default_factory=list)  # (before, after, penalty) per accepted step
    max_violation: float = np.inf
    state: Optional[SqpState] = None
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def bfgs_update(B, s, y_grad, damping: float = 0.2, step_tol: float = 1e-10,
                max_condition: float = 1e8) -> np.ndarray:
    """Powell-damped BFGS update.

    When ``s'y < damping * s'Bs`` the gradient difference is blended with
    ``Bs`` so the curvature condition holds and ``B`` stays positive
    definite. Steps shorter than ``step_tol`` leave ``B`` untouched. In
    floating point a long run of updates can still drift toward
    singularity, so eigenvalues below ``largest / max_condition`` are
    raised to that floor.
    """
    b = np.asarray(B, dtype=float)
    s = np.asarray(s, dtype=float)
    yv = np.asarray(y_grad, dtype=float)
    if np.linalg.norm(s) < step_tol:
        return b.copy()
    bs = b @ s
    sbs = float(s @ bs)
    if not sbs > 0:
        return b.copy()
    sy = float(s @ yv)
    if sy < damping * sbs:
        theta = (1.0 - damping) * sbs / (sbs - sy)
        yv = theta * yv + (1.0 - theta) * bs
        sy = float(s @ yv)
    new = b - np.outer(bs, bs) / sbs + np.outer(yv, yv) / sy
    new = 0.5 * (new + new.T)
    w, v = np.linalg.eigh(new)
    floor = max(float(w[-1]), 1e-300) / max_condition
    if w[0] < floor:
        new = (v * np.maximum(w, floor)) @ v.T
        new = 0.5 * (new + new.T)
    return new


@dataclass
class LineSearchResult:
    y: np.ndarray
    step_scale: float
    merit: float
    success: bool
    trials: int


def line_search(merit_fn, y, step, c1: float = 1e-4, backtrack: float = 0.5, slope=None, merit0=None, max_backtracks: int = 30):
    """Backtracking Armijo search on ``merit_fn`` along ``step``.

    Tries scales ``1, backtrack, backtrack**2, ...`` and accepts the first
    with ``merit(y + a*step) <= merit(y) + c1*a*slope`` that also lowers
    the merit, so an ascent direction always fails. ``slope`` is the
    directional derivative; it is estimated by central differences when
    omitted. Fails after ``max_backtracks`` reductions.
    """
    y = np.asarray(y, dtype=float)
    step = np.asarray(step, dtype=float)
    m0 = merit_fn(y) if merit0 is None else merit0
    if slope is None:
        h = 1e-6
        slope = (merit_fn(y + h * step) - merit_fn(y - h * step)) / (2 * h)
    a = 1.0
    for trial in range(max_backtracks + 1):
        cand = y + a * step
        m = merit_fn(cand)
        if np.isfinite(m) and m <= m0 + c1 * a * slope and m < m0:
            return LineSearchResult(cand, a, m, True, trial + 1)
        a *= backtrack
    return LineSearchResult(y, 0.0, m0, False, max_backtracks + 1)


def finite_difference(problem: NonlinearProgram, y, h: float):
    """Central-difference gradient and Jacobians; returns (grad, J_eq, J_in, evals)."""
    n = problem.n
    steps = h * np.maximum(1.0, np.abs(y))
    pts = np.repeat(y[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    pts[idx, idx] += steps
    pts[n + idx, idx] -= steps
    f, he, gi = problem.evaluate(pts)
    for k in range(n):
        if not (np.isfinite(f[k]) and np.isfinite(f[n + k]) and np.all(np.isfinite(he[[k, n + k]])) and np.all(np.isfinite(gi[[k, n + k]]))):
            raise NumericalEvaluationError(f"non-finite value while perturbing variable {k}", index=k)
    denom = 2.0 * steps
    grad = (f[:n] - f[n:]) / denom
    j_eq = ((he[:n] - he[n:]) / denom[:, None]).T
    j_in = ((gi[:n] - gi[n:]) / denom[:, None]).T
    return grad, j_eq, j_in, 2 * n


def _violation(h, g) -> float:
    return float(np.sum(np.abs(h)) + np.sum(np.maximum(g, 0.0)))


def _max_violation(h, g) -> float:
    return float(max(np.max(np.abs(h), initial=0.0), np.max(g, initial=0.0), 0.0))


def kkt_residual(y, grad, j_eq, j_in, h, g, lam, mu, lower, upper) -> float:
    """Scaled first-order optimality error of ``y`` with multipliers ``(lam, mu)``."""
    mu = np.maximum(mu, 0.0)
    r = grad + j_eq.T @ lam + j_in.T @ mu
    span = np.maximum(1.0, np.abs(y)) * 1e-12
    at_lo = y - lower <= span
    at_up = upper - y <= span
    stat = np.where(at_lo, np.maximum(-r, 0.0), np.where(at_up, np.maximum(r, 0.0), np.abs(r)))
    stat_err = float(np.max(stat, initial=0.0)) / max(1.0, float(np.max(np.abs(grad), initial=0.0)))
    comp = float(np.max(np.abs(mu * g), initial=0.0))
    return max(stat_err, _max_violation(h, g), comp)


def least_squares_multipliers(y, grad, j_eq, j_in, active, lower, upper):
    """Multipliers that best cancel the gradient on the given active set.

    Coordinates sitting on a simple bound are left out, since a bound
    multiplier can absorb them. Returns ``(lam, mu)`` with ``mu`` zero off
    the active set.
    """
    span = np.maximum(1.0, np.abs(y)) * 1e-12
    inner = (y - lower > span) & (upper - y > span)
    active = np.asarray(active, dtype=int)
    a = np.vstack([j_eq, j_in[active]])[:, inner]
    mult = np.linalg.lstsq(a.T, -grad[inner], rcond=None)[0] if a.size else np.zeros(a.shape[0])
    me = j_eq.shape[0]
    mu = np.zeros(j_in.shape[0])
    mu[active] = mult[me:]
    return mult[:me], mu


def _second_order_correction(merit, seen, y, d, m0, slope, cfg, B, grad, j_eq, j_in, lower, upper, penalty):
    """Full step, or a second-order correction of it, when either passes Armijo.

    The correction re-solves the QP with constraint constants taken at
    ``y + d``, which bends the step back toward the curved constraint
    surface and avoids the step-size collapse that a linearisation can
    cause near the feasible boundary. Returns None to fall back to
    backtracking along ``d``.
    """
    full = y + d
    m_full = merit(full)
    if np.isfinite(m_full) and m_full <= m0 + cfg.armijo_c1 * slope and m_full < m0:
        return LineSearchResult(full, 1.0, m_full, True, 1)
    _, h_full, g_full = seen[full.tobytes()]
    try:
        qp2 = solve_qp_subproblem(B, grad, j_eq, h_full - j_eq @ d, j_in, g_full - j_in @ d,
                                  bounds=(lower - y, upper - y), penalty=penalty)
    except QPError:
        return None
    if not qp2.feasible:
        return None
    cand = np.clip(y + qp2.step, lower, upper)
    m_soc = merit(cand)
    if np.isfinite(m_soc) and m_soc <= m0 + cfg.armijo_c1 * slope and m_soc < m0:
        return LineSearchResult(cand, 1.0, m_soc, True, 2)
    return None


def sqp_minimize(problem: NonlinearProgram, y0, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimise ``problem`` from ``y0``.

    Each iteration solves a QP model built from finite-difference
    derivatives and a BFGS Hessian of the Lagrangian, then backtracks on the
    l1 exact-penalty merit. Stops on a KKT residual below ``kkt_tol``, a step
    below ``step_tol`` at a feasible point, or an exhausted budget.
    """
    t_start = time.perf_counter()
    n = problem.n
    lower, upper = problem.lower, problem.upper
    y = np.clip(np.asarray(y0, dtype=float).copy(), lower, upper)
    if y.shape != (n,):
        raise ValueError(f"initial point has shape {y.shape}, expected ({n},)")

    def evaluate_one(point):
        f, h, g = problem.evaluate(point[None, :])
        return float(f[0]), h[0], g[0]

    f, h, g = evaluate_one(y)
    evals = 1
    if not (np.isfinite(f) and np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise ValueError("objective or constraints are not finite at the initial point")

    me, mi = h.size, g.size
    B = np.eye(n)
    lam = np.zeros(me)
    mu = np.zeros(mi)
    rho = 1.0
    history = [f]
    merits = []
    status = "max_iters"
    kkt = np.inf
    infeasible_streak = 0
    short_steps = 0
    qp: Optional[QPResult] = None
    message = ""

    if evals + 2 * n > cfg.max_func_evals:
        status = "max_evals"
        grad = j_eq = j_in = None
    else:
        grad, j_eq, j_in, used = finite_difference(problem, y, cfg.fd_step)
        evals += used

    iteration = 0
    while grad is not None:
        if iteration >= cfg.max_iters:
            status = "max_iters"
            break
        qp = solve_qp_subproblem(
            B, grad, j_eq, h, j_in, g, bounds=(lower - y, upper - y), penalty=max(1e3, 10 * rho)
        )
        d = qp.step
        if qp.feasible:
            lam, mu = qp.eq_multipliers, np.maximum(qp.ineq_multipliers, 0.0)
            infeasible_streak = 0
            kkt = kkt_residual(y, grad, j_eq, j_in, h, g, lam, mu, lower, upper)
            if kkt >= cfg.kkt_tol:
                # QP multipliers inherit the error of an ill-conditioned B;
                # the best-fitting ones certify stationarity more reliably
                lam_ls, mu_ls = least_squares_multipliers(y, grad, j_eq, j_in, qp.active_set, lower, upper)
                kkt = min(kkt, kkt_residual(y, grad, j_eq, j_in, h, g, lam_ls, mu_ls, lower, upper))
            if kkt < cfg.kkt_tol:
                status = "converged"
                break
        else:
            infeasible_streak += 1
            if infeasible_streak > 25:
                status = "qp_infeasible"
                message = "linearised constraints stayed inconsistent"
                break

        viol0 = _violation(h, g)
        lin_viol = _violation(h + j_eq @ d, g + j_in @ d)
        gd = float(grad @ d)
        dbd = float(d @ B @ d)
        mult_max = float(max(np.max(np.abs(lam), initial=0.0), np.max(mu, initial=0.0)))
        drop = viol0 - lin_viol
        floor = mult_max + 1e-6
        if drop > 1e-14:
            floor = max(floor, (gd + 0.5 * max(dbd, 0.0)) / (0.9 * drop))
        if rho < floor:
            rho = max(2.0 * mult_max + 1e-6, 1.1 * floor)
        elif rho > 10.0 * floor:
            # a stale, oversized penalty makes the merit blind to the objective
            rho = max(2.0 * mult_max + 1e-6, 1.1 * floor)
        slope = gd - rho * drop
        logger.debug("  qp_feasible=%s gd=%.3g drop=%.3g viol0=%.3g lin=%.3g rho=%.3g", qp.feasible, gd, drop, viol0, lin_viol, rho)

        if np.max(np.abs(d), initial=0.0) < cfg.step_tol:
            if _max_violation(h, g) <= cfg.feas_tol:
                status = "converged"
                message = "step below step_tol"
            else:
                status = "qp_infeasible"
                message = "stalled at an infeasible point"
            break

        seen = {}

        def merit(point):
            nonlocal evals
            fv, hv, gv = evaluate_one(point)
            evals += 1
            seen[point.tobytes()] = (fv, hv, gv)
            return fv + rho * _violation(hv, gv)

        m0 = f + rho * viol0
        budget = cfg.max_func_evals - evals - 2 * n
        if budget < 1:
            status = "max_evals"
            break
        ls = None
        if qp.feasible and budget > 3:
            ls = _second_order_correction(merit, seen, y, d, m0, slope, cfg, B, grad, j_eq, j_in,
                                          lower, upper, max(1e3, 10 * rho))
        if ls is None:
            ls = line_search(merit, y, d, cfg.armijo_c1, cfg.backtrack_factor, slope=slope, merit0=m0,
                             max_backtracks=min(30, cfg.max_func_evals - evals - 2 * n - 1))
        if not ls.success:
            status = "line_search_failure" if budget > 30 else "max_evals"
            message = f"no sufficient decrease along the QP step (slope {slope:.3e})"
            break
        y_new = ls.y
        f_new, h_new, g_new = seen[y_new.tobytes()]
        merits.append((m0, ls.merit, rho))
        if evals + 2 * n > cfg.max_func_evals:
            y, f, h, g = y_new, f_new, h_new, g_new
            history.append(f)
            iteration += 1
            status = "max_evals"
            break
        grad_new, j_eq_new, j_in_new, used = finite_difference(problem, y_new, cfg.fd_step)
        evals += used
        # Elastic multipliers carry the artificial penalty, so an infeasible
        # subproblem keeps the last trustworthy estimates.
        lam_b, mu_b = lam, mu
        lag_old = grad + j_eq.T @ lam_b + j_in.T @ mu_b
        lag_new = grad_new + j_eq_new.T @ lam_b + j_in_new.T @ mu_b
        # a run of heavily cut-back steps means the quasi-Newton model has
        # stopped describing the problem; start it over from the identity
        short_steps = short_steps + 1 if ls.step_scale < 0.1 else 0
        if cfg.hessian_reset and short_steps >= cfg.hessian_reset:
            B = np.eye(n)
            short_steps = 0
        else:
            B = bfgs_update(B, y_new - y, lag_new - lag_old, cfg.bfgs_damping, cfg.step_tol)
        y, f, h, g = y_new, f_new, h_new, g_new
        grad, j_eq, j_in = grad_new, j_eq_new, j_in_new
        history.append(f)
        iteration += 1
        logger.debug("iter %d f=%.6g viol=%.3g kkt=%.3g scale=%.3g", iteration, f, _max_violation(h, g), kkt, ls.step_scale)

    state = SqpState(y.copy(), B, lam, mu, qp.active_set if qp is not None else (), iteration, evals)
    return SolveReport(
        y=y,
        objective=f,
        status=status,
        kkt_residual=kkt,
        iterations=iteration,
        func_evals=evals,
        wall_time=time.perf_counter() - t_start,
        objective_history=history,
        merit_history=merits,
        max_violation=_max_violation(h, g),
        state=state,
        message=message,
    )
