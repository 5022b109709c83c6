"""Dense primal active-set solver for the SQP quadratic subproblem.

Solves::

    min  0.5 d'Bd + g'd
    s.t. A_eq d + b_eq  = 0
         A_in d + b_in <= 0
         lb <= d <= ub

with B positive definite. Every iteration solves an equality-constrained
KKT system over the free variables and the working set. When ``d = 0``
violates a general constraint the problem is posed in elastic form: the
offending rows receive non-negative slacks priced at ``penalty`` per unit
(plus a small quadratic term to keep the Hessian definite), which gives a
trivially feasible starting point. If all slacks end at zero the elastic
solution is the exact QP solution; otherwise the penalty is raised and the
solve repeated, and the linearisation is declared infeasible after
``max_penalty`` is exceeded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import QPError

logger = logging.getLogger(__name__)

_ZERO = 1e-13


@dataclass
class QPResult:
    step: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    lower_multipliers: np.ndarray
    upper_multipliers: np.ndarray
    active_set: tuple[int, ...]
    feasible: bool = True
    iterations: int = 0
    kkt_residual: float = 0.0
    penalty: float = 0.0
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _as_matrix(a, n) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, n)


def _as_vector(b, m) -> np.ndarray:
    if b is None:
        return np.zeros(m)
    return np.asarray(b, dtype=float).reshape(m)


def _kkt_solve(h_ff, a_f, rhs_top):
    """Solve ``[[H, A'], [A, 0]] [p; y] = [rhs; 0]`` with up to three regularised retries."""
    nf = h_ff.shape[0]
    ma = a_f.shape[0]
    if nf + ma == 0:
        return np.zeros(0), np.zeros(0)
    k = np.zeros((nf + ma, nf + ma))
    k[:nf, :nf] = h_ff
    k[:nf, nf:] = a_f.T
    k[nf:, :nf] = a_f
    rhs = np.concatenate([rhs_top, np.zeros(ma)])
    delta = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(h_ff)))) if nf else 1.0)
    k_norm = float(np.max(np.abs(k).sum(axis=1)))
    for attempt in range(4):
        kk = k
        if delta > 0:
            kk = k.copy()
            kk[:nf, :nf] += delta * np.eye(nf)
            kk[nf:, nf:] -= delta * np.eye(ma)
        try:
            sol = np.linalg.solve(kk, rhs)
            # iterative refinement against the unregularised system
            for _ in range(3):
                res = rhs - k @ sol
                err = float(np.linalg.norm(res, np.inf))
                if err <= 1e-12 * (k_norm * float(np.linalg.norm(sol, np.inf)) + float(np.linalg.norm(rhs, np.inf))):
                    break
                sol = sol + np.linalg.solve(kk, res)
            if np.all(np.isfinite(sol)):
                err = float(np.linalg.norm(rhs - k @ sol, np.inf))
                if err <= 1e-9 * (k_norm * float(np.linalg.norm(sol, np.inf)) + float(np.linalg.norm(rhs, np.inf))):
                    return sol[:nf], sol[nf:]
        except np.linalg.LinAlgError:
            pass
        delta = scale * 10.0 ** (-10 + 3 * attempt)
        logger.debug("singular KKT system, regularising with %g", delta)
    raise QPError("KKT system stayed singular after 3 regularisation attempts")


def _full_row_rank(a: np.ndarray) -> bool:
    if a.shape[0] == 0:
        return True
    if a.shape[1] < a.shape[0]:
        return False
    return np.linalg.matrix_rank(a) == a.shape[0]


def active_set_qp(h, c, a_eq, b_eq, g_in, q_in, lb, ub, z0, max_iter=None):
    """Primal active-set method from a feasible point.

    Solves ``min 0.5 z'Hz + c'z`` s.t. ``a_eq z = b_eq``, ``g_in z <= q_in``,
    ``lb <= z <= ub``. ``z0`` must be feasible.

    Returns ``(z, y_eq, y_in, nu_lo, nu_up, working_rows, iterations)`` where
    the multipliers satisfy ``Hz + c + a_eq'y_eq + g_in'y_in - nu_lo + nu_up = 0``.
    """
    n = h.shape[0]
    me = a_eq.shape[0]
    mi = g_in.shape[0]
    z = z0.astype(float).copy()
    tol = 1e-11 * max(1.0, float(np.max(np.abs(z))) if n else 1.0)

    # bound status: 0 free, -1 fixed at lower, +1 fixed at upper
    status = np.zeros(n, dtype=int)
    fixed_candidates = []
    for k in range(n):
        if np.isfinite(lb[k]) and abs(z[k] - lb[k]) <= _ZERO * max(1.0, abs(lb[k])):
            fixed_candidates.append((k, -1))
        elif np.isfinite(ub[k]) and abs(z[k] - ub[k]) <= _ZERO * max(1.0, abs(ub[k])):
            fixed_candidates.append((k, 1))
    for k, side in fixed_candidates:
        status[k] = side
        free = status == 0
        if not _full_row_rank(a_eq[:, free]):
            status[k] = 0
        else:
            z[k] = lb[k] if side < 0 else ub[k]
    working: list[int] = []
    # After a full unblocked step z minimises the model on the working set;
    # the next KKT solve only supplies multipliers, and its residual step is
    # rounding noise that would otherwise be chased indefinitely.
    on_subspace_min = False

    if max_iter is None:
        max_iter = 50 * (n + me + mi) + 100
    # On badly scaled subproblems the iteration can crawl along steps at
    # rounding level without lowering the model. Once the best model value
    # has not moved for ``stall_window`` iterations the current multipliers
    # are taken as they stand.
    stall_window = 2 * (n + me + mi) + 50
    best_obj, best_it = np.inf, 0
    for it in range(1, max_iter + 1):
        free = status == 0
        a_act = np.vstack([a_eq, g_in[working]]) if working else a_eq
        grad = h @ z + c
        obj = 0.5 * float(z @ (grad + c))
        if obj < best_obj - 1e-13 * max(1.0, abs(best_obj)):
            best_obj, best_it = obj, it
        stalled = it - best_it > stall_window
        p_f, y = _kkt_solve(h[np.ix_(free, free)], a_act[:, free], -grad[free])
        p = np.zeros(n)
        p[free] = p_f
        if on_subspace_min or np.max(np.abs(p), initial=0.0) <= tol:
            on_subspace_min = False
            # stationary on the working set: inspect multiplier signs
            y_in_w = y[me:]
            r = grad + a_act.T @ y
            nu = np.where(status < 0, r, np.where(status > 0, -r, 0.0))
            worst_val = -1e-10 * max(1.0, float(np.max(np.abs(grad))))
            worst = None
            for idx, row in enumerate(working):
                if y_in_w[idx] < worst_val:
                    worst_val = y_in_w[idx]
                    worst = ("row", idx)
            for k in np.flatnonzero(status):
                if nu[k] < worst_val:
                    worst_val = nu[k]
                    worst = ("bound", k)
            if worst is None or stalled:
                if worst is not None:
                    logger.debug("active-set stalled at model value %.12g; stopping", obj)
                y_eq = y[:me]
                y_in = np.zeros(mi)
                y_in[working] = np.maximum(y_in_w, 0.0)
                nu_lo = np.where(status < 0, np.maximum(nu, 0.0), 0.0)
                nu_up = np.where(status > 0, np.maximum(nu, 0.0), 0.0)
                return z, y_eq, y_in, nu_lo, nu_up, tuple(sorted(working)), it
            logger.debug("qp it %d: release %s %s (multiplier %.3g)", it, worst[0], worst[1], worst_val)
            if worst[0] == "row":
                working.pop(worst[1])
            else:
                status[worst[1]] = 0
            continue

        # ratio test over inactive rows and free variables
        kinds, keys, ratios = [], [], []
        if mi:
            gp = g_in @ p
            slack = q_in - g_in @ z
            inactive = np.ones(mi, dtype=bool)
            inactive[working] = False
            rows = np.flatnonzero(inactive & (gp > 1e-12 * float(np.max(np.abs(p))) * np.abs(g_in).sum(axis=1)))
            kinds.append(np.zeros(rows.size, dtype=int))
            keys.append(rows)
            ratios.append(np.maximum(slack[rows], 0.0) / gp[rows])
        low = np.flatnonzero(free & (p < 0) & np.isfinite(lb))
        kinds.append(np.ones(low.size, dtype=int))
        keys.append(low)
        ratios.append(np.maximum(z[low] - lb[low], 0.0) / -p[low])
        up = np.flatnonzero(free & (p > 0) & np.isfinite(ub))
        kinds.append(np.full(up.size, 2))
        keys.append(up)
        ratios.append(np.maximum(ub[up] - z[up], 0.0) / p[up])
        kinds = np.concatenate(kinds)
        keys = np.concatenate(keys)
        ratios = np.concatenate(ratios)
        step, block = 1.0, None
        p_max = float(np.max(np.abs(p)))
        names = ("row", "lower", "upper")
        # ties go to bounds first, then rows, each by index; the order matters
        # for termination on degenerate vertices
        tie_rank = np.array([1, 0, 2])[kinds]
        for pick in np.lexsort((keys, tie_rank, ratios)):
            if ratios[pick] >= 1.0:
                break
            kind, k = names[kinds[pick]], int(keys[pick])
            # A component of p at rounding level can pass the sign test; adding
            # such a constraint would make the working set dependent. Clear-cut
            # cases skip the rank test.
            if kind == "row":
                clear = gp[k] > 1e-8 * p_max * float(np.abs(g_in[k]).sum())
            else:
                clear = abs(p[k]) > 1e-8 * p_max
            if clear:
                ok = True
            elif kind == "row":
                ok = _full_row_rank(np.vstack([a_act[:, free], g_in[k, free]]))
            else:
                keep = free.copy()
                keep[k] = False
                ok = _full_row_rank(a_act[:, keep])
            if ok:
                step, block = float(ratios[pick]), (kind, k)
                break
        z = z + step * p
        z = np.where(status == 0, np.clip(z, lb, ub), z)
        on_subspace_min = block is None
        logger.debug("qp it %d: step %.3g |p| %.3g block %s", it, step, p_max, block)
        if block is not None:
            kind, k = block
            if kind == "row":
                working.append(k)
            elif kind == "lower":
                status[k] = -1
                z[k] = lb[k]
            else:
                status[k] = 1
                z[k] = ub[k]
    raise QPError(f"active-set iteration limit ({max_iter}) reached")


def qp_kkt_residual(b, g, a_eq, b_eq, a_in, b_in, lb, ub, d, lam, mu, nu_lo, nu_up) -> float:
    """Max-norm KKT violation of a QP solution (stationarity, feasibility, complementarity)."""
    stat = b @ d + g + a_eq.T @ lam + a_in.T @ mu - nu_lo + nu_up
    parts = [np.abs(stat)]
    if a_eq.shape[0]:
        parts.append(np.abs(a_eq @ d + b_eq))
    if a_in.shape[0]:
        r = a_in @ d + b_in
        parts.append(np.maximum(r, 0.0))
        parts.append(np.abs(mu * r))
        parts.append(np.maximum(-mu, 0.0))
    fin_lo = np.isfinite(lb)
    fin_up = np.isfinite(ub)
    parts.append(np.maximum(lb[fin_lo] - d[fin_lo], 0.0))
    parts.append(np.maximum(d[fin_up] - ub[fin_up], 0.0))
    parts.append(np.abs(nu_lo[fin_lo] * (d[fin_lo] - lb[fin_lo])))
    parts.append(np.abs(nu_up[fin_up] * (ub[fin_up] - d[fin_up])))
    return float(max((np.max(x) for x in parts if x.size), default=0.0))


def solve_qp_subproblem(
    B,
    g,
    A_eq=None,
    b_eq=None,
    A_in=None,
    b_in=None,
    bounds=None,
    penalty: float = 1e3,
    max_penalty: float = 1e9,
    slack_curvature: float = 1e-6,
) -> QPResult:
    """Minimise ``0.5 d'Bd + g'd`` under linearised constraints and simple bounds.

    Args:
        B: (n, n) positive definite Hessian approximation.
        g: (n,) gradient.
        A_eq, b_eq: rows of ``A_eq d + b_eq = 0``.
        A_in, b_in: rows of ``A_in d + b_in <= 0``.
        bounds: optional ``(lb, ub)`` arrays on ``d``; infinite entries are allowed.
        penalty: initial elastic price per unit of constraint violation.
        max_penalty: give up on feasibility beyond this price.
        slack_curvature: quadratic weight on elastic slacks, relative to the
            largest diagonal entry of ``B``.

    Returns:
        QPResult. ``feasible`` is False when the linearisation admitted no
        feasible step, in which case ``step`` minimises the elastic model.
    """
    b_mat = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    n = g.size
    a_eq = _as_matrix(A_eq, n)
    a_in = _as_matrix(A_in, n)
    me, mi = a_eq.shape[0], a_in.shape[0]
    be = _as_vector(b_eq, me)
    bi = _as_vector(b_in, mi)
    if bounds is None:
        lb = np.full(n, -np.inf)
        ub = np.full(n, np.inf)
    else:
        lb = np.asarray(bounds[0], dtype=float).copy()
        ub = np.asarray(bounds[1], dtype=float).copy()
    if np.any(lb > ub):
        raise QPError("inconsistent simple bounds")

    d0 = np.clip(np.zeros(n), lb, ub)
    r_eq = a_eq @ d0 + be
    r_in = a_in @ d0 + bi
    scale = max(1.0, float(np.max(np.abs(np.concatenate([r_eq, r_in, [0.0]])))))
    eq_slack = np.flatnonzero(np.abs(r_eq) > 1e-12 * scale)
    in_slack = np.flatnonzero(r_in > 0.0)
    n_slack = 2 * eq_slack.size + in_slack.size

    if n_slack == 0:
        z, lam, mu, nu_lo, nu_up, act, its = active_set_qp(
            b_mat, g, a_eq, -be, a_in, -bi, lb, ub, d0
        )
        res = qp_kkt_residual(b_mat, g, a_eq, be, a_in, bi, lb, ub, z, lam, mu, nu_lo, nu_up)
        return QPResult(z, lam, mu, nu_lo, nu_up, act, True, its, res, 0.0)

    rho = penalty
    total_its = 0
    curvature = slack_curvature * max(1.0, float(np.max(np.abs(np.diag(b_mat)))))
    while True:
        nz = n + n_slack
        h = np.zeros((nz, nz))
        h[:n, :n] = b_mat
        h[n:, n:] = curvature * np.eye(n_slack)
        c = np.concatenate([g, np.full(n_slack, rho)])
        ae = np.zeros((me, nz))
        ae[:, :n] = a_eq
        ai = np.zeros((mi, nz))
        ai[:, :n] = a_in
        z0 = np.concatenate([d0, np.zeros(n_slack)])
        col = n
        for row in eq_slack:
            ae[row, col] = 1.0
            ae[row, col + 1] = -1.0
            z0[col] = max(-r_eq[row], 0.0)
            z0[col + 1] = max(r_eq[row], 0.0)
            col += 2
        for row in in_slack:
            ai[row, col] = -1.0
            z0[col] = r_in[row]
            col += 1
        zlb = np.concatenate([lb, np.zeros(n_slack)])
        zub = np.concatenate([ub, np.full(n_slack, np.inf)])
        z, lam, mu, nu_lo, nu_up, act, its = active_set_qp(h, c, ae, -be, ai, -bi, zlb, zub, z0)
        total_its += its
        slack = z[n:]
        d = z[:n]
        if np.max(slack) <= 1e-10 * scale:
            res = qp_kkt_residual(
                b_mat, g, a_eq, be, a_in, bi, lb, ub, d, lam, mu, nu_lo[:n], nu_up[:n]
            )
            return QPResult(d, lam, mu, nu_lo[:n], nu_up[:n], act, True, total_its, res, rho, slack)
        if rho * 10.0 > max_penalty:
            logger.debug("QP linearisation infeasible (max slack %g)", float(np.max(slack)))
            return QPResult(d, lam, mu, nu_lo[:n], nu_up[:n], act, False, total_its, np.inf, rho, slack)
        rho *= 10.0
