"""Bounded-variable two-phase primal simplex on a dense tableau.

Every row ``i`` gets a logical variable ``s_i = a_i x`` whose bounds encode the
row sense, so the problem is ``min c x`` over ``A x - s = 0`` with box bounds
on both ``x`` and ``s``.  The tableau is stored in condensed form: one row per
basic variable and one column per nonbasic variable, with the convention
``x_B = -T x_N``.  Phase 1 minimizes the sum of bound violations of the basic
variables; phase 2 minimizes ``c x`` from the feasible basis it leaves behind.

Pricing is Dantzig (largest reduced cost), switching to Bland's smallest-index
rule after ``stall_threshold`` consecutive degenerate pivots.  All ties are
resolved by lowest index, so a solve is fully deterministic.

The dense tableau is ``m x n_free`` floats; the practical ceiling is a few
thousand rows by a few hundred free columns (``MAX_TABLEAU_ENTRIES``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import njit

MAX_TABLEAU_ENTRIES = 20_000_000

_OPTIMAL, _INFEASIBLE, _UNBOUNDED, _ITER_LIMIT, _CHECKPOINT, _NUMERIC = range(6)
_STATUS = {
    _OPTIMAL: "optimal",
    _INFEASIBLE: "infeasible",
    _UNBOUNDED: "unbounded",
    _ITER_LIMIT: "iteration_limit",
}


class LpError(RuntimeError):
    pass


class SingularBasisError(LpError):
    def __init__(self, row: int, column: int, detail: str = ""):
        self.row = row
        self.column = column
        super().__init__(f"numerically singular basis at row {row}, column {column}{detail}")


@dataclass
class LpResult:
    status: str
    x: np.ndarray
    objective: float
    iterations: int
    reduced_costs: np.ndarray = field(repr=False, default=None)
    duals: np.ndarray = field(repr=False, default=None)
    column_status: np.ndarray = field(repr=False, default=None)
    basis: np.ndarray | None = field(repr=False, default=None)
    values: np.ndarray | None = field(repr=False, default=None)  # structurals then logicals

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# column_status codes
BASIC, AT_LOWER, AT_UPPER, FIXED, FREE = range(5)


@njit(cache=True)
def _pivot(T, r, q):
    m, n = T.shape
    p = T[r, q]
    for j in range(n):
        T[r, j] /= p
    T[r, q] = 1.0 / p
    for i in range(m):
        if i == r:
            continue
        f = T[i, q]
        if f == 0.0:
            continue
        for j in range(n):
            T[i, j] -= f * T[r, j]
        T[i, q] = -f / p


@njit(cache=True)
def _iterate(T, x, lo, hi, cost, basis, nonbasic, state,
             feas_tol, opt_tol, pivot_tol, max_iter, stall, budget):
    """Run simplex pivots until a terminal status or ``budget`` iterations.

    ``state`` = [phase, bland, degenerate_run, iterations] and is updated in
    place so the caller can refactor and resume.
    """
    m, n = T.shape
    cb = np.zeros(m)
    d = np.zeros(n)
    ratios = np.empty(m)
    targets = np.empty(m)
    phase, bland, degen, iters = state[0], state[1], state[2], state[3]
    steps = 0
    status = _CHECKPOINT
    while True:
        if iters >= max_iter:
            status = _ITER_LIMIT
            break
        if steps >= budget:
            status = _CHECKPOINT
            break

        if phase == 1:
            ninf = 0
            for i in range(m):
                b = basis[i]
                v = x[b]
                if v < lo[b] - feas_tol:
                    cb[i] = -1.0
                    ninf += 1
                elif v > hi[b] + feas_tol:
                    cb[i] = 1.0
                    ninf += 1
                else:
                    cb[i] = 0.0
            if ninf == 0:
                phase = 2
                bland = 0
                degen = 0
        if phase == 2:
            for i in range(m):
                cb[i] = cost[basis[i]]
            for j in range(n):
                d[j] = cost[nonbasic[j]]
        else:
            for j in range(n):
                d[j] = 0.0
        for i in range(m):
            c = cb[i]
            if c != 0.0:
                for j in range(n):
                    d[j] -= c * T[i, j]

        # pricing
        q = -1
        qdir = 0
        best = 0.0
        bestvar = 1 << 62
        for j in range(n):
            v = nonbasic[j]
            dj = d[j]
            if dj < -opt_tol and x[v] < hi[v]:
                direction = 1
                score = -dj
            elif dj > opt_tol and x[v] > lo[v]:
                direction = -1
                score = dj
            else:
                continue
            if bland == 1:
                take = v < bestvar
            else:
                take = score > best or (score == best and v < bestvar)
            if take:
                q = j
                qdir = direction
                best = score
                bestvar = v
        if q < 0:
            status = _INFEASIBLE if phase == 1 else _OPTIMAL
            break

        # ratio test
        theta = np.inf
        for i in range(m):
            ratios[i] = np.inf
            t = T[i, q]
            if abs(t) <= pivot_tol:
                continue
            a = -t * qdir
            b = basis[i]
            v = x[b]
            if a > 0.0:
                if phase == 1 and v < lo[b] - feas_tol:
                    target = lo[b]
                elif phase == 1 and v > hi[b] + feas_tol:
                    continue
                elif hi[b] < np.inf:
                    target = hi[b]
                else:
                    continue
            else:
                if phase == 1 and v > hi[b] + feas_tol:
                    target = hi[b]
                elif phase == 1 and v < lo[b] - feas_tol:
                    continue
                elif lo[b] > -np.inf:
                    target = lo[b]
                else:
                    continue
            ratio = (target - v) / a
            if ratio < 0.0:
                ratio = 0.0
            ratios[i] = ratio
            targets[i] = target
            if ratio < theta:
                theta = ratio
        ent = nonbasic[q]
        span = hi[ent] - lo[ent]
        r = -1
        if theta < np.inf:
            tie = 1e-12 * max(1.0, theta)
            for i in range(m):
                if ratios[i] <= theta + tie:
                    if r < 0:
                        r = i
                    elif bland == 1 and basis[i] < basis[r]:
                        r = i
                    if bland == 0:
                        break
        flip = span < np.inf and (r < 0 or span <= ratios[r])
        if flip:
            step = span
        elif r >= 0:
            step = ratios[r]
        else:
            status = _UNBOUNDED if phase == 2 else _NUMERIC
            break

        if step > 0.0:
            for i in range(m):
                t = T[i, q]
                if t != 0.0:
                    x[basis[i]] -= t * qdir * step
            x[ent] += qdir * step
        if flip:
            x[ent] = hi[ent] if qdir > 0 else lo[ent]
        else:
            leave = basis[r]
            x[leave] = targets[r]
            _pivot(T, r, q)
            basis[r] = ent
            nonbasic[q] = leave

        iters += 1
        steps += 1
        if step <= 1e-12:
            degen += 1
            if degen > stall:
                bland = 1
        else:
            degen = 0
            bland = 0

    state[0] = phase
    state[1] = bland
    state[2] = degen
    state[3] = iters
    return status


def _refactor(A, x, lo, hi, basis, nonbasic, n):
    """Rebuild the condensed tableau and basic values from the basis alone."""
    m = A.shape[0]
    is_struct_basic = basis < n
    S = basis[is_struct_basic]                      # basic structurals
    pos_S = np.flatnonzero(is_struct_basic)         # their tableau rows
    L_rows = basis[~is_struct_basic] - n            # rows whose logical is basic
    pos_L = np.flatnonzero(~is_struct_basic)
    in_L = np.zeros(m, bool)
    in_L[L_rows] = True
    R = np.flatnonzero(~in_L)                       # rows whose logical is nonbasic
    k = S.size
    if R.size != k:
        raise LpError("basis dimension mismatch")

    nb_struct = nonbasic[nonbasic < n]
    pos_ns = np.flatnonzero(nonbasic < n)
    nb_logic_rows = nonbasic[nonbasic >= n] - n
    pos_nl = np.flatnonzero(nonbasic >= n)

    T = np.zeros((m, nonbasic.size))
    A_L = A[L_rows]
    if k:
        A_R = A[R]
        M = A_R[:, S]
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
        diag = np.abs(np.diag(lu))
        scale = max(1.0, float(np.abs(M).max()))
        bad = np.flatnonzero(diag <= 1e-11 * scale)
        if bad.size:
            j = int(bad[0])
            raise SingularBasisError(int(R[j]), int(S[j]))
        # one solve for basic values and both derivative blocks
        A_R_nb = A_R[:, nb_struct]
        E = np.zeros((k, nb_logic_rows.size))
        E[np.searchsorted(R, nb_logic_rows), np.arange(nb_logic_rows.size)] = 1.0
        rhs = np.column_stack((x[n + R] - A_R_nb @ x[nb_struct], A_R_nb, E))
        sol = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
        x[S] = sol[:, 0]
        # d x_S / d x_N; T holds its negative
        dS = np.empty((k, nonbasic.size))
        dS[:, pos_ns] = -sol[:, 1:1 + nb_struct.size]
        dS[:, pos_nl] = sol[:, 1 + nb_struct.size:]
        T[pos_S] = -dS
        A_LS = A_L[:, S]
        dL = A_LS @ dS
        dL[:, pos_ns] += A_L[:, nb_struct]
        T[pos_L] = -dL
    else:
        T[pos_L[:, None], pos_ns] = -A_L[:, nb_struct]
    x[n + L_rows] = A_L @ x[:n]
    return T


def solve_lp(instance, overrides=None, *, warm_start: LpResult | None = None, feas_tol=1e-7,
             opt_tol=1e-9, pivot_tol=1e-9, max_iter=None, stall_threshold=50,
             refactor_every=400) -> LpResult:
    """Solve the continuous relaxation of ``instance``.

    ``overrides`` maps column index -> (lb, ub) and must stay inside the
    original bounds (branch-and-bound uses it to fix binaries).
    ``warm_start`` is a previous result on the same constraint matrix; its
    final basis becomes the starting basis and phase 1 repairs any bound
    violations the new overrides cause.
    """
    A, row_lo, row_hi = instance.dense()
    m, n = A.shape
    c = np.asarray(instance.c, float)
    lb = np.array(instance.lb, float)
    ub = np.array(instance.ub, float)
    for j, (l, u) in (overrides or {}).items():
        if l < instance.lb[j] - 1e-12 or u > instance.ub[j] + 1e-12:
            raise ValueError(f"override for column {j} leaves its original bounds")
        lb[j], ub[j] = l, u
    if np.any(lb > ub + feas_tol):
        return _trivial_infeasible(n, m, lb)
    if m * max(n, 1) > MAX_TABLEAU_ENTRIES:
        raise LpError(f"tableau {m}x{n} exceeds the dense size ceiling")

    # fixed columns stay in the tableau; with lo == hi they can never enter
    lo = np.concatenate((lb, row_lo))
    hi = np.concatenate((ub, row_hi))
    cost = np.concatenate((c, np.zeros(m)))
    x = np.zeros(n + m)
    if warm_start is not None and warm_start.basis is not None:
        basis = warm_start.basis.copy()
        in_basis = np.zeros(n + m, bool)
        in_basis[basis] = True
        nonbasic = np.flatnonzero(~in_basis).astype(np.int64)
        x[:] = warm_start.values
        # nonbasic variables must sit on a bound of the new box
        v = nonbasic
        x[v] = np.where(np.isfinite(lo[v]) & (x[v] <= lo[v]), lo[v], x[v])
        x[v] = np.where(np.isfinite(hi[v]) & (x[v] >= hi[v]), hi[v], x[v])
        T = _refactor(A, x, lo, hi, basis, nonbasic, n)
    else:
        x[:n] = np.where(np.isfinite(lo[:n]), lo[:n], np.where(np.isfinite(hi[:n]), hi[:n], 0.0))
        x[n:] = A @ x[:n]
        basis = np.arange(n, n + m, dtype=np.int64)
        nonbasic = np.arange(n, dtype=np.int64)
        T = -A.copy()
    state = np.array([1, 0, 0, 0], dtype=np.int64)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    checks = 0
    while True:
        code = _iterate(T, x, lo, hi, cost, basis, nonbasic, state, feas_tol, opt_tol,
                        pivot_tol, max_iter, stall_threshold, refactor_every)
        T = _refactor(A, x, lo, hi, basis, nonbasic, n)
        if code == _CHECKPOINT:
            continue
        if code == _ITER_LIMIT:
            break
        if code == _NUMERIC:
            checks += 1
            if checks > 3:
                raise LpError("phase 1 found no blocking row after refactorization")
            continue
        # verify the claim on the fresh factorization
        xb = x[basis]
        infeasible = np.any(xb < lo[basis] - feas_tol) or np.any(xb > hi[basis] + feas_tol)
        if code == _OPTIMAL and infeasible:
            state[0] = 1
        elif code == _INFEASIBLE and not infeasible:
            state[0] = 2
        elif code == _OPTIMAL and _has_improving(T, x, lo, hi, cost, basis, nonbasic, opt_tol):
            pass
        else:
            break
        checks += 1
        if checks > 5:
            break

    status = _STATUS[code]
    x_out = x[:n].copy()
    objective = float(c @ x_out)
    d_nb = cost[nonbasic] - cost[basis] @ T
    duals = np.zeros(m)
    logical = nonbasic >= n
    duals[nonbasic[logical] - n] = d_nb[logical]
    red = c - A.T @ duals
    col_status = np.full(n, BASIC, dtype=np.int64)
    v = nonbasic[~logical]
    col_status[v] = np.select(
        [lo[v] == hi[v], x[v] == lo[v], x[v] == hi[v]], [FIXED, AT_LOWER, AT_UPPER], FREE
    )
    if status == "infeasible":
        objective = math.nan
    elif status == "unbounded":
        objective = -math.inf
    return LpResult(status, x_out, objective, int(state[3]), red, duals, col_status,
                    basis.copy(), x.copy())


def _has_improving(T, x, lo, hi, cost, basis, nonbasic, opt_tol) -> bool:
    d = cost[nonbasic] - cost[basis] @ T
    v = nonbasic
    return bool(np.any(((d < -opt_tol) & (x[v] < hi[v])) | ((d > opt_tol) & (x[v] > lo[v]))))


def _trivial_infeasible(n_all, m, lb) -> LpResult:
    return LpResult("infeasible", lb.copy(), math.nan, 0, np.zeros(n_all), np.zeros(m),
                    np.full(n_all, FIXED, dtype=np.int64))
