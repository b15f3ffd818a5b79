"""Assemble the unit-commitment MILP from a :class:`MicrogridCase`.

Quadratic fuel and emission curves are replaced by epigraph variables bounded
below by K secant (chord) cuts, so the linearized costs and the emission cap
are conservative over-approximations of the exact quadratics.

Column order: symbol family, then resource, then hour.  Row order: constraint
family, then hour, then resource (then chord index).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .model import (
    EsrDispatch,
    MicrogridCase,
    Schedule,
    TgrDispatch,
    soc_trajectory,
    up_windows,
)

log = logging.getLogger(__name__)

MODES = ("euc", "cuc")

# family order fixes the column layout
TGR_FAMILIES = ("u", "p", "r", "s", "t", "e")
ESR_FAMILIES = ("ui", "uw", "pi", "pw", "E")
BINARY_FAMILIES = frozenset({"u", "ui", "uw"})
GRID_ID = "grid"


@dataclass(frozen=True)
class PwlConfig:
    segments: int = 8

    def __post_init__(self):
        if int(self.segments) != self.segments or self.segments < 1:
            raise ValueError(f"segments must be a positive integer, got {self.segments!r}")


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[int, float], ...]
    sense: str  # "<=", "=", ">="
    rhs: float


@dataclass(frozen=True)
class MipInstance:
    """A minimization MILP with box bounds and binary columns."""

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    col_names: tuple[str, ...]
    rows: tuple[Row, ...]
    priority: np.ndarray | None = None  # integer branching class per column, higher first

    def __post_init__(self):
        n = len(self.col_names)
        prio = np.zeros(n) if self.priority is None else np.array(self.priority, dtype=float)
        if prio.shape != (n,) or np.any(prio != np.round(prio)):
            raise ValueError("priority must hold one integer per column")
        prio.setflags(write=False)
        object.__setattr__(self, "priority", prio)
        for name in ("c", "lb", "ub"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        integer = np.array(self.integer, dtype=bool)
        integer.setflags(write=False)
        object.__setattr__(self, "integer", integer)
        object.__setattr__(self, "rows", tuple(self.rows))
        for row in self.rows:
            if row.sense not in ("<=", "=", ">="):
                raise ValueError(f"row {row.name}: bad sense {row.sense!r}")
            for j, _ in row.terms:
                if not 0 <= j < n:
                    raise ValueError(f"row {row.name}: column {j} out of range")
        if np.any(integer & ((self.lb < 0) | (self.ub > 1))):
            raise ValueError("binary columns must have bounds within [0, 1]")

    @property
    def n_cols(self) -> int:
        return len(self.col_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @cached_property
    def _dense(self):
        m, n = self.n_rows, self.n_cols
        A = np.zeros((m, n))
        lo = np.full(m, -np.inf)
        hi = np.full(m, np.inf)
        for i, row in enumerate(self.rows):
            for j, a in row.terms:
                A[i, j] += a
            if row.sense in ("<=", "="):
                hi[i] = row.rhs
            if row.sense in (">=", "="):
                lo[i] = row.rhs
        for arr in (A, lo, hi):
            arr.setflags(write=False)
        return A, lo, hi

    def dense(self):
        """(A, row_lo, row_hi): dense constraint matrix and row activity bounds."""
        return self._dense

    def dump(self) -> str:
        """Canonical text form, one line per column then one line per row."""
        lines = []
        for j, name in enumerate(self.col_names):
            kind = "B" if self.integer[j] else "C"
            lines.append(f"col {name} {kind} obj={self.c[j]!r} lb={self.lb[j]!r} ub={self.ub[j]!r}")
        for row in self.rows:
            terms = " ".join(f"{self.col_names[j]}:{a!r}" for j, a in row.terms)
            lines.append(f"row {row.name} {row.sense} {row.rhs!r} | {terms}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class VariableMap:
    """(family, resource id, hour) -> column index, hours 1-based."""

    index: dict
    case: MicrogridCase = field(repr=False)
    mode: str = "euc"
    segments: int = 8

    def __getitem__(self, key) -> int:
        return self.index[key]

    def __contains__(self, key) -> bool:
        return key in self.index

    def __len__(self) -> int:
        return len(self.index)

    def series(self, family: str, rid: str) -> list[int]:
        return [self.index[(family, rid, h)] for h in range(1, self.case.H + 1)]

    def binary_columns(self) -> list[int]:
        return sorted(j for (fam, _, _), j in self.index.items() if fam in BINARY_FAMILIES)


def chord_cuts(quad: float, lin: float, p_lo: float, p_hi: float, K: int) -> list[tuple[float, float]]:
    """Secants of ``quad*p**2 + lin*p`` over K uniform pieces of [p_lo, p_hi].

    Returns (slope, intercept) pairs.  Their maximum over-approximates the curve
    on the interval, is exact at the breakpoints, and errs by at most
    ``quad * (width / K)**2 / 4``.
    """
    if quad < 0:
        raise ValueError("quadratic coefficient must be >= 0 (non-convex curve)")
    if p_lo > p_hi:
        raise ValueError("p_lo must not exceed p_hi")
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    xs = np.linspace(p_lo, p_hi, K + 1)
    cuts = []
    for a, b in zip(xs[:-1], xs[1:]):
        slope = quad * (a + b) + lin
        cuts.append((float(slope), float(-quad * a * b)))
    return cuts


def pwl_gap_bound(quad: float, p_lo: float, p_hi: float, K: int) -> float:
    return quad * ((p_hi - p_lo) / K) ** 2 / 4.0


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.c: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.index: dict = {}
        self.rows: list[Row] = []

    def col(self, family, rid, h, lb, ub, cost=0.0, binary=False):
        j = len(self.names)
        self.index[(family, rid, h)] = j
        self.names.append(f"{family}[{rid},{h}]")
        self.c.append(float(cost))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(binary)
        return j

    def row(self, name, terms: Iterable[tuple[int, float]], sense, rhs):
        merged: dict[int, float] = {}
        for j, a in terms:
            merged[j] = merged.get(j, 0.0) + float(a)
        terms = tuple((j, a) for j, a in merged.items() if a != 0.0)
        self.rows.append(Row(name, terms, sense, float(rhs)))


def _cut_bounds(cuts, fix, p_max):
    """Range a cut expression can take over 0 <= p <= p_max*u, 0 <= u <= 1."""
    vals = [0.0]
    for slope, icpt in cuts:
        vals += [icpt + fix, slope * p_max + icpt + fix]
    return min(vals), max(vals)


def build_uc_mip(case: MicrogridCase, mode: str = "euc", pwl: PwlConfig | None = None):
    """Build the EUC (``mode="euc"``) or CUC (``mode="cuc"``) MILP.

    Returns ``(MipInstance, VariableMap)``.  CUC drops the carbon-tax term and
    the emission cap; everything else is shared.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    pwl = pwl or PwlConfig()
    K = pwl.segments
    H = case.H
    hours = range(1, H + 1)
    psi = case.emission.psi if mode == "euc" else 0.0
    b = _Builder()

    if not case.tgrs and any(r > 0 for r in case.reserve.r_min):
        msg = "positive reserve requirement with no thermal units: instance is infeasible"
        warnings.warn(msg, stacklevel=2)
        log.warning(msg)

    fuel_cuts = {g.id: chord_cuts(g.fuel_quad, g.fuel_lin, g.p_min, g.p_max, K) for g in case.tgrs}
    em_cuts = {g.id: chord_cuts(g.em_quad, g.em_lin, g.p_min, g.p_max, K) for g in case.tgrs}

    # ---- columns
    for fam in TGR_FAMILIES:
        for g in case.tgrs:
            for h in hours:
                if fam == "u":
                    b.col("u", g.id, h, 0, 1, binary=True)
                elif fam == "p":
                    b.col("p", g.id, h, 0, g.p_max)
                elif fam == "r":
                    b.col("r", g.id, h, 0, g.p_max)
                elif fam == "s":
                    b.col("s", g.id, h, 0, 1, cost=g.startup_cost)
                elif fam == "t":
                    lo, hi = _cut_bounds(fuel_cuts[g.id], g.fuel_fix, g.p_max)
                    b.col("t", g.id, h, lo, hi, cost=1.0)
                else:
                    lo, hi = _cut_bounds(em_cuts[g.id], g.em_fix, g.p_max)
                    b.col("e", g.id, h, lo, hi, cost=psi)
    for fam in ESR_FAMILIES:
        for s in case.esrs:
            for h in hours:
                if fam in ("ui", "uw"):
                    b.col(fam, s.id, h, 0, 1, binary=True)
                elif fam == "pi":
                    b.col("pi", s.id, h, 0, s.pi_max)
                elif fam == "pw":
                    b.col("pw", s.id, h, 0, s.pw_max)
                else:
                    lo = s.e_min
                    if h == H and s.e_final_min is not None:
                        lo = max(lo, s.e_final_min)
                    b.col("E", s.id, h, lo, s.e_max)
    for v in case.vers:
        for h in hours:
            f = v.profile[h - 1]
            b.col("ver", v.id, h, 0.0 if v.curtailable else f, f)
    if case.grid.exchange_limit is not None:
        big = case.grid.exchange_limit
    else:
        big = (
            max(case.load.demand)
            + sum(g.p_max for g in case.tgrs)
            + sum(s.pi_max + s.pw_max for s in case.esrs)
            + max((sum(v.profile[h] for v in case.vers) for h in range(H)), default=0.0)
        )
    for h in hours:
        b.col("pn", GRID_ID, h, -big, big, cost=case.grid.tariff[h - 1])

    ix = b.index

    # ---- rows
    for h in hours:
        for g in case.tgrs:
            u, p, t = ix["u", g.id, h], ix["p", g.id, h], ix["t", g.id, h]
            for k, (slope, icpt) in enumerate(fuel_cuts[g.id]):
                b.row(f"fuel_cut[{g.id},{h},{k}]", [(t, 1.0), (p, -slope), (u, -(icpt + g.fuel_fix))], ">=", 0.0)
    for h in hours:
        for g in case.tgrs:
            u, p, e = ix["u", g.id, h], ix["p", g.id, h], ix["e", g.id, h]
            for k, (slope, icpt) in enumerate(em_cuts[g.id]):
                b.row(f"emission_cut[{g.id},{h},{k}]", [(e, 1.0), (p, -slope), (u, -(icpt + g.em_fix))], ">=", 0.0)
    for h in hours:
        for g in case.tgrs:
            terms = [(ix["s", g.id, h], 1.0), (ix["u", g.id, h], -1.0)]
            if h > 1:
                terms.append((ix["u", g.id, h - 1], 1.0))
                rhs = 0.0
            else:
                rhs = -float(g.u0)
            b.row(f"startup[{g.id},{h}]", terms, ">=", rhs)
    for h in hours:
        for g in case.tgrs:
            b.row(f"gen_min[{g.id},{h}]", [(ix["p", g.id, h], 1.0), (ix["u", g.id, h], -g.p_min)], ">=", 0.0)
    for h in hours:
        for g in case.tgrs:
            b.row(f"gen_max[{g.id},{h}]", [(ix["p", g.id, h], 1.0), (ix["u", g.id, h], -g.p_max)], "<=", 0.0)
    for h in hours:
        for g in case.tgrs:
            b.row(f"headroom[{g.id},{h}]",
                  [(ix["p", g.id, h], 1.0), (ix["r", g.id, h], 1.0), (ix["u", g.id, h], -g.p_max)], "<=", 0.0)

    def u_term(g, h, coef):
        # u[0] is data, not a column
        return ([(ix["u", g.id, h], coef)], 0.0) if h >= 1 else ([], coef * g.u0)

    for h in hours:
        for g in case.tgrs:
            for hh, nu in up_windows(H, g.min_up):
                if hh != h:
                    continue
                # u[h] - u[h-1] - u[nu] <= 0
                t1, c1 = u_term(g, h - 1, -1.0)
                b.row(f"min_up[{g.id},{h},{nu}]",
                      [(ix["u", g.id, h], 1.0), *t1, (ix["u", g.id, nu], -1.0)], "<=", -c1)
    for h in hours:
        for g in case.tgrs:
            for hh, nu in up_windows(H, g.min_down):
                if hh != h:
                    continue
                # u[h-1] - u[h] + u[nu] <= 1
                t1, c1 = u_term(g, h - 1, 1.0)
                b.row(f"min_down[{g.id},{h},{nu}]",
                      [*t1, (ix["u", g.id, h], -1.0), (ix["u", g.id, nu], 1.0)], "<=", 1.0 - c1)
    for h in hours:
        for s in case.esrs:
            b.row(f"esr_mode[{s.id},{h}]", [(ix["ui", s.id, h], 1.0), (ix["uw", s.id, h], 1.0)], "<=", 1.0)
    for h in hours:
        for s in case.esrs:
            pi, ui = ix["pi", s.id, h], ix["ui", s.id, h]
            b.row(f"inj_min[{s.id},{h}]", [(pi, 1.0), (ui, -s.pi_min)], ">=", 0.0)
            b.row(f"inj_max[{s.id},{h}]", [(pi, 1.0), (ui, -s.pi_max)], "<=", 0.0)
    for h in hours:
        for s in case.esrs:
            pw, uw = ix["pw", s.id, h], ix["uw", s.id, h]
            b.row(f"wd_min[{s.id},{h}]", [(pw, 1.0), (uw, -s.pw_min)], ">=", 0.0)
            b.row(f"wd_max[{s.id},{h}]", [(pw, 1.0), (uw, -s.pw_max)], "<=", 0.0)
    for h in hours:
        for s in case.esrs:
            charge, discharge = s.soc_coefficients()
            terms = [(ix["E", s.id, h], 1.0), (ix["pw", s.id, h], -charge), (ix["pi", s.id, h], discharge)]
            if h > 1:
                terms.append((ix["E", s.id, h - 1], -1.0))
                rhs = 0.0
            else:
                rhs = s.e0
            b.row(f"soc[{s.id},{h}]", terms, "=", rhs)
    for h in hours:
        terms = [(ix["p", g.id, h], 1.0) for g in case.tgrs]
        terms += [(ix["ver", v.id, h], 1.0) for v in case.vers]
        for s in case.esrs:
            terms += [(ix["pi", s.id, h], 1.0), (ix["pw", s.id, h], -1.0)]
        terms.append((ix["pn", GRID_ID, h], 1.0))
        b.row(f"balance[{h}]", terms, "=", case.load.demand[h - 1])
    for h in hours:
        b.row(f"reserve[{h}]", [(ix["r", g.id, h], 1.0) for g in case.tgrs], ">=", case.reserve.r_min[h - 1])
    if mode == "euc" and case.emission.kappa_max is not None:
        b.row("emission_cap", [(ix["e", g.id, h], 1.0) for g in case.tgrs for h in hours],
              "<=", case.emission.kappa_max)

    # commitment decisions move the bound; storage mode binaries rarely do
    priority = [1 if name.startswith("u[") else 0 for name in b.names]
    inst = MipInstance(
        c=b.c, lb=b.lb, ub=b.ub, integer=b.integer, col_names=tuple(b.names), rows=tuple(b.rows),
        priority=priority,
    )
    return inst, VariableMap(dict(ix), case, mode, K)


class ExtractionError(ValueError):
    pass


def extract_schedule(instance: MipInstance, varmap: VariableMap, x, *,
                     int_tol: float = 1e-6, bound_tol: float = 1e-6) -> Schedule:
    """Turn a MIP solution vector into a :class:`Schedule`.

    Binaries are rounded; continuous values tied to a binary that rounds to 0
    are snapped to exactly 0; stored energy is recomputed from the charge and
    discharge series so the state-of-charge recursion holds exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n_cols,):
        raise ExtractionError(f"solution has {x.size} values, instance has {instance.n_cols} columns")
    viol = np.maximum(instance.lb - x, x - instance.ub)
    j = int(np.argmax(viol)) if viol.size else 0
    if viol.size and viol[j] > bound_tol:
        raise ExtractionError(f"column {instance.col_names[j]} = {x[j]!r} violates its bounds by {viol[j]:.3g}")
    xi = x.copy()
    for j in np.flatnonzero(instance.integer):
        frac = abs(x[j] - round(x[j]))
        if frac > int_tol:
            raise ExtractionError(f"binary column {instance.col_names[j]} = {x[j]!r} is fractional")
        xi[j] = float(round(x[j]))

    case = varmap.case

    def series(fam, rid):
        return xi[varmap.series(fam, rid)]

    def snap(values, on):
        return np.where(on == 0, 0.0, values)

    tgr = {}
    for g in case.tgrs:
        u = series("u", g.id).astype(int)
        p = snap(np.clip(series("p", g.id), 0.0, g.p_max), u)
        r = snap(np.clip(series("r", g.id), 0.0, None), u)
        tgr[g.id] = TgrDispatch(u, p, r)
    esr = {}
    for s in case.esrs:
        ui = series("ui", s.id).astype(int)
        uw = series("uw", s.id).astype(int)
        pi = snap(np.clip(series("pi", s.id), 0.0, s.pi_max), ui)
        pw = snap(np.clip(series("pw", s.id), 0.0, s.pw_max), uw)
        esr[s.id] = EsrDispatch(ui, uw, pi, pw, soc_trajectory(s, pi, pw))
    ver = {v.id: series("ver", v.id) for v in case.vers if v.curtailable}
    return Schedule(tgr=tgr, esr=esr, grid=series("pn", GRID_ID), ver=ver)
