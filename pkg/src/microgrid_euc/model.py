"""Microgrid domain types and exact evaluation of costs, emissions and constraints.

Everything here works on the true quadratic curves; the linearized versions
used by the MIP live in :mod:`microgrid_euc.formulation`.  Units throughout:
kW, kWh, $, kgCO2e, one-hour periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

HOUR = 1.0  # period length in hours

SOC_CONVENTIONS = ("paper", "physical")


def _as_profile(values: Sequence[float], name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if any(not math.isfinite(v) for v in out):
        raise ValueError(f"{name}: non-finite value")
    return out


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Horizon:
    hours: int

    def __post_init__(self):
        if int(self.hours) != self.hours or self.hours < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.hours!r}")


@dataclass(frozen=True)
class ThermalGenerator:
    """Controllable fuel-burning unit with quadratic fuel and emission curves."""

    id: str
    p_min: float
    p_max: float
    min_up: int
    min_down: int
    startup_cost: float
    fuel_quad: float
    fuel_lin: float
    fuel_fix: float
    em_quad: float
    em_lin: float
    em_fix: float
    u0: int = 0
    init_elapsed: int = 0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError(f"{self.id}: need 0 <= p_min <= p_max")
        if self.min_up < 1 or self.min_down < 1:
            raise ValueError(f"{self.id}: minimum up/down times must be >= 1")
        if self.startup_cost < 0:
            raise ValueError(f"{self.id}: startup_cost must be >= 0")
        if self.fuel_quad < 0 or self.em_quad < 0:
            raise ValueError(f"{self.id}: quadratic coefficients must be >= 0 (convexity)")
        if self.u0 not in (0, 1):
            raise ValueError(f"{self.id}: u0 must be 0 or 1")
        if self.init_elapsed < 0:
            raise ValueError(f"{self.id}: init_elapsed must be >= 0")


@dataclass(frozen=True)
class VariableResource:
    id: str
    profile: tuple[float, ...]
    curtailable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "profile", _as_profile(self.profile, self.id))
        if any(v < 0 for v in self.profile):
            raise ValueError(f"{self.id}: profile values must be >= 0")


@dataclass(frozen=True)
class StorageResource:
    """Battery-like storage.  ``pi`` is injection (discharge), ``pw`` withdrawal (charge)."""

    id: str
    pi_min: float
    pi_max: float
    pw_min: float
    pw_max: float
    e_min: float
    e_max: float
    eta_i: float = 1.0
    eta_w: float = 1.0
    e0: float = 0.0
    soc_convention: str = "physical"
    e_final_min: float | None = None

    def __post_init__(self):
        if not 0 <= self.pi_min <= self.pi_max:
            raise ValueError(f"{self.id}: need 0 <= pi_min <= pi_max")
        if not 0 <= self.pw_min <= self.pw_max:
            raise ValueError(f"{self.id}: need 0 <= pw_min <= pw_max")
        if not self.e_min <= self.e0 <= self.e_max:
            raise ValueError(f"{self.id}: need e_min <= e0 <= e_max")
        for name in ("eta_i", "eta_w"):
            eta = getattr(self, name)
            if not 0 < eta <= 1:
                raise ValueError(f"{self.id}: {name} must lie in (0, 1], got {eta}")
        if self.soc_convention not in SOC_CONVENTIONS:
            raise ValueError(f"{self.id}: soc_convention must be one of {SOC_CONVENTIONS}")
        if self.e_final_min is not None and not self.e_min <= self.e_final_min <= self.e_max:
            raise ValueError(f"{self.id}: e_final_min outside [e_min, e_max]")

    def soc_coefficients(self) -> tuple[float, float]:
        """(charge multiplier, discharge multiplier) of the state-of-charge recursion."""
        if self.soc_convention == "paper":
            return 1.0 / self.eta_w, self.eta_i
        return self.eta_w, 1.0 / self.eta_i


@dataclass(frozen=True)
class GridInterface:
    tariff: tuple[float, ...]
    exchange_limit: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tariff", _as_profile(self.tariff, "tariff"))
        if any(v < 0 for v in self.tariff):
            raise ValueError("tariff values must be >= 0")
        if self.exchange_limit is not None and self.exchange_limit < 0:
            raise ValueError("exchange_limit must be >= 0")


@dataclass(frozen=True)
class ReservePolicy:
    r_min: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "r_min", _as_profile(self.r_min, "reserve"))
        if any(v < 0 for v in self.r_min):
            raise ValueError("reserve requirements must be >= 0")


@dataclass(frozen=True)
class EmissionPolicy:
    psi: float = 0.0
    kappa_max: float | None = None

    def __post_init__(self):
        if self.psi < 0:
            raise ValueError("carbon tax rate psi must be >= 0")
        if self.kappa_max is not None and self.kappa_max < 0:
            raise ValueError("kappa_max must be >= 0")


@dataclass(frozen=True)
class LoadProfile:
    demand: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "demand", _as_profile(self.demand, "load"))
        if any(v < 0 for v in self.demand):
            raise ValueError("load values must be >= 0")


@dataclass(frozen=True)
class MicrogridCase:
    horizon: Horizon
    tgrs: tuple[ThermalGenerator, ...]
    vers: tuple[VariableResource, ...]
    esrs: tuple[StorageResource, ...]
    grid: GridInterface
    reserve: ReservePolicy
    emission: EmissionPolicy
    load: LoadProfile
    name: str = "case"

    def __post_init__(self):
        for attr in ("tgrs", "vers", "esrs"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        H = self.horizon.hours
        lengths = {
            "tariff": len(self.grid.tariff),
            "reserve": len(self.reserve.r_min),
            "load": len(self.load.demand),
        }
        lengths.update({f"profile of {v.id}": len(v.profile) for v in self.vers})
        for what, n in lengths.items():
            if n != H:
                raise ValueError(f"{what} has length {n}, expected H={H}")
        ids = [r.id for r in (*self.tgrs, *self.vers, *self.esrs)]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate resource ids: {dupes}")

    @property
    def H(self) -> int:
        return self.horizon.hours

    def with_psi(self, psi: float) -> MicrogridCase:
        return replace(self, emission=replace(self.emission, psi=float(psi)))

    def without_cap(self) -> MicrogridCase:
        return replace(self, emission=replace(self.emission, kappa_max=None))


@dataclass(frozen=True)
class TgrDispatch:
    u: np.ndarray
    p: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen_array(self.u, int))
        object.__setattr__(self, "p", _frozen_array(self.p))
        object.__setattr__(self, "r", _frozen_array(self.r))


@dataclass(frozen=True)
class EsrDispatch:
    ui: np.ndarray
    uw: np.ndarray
    pi: np.ndarray
    pw: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        for name in ("ui", "uw"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), int))
        for name in ("pi", "pw", "E"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def net(self) -> np.ndarray:
        return net_storage_injection(self.pi, self.pw)


@dataclass(frozen=True)
class Schedule:
    """Hourly decisions for every resource.

    ``grid`` is the net import from the distribution system (positive = into
    the microgrid).  ``ver`` holds the VER injections actually scheduled; when
    a VER is missing from the mapping its forecast profile is assumed.
    """

    tgr: Mapping[str, TgrDispatch]
    esr: Mapping[str, EsrDispatch]
    grid: np.ndarray
    ver: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tgr", dict(self.tgr))
        object.__setattr__(self, "esr", dict(self.esr))
        object.__setattr__(self, "grid", _frozen_array(self.grid))
        object.__setattr__(self, "ver", {k: _frozen_array(v) for k, v in self.ver.items()})

    @classmethod
    def idle(cls, case: MicrogridCase) -> Schedule:
        """All units off, storage idle at its initial energy, no grid exchange."""
        H = case.H
        z = np.zeros(H)
        return cls(
            tgr={g.id: TgrDispatch(np.zeros(H, int), z, z) for g in case.tgrs},
            esr={
                s.id: EsrDispatch(np.zeros(H, int), np.zeros(H, int), z, z, np.full(H, s.e0))
                for s in case.esrs
            },
            grid=z,
        )

    def to_dict(self) -> dict:
        """Plain nested lists, stable key order (used for reports and comparisons)."""
        return {
            "tgr": {
                k: {"u": v.u.tolist(), "p": v.p.tolist(), "r": v.r.tolist()}
                for k, v in sorted(self.tgr.items())
            },
            "esr": {
                k: {
                    "ui": v.ui.tolist(),
                    "uw": v.uw.tolist(),
                    "pi": v.pi.tolist(),
                    "pw": v.pw.tolist(),
                    "E": v.E.tolist(),
                }
                for k, v in sorted(self.esr.items())
            },
            "grid": self.grid.tolist(),
            "ver": {k: v.tolist() for k, v in sorted(self.ver.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Schedule:
        return cls(
            tgr={k: TgrDispatch(v["u"], v["p"], v["r"]) for k, v in data["tgr"].items()},
            esr={
                k: EsrDispatch(v["ui"], v["uw"], v["pi"], v["pw"], v["E"])
                for k, v in data["esr"].items()
            },
            grid=data["grid"],
            ver=data.get("ver", {}),
        )


@dataclass(frozen=True)
class CostBreakdown:
    fuel: dict[str, float]
    startup: dict[str, float]
    grid_net: float
    carbon_tax: float
    emissions_per_tgr: dict[str, float]
    emissions_total: float
    objective_euc: float
    objective_cuc: float
    psi: float

    def to_dict(self) -> dict:
        return {
            "fuel": dict(sorted(self.fuel.items())),
            "startup": dict(sorted(self.startup.items())),
            "grid_net": self.grid_net,
            "carbon_tax": self.carbon_tax,
            "emissions_per_tgr": dict(sorted(self.emissions_per_tgr.items())),
            "emissions_total": self.emissions_total,
            "objective_euc": self.objective_euc,
            "objective_cuc": self.objective_cuc,
            "psi": self.psi,
        }


@dataclass(frozen=True)
class Violation:
    constraint: str
    hour: int | None
    resource: str | None
    magnitude: float

    def __str__(self):
        where = ", ".join(
            x for x in (self.resource, None if self.hour is None else f"h={self.hour}") if x
        )
        return f"{self.constraint} [{where}] by {self.magnitude:.3g}"


# ---------------------------------------------------------------------------
# exact cost and emission formulas


def _commitment_arrays(u, p) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    if u.shape != p.shape or u.ndim != 1:
        raise ValueError(f"length mismatch: u has shape {u.shape}, p has shape {p.shape}")
    if np.any((u != 0) & (u != 1)):
        raise ValueError("commitment values must be exactly 0 or 1")
    off = np.flatnonzero((u == 0) & (p > 0))
    if off.size:
        h = int(off[0]) + 1
        raise ValueError(f"p[{h}] = {p[off[0]]} > 0 while the unit is off")
    return u, p


def _quadratic_energy(quad, lin, fix, u, p) -> float:
    return float(np.sum((quad * p * p + lin * p + fix) * u) * HOUR)


def tgr_emissions(gen: ThermalGenerator, u, p) -> float:
    """Total kgCO2e of one thermal unit over the horizon (exact quadratic)."""
    u, p = _commitment_arrays(u, p)
    return _quadratic_energy(gen.em_quad, gen.em_lin, gen.em_fix, u, p)


def fuel_cost(gen: ThermalGenerator, u, p) -> float:
    u, p = _commitment_arrays(u, p)
    return _quadratic_energy(gen.fuel_quad, gen.fuel_lin, gen.fuel_fix, u, p)


def startup_cost(gen: ThermalGenerator, u) -> float:
    """Start-up charges; ``gen.u0`` supplies the status before the first hour."""
    u = np.asarray(u, dtype=float)
    prev = np.concatenate(([gen.u0], u[:-1]))
    return float(np.sum(gen.startup_cost * (1.0 - prev) * u))


def grid_exchange_cost(grid: GridInterface, pn_phi) -> float:
    """Net-metered exchange cost; exports (negative flow) earn the same tariff."""
    pn = np.asarray(pn_phi, dtype=float)
    lam = np.asarray(grid.tariff)
    if pn.shape != lam.shape:
        raise ValueError(f"length mismatch: {pn.shape[0]} exchange values vs {lam.shape[0]} tariff values")
    return float(np.sum(lam * pn) * HOUR)


def carbon_tax_payment(policy: EmissionPolicy, kappa: float) -> float:
    return policy.psi * kappa


def net_storage_injection(pi, pw) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    pw = np.asarray(pw, dtype=float)
    if pi.shape != pw.shape:
        raise ValueError(f"length mismatch: {pi.shape} vs {pw.shape}")
    return pi - pw


def _check_shape(case: MicrogridCase, schedule: Schedule) -> None:
    H = case.H
    want_tgr = {g.id for g in case.tgrs}
    want_esr = {s.id for s in case.esrs}
    if set(schedule.tgr) != want_tgr:
        raise ValueError(f"schedule TGRs {sorted(schedule.tgr)} do not match case {sorted(want_tgr)}")
    if set(schedule.esr) != want_esr:
        raise ValueError(f"schedule ESRs {sorted(schedule.esr)} do not match case {sorted(want_esr)}")
    unknown = set(schedule.ver) - {v.id for v in case.vers}
    if unknown:
        raise ValueError(f"schedule has unknown VERs {sorted(unknown)}")
    arrays = [("grid", schedule.grid)]
    for k, d in schedule.tgr.items():
        arrays += [(f"{k}.u", d.u), (f"{k}.p", d.p), (f"{k}.r", d.r)]
    for k, d in schedule.esr.items():
        arrays += [(f"{k}.{n}", getattr(d, n)) for n in ("ui", "uw", "pi", "pw", "E")]
    arrays += [(f"{k}.ver", v) for k, v in schedule.ver.items()]
    for name, arr in arrays:
        if arr.shape != (H,):
            raise ValueError(f"{name} has shape {arr.shape}, expected ({H},)")


def ver_injection(case: MicrogridCase, schedule: Schedule) -> dict[str, np.ndarray]:
    return {
        v.id: np.asarray(schedule.ver.get(v.id, v.profile), dtype=float) for v in case.vers
    }


def total_emissions(case: MicrogridCase, schedule: Schedule) -> float:
    _check_shape(case, schedule)
    return sum(
        tgr_emissions(g, schedule.tgr[g.id].u, schedule.tgr[g.id].p) for g in case.tgrs
    )


def evaluate_schedule(case: MicrogridCase, schedule: Schedule) -> CostBreakdown:
    """Exact cost breakdown of a schedule under both objectives."""
    _check_shape(case, schedule)
    fuel, start, emis = {}, {}, {}
    for g in case.tgrs:
        d = schedule.tgr[g.id]
        fuel[g.id] = fuel_cost(g, d.u, d.p)
        start[g.id] = startup_cost(g, d.u)
        emis[g.id] = tgr_emissions(g, d.u, d.p)
    kappa = sum(emis.values())
    grid_net = grid_exchange_cost(case.grid, schedule.grid)
    tax = carbon_tax_payment(case.emission, kappa)
    cuc = sum(fuel.values()) + sum(start.values()) + grid_net
    return CostBreakdown(
        fuel=fuel,
        startup=start,
        grid_net=grid_net,
        carbon_tax=tax,
        emissions_per_tgr=emis,
        emissions_total=kappa,
        objective_euc=cuc + tax,
        objective_cuc=cuc,
        psi=case.emission.psi,
    )


def soc_trajectory(esr: StorageResource, pi, pw) -> np.ndarray:
    """Stored energy at the end of each hour, starting from ``esr.e0``."""
    charge, discharge = esr.soc_coefficients()
    delta = charge * np.asarray(pw, float) - discharge * np.asarray(pi, float)
    return esr.e0 + np.cumsum(delta * HOUR)


def up_windows(H: int, T: int):
    """(h, nu) pairs of the minimum up/down windows, nu > h (nu == h is vacuous)."""
    for h in range(1, H + 1):
        for nu in range(h + 1, min(h - 1 + T, H) + 1):
            yield h, nu


def validate_schedule(case: MicrogridCase, schedule: Schedule, tol: float = 1e-6) -> list[Violation]:
    """Check every operating constraint; returns an empty list iff feasible within ``tol``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    _check_shape(case, schedule)
    H = case.H
    out: list[Violation] = []

    def flag(name, hour, res, amount):
        if amount > tol:
            out.append(Violation(name, hour, res, float(amount)))

    def binary(name, res, arr):
        for h, v in enumerate(arr, 1):
            if v not in (0, 1):
                out.append(Violation(name, h, res, float(min(abs(v), abs(v - 1)))))

    for g in case.tgrs:
        d = schedule.tgr[g.id]
        binary("binary_commitment", g.id, d.u)
        u = d.u.astype(float)
        for h in range(H):
            flag("generator_bounds", h + 1, g.id, max(u[h] * g.p_min - d.p[h], d.p[h] - u[h] * g.p_max))
            flag("reserve_headroom", h + 1, g.id, d.p[h] + d.r[h] - u[h] * g.p_max)
            flag("reserve_nonnegative", h + 1, g.id, -d.r[h])
        prev = np.concatenate(([float(g.u0)], u))
        for h, nu in up_windows(H, g.min_up):
            flag("min_uptime", h, g.id, prev[h] - prev[h - 1] - prev[nu])
        for h, nu in up_windows(H, g.min_down):
            flag("min_downtime", h, g.id, prev[h - 1] - prev[h] - (1.0 - prev[nu]))

    for s in case.esrs:
        d = schedule.esr[s.id]
        binary("binary_storage_mode", s.id, d.ui)
        binary("binary_storage_mode", s.id, d.uw)
        charge, discharge = s.soc_coefficients()
        e_prev = s.e0
        for h in range(H):
            flag("storage_exclusive", h + 1, s.id, d.ui[h] + d.uw[h] - 1)
            flag("storage_injection_bounds", h + 1, s.id,
                 max(d.ui[h] * s.pi_min - d.pi[h], d.pi[h] - d.ui[h] * s.pi_max))
            flag("storage_withdrawal_bounds", h + 1, s.id,
                 max(d.uw[h] * s.pw_min - d.pw[h], d.pw[h] - d.uw[h] * s.pw_max))
            expected = e_prev + charge * d.pw[h] - discharge * d.pi[h]
            flag("soc_balance", h + 1, s.id, abs(d.E[h] - expected))
            flag("soc_bounds", h + 1, s.id, max(s.e_min - d.E[h], d.E[h] - s.e_max))
            e_prev = d.E[h]
        if s.e_final_min is not None:
            flag("soc_terminal", H, s.id, s.e_final_min - d.E[-1])

    vers = ver_injection(case, schedule)
    for v in case.vers:
        lo = 0.0 if v.curtailable else np.asarray(v.profile)
        gap = np.maximum(lo - vers[v.id], vers[v.id] - np.asarray(v.profile))
        for h in range(H):
            flag("ver_dispatch", h + 1, v.id, gap[h])

    supply = schedule.grid.astype(float).copy()
    for d in schedule.tgr.values():
        supply += d.p
    for d in schedule.esr.values():
        supply += d.pi - d.pw
    for arr in vers.values():
        supply += arr
    load = np.asarray(case.load.demand)
    limit = case.grid.exchange_limit
    for h in range(H):
        flag("power_balance", h + 1, None, abs(supply[h] - load[h]))
        if limit is not None:
            flag("exchange_limit", h + 1, "grid", abs(schedule.grid[h]) - limit)
        reserve = sum(d.r[h] for d in schedule.tgr.values())
        flag("reserve_requirement", h + 1, None, case.reserve.r_min[h] - reserve)

    if case.emission.kappa_max is not None:
        kappa = sum(
            _quadratic_energy(g.em_quad, g.em_lin, g.em_fix,
                              schedule.tgr[g.id].u.astype(float), schedule.tgr[g.id].p)
            for g in case.tgrs
        )
        flag("emission_cap", None, None, kappa - case.emission.kappa_max)
    return out
