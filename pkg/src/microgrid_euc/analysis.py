"""Run EUC/CUC on a case, bill carbon ex post, and sweep the tax rate."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from .bnb import BnbOptions, MipResult, solve_mip
from .caseio import case_checksum, load_sweep_reference
from .formulation import PwlConfig, build_uc_mip, extract_schedule, pwl_gap_bound
from .model import CostBreakdown, MicrogridCase, Schedule, evaluate_schedule, validate_schedule

HOUR = 1.0  # time step in hours


class SweepError(RuntimeError):
    pass


@dataclass
class RunReport:
    mode: str
    psi: float
    status: str
    schedule: Schedule | None
    costs: CostBreakdown | None
    mip: MipResult
    tgr_energy_kwh: dict[str, float]
    emissions_kg: float
    case_name: str = "case"
    case_checksum: str = ""
    pwl_segments: int = 8
    wall_time: float = field(default=0.0, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def carbon_tax(self) -> float:
        """Carbon payment at ``psi``; for CUC this is the ex-post bill."""
        return math.nan if self.costs is None else self.costs.carbon_tax

    @property
    def total_cost(self) -> float:
        """Operating cost plus carbon payment, whichever mode chose the schedule."""
        return math.nan if self.costs is None else self.costs.objective_euc

    def to_dict(self) -> dict:
        # wall time is left out so identical runs serialize identically
        return {
            "case": {"name": self.case_name, "sha256": self.case_checksum},
            "mode": self.mode,
            "psi": self.psi,
            "pwl_segments": self.pwl_segments,
            "status": self.status,
            "solver": self.mip.summary(),
            "total_cost_usd": self.total_cost,
            "carbon_tax_usd": self.carbon_tax,
            "emissions_kg": self.emissions_kg,
            "tgr_energy_kwh": dict(sorted(self.tgr_energy_kwh.items())),
            "costs": None if self.costs is None else self.costs.to_dict(),
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
        }


@dataclass(frozen=True)
class SweepRow:
    psi: float
    euc_total_usd: float
    cuc_total_usd: float
    differential_cents: float
    euc_tgr_kwh: float
    cuc_tgr_kwh: float
    euc_emissions_kg: float
    cuc_emissions_kg: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def objective_gap_bound(case: MicrogridCase, schedule: Schedule, mode: str, segments: int) -> float:
    """Largest possible excess of the chord objective over the exact one for ``schedule``."""
    psi = case.emission.psi if mode == "euc" else 0.0
    total = 0.0
    for g in case.tgrs:
        per_hour = pwl_gap_bound(g.fuel_quad, g.p_min, g.p_max, segments)
        per_hour += psi * pwl_gap_bound(g.em_quad, g.p_min, g.p_max, segments)
        total += per_hour * float(schedule.tgr[g.id].u.sum())
    return total


def run_case(case: MicrogridCase, mode: str = "euc", *, pwl: PwlConfig | None = None,
             options: BnbOptions | None = None) -> RunReport:
    """Build, solve, extract and evaluate one mode on ``case``.

    Costs are recomputed from the extracted schedule with the exact quadratic
    curves; CUC schedules are billed the carbon tax at ``case.emission.psi``.
    """
    pwl = pwl or PwlConfig()
    inst, varmap = build_uc_mip(case, mode, pwl)
    # CUC carries no cap, so its incumbents are not held to one
    checked = case.without_cap() if mode == "cuc" else case

    def accept(x) -> bool:
        try:
            sched = extract_schedule(inst, varmap, x)
        except ValueError:
            return False
        return not validate_schedule(checked, sched)

    start = time.perf_counter()
    result = solve_mip(inst, options, accept=accept)
    elapsed = time.perf_counter() - start

    schedule = costs = None
    energy: dict[str, float] = {}
    kappa = math.nan
    if result.x is not None:
        schedule = extract_schedule(inst, varmap, result.x)
        costs = evaluate_schedule(case, schedule)
        energy = {g.id: float(schedule.tgr[g.id].p.sum() * HOUR) for g in case.tgrs}
        kappa = costs.emissions_total
    return RunReport(
        mode=mode,
        psi=case.emission.psi,
        status=result.status,
        schedule=schedule,
        costs=costs,
        mip=result,
        tgr_energy_kwh=energy,
        emissions_kg=kappa,
        case_name=case.name,
        case_checksum=case_checksum(case),
        pwl_segments=pwl.segments,
        wall_time=elapsed,
    )


def expost_tax(report: RunReport, psi: float) -> float:
    """Carbon payment ``psi * emissions`` for an already-dispatched schedule."""
    if psi < 0:
        raise ValueError("psi must be >= 0")
    return psi * report.emissions_kg


def _check_psi(psi_values: Sequence[float]) -> list[float]:
    values = [float(p) for p in psi_values]
    if not values:
        raise ValueError("psi_values must not be empty")
    if any(p < 0 or not math.isfinite(p) for p in values):
        raise ValueError("psi values must be finite and >= 0")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("psi values must be strictly increasing")
    return values


def default_psi_grid(start: float = 0.009, stop: float = 0.139, step: float = 0.010) -> list[float]:
    """Inclusive grid, rounded so that 0.009 + 13 * 0.010 lands exactly on 0.139."""
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def sweep_carbon_tax(case: MicrogridCase, psi_values: Sequence[float], *,
                     pwl: PwlConfig | None = None, options: BnbOptions | None = None,
                     reports: list | None = None) -> list[SweepRow]:
    """CUC once, EUC per ``psi``; rows come back in ``psi`` order.

    When ``reports`` is a list, the underlying :class:`RunReport` objects are
    appended to it (CUC first).
    """
    values = _check_psi(psi_values)
    cuc = run_case(case, "cuc", pwl=pwl, options=options)
    if not cuc.optimal:
        raise SweepError(f"CUC solve ended with status {cuc.status}")
    if reports is not None:
        reports.append(cuc)
    cuc_tgr = sum(cuc.tgr_energy_kwh.values())
    rows = []
    for psi in values:
        euc = run_case(case.with_psi(psi), "euc", pwl=pwl, options=options)
        if not euc.optimal:
            raise SweepError(f"EUC solve at psi={psi!r} ended with status {euc.status}")
        if reports is not None:
            reports.append(euc)
        cuc_total = cuc.costs.objective_cuc + expost_tax(cuc, psi)
        rows.append(SweepRow(
            psi=psi,
            euc_total_usd=euc.total_cost,
            cuc_total_usd=cuc_total,
            differential_cents=100.0 * (cuc_total - euc.total_cost),
            euc_tgr_kwh=sum(euc.tgr_energy_kwh.values()),
            cuc_tgr_kwh=cuc_tgr,
            euc_emissions_kg=euc.emissions_kg,
            cuc_emissions_kg=cuc.emissions_kg,
        ))
    return rows


def sweep_violations(rows: Sequence[SweepRow], abs_gap: float = 1e-6,
                     pwl_slack: float = 0.0) -> list[str]:
    """Shape checks on a finished sweep; an empty list means all hold.

    Emissions may rise by at most ``2*abs_gap/(psi2 - psi1)`` kg between
    neighbours and the differential may fall by at most ``2*abs_gap`` dollars.
    Dominance of EUC over billed CUC allows ``2*(abs_gap + pwl_slack)``.
    """
    out = []
    dom = 2.0 * (abs_gap + pwl_slack)
    for r in rows:
        if r.euc_total_usd > r.cuc_total_usd + dom:
            out.append(f"psi={r.psi!r}: euc total exceeds billed cuc total by "
                       f"{r.euc_total_usd - r.cuc_total_usd:.3e}")
    for a, b in zip(rows, rows[1:]):
        tol = 2.0 * abs_gap / (b.psi - a.psi)
        if b.euc_emissions_kg > a.euc_emissions_kg + tol:
            out.append(f"psi={b.psi!r}: euc emissions rose by {b.euc_emissions_kg - a.euc_emissions_kg:.3e} kg")
        if b.differential_cents < a.differential_cents - 100.0 * 2.0 * abs_gap:
            out.append(f"psi={b.psi!r}: differential fell by "
                       f"{a.differential_cents - b.differential_cents:.3e} cents")
    if len({r.cuc_tgr_kwh for r in rows}) > 1:
        out.append("cuc_tgr_kwh varies across the sweep")
    return out


def reference_comparison(rows: Sequence[SweepRow]) -> list[dict]:
    """Pair recomputed sweep rows with the bundled reference curves by ``psi``."""
    ref = {round(r["psi"], 9): r for r in load_sweep_reference()}
    out = []
    for row in rows:
        r = ref.get(round(row.psi, 9))
        out.append({
            "psi": row.psi,
            "differential_cents": row.differential_cents,
            "reference_differential_cents": None if r is None else r["differential_cents"],
            "euc_tgr_kwh": row.euc_tgr_kwh,
            "reference_euc_tgr_kwh": None if r is None else r["euc_tgr_kwh"],
            "cuc_tgr_kwh": row.cuc_tgr_kwh,
            "reference_cuc_tgr_kwh": None if r is None else r["cuc_tgr_kwh"],
        })
    return out
