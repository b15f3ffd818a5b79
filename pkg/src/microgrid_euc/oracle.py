"""Brute-force reference solver for small horizons.

Every commitment/storage-mode pattern that satisfies the minimum up/down
windows and storage exclusivity is fixed in turn and the remaining LP is
solved.  The minimum over patterns certifies branch-and-bound results.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .formulation import PwlConfig, build_uc_mip, extract_schedule
from .model import (
    EmissionPolicy,
    GridInterface,
    Horizon,
    LoadProfile,
    MicrogridCase,
    ReservePolicy,
    Schedule,
    StorageResource,
    ThermalGenerator,
    VariableResource,
    up_windows,
)
from .simplex import LpError, solve_lp

MAX_ORACLE_BINARIES = 24


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class CommitmentPattern:
    """Binary decisions per resource, each a tuple over hours 1..H."""

    u: dict[str, tuple[int, ...]]
    ui: dict[str, tuple[int, ...]]
    uw: dict[str, tuple[int, ...]]

    def bits(self) -> tuple[int, ...]:
        out: list[int] = []
        for fam in (self.u, self.ui, self.uw):
            for key in fam:
                out.extend(fam[key])
        return tuple(out)


@dataclass
class OracleReport:
    objective: float
    schedule: Schedule | None
    pattern: CommitmentPattern | None
    patterns_enumerated: int
    patterns_feasible: int


def _commitment_ok(bits, u0: int, H: int, min_up: int, min_down: int) -> bool:
    prev = (u0, *bits)
    for h, nu in up_windows(H, min_up):
        if prev[h] - prev[h - 1] - prev[nu] > 0:
            return False
    for h, nu in up_windows(H, min_down):
        if prev[h - 1] - prev[h] - (1 - prev[nu]) > 0:
            return False
    return True


def enumerate_commitments(case: MicrogridCase) -> Iterator[CommitmentPattern]:
    """Yield every admissible binary assignment in lexicographic bit order."""
    H = case.H
    n_bin = H * (len(case.tgrs) + 2 * len(case.esrs))
    if n_bin > MAX_ORACLE_BINARIES:
        raise OracleError(f"{n_bin} binaries exceeds the enumeration guard of {MAX_ORACLE_BINARIES}")

    per_tgr = [
        [b for b in itertools.product((0, 1), repeat=H) if _commitment_ok(b, g.u0, H, g.min_up, g.min_down)]
        for g in case.tgrs
    ]
    # per hour: idle, inject or withdraw (never both)
    modes = [(0, 0), (0, 1), (1, 0)]
    per_esr = []
    for _ in case.esrs:
        seqs = [
            (tuple(m[0] for m in combo), tuple(m[1] for m in combo))
            for combo in itertools.product(modes, repeat=H)
        ]
        per_esr.append(sorted(seqs))

    tgr_ids = [g.id for g in case.tgrs]
    esr_ids = [s.id for s in case.esrs]
    for tgr_combo in itertools.product(*per_tgr):
        for esr_combo in itertools.product(*per_esr):
            yield CommitmentPattern(
                u=dict(zip(tgr_ids, tgr_combo)),
                ui={sid: seq[0] for sid, seq in zip(esr_ids, esr_combo)},
                uw={sid: seq[1] for sid, seq in zip(esr_ids, esr_combo)},
            )


def oracle_solve(case: MicrogridCase, mode: str = "euc", fine_K: int = 64) -> OracleReport:
    """Exhaustive minimum of the MILP built with ``fine_K`` chord segments."""
    inst, vm = build_uc_mip(case, mode, PwlConfig(fine_K))
    best = math.inf
    best_x = best_pattern = None
    enumerated = feasible = 0
    prev = None
    for pattern in enumerate_commitments(case):
        enumerated += 1
        overrides = {}
        for fam in ("u", "ui", "uw"):
            for rid, seq in getattr(pattern, fam).items():
                for h, bit in enumerate(seq, 1):
                    overrides[vm[fam, rid, h]] = (float(bit), float(bit))
        try:
            lp = solve_lp(inst, overrides, warm_start=prev)
        except LpError as err:
            raise OracleError(f"pattern {pattern.bits()}: {err}") from err
        if lp.status == "infeasible":
            continue
        prev = lp
        if lp.status != "optimal":
            raise OracleError(f"pattern {pattern.bits()}: LP status {lp.status}")
        feasible += 1
        if lp.objective < best:
            best, best_x, best_pattern = lp.objective, lp.x, pattern
    schedule = None if best_x is None else extract_schedule(inst, vm, best_x)
    return OracleReport(best, schedule, best_pattern, enumerated, feasible)


# nominal single-TGR / single-ESR parameters around which random cases are drawn
_NOMINAL_TGR = dict(p_min=5.0, p_max=50.0, startup_cost=1.0, fuel_quad=0.0012, fuel_lin=0.208,
                    fuel_fix=3.2, em_quad=0.00303, em_lin=0.53, em_fix=8.09)
_NOMINAL_ESR = dict(pi_max=12.0, pw_max=12.0, e_max=30.0)
_NOMINAL_TARIFF = (0.0155, 0.2197)


def random_case(rng: np.random.Generator, H: int, *, reserve: bool = True, psi: float = 0.07) -> MicrogridCase:
    """One TGR, one ESR and one PV-like VER with coefficients within ±50% of nominal."""
    def jitter(v):
        return float(v * rng.uniform(0.5, 1.5))

    tgr = {k: jitter(v) for k, v in _NOMINAL_TGR.items()}
    if tgr["p_min"] > tgr["p_max"]:
        tgr["p_min"], tgr["p_max"] = tgr["p_max"], tgr["p_min"]
    gen = ThermalGenerator(
        id="g1",
        min_up=int(rng.integers(1, 4)),
        min_down=int(rng.integers(1, 4)),
        u0=int(rng.integers(0, 2)),
        **tgr,
    )
    esr = StorageResource(
        id="s1",
        pi_min=0.0,
        pi_max=jitter(_NOMINAL_ESR["pi_max"]),
        pw_min=0.0,
        pw_max=jitter(_NOMINAL_ESR["pw_max"]),
        e_min=0.0,
        e_max=jitter(_NOMINAL_ESR["e_max"]),
        eta_i=float(rng.uniform(0.85, 1.0)),
        eta_w=float(rng.uniform(0.85, 1.0)),
    )
    load = rng.uniform(8.0, 45.0, H)
    pv = np.clip(rng.uniform(-5.0, 20.0, H), 0.0, None)
    tariff = [jitter(_NOMINAL_TARIFF[int(rng.integers(0, 2))]) for _ in range(H)]
    r_min = (0.15 * load) if reserve else np.zeros(H)
    return MicrogridCase(
        horizon=Horizon(H),
        tgrs=(gen,),
        vers=(VariableResource("pv", [round(float(v), 6) for v in pv]),),
        esrs=(esr,),
        grid=GridInterface(tariff),
        reserve=ReservePolicy([float(v) for v in r_min]),
        emission=EmissionPolicy(jitter(psi)),
        load=LoadProfile([float(v) for v in load]),
        name=f"random_h{H}",
    )


def horizon_plan(count: int) -> list[int]:
    """Horizons for a batch of ``count`` cases, mostly short to bound enumeration time."""
    if count < 1:
        raise ValueError("count must be positive")
    n6 = max(1, count // 52) if count >= 4 else 0
    n5 = max(1, 3 * count // 52) if count >= 3 else 0
    n4 = max(1, 16 * count // 52) if count >= 2 else 0
    n3 = count - n4 - n5 - n6
    return [3] * n3 + [4] * n4 + [5] * n5 + [6] * n6


def random_cases(seed: int, count: int) -> list[MicrogridCase]:
    """Seeded batch; every other case has zero reserve so the unit may stay off."""
    rng = np.random.default_rng(seed)
    return [random_case(rng, H, reserve=i % 2 == 0) for i, H in enumerate(horizon_plan(count))]
