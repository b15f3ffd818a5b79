"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from conftest import assert_certificate, lp
from microgrid_euc import simplex
from microgrid_euc.analysis import (
    default_psi_grid,
    objective_gap_bound,
    run_case,
    sweep_carbon_tax,
    sweep_violations,
)
from microgrid_euc.bnb import BnbOptions, solve_mip
from microgrid_euc.caseio import load_reference_schedule, paper_case, render_report, sweep_csv
from microgrid_euc.formulation import PwlConfig, build_uc_mip
from microgrid_euc.model import validate_schedule
from microgrid_euc.oracle import oracle_solve, random_cases

pytestmark = pytest.mark.slow

SEED, N_CASES, K_CHECK = 20240611, 52, 8
OPTS = BnbOptions(abs_gap=1e-6, rel_gap=1e-6)


def oracle_pass():
    """Every random case in both modes: oracle and branch-and-bound side by side."""
    records, start = [], time.perf_counter()
    for i, case in enumerate(random_cases(SEED, N_CASES)):
        for mode in ("euc", "cuc"):
            ref = oracle_solve(case, mode, K_CHECK)
            rep = run_case(case, mode, pwl=PwlConfig(K_CHECK), options=OPTS)
            records.append((i, case, mode, ref, rep))
    return records, time.perf_counter() - start


def sweep_pass(case):
    psi = default_psi_grid()
    euc_reports = []
    rows = sweep_carbon_tax(case, psi, pwl=PwlConfig(8), options=OPTS, reports=euc_reports)
    euc_reports = euc_reports[1:]
    cuc_reports = [run_case(case.with_psi(p), "cuc", pwl=PwlConfig(8), options=OPTS) for p in psi]
    k64 = run_case(case, "euc", pwl=PwlConfig(64), options=OPTS)
    k8 = run_case(case, "euc", pwl=PwlConfig(8), options=OPTS)
    return dict(psi=psi, rows=rows, euc=euc_reports, cuc=cuc_reports, k64=k64, k8=k8)


def transcript(oracle_records, sweep):
    parts = [f"{i} {mode} {ref.objective!r}\n{render_report(rep)}" for i, _, mode, ref, rep in oracle_records]
    parts += [render_report(r) for r in sweep["euc"] + sweep["cuc"] + [sweep["k64"], sweep["k8"]]]
    parts.append(sweep_csv(sweep["rows"]))
    return "".join(parts)


@pytest.fixture(scope="module")
def case():
    # the shipped cap is below the least attainable emissions; see the infeasibility test
    return paper_case().without_cap()


@pytest.fixture(scope="module")
def oracle_run():
    return oracle_pass()


@pytest.fixture(scope="module")
def sweep(case):
    return sweep_pass(case)


def test_criterion_1_oracle_equivalence(oracle_run, verdict):
    records, elapsed = oracle_run
    worst, bad = 0.0, []
    for i, _, mode, ref, rep in records:
        diff = abs(rep.mip.objective - ref.objective)
        worst = max(worst, diff / (1 + abs(ref.objective)))
        if not rep.optimal or diff > 1e-6 * (1 + abs(ref.objective)):
            bad.append(f"case {i} {mode}")
    hs = sorted({c.H for _, c, _, _, _ in records})
    ok = not bad and elapsed < 120 and len(records) >= 100 and hs == [3, 4, 5, 6]
    verdict(1, ok, f"{len(records) - len(bad)}/{len(records)} agree, worst rel diff {worst:.2e}, "
                   f"H={hs}, {elapsed:.1f}s (limit 120s) {bad[:5]}")


def test_criterion_2_bundled_solves(case, sweep, verdict):
    problems = []
    for rep in sweep["euc"] + sweep["cuc"]:
        tag = f"{rep.mode}@{rep.psi}"
        if not rep.optimal or rep.mip.gap > 1e-6 or rep.wall_time >= 60:
            problems.append(f"{tag}: {rep.status} gap={rep.mip.gap:.1e} t={rep.wall_time:.1f}s")
            continue
        if validate_schedule(case, rep.schedule, 1e-6):
            problems.append(f"{tag}: validation")
        u = rep.schedule.tgr["gamma1"].u
        starts = int(u[0] == 1) + int(np.sum((u[1:] == 1) & (u[:-1] == 0)))
        if not np.all(u == 1) or starts != 1 or rep.costs.startup["gamma1"] != 1.0:
            problems.append(f"{tag}: commitment")
    slowest = max(r.wall_time for r in sweep["euc"] + sweep["cuc"])
    verdict(2, not problems, f"28 solves optimal/valid/always-on, slowest {slowest:.2f}s {problems[:5]}")


def test_criterion_3_cuc_invariance(sweep, verdict):
    dumps = {json.dumps(r.schedule.to_dict(), sort_keys=True) for r in sweep["cuc"]}
    kwh = {r.tgr_energy_kwh["gamma1"] for r in sweep["cuc"]}
    verdict(3, len(dumps) == 1 and len(kwh) == 1,
            f"{len(dumps)} distinct CUC schedule(s) over {len(sweep['cuc'])} rates, tgr energy {sorted(kwh)} kWh")


def test_criterion_4_dominance(sweep, verdict):
    rows = sweep["rows"]
    over = [r.psi for r in rows if r.euc_total_usd > r.cuc_total_usd + 2e-6]
    last = rows[-1]
    ok = not over and last.differential_cents > 0
    verdict(4, ok, f"dominance violations at {over}; differential at psi={last.psi} is "
                   f"{last.differential_cents:.6g} cents (must be > 0)")


def test_criterion_5_monotone(sweep, verdict):
    msgs = [m for m in sweep_violations(sweep["rows"], OPTS.abs_gap) if "rose" in m or "fell" in m]
    rows = sweep["rows"]
    verdict(5, not msgs, f"differential {rows[0].differential_cents:.4g}..{rows[-1].differential_cents:.4g} "
                         f"cents, emissions {rows[0].euc_emissions_kg:.4f}..{rows[-1].euc_emissions_kg:.4f} kg "
                         f"{msgs[:3]}")


def test_criterion_6_pwl_convergence(case, sweep, verdict):
    k8, k64 = sweep["k8"], sweep["k64"]
    bound = objective_gap_bound(case, k8.schedule, "euc", 8)
    diff = abs(k64.mip.objective - k8.mip.objective)
    ok = k8.optimal and k64.optimal and diff <= bound
    verdict(6, ok, f"|K64 - K8| = {diff:.6f} <= bound {bound:.6f}")


def test_criterion_7_exact_invariants(case, sweep, oracle_run, verdict):
    reports = [(case.with_psi(r.psi), r) for r in sweep["euc"] + sweep["cuc"] + [sweep["k64"]]]
    reports += [(c, rep) for _, c, _, _, rep in oracle_run[0]]
    soc = bal = ident = 0.0
    for c, rep in reports:
        s = rep.schedule
        for esr in c.esrs:
            d = s.esr[esr.id]
            lhs = d.E[-1] - esr.e0
            rhs = float(np.sum(esr.eta_w * d.pw - d.pi / esr.eta_i))
            soc = max(soc, abs(lhs - rhs))
        supply = sum(s.tgr[g.id].p for g in c.tgrs) + s.grid
        supply = supply + sum(s.esr[e.id].pi - s.esr[e.id].pw for e in c.esrs)
        supply = supply + sum(np.asarray(v.profile) for v in c.vers)
        bal = max(bal, float(np.max(np.abs(supply - np.asarray(c.load.demand)))))
        k = rep.costs
        ident = max(ident, abs(k.objective_euc - k.objective_cuc - c.emission.psi * k.emissions_total))
    ok = soc <= 1e-9 and bal <= 1e-6 and ident <= 1e-9
    verdict(7, ok, f"{len(reports)} schedules: soc {soc:.1e} kWh, balance {bal:.1e} kW, identity {ident:.1e} $")


def test_criterion_8_reference_balance(case, verdict):
    sched = load_reference_schedule(case, "euc")
    bad = [v for v in validate_schedule(case, sched, 1e-3) if v.constraint == "power_balance"]
    verdict(8, not bad, f"{24 - len({v.hour for v in bad})}/24 hours balance at 1e-3 kW {bad[:3]}")


def test_criterion_9_lp_suite(case, monkeypatch, verdict):
    notes = []
    vertex = lp([-2, -1], [([1, 1], "<=", 1)])
    r = simplex.solve_lp(vertex)
    if not (r.status == "optimal" and r.x.tolist() == [1.0, 0.0] and r.objective == -2.0):
        notes.append("vertex")
    assert_certificate(vertex, r)
    if simplex.solve_lp(lp([0], [([1], ">=", 2), ([1], "<=", 1)], ub=[10.0])).status != "infeasible":
        notes.append("infeasible")
    ray = simplex.solve_lp(lp([-1], [], ub=[math.inf]))
    if ray.status != "unbounded":
        notes.append("unbounded")

    # certificates on every node LP of a full bundled solve
    inst, _ = build_uc_mip(case, "euc", PwlConfig(8))
    checked = []
    real = simplex.solve_lp

    def spy(instance, overrides=None, **kw):
        res = real(instance, overrides, **kw)
        if res.status == "optimal":
            assert_certificate(instance, res)
            checked.append(res)
        return res

    from microgrid_euc import bnb

    monkeypatch.setattr(bnb, "solve_lp", spy)
    mip = solve_mip(inst, OPTS)
    verdict(9, not notes and mip.status == "optimal" and checked,
            f"examples {'ok' if not notes else notes}; {len(checked)} node LP certificates hold")


def test_criterion_10_determinism(case, oracle_run, sweep, verdict):
    first = transcript(oracle_run[0], sweep)
    second = transcript(oracle_pass()[0], sweep_pass(case))
    verdict(10, first == second, f"rerun transcript {len(first)} bytes, identical={first == second}")
