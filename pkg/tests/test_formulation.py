import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_case, make_esr, make_gen
from microgrid_euc.bnb import solve_mip
from microgrid_euc.formulation import (
    BINARY_FAMILIES,
    ExtractionError,
    PwlConfig,
    build_uc_mip,
    chord_cuts,
    extract_schedule,
    pwl_gap_bound,
)
from microgrid_euc.model import evaluate_schedule, validate_schedule
from microgrid_euc.simplex import solve_lp


def pwl(cuts, p):
    return max(s * p + c for s, c in cuts)


class TestChords:
    def test_breakpoints_exact(self):
        cuts = chord_cuts(1.0, 0.0, 0.0, 10.0, 2)
        assert cuts == [(5.0, 0.0), (15.0, -50.0)]
        for p, v in [(0, 0), (5, 25), (10, 100)]:
            assert pwl(cuts, p) == v

    def test_midpoint_error(self):
        cuts = chord_cuts(1.0, 0.0, 0.0, 10.0, 2)
        assert pwl(cuts, 2.5) == 12.5
        assert pwl(cuts, 2.5) - 2.5**2 == pwl_gap_bound(1.0, 0.0, 10.0, 2) == 6.25

    def test_affine(self):
        assert chord_cuts(0.0, 2.0, -3.0, 7.0, 3) == [(2.0, 0.0)] * 3

    @pytest.mark.parametrize("args", [(-1.0, 0.0, 0.0, 1.0, 2), (1.0, 0.0, 2.0, 1.0, 2), (1.0, 0.0, 0.0, 1.0, 0)])
    def test_errors(self, args):
        with pytest.raises(ValueError):
            chord_cuts(*args)

    @settings(max_examples=100, deadline=None)
    @given(
        a=st.floats(0, 5), b=st.floats(-5, 5), lo=st.floats(0, 20), width=st.floats(0.1, 50),
        K=st.integers(1, 16), t=st.floats(0, 1),
    )
    def test_over_approximation(self, a, b, lo, width, K, t):
        hi = lo + width
        cuts = chord_cuts(a, b, lo, hi, K)
        p = lo + t * width
        exact = a * p * p + b * p
        err = pwl(cuts, p) - exact
        scale = 1e-9 * (1 + abs(exact) + a * hi * hi)
        assert -scale <= err <= pwl_gap_bound(a, lo, hi, K) + scale

    def test_pwl_config(self):
        with pytest.raises(ValueError):
            PwlConfig(0)
        with pytest.raises(ValueError):
            PwlConfig(2.5)


class TestBuild:
    def test_bundled_counts(self, bundled):
        inst, vm = build_uc_mip(bundled, "euc", PwlConfig(8))
        fams = {}
        for (fam, _, _), j in vm.index.items():
            fams[fam] = fams.get(fam, 0) + 1
        assert int(inst.integer.sum()) == 72
        assert set(np.flatnonzero(inst.integer)) == set(vm.binary_columns())
        for fam in ("u", "ui", "uw", "p", "r", "s", "t", "e", "pi", "pw", "E", "pn"):
            assert fams[fam] == 24, fam
        assert sorted(vm.index.values()) == list(range(inst.n_cols))
        assert BINARY_FAMILIES == {"u", "ui", "uw"}

    def test_cuc_differs_only_in_cap_and_tax(self, bundled):
        euc, vm = build_uc_mip(bundled, "euc")
        cuc, _ = build_uc_mip(bundled, "cuc")
        assert [r.name for r in euc.rows if r not in cuc.rows] == ["emission_cap"]
        assert len(cuc.rows) == len(euc.rows) - 1
        e_cols = vm.series("e", "gamma1")
        assert np.all(cuc.c[e_cols] == 0) and np.all(euc.c[e_cols] == bundled.emission.psi)
        mask = np.ones(euc.n_cols, bool)
        mask[e_cols] = False
        assert np.array_equal(euc.c[mask], cuc.c[mask])

    def test_deterministic_dump(self, bundled):
        a, _ = build_uc_mip(bundled, "euc")
        b, _ = build_uc_mip(bundled, "euc")
        assert a.dump() == b.dump()
        assert a.dump().count("\n") == a.n_cols + a.n_rows

    def test_single_hour_windows_vacuous(self):
        case = make_case(1, tgrs=[make_gen(u0=1, min_up=1, min_down=1)])
        inst, _ = build_uc_mip(case, "euc")
        names = [r.name for r in inst.rows]
        assert not any(n.startswith(("min_up", "min_down")) for n in names)

    def test_window_rows(self):
        case = make_case(4, tgrs=[make_gen(min_up=3, min_down=2)])
        inst, _ = build_uc_mip(case, "euc")
        ups = [r.name for r in inst.rows if r.name.startswith("min_up")]
        assert ups == ["min_up[gamma1,1,2]", "min_up[gamma1,1,3]", "min_up[gamma1,2,3]",
                       "min_up[gamma1,2,4]", "min_up[gamma1,3,4]"]

    def test_reserve_without_tgr_warns(self):
        case = make_case(2, tgrs=[], reserve=[1.0, 0.0])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            build_uc_mip(case, "euc")
        assert any("infeasible" in str(w.message) for w in caught)

    def test_bad_mode(self, bundled):
        with pytest.raises(ValueError):
            build_uc_mip(bundled, "xuc")


def _fix(vm, fam, rid, values):
    return {j: (float(v), float(v)) for j, v in zip(vm.series(fam, rid), values)}


class TestExtract:
    def test_zero_case(self):
        case = make_case(3)
        inst, vm = build_uc_mip(case, "cuc")
        s = extract_schedule(inst, vm, np.clip(np.zeros(inst.n_cols), inst.lb, inst.ub))
        assert s.tgr["gamma1"].u.tolist() == [0, 0, 0]
        assert validate_schedule(case, s) == []

    def test_fractional_binary_named(self):
        case = make_case(2)
        inst, vm = build_uc_mip(case, "cuc")
        x = np.clip(np.zeros(inst.n_cols), inst.lb, inst.ub)
        x[vm["u", "gamma1", 2]] = 0.4999
        with pytest.raises(ExtractionError, match=r"u\[gamma1,2\]"):
            extract_schedule(inst, vm, x)

    def test_bound_violation(self):
        case = make_case(1)
        inst, vm = build_uc_mip(case, "cuc")
        x = np.clip(np.zeros(inst.n_cols), inst.lb, inst.ub)
        x[vm["p", "gamma1", 1]] = 60.0
        with pytest.raises(ExtractionError, match="bounds"):
            extract_schedule(inst, vm, x)

    def test_wrong_length(self):
        inst, vm = build_uc_mip(make_case(1), "cuc")
        with pytest.raises(ExtractionError):
            extract_schedule(inst, vm, np.zeros(3))


class TestSemantics:
    @pytest.mark.parametrize("u", [[0, 0, 0, 0], [1, 1, 1, 1], [1, 1, 0, 1], [0, 1, 1, 0], [1, 0, 1, 1]])
    @pytest.mark.parametrize("u0", [0, 1])
    def test_startup_count(self, u, u0):
        gen = make_gen(u0=u0, min_up=1, min_down=1)
        case = make_case(4, tgrs=[gen], load=[10.0] * 4)
        inst, vm = build_uc_mip(case, "cuc")
        lp = solve_lp(inst, _fix(vm, "u", "gamma1", u))
        assert lp.status == "optimal"
        transitions = sum(1 for a, b in zip([u0] + u[:-1], u) if b and not a)
        assert lp.x[vm.series("s", "gamma1")].sum() == pytest.approx(transitions, abs=1e-9)

    def test_breakpoints_exact_objective(self):
        case = make_case(3, load=[30.0, 40.0, 20.0], psi=0.07)
        inst, vm = build_uc_mip(case, "euc", PwlConfig(9))  # breakpoints every 5 kW
        fixes = {**_fix(vm, "u", "gamma1", [1, 1, 1]), **_fix(vm, "p", "gamma1", [10.0, 45.0, 20.0])}
        lp = solve_lp(inst, fixes)
        s = extract_schedule(inst, vm, lp.x)
        assert lp.objective == pytest.approx(evaluate_schedule(case, s).objective_euc, abs=1e-9)

    def test_over_approximation_on_bundled_case(self, bundled_nocap):
        inst, vm = build_uc_mip(bundled_nocap, "euc", PwlConfig(8))
        res = solve_mip(inst)
        s = extract_schedule(inst, vm, res.x)
        exact = evaluate_schedule(bundled_nocap, s).objective_euc
        g = bundled_nocap.tgrs[0]
        bound = s.tgr[g.id].u.sum() * (
            pwl_gap_bound(g.fuel_quad, g.p_min, g.p_max, 8)
            + bundled_nocap.emission.psi * pwl_gap_bound(g.em_quad, g.p_min, g.p_max, 8)
        )
        assert -1e-9 <= res.objective - exact <= bound + 1e-9
        assert validate_schedule(bundled_nocap, s) == []

    def test_mode_consistency_without_tax(self, rng):
        esr = make_esr(eta_i=0.9, eta_w=0.95)
        case = make_case(4, load=[12.0, 30.0, 25.0, 8.0], pv=[0.0, 5.0, 10.0, 0.0],
                         tariff=[0.02, 0.22, 0.22, 0.02], reserve=[2.0] * 4, esrs=[esr])
        euc, _ = build_uc_mip(case, "euc")
        cuc, _ = build_uc_mip(case, "cuc")
        assert solve_mip(euc).objective == pytest.approx(solve_mip(cuc).objective, abs=1e-9)
