import numpy as np
import pytest

from microgrid_euc.caseio import paper_case
from microgrid_euc.model import (
    EmissionPolicy,
    GridInterface,
    Horizon,
    LoadProfile,
    MicrogridCase,
    ReservePolicy,
    StorageResource,
    ThermalGenerator,
    VariableResource,
)

GAMMA1 = dict(
    id="gamma1", p_min=5.0, p_max=50.0, min_up=2, min_down=2, startup_cost=1.0,
    fuel_quad=0.0012, fuel_lin=0.208, fuel_fix=3.2,
    em_quad=0.00303, em_lin=0.53, em_fix=8.09, u0=0,
)


def make_gen(**overrides) -> ThermalGenerator:
    return ThermalGenerator(**{**GAMMA1, **overrides})


def make_case(H, *, load=None, pv=None, tariff=None, reserve=None, psi=0.0, cap=None,
              tgrs=None, esrs=None, name="test") -> MicrogridCase:
    load = [0.0] * H if load is None else load
    return MicrogridCase(
        horizon=Horizon(H),
        tgrs=tuple(tgrs if tgrs is not None else [make_gen()]),
        vers=(VariableResource("pv", [0.0] * H if pv is None else pv),),
        esrs=tuple(esrs if esrs is not None else []),
        grid=GridInterface([0.0155] * H if tariff is None else tariff),
        reserve=ReservePolicy([0.0] * H if reserve is None else reserve),
        emission=EmissionPolicy(psi, cap),
        load=LoadProfile(load),
        name=name,
    )


def make_esr(**overrides) -> StorageResource:
    base = dict(id="sigma1", pi_min=0.0, pi_max=12.0, pw_min=0.0, pw_max=12.0, e_min=0.0, e_max=30.0)
    return StorageResource(**{**base, **overrides})


@pytest.fixture(scope="session")
def bundled():
    return paper_case()


@pytest.fixture(scope="session")
def bundled_nocap(bundled):
    return bundled.without_cap()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lp(c, rows, lb=None, ub=None, integer=None):
    """MipInstance from ``rows = [(coeffs, sense, rhs), ...]`` with dense coefficient lists."""
    from microgrid_euc.formulation import MipInstance, Row

    n = len(c)
    return MipInstance(
        c=c,
        lb=[0.0] * n if lb is None else lb,
        ub=[1.0] * n if ub is None else ub,
        integer=[False] * n if integer is None else integer,
        col_names=tuple(f"x{j + 1}" for j in range(n)),
        rows=tuple(
            Row(f"r{i}", tuple((j, float(a)) for j, a in enumerate(coeffs) if a), sense, float(rhs))
            for i, (coeffs, sense, rhs) in enumerate(rows)
        ),
    )


def assert_certificate(inst, res, opt_tol=1e-9, feas_tol=1e-7):
    """Reduced-cost optimality and primal feasibility of an optimal LpResult."""
    from microgrid_euc.simplex import AT_LOWER, AT_UPPER, BASIC

    A, lo, hi = inst.dense()
    x = res.x
    assert np.all(x >= inst.lb - feas_tol) and np.all(x <= inst.ub + feas_tol)
    act = A @ x
    assert np.all(act >= lo - feas_tol) and np.all(act <= hi + feas_tol)
    d = res.reduced_costs
    scale = 1e-10 * (1 + np.abs(inst.c).max())  # round-off in c - A^T y
    st = res.column_status
    assert np.all(d[st == AT_LOWER] >= -opt_tol - scale)
    assert np.all(d[st == AT_UPPER] <= opt_tol + scale)
    assert np.all(np.abs(d[st == BASIC]) <= scale)
    assert res.objective == pytest.approx(float(inst.c @ x), abs=1e-9)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the run summary, then assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
