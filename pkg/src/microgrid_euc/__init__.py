"""Environmental and classical unit commitment for grid-connected microgrids."""

from .model import (
    CostBreakdown,
    EmissionPolicy,
    EsrDispatch,
    GridInterface,
    Horizon,
    LoadProfile,
    MicrogridCase,
    ReservePolicy,
    Schedule,
    StorageResource,
    TgrDispatch,
    ThermalGenerator,
    VariableResource,
    Violation,
    carbon_tax_payment,
    evaluate_schedule,
    fuel_cost,
    grid_exchange_cost,
    net_storage_injection,
    startup_cost,
    tgr_emissions,
    total_emissions,
    validate_schedule,
)
from .formulation import MipInstance, PwlConfig, VariableMap, build_uc_mip, chord_cuts, extract_schedule
from .simplex import LpResult, solve_lp
from .bnb import BnbOptions, MipResult, solve_mip
from .oracle import oracle_solve
from .analysis import RunReport, SweepRow, expost_tax, run_case, sweep_carbon_tax
from .caseio import load_case, load_forecast_csv, paper_case, render_report, save_case, write_report

__version__ = "0.1.0"
