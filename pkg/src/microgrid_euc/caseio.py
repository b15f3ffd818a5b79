"""Case files, forecast CSVs, reports and the bundled dataset."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable

import jsonschema

from .model import (
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
    soc_trajectory,
)

SCHEMA_VERSION = 1
DATA = resources.files("microgrid_euc") / "data"

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_series = {"type": "array", "items": _num, "minItems": 1}

CASE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "hours", "tgrs", "vers", "esrs", "grid", "reserve", "emission", "load"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "hours": {"type": "integer", "minimum": 1},
        "tgrs": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "p_min", "p_max", "min_up", "min_down", "startup_cost",
                             "fuel_quad", "fuel_lin", "fuel_fix", "em_quad", "em_lin", "em_fix", "u0"],
                "properties": {
                    "id": {"type": "string"},
                    "p_min": _nonneg, "p_max": _nonneg,
                    "min_up": {"type": "integer", "minimum": 1},
                    "min_down": {"type": "integer", "minimum": 1},
                    "startup_cost": _nonneg,
                    "fuel_quad": _nonneg, "fuel_lin": _num, "fuel_fix": _num,
                    "em_quad": _nonneg, "em_lin": _num, "em_fix": _num,
                    "u0": {"enum": [0, 1]},
                    "init_elapsed": {"type": "integer", "minimum": 0},
                },
            },
        },
        "vers": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "oneOf": [{"required": ["profile"]}, {"required": ["profile_csv"]}],
                "properties": {
                    "id": {"type": "string"},
                    "profile": _series,
                    "profile_csv": {"type": "string"},
                    "curtailable": {"type": "boolean"},
                },
            },
        },
        "esrs": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "pi_min", "pi_max", "pw_min", "pw_max", "e_min", "e_max"],
                "properties": {
                    "id": {"type": "string"},
                    "pi_min": _nonneg, "pi_max": _nonneg, "pw_min": _nonneg, "pw_max": _nonneg,
                    "e_min": _num, "e_max": _num,
                    "eta_i": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "eta_w": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "e0": _num,
                    "soc_convention": {"enum": ["paper", "physical"]},
                    "e_final_min": {"type": ["number", "null"]},
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tariff"],
            "properties": {
                "tariff": _series,
                "exchange_limit": {"type": ["number", "null"], "minimum": 0},
            },
        },
        "reserve": {
            "type": "object",
            "additionalProperties": False,
            "required": ["r_min"],
            "properties": {"r_min": _series},
        },
        "emission": {
            "type": "object",
            "additionalProperties": False,
            "required": ["psi"],
            "properties": {
                "psi": _nonneg,
                "kappa_max": {"type": ["number", "null"], "minimum": 0},
            },
        },
        "load": {
            "type": "object",
            "additionalProperties": False,
            "oneOf": [{"required": ["demand"]}, {"required": ["demand_csv"]}],
            "properties": {"demand": _series, "demand_csv": {"type": "string"}},
        },
    },
}


class CaseFileError(ValueError):
    pass


def _line_of(text: str, key) -> int | None:
    needle = f'"{key}"'
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def load_forecast_csv(path) -> list[float]:
    """Read an ``hour,value_kw`` file whose hours run 1..H without gaps."""
    path = Path(path)
    if not path.is_file():
        raise CaseFileError(f"forecast file not found: {path}")
    values = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["hour", "value_kw"]:
            raise CaseFileError(f"{path}:1: header must be 'hour,value_kw'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CaseFileError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                hour = int(row[0])
                value = float(row[1])
            except ValueError:
                raise CaseFileError(f"{path}:{lineno}: non-numeric entry {row!r}") from None
            if not math.isfinite(value):
                raise CaseFileError(f"{path}:{lineno}: non-finite value")
            expected = len(values) + 1
            if hour != expected:
                kind = "duplicate" if hour < expected else "gap in"
                raise CaseFileError(f"{path}:{lineno}: {kind} hours (got {hour}, expected {expected})")
            values.append(value)
    if not values:
        raise CaseFileError(f"{path}: no data rows")
    return values


def case_from_dict(data: dict, base_dir: Path | None = None, text: str = "") -> MicrogridCase:
    try:
        jsonschema.validate(data, CASE_SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        key = next((p for p in reversed(list(err.absolute_path)) if isinstance(p, str)), None)
        if err.validator == "additionalProperties":
            extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
            key = extra[0] if extra else key
            where = f"{where}/{key}"
        line = _line_of(text, key) if key and text else None
        loc = f" (line {line})" if line else ""
        raise CaseFileError(f"case file: key '{where}'{loc}: {err.message}") from None

    base = Path(base_dir) if base_dir is not None else Path(".")
    H = data["hours"]

    def profile(block, key, label):
        if key in block:
            vals = list(block[key])
        else:
            vals = load_forecast_csv(base / block[key + "_csv"])
        if len(vals) != H:
            raise CaseFileError(f"case file: {label} has {len(vals)} values, expected H={H}")
        return vals

    try:
        tgrs = [ThermalGenerator(**{"init_elapsed": 0, **g}) for g in data["tgrs"]]
        vers = [
            VariableResource(v["id"], profile(v, "profile", f"vers/{v['id']}"), v.get("curtailable", False))
            for v in data["vers"]
        ]
        esrs = [StorageResource(**s) for s in data["esrs"]]
        case = MicrogridCase(
            horizon=Horizon(H),
            tgrs=tgrs,
            vers=vers,
            esrs=esrs,
            grid=GridInterface(data["grid"]["tariff"], data["grid"].get("exchange_limit")),
            reserve=ReservePolicy(data["reserve"]["r_min"]),
            emission=EmissionPolicy(data["emission"]["psi"], data["emission"].get("kappa_max")),
            load=LoadProfile(profile(data["load"], "demand", "load")),
            name=data.get("name", "case"),
        )
    except CaseFileError:
        raise
    except ValueError as err:
        raise CaseFileError(f"case file: {err}") from None
    return case


def load_case(path) -> MicrogridCase:
    """Load and validate a JSON case file; CSV references resolve next to it."""
    path = Path(path)
    if not path.is_file():
        raise CaseFileError(f"case file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise CaseFileError(f"{path}:{err.lineno}: invalid JSON: {err.msg}") from None
    return case_from_dict(data, path.parent, text)


def case_to_dict(case: MicrogridCase) -> dict:
    """Self-contained representation (all profiles inline)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": case.name,
        "hours": case.H,
        "tgrs": [
            {k: getattr(g, k) for k in ("id", "p_min", "p_max", "min_up", "min_down", "startup_cost",
                                        "fuel_quad", "fuel_lin", "fuel_fix", "em_quad", "em_lin",
                                        "em_fix", "u0", "init_elapsed")}
            for g in case.tgrs
        ],
        "vers": [{"id": v.id, "profile": list(v.profile), "curtailable": v.curtailable} for v in case.vers],
        "esrs": [
            {k: getattr(s, k) for k in ("id", "pi_min", "pi_max", "pw_min", "pw_max", "e_min", "e_max",
                                        "eta_i", "eta_w", "e0", "soc_convention", "e_final_min")}
            for s in case.esrs
        ],
        "grid": {"tariff": list(case.grid.tariff), "exchange_limit": case.grid.exchange_limit},
        "reserve": {"r_min": list(case.reserve.r_min)},
        "emission": {"psi": case.emission.psi, "kappa_max": case.emission.kappa_max},
        "load": {"demand": list(case.load.demand)},
    }


def save_case(case: MicrogridCase, path) -> None:
    Path(path).write_text(_dumps(case_to_dict(case)), encoding="utf-8")


def case_checksum(case: MicrogridCase) -> str:
    blob = json.dumps(case_to_dict(case), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# bundled data


def paper_case_path() -> Path:
    return Path(str(DATA / "paper_case.json"))


def paper_case() -> MicrogridCase:
    return load_case(paper_case_path())


def bundled_series(name: str) -> list[float]:
    """One of forecast_pv, forecast_load, actual_pv, actual_load."""
    return load_forecast_csv(Path(str(DATA / f"{name}.csv")))


def load_reference_schedule(case: MicrogridCase, which: str = "euc") -> Schedule:
    """Bundled reference dispatch (``reference/dispatch_<which>.csv``) as a :class:`Schedule`.

    The file holds only TGR output, storage net injection and grid exchange;
    commitment is 1 wherever output is positive, reserve is the full
    headroom, and stored energy follows the storage recursion.
    """
    path = Path(str(DATA / "reference" / f"dispatch_{which}.csv"))
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != case.H or len(case.tgrs) != 1 or len(case.esrs) != 1:
        raise ValueError("reference schedule needs a one-TGR, one-ESR case")
    g, s = case.tgrs[0], case.esrs[0]
    p = [float(r["p_tgr_kw"]) for r in rows]
    net = [float(r["p_esr_net_kw"]) for r in rows]
    pi = [max(v, 0.0) for v in net]
    pw = [max(-v, 0.0) for v in net]
    u = [1 if v > 0 else 0 for v in p]
    return Schedule(
        tgr={g.id: TgrDispatch(u, p, [ui * g.p_max - pv for ui, pv in zip(u, p)])},
        esr={s.id: EsrDispatch([int(v > 0) for v in pi], [int(v > 0) for v in pw], pi, pw,
                               soc_trajectory(s, pi, pw))},
        grid=[float(r["p_grid_kw"]) for r in rows],
    )


def load_sweep_reference() -> list[dict]:
    path = Path(str(DATA / "reference" / "tax_sweep.csv"))
    with path.open(newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def _dumps(obj) -> str:
    # repr-based float formatting keeps 17 significant digits
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


SWEEP_HEADER = [
    "psi", "euc_total_usd", "cuc_total_usd", "differential_cents",
    "euc_tgr_kwh", "cuc_tgr_kwh", "euc_emissions_kg", "cuc_emissions_kg",
]


def sweep_csv(rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([repr(float(getattr(row, k))) for k in SWEEP_HEADER])
    return buf.getvalue()


def schedule_csv(schedule: Schedule) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols, data = ["hour"], []
    for k, d in sorted(schedule.tgr.items()):
        for f in ("u", "p", "r"):
            cols.append(f"{k}.{f}")
            data.append(getattr(d, f))
    for k, d in sorted(schedule.esr.items()):
        for f in ("ui", "uw", "pi", "pw", "E"):
            cols.append(f"{k}.{f}")
            data.append(getattr(d, f))
    cols.append("grid")
    data.append(schedule.grid)
    w.writerow(cols)
    for h in range(len(schedule.grid)):
        w.writerow([h + 1] + [repr(v[h].item()) for v in data])
    return buf.getvalue()


def render_report(report, fmt: str = "json", reference: list | None = None) -> str:
    """Serialize a run report or a list of sweep rows.

    ``reference`` (sweep JSON only) is emitted next to the rows.
    """
    if fmt not in ("json", "csv"):
        raise ValueError("format must be 'json' or 'csv'")
    if isinstance(report, (list, tuple)):
        if fmt == "csv":
            return sweep_csv(report)
        body = {"sweep": [r.to_dict() for r in report]}
        if reference is not None:
            body["reference"] = reference
        return _dumps(body)
    if fmt == "csv":
        return schedule_csv(report.schedule)
    return _dumps(report.to_dict())


def write_report(report, path, fmt: str = "json") -> Path:
    path = Path(path)
    path.write_text(render_report(report, fmt), encoding="utf-8")
    return path
