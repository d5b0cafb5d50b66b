"""
OR Pooling — JSON / JSON-lines I/O
==================================
Versioned documents (schema "or_pooling/1"):
  instance    Instance with patients and specialties
  solution    FirstStageSolution
  saa_report  SaaReport summary with every LB run and UB candidate
Scenario bundles are JSON lines: a header object, then one scenario per line.

All JSON is written with sorted keys so reruns produce identical bytes.
"""

import json
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .models import FirstStageSolution, Instance, Patient, SaaReport, Scenario, SpecialtyProfile

SCHEMA = "or_pooling/1"


def _check_schema(doc: dict, kind: str):
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA!r}")
    if doc.get("kind") != kind:
        raise ValueError(f"expected a '{kind}' document, got {doc.get('kind')!r}")


def _plain(obj):
    """numpy / dataclass / enum values → JSON-native"""
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


def dump_json(doc: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def provenance(**configs) -> dict:
    """Resolved run configuration embedded in every artifact"""
    return {"schema": SCHEMA, **{k: _plain(v) for k, v in configs.items()}}


# ═══════════════════════════════════════════════════════════════
# Instance
# ═══════════════════════════════════════════════════════════════

def instance_to_dict(instance: Instance, prov: dict = None) -> dict:
    doc = {
        "schema": SCHEMA,
        "kind": "instance",
        "name": instance.name,
        "horizon_days": instance.horizon_days,
        "rooms": instance.rooms,
        "regular_time": instance.regular_time,
        "max_overtime": instance.max_overtime,
        "bed_stock": list(instance.bed_stock),
        "shared_fraction": list(instance.shared_fraction),
        "or_open_cost": instance.or_open_cost,
        "overtime_cost_rate": instance.overtime_cost_rate,
        "surge_cost": list(instance.surge_cost),
        "block_bounds": [list(b) for b in instance.block_bounds],
        "specialties": [asdict(s) for s in instance.specialties],
        "patients": [
            {**asdict(p), "eligible_rooms": list(p.eligible_rooms)} for p in instance.patients
        ],
    }
    if prov is not None:
        doc["provenance"] = prov
    return doc


def instance_from_dict(doc: dict) -> Instance:
    _check_schema(doc, "instance")
    try:
        specialties = tuple(SpecialtyProfile(**s) for s in doc["specialties"])
        patients = tuple(
            Patient(**{**p, "eligible_rooms": tuple(p["eligible_rooms"])})
            for p in doc["patients"]
        )
        return Instance(
            horizon_days=int(doc["horizon_days"]),
            rooms=int(doc["rooms"]),
            specialties=specialties,
            patients=patients,
            regular_time=float(doc["regular_time"]),
            max_overtime=float(doc["max_overtime"]),
            bed_stock=tuple(doc["bed_stock"]),
            shared_fraction=tuple(doc["shared_fraction"]),
            or_open_cost=float(doc["or_open_cost"]),
            overtime_cost_rate=float(doc["overtime_cost_rate"]),
            surge_cost=tuple(doc["surge_cost"]),
            block_bounds=tuple(tuple(b) for b in doc.get("block_bounds", ())),
            name=doc.get("name", ""),
        )
    except KeyError as e:
        raise ValueError(f"instance document is missing field {e}") from None
    except TypeError as e:
        raise TypeError(f"instance document has a malformed record: {e}") from None


# ═══════════════════════════════════════════════════════════════
# Solution
# ═══════════════════════════════════════════════════════════════

def solution_to_dict(sol: FirstStageSolution, prov: dict = None) -> dict:
    assignment = []
    for i in sorted(sol.assignment):
        slot = sol.assignment[i]
        if slot is None:
            assignment.append({"patient": i, "postponed": True})
        else:
            assignment.append({"patient": i, "room": slot[0], "day": slot[1]})
    doc = {
        "schema": SCHEMA,
        "kind": "solution",
        "assignment": assignment,
        "room_open": [list(rd) for rd in sorted(sol.room_open)],
        "block_specialty": [{"room": r, "day": d, "specialty": s}
                            for (r, d), s in sorted(sol.block_specialty.items())],
        "bed_split": [list(row) for row in sol.bed_split],
    }
    if prov is not None:
        doc["provenance"] = prov
    return doc


def solution_from_dict(doc: dict) -> FirstStageSolution:
    _check_schema(doc, "solution")
    assignment = {}
    for a in doc["assignment"]:
        assignment[int(a["patient"])] = (
            None if a.get("postponed") else (int(a["room"]), int(a["day"])))
    return FirstStageSolution(
        assignment=assignment,
        room_open=frozenset((int(r), int(d)) for r, d in doc["room_open"]),
        block_specialty={(int(b["room"]), int(b["day"])): int(b["specialty"])
                         for b in doc["block_specialty"]},
        bed_split=tuple(tuple(row) for row in doc["bed_split"]),
    )


# ═══════════════════════════════════════════════════════════════
# Scenario bundles
# ═══════════════════════════════════════════════════════════════

def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "durations": scenario.durations.tolist(),
        "los": scenario.los.tolist(),
        "carryover": scenario.carryover.tolist(),
        "los_total_raw": None if scenario.los_total_raw is None
        else scenario.los_total_raw.tolist(),
    }


def scenario_from_dict(doc: dict, n_downstreams: int = 2) -> Scenario:
    los = np.asarray(doc["los"], dtype=np.int64).reshape(-1, n_downstreams)
    raw = doc.get("los_total_raw")
    return Scenario(np.asarray(doc["durations"], dtype=float), los,
                    np.asarray(doc["carryover"], dtype=np.int64),
                    None if raw is None else np.asarray(raw, dtype=float))


def write_bundle(path, scenarios: list, instance_name: str = "", prov: dict = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"schema": SCHEMA, "kind": "scenario_bundle", "count": len(scenarios),
              "instance": instance_name, "provenance": prov or {}}
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(_plain(header), sort_keys=True) + "\n")
        for s in scenarios:
            f.write(json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":")) + "\n")
    return path


def read_bundle(path) -> tuple:
    """(header, [Scenario])"""
    with Path(path).open(encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty scenario bundle")
    header = json.loads(lines[0])
    _check_schema(header, "scenario_bundle")
    scenarios = [scenario_from_dict(json.loads(line)) for line in lines[1:]]
    if len(scenarios) != header.get("count", len(scenarios)):
        raise ValueError(f"{path}: header says {header['count']} scenarios, found {len(scenarios)}")
    return header, scenarios


# ═══════════════════════════════════════════════════════════════
# SAA report
# ═══════════════════════════════════════════════════════════════

def report_to_dict(report: SaaReport, prov: dict = None, record_timing: bool = False) -> dict:
    runs = []
    for r in report.lb_runs:
        row = {"iteration": r.iteration, "seed": r.seed, "objective": r.objective,
               "bound": r.bound, "status": r.status.value}
        if record_timing:
            row["seconds"] = r.seconds
        runs.append(row)
    doc = {
        "schema": SCHEMA,
        "kind": "saa_report",
        "lb_mean": report.lb_mean,
        "lb_var_of_mean": report.lb_var_of_mean,
        "lb_runs": runs,
        "failures": [{"iteration": m, "message": msg} for m, msg in report.failures],
        "candidates": [{"iteration": c.iteration, "ub_mean": c.mean,
                        "ub_var_of_mean": c.var_of_mean,
                        "first_stage_cost": c.first_stage_cost} for c in report.candidates],
        "best_ub": report.best_ub,
        "best_ub_var_of_mean": report.best_ub_var,
        "best_iteration": report.best_iteration,
        "gap_percent": report.gap_percent,
        "vss_percent": report.vss_percent,
        "ub_evp": report.ub_evp,
        "cost_breakdown": report.breakdown.as_dict() if report.breakdown else None,
        "table_row": report.table_row(record_timing=record_timing),
        "best_solution": solution_to_dict(report.best_solution),
    }
    if record_timing:
        doc["timing"] = {"lb_seconds": report.lb_seconds, "ub_seconds": report.ub_seconds}
    if prov is not None:
        doc["provenance"] = prov
    return doc
