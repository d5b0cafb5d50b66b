#!/usr/bin/env python3
"""
OR Pooling — Command-Line Entry Point
=====================================

Usage:
  1. Generate an instance (or the 21-combination grid):
     python -m or_pooling generate --weeks 2 --specialties 4 --seed 1 -o inst.json
     python -m or_pooling generate --grid --replications 5 --outdir instances/

  2. Run SAA with the tuned defaults (|N|=30, |M|=25, |P|=6000) or desk scale:
     python -m or_pooling saa --instance inst.json --small -o report.json

  3. Reproduce the experiments:
     python -m or_pooling compare --instance inst.json --policies 0,0.5,1 -o policies.csv
     python -m or_pooling sensitivity --instance inst.json --param surge -o surge.csv

Instance files are looked up as given, then in input/, then in the working
directory. Text reports are saved to report/.
"""

import argparse
import io
import logging
import os
import sys
from dataclasses import fields
from datetime import datetime

import pandas as pd

from .analysis import (PARAMS, compare_policies, default_multipliers, occupancy_series,
                       sensitivity_sweep, tune_grid)
from .backends import get_backend, write_lp
from .costs import ensure_valid
from .errors import OrPoolingError
from .generator import GRID_WEEKS, generate, generate_grid
from .milp import build_evp, build_extensive, solve
from .models import GeneratorConfig, SaaConfig, SamplerConfig, SolverLimits
from .oracle import recourse_lp
from .recourse import evaluate, outcome_frame, specialty_orders
from .reporter import (full_report, occupancy_figure, report_comparison, report_costs,
                       report_instance, report_sensitivity, write_frame)
from .saa import evaluate_upper_bound, run_saa
from .sampling import sample_scenarios
from .serialization import (dump_json, instance_from_dict, instance_to_dict, load_json,
                            provenance, read_bundle, report_to_dict, solution_from_dict,
                            solution_to_dict, write_bundle)

logger = logging.getLogger("or_pooling")


# ═══════════════════════════════════════════════════════════════
# Input directory and report directory
# ═══════════════════════════════════════════════════════════════

_PKG_DIR = os.path.dirname(os.path.abspath(__file__))
_PROJECT_ROOT = os.path.dirname(_PKG_DIR)
INPUT_DIR = os.path.join(_PROJECT_ROOT, "input")
REPORT_DIR = os.path.join(_PROJECT_ROOT, "report")


def resolve_input_path(filename: str) -> str:
    """
    Resolve an input file path.

    Priority:
    1. Absolute path that exists
    2. input/ directory
    3. Current working directory
    """
    if os.path.isabs(filename) and os.path.isfile(filename):
        return filename
    in_input_dir = os.path.join(INPUT_DIR, filename)
    if os.path.isfile(in_input_dir):
        return in_input_dir
    if os.path.isfile(filename):
        return filename
    raise FileNotFoundError(
        f"Input file not found: {filename}\n"
        f"  Searched: {INPUT_DIR}/ and the working directory"
    )


# ═══════════════════════════════════════════════════════════════
# Configuration: defaults → --config JSON → CLI flags
# ═══════════════════════════════════════════════════════════════

# CLI dest → (section, field)
_CLI_FIELDS = {
    "weeks": [("generator", "weeks")],
    "specialties": [("generator", "n_specialties")],
    "bed_rule": [("generator", "bed_rule")],
    "patients_per_week": [("generator", "patients_per_week")],
    "alpha": [("generator", "shared_fraction")],
    "carryover": [("sampler", "carryover_mode")],
    "carryover_fraction": [("sampler", "carryover_fraction")],
    "N": [("saa", "n_lb")],
    "M": [("saa", "m_iter")],
    "P": [("saa", "p_ub")],
    "jobs": [("saa", "jobs")],
    "backend": [("saa", "backend")],
    "rel_gap": [("limits", "rel_gap")],
    "time_limit": [("limits", "time_limit")],
}


def _apply(obj, overrides: dict, section: str):
    known = {f.name: f for f in fields(obj)}
    for key, val in overrides.items():
        if key not in known or key in ("limits", "sampler"):
            raise ValueError(f"unknown {section} parameter: {key}")
        current = getattr(obj, key)
        setattr(obj, key, val if current is None or val is None else type(current)(val))


def build_config(cli_args: dict, json_overrides: dict = None) -> dict:
    """
    Build configuration: defaults → JSON overrides → CLI overrides

    Priority: CLI > JSON > defaults
    """
    cfg = {
        "generator": GeneratorConfig(),
        "sampler": SamplerConfig(),
        "saa": SaaConfig.small() if cli_args.get("small") else SaaConfig(),
        "limits": SolverLimits(),
    }
    for section, overrides in (json_overrides or {}).items():
        if section not in cfg:
            raise ValueError(f"unknown config section: {section}")
        _apply(cfg[section], overrides, section)

    for key, targets in _CLI_FIELDS.items():
        val = cli_args.get(key)
        if val is None:
            continue
        for section, name in targets:
            _apply(cfg[section], {name: val}, section)

    seed = cli_args.get("seed")
    if seed is not None:
        cfg["generator"].seed = seed
        cfg["sampler"].seed = seed
        cfg["saa"].seed = seed

    cfg["saa"].limits = cfg["limits"]
    cfg["saa"].sampler = cfg["sampler"]
    cfg["saa"].__post_init__()
    cfg["sampler"].__post_init__()
    return cfg


def _provenance(args, cfg: dict, **inputs) -> dict:
    return provenance(command=args.command, generator=cfg["generator"],
                      sampler=cfg["sampler"], saa=cfg["saa"], inputs=inputs)


# ═══════════════════════════════════════════════════════════════
# Shared helpers
# ═══════════════════════════════════════════════════════════════

class _Tee:
    def __init__(self, *targets):
        self.targets = targets

    def write(self, data):
        for t in self.targets:
            t.write(data)

    def flush(self):
        for t in self.targets:
            t.flush()


def _run_reported(command: str, fn):
    """Run `fn` with stdout teed into report/<command>_<timestamp>.txt"""
    buf = io.StringIO()
    real = sys.stdout
    sys.stdout = _Tee(real, buf)
    try:
        result = fn()
    finally:
        sys.stdout = real
    os.makedirs(REPORT_DIR, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    path = os.path.join(REPORT_DIR, f"{command}_{stamp}.txt")
    with open(path, "w", encoding="utf-8") as f:
        f.write(buf.getvalue())
    print(f"\n  📄 Report saved: {path}")
    return result


def _load_instance(path: str):
    resolved = resolve_input_path(path)
    instance = instance_from_dict(load_json(resolved))
    logger.info("loaded %s (%d patients)", resolved, instance.n_patients)
    return instance


def _load_scenarios(args, instance, cfg: dict, default_count: int) -> list:
    if getattr(args, "scenarios", None):
        header, scenarios = read_bundle(resolve_input_path(args.scenarios))
        if scenarios and scenarios[0].durations.shape[0] != instance.n_patients:
            raise ValueError(f"bundle has {scenarios[0].durations.shape[0]} patients, "
                             f"instance has {instance.n_patients}")
        return scenarios
    count = args.count or default_count
    return sample_scenarios(instance, count, seed=cfg["saa"].seed, config=cfg["sampler"])


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# ═══════════════════════════════════════════════════════════════
# Commands
# ═══════════════════════════════════════════════════════════════

def cmd_generate(args, cfg):
    if args.grid:
        outdir = args.outdir or "instances"
        instances = generate_grid(cfg["generator"].seed, args.replications, cfg["generator"])
        manifest = []
        for inst in instances:
            path = os.path.join(outdir, f"{inst.name}.json")
            dump_json(instance_to_dict(inst, _provenance(args, cfg)), path)
            manifest.append({"name": inst.name, "file": f"{inst.name}.json",
                             "patients": inst.n_patients, "horizon_days": inst.horizon_days})
        dump_json({"instances": manifest, "provenance": _provenance(args, cfg)},
                  os.path.join(outdir, "manifest.json"))
        print(f"✓ Wrote {len(instances)} instances + manifest to {outdir}/")
        return
    inst = generate(cfg["generator"])
    dump_json(instance_to_dict(inst, _provenance(args, cfg)), args.output)
    print(f"✓ Wrote {inst.name}: {inst.n_patients} patients, beds {inst.bed_stock} → {args.output}")


def cmd_sample(args, cfg):
    instance = _load_instance(args.instance)
    count = args.count or cfg["saa"].p_ub
    scenarios = sample_scenarios(instance, count, seed=cfg["saa"].seed, config=cfg["sampler"])
    write_bundle(args.output, scenarios, instance.name,
                 _provenance(args, cfg, instance=args.instance, count=count))
    print(f"✓ Wrote {count} scenarios → {args.output}")


def cmd_solve(args, cfg):
    instance = _load_instance(args.instance)
    scenarios = _load_scenarios(args, instance, cfg, cfg["saa"].n_lb)
    model = (build_evp if args.evp else build_extensive)(instance, scenarios)
    if args.lp:
        write_lp(model, args.lp)
        print(f"✓ LP model written → {args.lp}")
    result = solve(model, backend=get_backend(cfg["saa"].backend), limits=cfg["limits"])
    doc = solution_to_dict(result.solution, _provenance(
        args, cfg, instance=args.instance, scenarios=args.scenarios, evp=args.evp))
    doc["objective"] = result.objective
    doc["solver_objective"] = result.solver_objective
    doc["bound"] = result.bound
    doc["status"] = result.status.value
    if args.record_timing:
        doc["seconds"] = result.seconds
    dump_json(doc, args.output)
    print(f"✓ {result.status.value}: objective {result.objective:,.2f} → {args.output}")


def cmd_evaluate(args, cfg):
    instance = _load_instance(args.instance)
    sol = solution_from_dict(load_json(resolve_input_path(args.solution)))
    ensure_valid(instance, sol, guard=False)
    scenarios = _load_scenarios(args, instance, cfg, cfg["saa"].p_ub)
    est = evaluate_upper_bound(instance, sol, cfg["saa"], scenarios)
    doc = {
        "ub_mean": est.mean,
        "ub_var_of_mean": est.var_of_mean,
        "first_stage_cost": est.first_stage_cost,
        "recourse_mean": est.recourse_mean,
        "cost_breakdown": est.breakdown.as_dict(),
        "scenarios": len(scenarios),
        "provenance": _provenance(args, cfg, instance=args.instance, solution=args.solution,
                                  scenarios=args.scenarios),
    }
    if args.lp_check:
        k = min(args.lp_check, len(scenarios))
        orders = specialty_orders(instance.n_specialties, k, cfg["saa"].seed)
        worst = 0.0
        for scen, order in zip(scenarios[:k], orders):
            closed = evaluate(instance, sol, scen, order).recourse_cost
            lp = recourse_lp(instance, sol, scen)
            worst = max(worst, abs(closed - lp) / max(1.0, abs(lp)))
        doc["lp_check"] = {"scenarios": k, "max_rel_diff": worst}
        print(f"  LP check on {k} scenarios: max relative difference {worst:.2e}")
    if args.occupancy_csv:
        frame = outcome_frame(instance, sol, scenarios[0])
        write_frame(frame, args.occupancy_csv, doc["provenance"])
    report_costs(est.breakdown)
    if args.output:
        dump_json(doc, args.output)
        print(f"✓ UB {est.mean:,.2f} → {args.output}")


def cmd_saa(args, cfg):
    instance = _load_instance(args.instance)
    saa_cfg = cfg["saa"]
    backend = get_backend(saa_cfg.backend).name

    def run():
        report = run_saa(instance, saa_cfg, with_vss=not args.no_vss)
        full_report(instance, saa_cfg, report, backend, args.record_timing)
        return report

    report = _run_reported("saa", run)
    prov = _provenance(args, cfg, instance=args.instance)
    dump_json(report_to_dict(report, prov, args.record_timing), args.output)
    if args.csv:
        row = {"instance": instance.name, **report.table_row(args.record_timing)}
        write_frame(pd.DataFrame([row]), args.csv, prov)
    print(f"✓ Gap {report.gap_percent:.3f}% → {args.output}")


def cmd_compare(args, cfg):
    instance = _load_instance(args.instance)
    scenarios = _load_scenarios(args, instance, cfg, 30)

    def run():
        report_instance(instance)
        comparison = compare_policies(instance, scenarios, args.policies,
                                      backend=cfg["saa"].backend, limits=cfg["limits"],
                                      jobs=cfg["saa"].jobs, seed=cfg["saa"].seed)
        report_comparison(comparison)
        return comparison

    comparison = _run_reported("compare", run)
    write_frame(comparison.frame(), args.output,
                _provenance(args, cfg, instance=args.instance, scenarios=args.scenarios,
                            policies=args.policies))
    print(f"✓ Comparison → {args.output}")


def cmd_sensitivity(args, cfg):
    instance = _load_instance(args.instance)
    scenarios = _load_scenarios(args, instance, cfg, 30)
    multipliers = args.multipliers or list(default_multipliers(args.param))

    def run():
        frame = sensitivity_sweep(instance, args.param, multipliers, scenarios,
                                  backend=cfg["saa"].backend, limits=cfg["limits"],
                                  jobs=cfg["saa"].jobs, seed=cfg["saa"].seed,
                                  icu_share=cfg["sampler"].icu_share)
        report_sensitivity(frame)
        return frame

    frame = _run_reported("sensitivity", run)
    write_frame(frame, args.output,
                _provenance(args, cfg, instance=args.instance, scenarios=args.scenarios,
                            parameter=args.param, multipliers=multipliers))
    print(f"✓ Sensitivity → {args.output}")


def cmd_series(args, cfg):
    instance = _load_instance(args.instance)
    sol = solution_from_dict(load_json(resolve_input_path(args.solution)))
    ensure_valid(instance, sol, guard=False)
    scenarios = _load_scenarios(args, instance, cfg, 30)
    series = occupancy_series(instance, sol, scenarios, seed=cfg["saa"].seed)
    write_frame(series, args.output,
                _provenance(args, cfg, instance=args.instance, solution=args.solution,
                            scenarios=args.scenarios))
    if args.html:
        occupancy_figure(series, instance, args.html)
        print(f"✓ Figure → {args.html}")
    print(f"✓ Series → {args.output}")


def cmd_tune(args, cfg):
    instance = _load_instance(args.instance)
    frames = tune_grid(instance, args.n_values, args.m_values, args.p_values,
                       cfg["saa"], record_timing=args.record_timing)
    prov = _provenance(args, cfg, instance=args.instance, n_values=args.n_values,
                       m_values=args.m_values, p_values=args.p_values)
    write_frame(frames["nm"], f"{args.output}_nm.csv", prov)
    write_frame(frames["p"], f"{args.output}_p.csv", prov)
    print(frames["nm"].to_string(index=False))
    print(f"✓ Tuning tables → {args.output}_nm.csv, {args.output}_p.csv")


# ═══════════════════════════════════════════════════════════════
# Parser
# ═══════════════════════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("Common options (all have defaults)")
    g.add_argument("--config", type=str, default=None,
                   help="JSON file with generator/sampler/saa/limits overrides")
    g.add_argument("--seed", type=int, default=None, help="Base seed (default: 0)")
    g.add_argument("--backend", type=str, default=None,
                   help="Solver backend: highs | cbc (default: $OR_POOLING_SOLVER or highs)")
    g.add_argument("--jobs", type=int, default=None,
                   help="Concurrent solver sessions / evaluation workers (default: 1)")
    g.add_argument("--rel-gap", dest="rel_gap", type=float, default=None,
                   help="Relative MIP gap (default: 1e-4)")
    g.add_argument("--time-limit", dest="time_limit", type=float, default=None,
                   help="Seconds per solve (default: 3600)")
    g.add_argument("--carryover", choices=("zero", "synthetic"), default=None,
                   help="Carry-over occupancy mode (default: zero)")
    g.add_argument("--carryover-fraction", dest="carryover_fraction", type=float, default=None)
    g.add_argument("--record-timing", action="store_true",
                   help="Include wall-clock timings in written artifacts")
    g.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    g.add_argument("-q", "--quiet", action="store_true", help="Warnings only")

    bundle = argparse.ArgumentParser(add_help=False)
    bundle.add_argument("--scenarios", type=str, default=None,
                        help="Scenario bundle (.jsonl) from the `sample` command")
    bundle.add_argument("--count", type=int, default=None,
                        help="Scenarios to sample when no bundle is given")

    parser = argparse.ArgumentParser(
        prog="python -m or_pooling",
        description="OR Pooling — stochastic operating-room planning with pooled downstream beds",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m or_pooling generate --weeks 2 --specialties 4 -o inst.json
  python -m or_pooling saa --instance inst.json --small -o report.json
  python -m or_pooling compare --instance inst.json --policies 0,0.5,1 -o table.csv
  python -m or_pooling sensitivity --instance inst.json --param postpone -o post.csv
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="Generate instance(s)")
    p.add_argument("--weeks", type=int, choices=GRID_WEEKS, default=None,
                   help="Horizon in weeks (default: 2)")
    p.add_argument("--specialties", type=int, default=None, help="1..7 (default: 7)")
    p.add_argument("--bed-rule", dest="bed_rule", choices=("formula_0.8", "preset"), default=None)
    p.add_argument("--patients-per-week", dest="patients_per_week", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="Shared fraction (default: 0.5)")
    p.add_argument("--grid", action="store_true", help="weeks {2,3,4} × specialties 1..7")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--outdir", type=str, default=None)
    p.add_argument("-o", "--output", type=str, default=None)

    p = sub.add_parser("sample", parents=[common], help="Write a scenario bundle")
    p.add_argument("--instance", required=True)
    p.add_argument("--count", type=int, default=None, help="Scenarios (default: |P|)")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("solve", parents=[common, bundle], help="Solve the extensive form")
    p.add_argument("--instance", required=True)
    p.add_argument("--evp", action="store_true", help="Solve the mean-value problem instead")
    p.add_argument("--lp", type=str, default=None, help="Also export the model as LP text")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("evaluate", parents=[common, bundle], help="Evaluate a stored solution")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--lp-check", dest="lp_check", type=int, default=0,
                   help="Check the closed form against the LP on this many scenarios")
    p.add_argument("--occupancy-csv", dest="occupancy_csv", type=str, default=None)
    p.add_argument("-o", "--output", type=str, default=None)

    p = sub.add_parser("saa", parents=[common], help="Sample average approximation")
    p.add_argument("--instance", required=True)
    p.add_argument("--N", type=int, default=None, help="Scenarios per LB solve (default: 30)")
    p.add_argument("--M", type=int, default=None, help="LB iterations (default: 25)")
    p.add_argument("--P", type=int, default=None, help="UB scenarios (default: 6000)")
    p.add_argument("--small", action="store_true", help="Desk profile N=10, M=5, P=1000")
    p.add_argument("--no-vss", dest="no_vss", action="store_true")
    p.add_argument("--csv", type=str, default=None, help="Also write the benchmark row as CSV")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("compare", parents=[common, bundle], help="Compare pooling policies")
    p.add_argument("--instance", required=True)
    p.add_argument("--policies", type=_floats, default=[0.0, 0.5, 1.0])
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("sensitivity", parents=[common, bundle], help="Parameter sweep")
    p.add_argument("--instance", required=True)
    p.add_argument("--param", choices=PARAMS, required=True)
    p.add_argument("--multipliers", type=_floats, default=None)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("series", parents=[common, bundle], help="Occupancy time series")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--html", type=str, default=None, help="Also write a plotly figure")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("tune", parents=[common], help="SAA sample-size grid")
    p.add_argument("--instance", required=True)
    p.add_argument("--n-values", dest="n_values", type=_ints, default=[10, 20, 30])
    p.add_argument("--m-values", dest="m_values", type=_ints, default=[5, 15, 25])
    p.add_argument("--p-values", dest="p_values", type=_ints, default=[1000, 3000, 6000])
    p.add_argument("--P", type=int, default=None, help="UB scenarios in the (N, M) grid")
    p.add_argument("-o", "--output", required=True, help="Output prefix")
    return parser


COMMANDS = {
    "generate": cmd_generate, "sample": cmd_sample, "solve": cmd_solve,
    "evaluate": cmd_evaluate, "saa": cmd_saa, "compare": cmd_compare,
    "sensitivity": cmd_sensitivity, "series": cmd_series, "tune": cmd_tune,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and not args.grid and not args.output:
        parser.error("generate: -o/--output is required unless --grid is given")

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        json_overrides = load_json(resolve_input_path(args.config)) if args.config else {}
        cfg = build_config(vars(args), json_overrides)
        COMMANDS[args.command](args, cfg)
    except (OrPoolingError, FileNotFoundError, ValueError, TypeError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
