"""
OR Pooling — Report Output
==========================
Human-readable run reports (printed, teed to report/ by the CLI), CSV
tables with a provenance sidecar, and HTML occupancy figures.
"""

import json
from pathlib import Path

import pandas as pd
import plotly.graph_objects as go

from .costs import indicators
from .models import DOWNSTREAMS, CostBreakdown, FirstStageSolution, Instance, SaaConfig, SaaReport


def _fmt_cost(val: float) -> str:
    if val is None:
        return "—"
    if abs(val) >= 1_000_000:
        return f"${val:,.0f}"
    return f"${val:,.2f}"


def _fmt_pct(val: float) -> str:
    return "—" if val is None else f"{val:.2f}%"


def _fmt_time(seconds: float) -> str:
    if seconds >= 60:
        return f"{seconds / 60:.1f} min"
    return f"{seconds:.2f} s"


def print_separator(char: str = "═", width: int = 72):
    print(char * width)


def print_header(title: str, width: int = 72):
    print()
    print_separator(width=width)
    print(f"  {title}")
    print_separator(width=width)


# ═══════════════════════════════════════════════════════════════
# Sections
# ═══════════════════════════════════════════════════════════════

def report_instance(instance: Instance):
    print_header(f"Instance {instance.name or ''}".rstrip())
    mandatory = sum(1 for p in instance.patients if instance.is_mandatory(p))
    print(f"  Horizon {instance.horizon_days} days | {instance.rooms} rooms | "
          f"{instance.n_specialties} specialties")
    print(f"  Patients {instance.n_patients} ({mandatory} mandatory, "
          f"{instance.n_patients - mandatory} optional)")
    print(f"  Regular time {instance.regular_time:.0f} min | "
          f"max overtime {instance.max_overtime:.0f} min")

    header = f"{'Downstream':<12} {'Beds':>6} {'α':>6} {'Shared':>8} {'Own':>6} {'Surge $/day':>12}"
    print(f"\n  {header}")
    print(f"  {'─' * len(header)}")
    for h, name in enumerate(DOWNSTREAMS):
        print(f"  {name:<12} {instance.bed_stock[h]:>6} {instance.shared_fraction[h]:>6.2f}"
              f" {instance.shared_capacity(h):>8} {instance.nonshared_capacity(h):>6}"
              f" {instance.surge_cost[h]:>12.2f}")


def report_config(config: SaaConfig, backend: str):
    """Print SAA sample sizes and solver limits"""
    print_header("SAA Configuration")
    print("  ┌─ Samples ─────────────────────────┐")
    print(f"  │ |N| (LB scenarios)  = {config.n_lb:<11} │")
    print(f"  │ |M| (LB iterations) = {config.m_iter:<11} │")
    print(f"  │ |P| (UB scenarios)  = {config.p_ub:<11} │")
    print(f"  │ seed                = {config.seed:<11} │")
    print("  └────────────────────────────────────┘")
    print("  ┌─ Solver ──────────────────────────┐")
    print(f"  │ backend    = {backend:<20} │")
    print(f"  │ rel. gap   = {config.limits.rel_gap:<20g} │")
    print(f"  │ time limit = {config.limits.time_limit:<18g}s │")
    print("  └────────────────────────────────────┘")


def report_bounds(report: SaaReport, record_timing: bool = False):
    print_header("Lower / Upper Bounds")

    header = f"{'Iter':>5} {'f_N^m':>14} {'Status':>16} {'UB (P)':>14}"
    print(f"  {header}")
    print(f"  {'─' * len(header)}")
    ub_by_iter = {c.iteration: c.mean for c in report.candidates}
    for run in report.lb_runs:
        mark = "  ←" if run.iteration == report.best_iteration else ""
        print(f"  {run.iteration + 1:>5} {_fmt_cost(run.objective):>14}"
              f" {run.status.value:>16} {_fmt_cost(ub_by_iter.get(run.iteration)):>14}{mark}")
    for m, msg in report.failures:
        print(f"  {m + 1:>5} ✗ {msg}")

    sd_lb = "—" if report.sd_lb is None else f"{report.sd_lb:,.2f}"
    sd_ub = "—" if report.sd_ub is None else f"{report.sd_ub:,.2f}"
    print(f"\n  LB      = {_fmt_cost(report.lb_mean):>14}   SD = {sd_lb}")
    print(f"  UB best = {_fmt_cost(report.best_ub):>14}   SD = {sd_ub}")
    print(f"  Gap     = {_fmt_pct(report.gap_percent)}")
    if report.vss_percent is not None:
        print(f"  UB_EVP  = {_fmt_cost(report.ub_evp):>14}   VSS = {_fmt_pct(report.vss_percent)}")
    if record_timing:
        total = report.lb_seconds + report.ub_seconds
        print(f"\n  Time: LB {_fmt_time(report.lb_seconds)}, UB {_fmt_time(report.ub_seconds)}"
              f" (total {_fmt_time(total)})")


def report_costs(breakdown: CostBreakdown):
    print_header("Cost Breakdown — Best Solution")
    shares = breakdown.shares()
    labels = {"waiting": "Waiting", "postponement": "Postponement", "or_fixed": "OR opening",
              "overtime": "Overtime", "surge": "Surge capacity"}
    for c in CostBreakdown.COMPONENTS:
        print(f"  {labels[c]:<16} {_fmt_cost(getattr(breakdown, c)):>14} {shares[c]:>8.2f}%")
    print(f"  {'═ TOTAL':<16} {_fmt_cost(breakdown.total):>14}")


def report_solution(instance: Instance, sol: FirstStageSolution, overtime_minutes: float = 0.0):
    print_header("First-Stage Decision")
    ind = indicators(instance, sol, overtime_minutes)
    print(f"  Open room-days: {ind['open_rooms']} | postponed: {ind['postponements']}"
          f" | waiting days: {ind['waiting_days']}")

    header = f"{'Specialty':<28} {'Blocks':>7} " + " ".join(f"{'u_' + h:>8}" for h in DOWNSTREAMS)
    print(f"\n  {header}")
    print(f"  {'─' * len(header)}")
    blocks = list(sol.block_specialty.values())
    for s, spec in enumerate(instance.specialties):
        u = " ".join(f"{v:>8}" for v in sol.bed_split[s]) if sol.bed_split else ""
        print(f"  {spec.name:<28} {blocks.count(s):>7} {u}")


def full_report(instance: Instance, config: SaaConfig, report: SaaReport,
                backend: str, record_timing: bool = False):
    """Full SAA report"""
    print("\n" + "▓" * 72)
    print("  OR Pooling — Sample Average Approximation Report")
    print("▓" * 72)

    report_instance(instance)
    report_config(config, backend)
    report_bounds(report, record_timing)
    if report.breakdown is not None:
        report_costs(report.breakdown)
    report_solution(instance, report.best_solution)

    print()
    print_separator()
    print("  Report complete")
    print_separator()
    print()


def report_comparison(comparison):
    """Pooling policies against No-Sharing"""
    print_header("Pooling Policies — Improvement over No-Sharing")
    df = comparison.frame()
    header = (f"{'Policy':<18} {'Objective':>14} {'Imp.':>8} {'Wait':>7} {'Postp.':>7}"
              f" {'OR':>7} {'Overt.':>7} {'Surge':>7}")
    print(f"  {header}")
    print(f"  {'─' * len(header)}")
    for _, r in df.iterrows():
        print(f"  {r['policy']:<18} {_fmt_cost(r['objective']):>14} {r['imp_pct']:>7.2f}%"
              f" {r['waiting_imp_pct']:>7.2f} {r['postponement_imp_pct']:>7.2f}"
              f" {r['or_imp_pct']:>7.2f} {r['overtime_imp_pct']:>7.2f} {r['surge_imp_pct']:>7.2f}")


def report_sensitivity(frame: pd.DataFrame):
    param = frame["parameter"].iloc[0] if len(frame) else ""
    print_header(f"Sensitivity — α^{param}")
    header = (f"{'Value':>6} {'Wait%':>7} {'Postp%':>7} {'OR%':>7} {'Overt%':>7} {'Surge%':>7}"
              f" {'Days':>6} {'Postp':>6} {'ORs':>5} {'OT min':>8}")
    print(f"  {header}")
    print(f"  {'─' * len(header)}")
    for _, r in frame.iterrows():
        print(f"  {r['value']:>6g} {r['waiting_cost_pct']:>7.2f} {r['postponement_cost_pct']:>7.2f}"
              f" {r['or_cost_pct']:>7.2f} {r['overtime_cost_pct']:>7.2f} {r['surge_cost_pct']:>7.2f}"
              f" {r['waiting_days']:>6} {r['postponements']:>6} {r['open_rooms']:>5}"
              f" {r['overtime_minutes']:>8.1f}")


# ═══════════════════════════════════════════════════════════════
# Files
# ═══════════════════════════════════════════════════════════════

def write_frame(frame: pd.DataFrame, path, prov: dict = None) -> Path:
    """CSV plus `<name>.meta.json` holding the provenance"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    if prov is not None:
        meta = path.with_name(path.stem + ".meta.json")
        meta.write_text(json.dumps(prov, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def occupancy_figure(series: pd.DataFrame, instance: Instance, path=None) -> go.Figure:
    """Stacked mean shared beds per specialty and total mean surge, one figure per downstream"""
    fig = go.Figure()
    names = {s.id: s.name for s in instance.specialties}
    for h in DOWNSTREAMS:
        part = series[series["downstream"] == h]
        for s, grp in part.groupby("specialty"):
            fig.add_trace(go.Bar(x=grp["day"], y=grp["mean_q"], name=f"{h} shared — {names[s]}",
                                 legendgroup=h, offsetgroup=h))
        surge = part.groupby("day", as_index=False)["mean_v"].sum()
        fig.add_trace(go.Scatter(x=surge["day"], y=surge["mean_v"], mode="lines+markers",
                                 name=f"{h} surge", legendgroup=h))
    fig.update_layout(barmode="stack", xaxis_title="Day", yaxis_title="Beds (mean over scenarios)",
                      title=f"Shared beds and surge capacity — {instance.name}")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.write_html(str(path), include_plotlyjs="cdn")
    return fig
