"""
OR Pooling — Experiments
========================
compare_policies():   same scenarios, one solve per pooling fraction, improvements vs No-Sharing
sensitivity_sweep():  scale one cost or stochastic parameter, re-solve, cost shares + indicators
occupancy_series():   mean shared-bed and surge usage per (downstream, specialty, day)
tune_grid():          SAA over (N, M) and P grids, reporting gap and relative SDs

All solves within one experiment share the scenario bundle and the solver limits.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .backends import get_backend
from .costs import cost_breakdown, indicators
from .milp import build_extensive, solve
from .models import (DOWNSTREAMS, CostBreakdown, FirstStageSolution, Instance, SaaConfig,
                     Scenario, SolverLimits, SolveStatus)
from .recourse import evaluate, evaluate_many, specialty_orders
from .saa import evaluate_upper_bound, run_saa, ub_scenarios
from .sampling import split_los

logger = logging.getLogger(__name__)

COST_PARAMS = ("waiting", "or", "surge", "postpone", "overtime")
STOCHASTIC_PARAMS = ("duration", "los")
PARAMS = COST_PARAMS + STOCHASTIC_PARAMS

COST_MULTIPLIERS = (1, 3, 5, 7, 10)
NARROW_MULTIPLIERS = (0.5, 0.75, 1, 1.25, 1.5)


def default_multipliers(param: str) -> tuple:
    """Postponement and the stochastic parameters use the narrow set"""
    return NARROW_MULTIPLIERS if param in ("postpone",) + STOCHASTIC_PARAMS else COST_MULTIPLIERS


def _map(fn, items, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _solve_and_measure(instance: Instance, scenarios: list, backend, limits,
                       seed: int) -> tuple:
    """(SolveResult, CostBreakdown, mean overtime minutes) on the given bundle"""
    result = solve(build_extensive(instance, scenarios),
                   backend=get_backend(backend), limits=limits)
    stats = evaluate_many(instance, result.solution, scenarios, seed=seed)
    breakdown = cost_breakdown(instance, result.solution,
                               surge=float(np.mean(stats["surge"])),
                               overtime=float(np.mean(stats["overtime"])))
    return result, breakdown, float(np.mean(stats["overtime_minutes"]))


# ═══════════════════════════════════════════════════════════════
# Pooling policies
# ═══════════════════════════════════════════════════════════════

def policy_name(alpha: float) -> str:
    return {0.0: "No-Sharing", 0.5: "Midlevel-Sharing", 1.0: "Full-Sharing"}.get(
        float(alpha), f"alpha={alpha:g}")


@dataclass
class PolicyResult:
    alpha: float
    objective: float
    breakdown: CostBreakdown
    status: SolveStatus
    solution: FirstStageSolution
    bound: float = None


@dataclass
class PolicyComparison:
    baseline: PolicyResult          # α = 0
    results: list                   # list[PolicyResult] in request order

    def imp_percent(self, result: PolicyResult) -> float:
        no = self.baseline.objective
        return 100.0 * (no - result.objective) / no

    def component_imp(self, result: PolicyResult) -> dict:
        """Per-component contributions; they sum to imp_percent"""
        no = self.baseline.objective
        return {c: 100.0 * (getattr(self.baseline.breakdown, c) - getattr(result.breakdown, c)) / no
                for c in CostBreakdown.COMPONENTS}

    def frame(self) -> pd.DataFrame:
        rows = []
        for res in self.results:
            comp = self.component_imp(res)
            rows.append({
                "policy": policy_name(res.alpha),
                "alpha": res.alpha,
                "objective": res.objective,
                "status": res.status.value,
                "imp_pct": self.imp_percent(res),
                "waiting_imp_pct": comp["waiting"],
                "postponement_imp_pct": comp["postponement"],
                "or_imp_pct": comp["or_fixed"],
                "overtime_imp_pct": comp["overtime"],
                "surge_imp_pct": comp["surge"],
            })
        return pd.DataFrame(rows)


def compare_policies(instance: Instance, scenarios: list, policies=(0.0, 0.5, 1.0),
                     backend: str = None, limits: SolverLimits = None,
                     jobs: int = 1, seed: int = 0) -> PolicyComparison:
    """Policies differ only in the shared fraction α, applied to every downstream"""
    limits = limits or SolverLimits()
    alphas = [float(a) for a in policies]
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"pooling fraction must be in [0, 1], got {a}")
    todo = sorted(set(alphas) | {0.0})

    def run(alpha):
        inst = instance.with_shared_fraction(alpha)
        result, breakdown, _ = _solve_and_measure(inst, scenarios, backend, limits, seed)
        logger.info("%s: objective %.2f", policy_name(alpha), breakdown.total)
        return PolicyResult(alpha, breakdown.total, breakdown, result.status,
                            result.solution, result.bound)

    solved = dict(zip(todo, _map(run, todo, jobs)))
    return PolicyComparison(baseline=solved[0.0], results=[solved[a] for a in alphas])


# ═══════════════════════════════════════════════════════════════
# Sensitivity
# ═══════════════════════════════════════════════════════════════

def scale_instance(instance: Instance, param: str, mult: float) -> Instance:
    """
    Cost parameters scale their unit cost; `duration` scales μ, σ and t^max
    together. `los` acts on scenarios only.
    """
    if param not in PARAMS:
        raise ValueError(f"unknown parameter '{param}', choose from {PARAMS}")
    if mult <= 0:
        raise ValueError("multipliers must be > 0")

    if param == "or":
        return replace(instance, or_open_cost=instance.or_open_cost * mult)
    if param == "overtime":
        return replace(instance, overtime_cost_rate=instance.overtime_cost_rate * mult)
    if param == "surge":
        return replace(instance, surge_cost=tuple(c * mult for c in instance.surge_cost))
    if param == "los":
        return instance

    def patch(p):
        if param == "waiting":
            return replace(p, waiting_cost_rate=p.waiting_cost_rate * mult)
        if param == "postpone":
            return replace(p, postpone_cost=p.postpone_cost * mult)
        return replace(p, mean_duration=p.mean_duration * mult,
                       sd_duration=p.sd_duration * mult,
                       max_duration=p.max_duration * mult)

    return replace(instance, patients=tuple(patch(p) for p in instance.patients))


def scale_scenarios(scenarios: list, param: str, mult: float, icu_share: float = 0.4) -> list:
    """t := mult·t for `duration`; total LOS scaled before rounding for `los`"""
    if param == "duration":
        return [Scenario(s.durations * mult, s.los, s.carryover, s.los_total_raw)
                for s in scenarios]
    if param != "los":
        return list(scenarios)
    out = []
    for s in scenarios:
        if s.los_total_raw is not None:
            raw = s.los_total_raw * mult
            los = split_los(raw, icu_share)
        else:
            raw = None
            los = np.floor(s.los * mult + 0.5).astype(np.int64)
        out.append(Scenario(s.durations, los, s.carryover, raw))
    return out


def sensitivity_sweep(instance: Instance, param: str, multipliers=None,
                      scenarios: list = None, backend: str = None,
                      limits: SolverLimits = None, jobs: int = 1, seed: int = 0,
                      icu_share: float = 0.4) -> pd.DataFrame:
    """One row per multiplier: cost shares (%) and indicators"""
    multipliers = list(multipliers or default_multipliers(param))
    limits = limits or SolverLimits()
    if not scenarios:
        raise ValueError("sensitivity_sweep needs a scenario bundle")

    def run(mult):
        inst = scale_instance(instance, param, mult)
        scen = scale_scenarios(scenarios, param, mult, icu_share)
        result, breakdown, minutes = _solve_and_measure(inst, scen, backend, limits, seed)
        shares = breakdown.shares()
        row = {
            "parameter": param,
            "value": mult,
            "objective": breakdown.total,
            "waiting_cost_pct": shares["waiting"],
            "postponement_cost_pct": shares["postponement"],
            "or_cost_pct": shares["or_fixed"],
            "overtime_cost_pct": shares["overtime"],
            "surge_cost_pct": shares["surge"],
        }
        row.update(indicators(inst, result.solution, overtime_minutes=minutes))
        logger.info("%s x%g: objective %.2f", param, mult, breakdown.total)
        return row

    return pd.DataFrame(_map(run, multipliers, jobs))


# ═══════════════════════════════════════════════════════════════
# Occupancy series
# ═══════════════════════════════════════════════════════════════

def occupancy_series(instance: Instance, sol: FirstStageSolution, scenarios: list,
                     seed: int = 0) -> pd.DataFrame:
    """Columns: day, downstream, specialty, mean_q, mean_v"""
    if not scenarios:
        raise ValueError("occupancy_series needs at least one scenario")
    orders = specialty_orders(instance.n_specialties, len(scenarios), seed)
    q_sum = v_sum = 0
    for scen, order in zip(scenarios, orders):
        out = evaluate(instance, sol, scen, order)
        q_sum = q_sum + out.shared_used
        v_sum = v_sum + out.surge_used
    q_mean = np.asarray(q_sum, dtype=float) / len(scenarios)
    v_mean = np.asarray(v_sum, dtype=float) / len(scenarios)

    rows = []
    for h, name in enumerate(DOWNSTREAMS):
        for s in range(instance.n_specialties):
            for d in range(instance.horizon_days):
                rows.append({"day": d + 1, "downstream": name, "specialty": s,
                             "mean_q": q_mean[s, h, d], "mean_v": v_mean[s, h, d]})
    return pd.DataFrame(rows, columns=["day", "downstream", "specialty", "mean_q", "mean_v"])


# ═══════════════════════════════════════════════════════════════
# Tuning
# ═══════════════════════════════════════════════════════════════

def _rsd(var, mean) -> float:
    if var is None or mean == 0:
        return None
    return math.sqrt(var) / mean


def tune_grid(instance: Instance, n_values, m_values, p_values,
              base: SaaConfig = None, record_timing: bool = False) -> dict:
    """
    {"nm": one row per (N, M), "p": one row per P}.

    The P grid re-evaluates the best solution of the largest (N, M) cell.
    """
    base = base or SaaConfig()
    nm_rows = []
    best_sol = None
    for n in n_values:
        for m in m_values:
            cfg = replace(base, n_lb=n, m_iter=m)
            rep = run_saa(instance, cfg, with_vss=False)
            row = {"N": n, "M": m, "LB": rep.lb_mean, "SD_LB": rep.sd_lb,
                   "RSD_LB": _rsd(rep.lb_var_of_mean, rep.lb_mean),
                   "UB": rep.best_ub, "SD_UB": rep.sd_ub, "gap_pct": rep.gap_percent}
            if record_timing:
                row["time_sec"] = rep.lb_seconds + rep.ub_seconds
            nm_rows.append(row)
            best_sol = rep.best_solution

    p_rows = []
    for p in p_values:
        cfg = replace(base, p_ub=p)
        t0 = time.perf_counter()
        est = evaluate_upper_bound(instance, best_sol, cfg, ub_scenarios(instance, cfg))
        row = {"P": p, "UB": est.mean, "SD_UB": est.sd,
               "RSD_UB": _rsd(est.var_of_mean, est.mean)}
        if record_timing:
            row["time_sec"] = time.perf_counter() - t0
        p_rows.append(row)
    return {"nm": pd.DataFrame(nm_rows), "p": pd.DataFrame(p_rows)}
