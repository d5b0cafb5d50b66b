"""
OR Pooling — Sample Average Approximation
=========================================
1. Lower bounds:  solve the extensive form |M| times, each on its own N
                  scenarios; LB = mean of the optimal values
2. Upper bound:   evaluate every candidate on one shared bundle of P
                  scenarios with the closed-form evaluator; UB = best mean
3. Gap:           100·(UB_best − LB)/LB
4. VSS:           solve the mean-value problem, evaluate its decision on the
                  same P scenarios, 100·(UB_EVP − UB)/UB_EVP

Variances of the means use squared deviations:
  Var(LB) = Σ(f_m − LB)² / (M(M−1)),   Var(UB) = Σ(f_p − UB)² / (P(P−1))
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backends import get_backend
from .costs import cost_breakdown, ensure_valid, first_stage_cost
from .errors import OrPoolingError, SolverFailure
from .milp import build_evp, build_extensive, solve
from .models import (FirstStageSolution, Instance, LowerBoundRun, SaaConfig, SaaReport,
                     SolveResult, UpperBoundEstimate)
from .recourse import evaluate_many
from .sampling import STREAM_LB, STREAM_UB, derive_seed, sample_scenarios

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════
# Statistics
# ═══════════════════════════════════════════════════════════════

def mean_and_var_of_mean(values) -> tuple:
    """(mean, variance of the mean); variance is None for a single value"""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one value")
    mean = float(np.mean(arr))
    if arr.size == 1:
        return mean, None
    var = float(np.sum((arr - mean) ** 2) / (arr.size * (arr.size - 1)))
    return mean, var


def lower_bound_statistics(objectives) -> tuple:
    return mean_and_var_of_mean(objectives)


def upper_bound_statistics(first_stage: float, recourse) -> tuple:
    """First-stage cost is constant across scenarios, only the recourse varies"""
    mean, var = mean_and_var_of_mean(recourse)
    return first_stage + mean, var


def gap_percent(best_ub: float, lb: float) -> float:
    return 100.0 * (best_ub - lb) / lb


def vss_percent(ub_evp: float, ub: float) -> float:
    return 100.0 * (ub_evp - ub) / ub_evp


# ═══════════════════════════════════════════════════════════════
# Lower bounds
# ═══════════════════════════════════════════════════════════════

def lb_scenarios(instance: Instance, config: SaaConfig, iteration: int) -> list:
    return sample_scenarios(instance, config.n_lb, seed=config.seed,
                            config=config.sampler, keys=(STREAM_LB, iteration))


def _solve_iteration(instance: Instance, config: SaaConfig, m: int) -> LowerBoundRun:
    scenarios = lb_scenarios(instance, config, m)
    result = solve(build_extensive(instance, scenarios),
                   backend=get_backend(config.backend), limits=config.limits)
    logger.info("LB iteration %d/%d: f=%.2f (%s)", m + 1, config.m_iter,
                result.objective, result.status.value)
    return LowerBoundRun(iteration=m, seed=derive_seed(config.seed, STREAM_LB, m),
                         objective=result.objective, bound=result.bound,
                         status=result.status, solution=result.solution,
                         seconds=result.seconds)


def run_lower_bounds(instance: Instance, config: SaaConfig) -> tuple:
    """
    Returns (runs, failures): runs sorted by iteration, failures as
    (iteration, message). Raises SolverFailure when every iteration failed.
    """
    get_backend(config.backend)

    def attempt(m):
        try:
            return _solve_iteration(instance, config, m), None
        except OrPoolingError as e:
            logger.warning("LB iteration %d failed: %s", m + 1, e)
            return None, (m, str(e))

    iterations = range(config.m_iter)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(attempt, iterations))
    else:
        outcomes = [attempt(m) for m in iterations]

    runs = [run for run, _ in outcomes if run is not None]
    failures = [fail for _, fail in outcomes if fail is not None]
    if not runs:
        raise SolverFailure("NoIncumbent", f"all {config.m_iter} LB iterations failed")
    return runs, failures


# ═══════════════════════════════════════════════════════════════
# Upper bounds
# ═══════════════════════════════════════════════════════════════

def ub_scenarios(instance: Instance, config: SaaConfig) -> list:
    """The common bundle shared by every candidate and the EVP solution"""
    return sample_scenarios(instance, config.p_ub, seed=config.seed,
                            config=config.sampler, keys=(STREAM_UB,))


def evaluate_upper_bound(instance: Instance, sol: FirstStageSolution,
                         config: SaaConfig = None, scenarios: list = None,
                         iteration: int = None) -> UpperBoundEstimate:
    config = config or SaaConfig()
    ensure_valid(instance, sol, guard=False)
    if scenarios is None:
        scenarios = ub_scenarios(instance, config)
    stats = evaluate_many(instance, sol, scenarios, seed=config.seed, jobs=config.jobs)
    fixed = first_stage_cost(instance, sol)
    mean, var = upper_bound_statistics(fixed, stats["recourse"])
    breakdown = cost_breakdown(instance, sol, surge=float(np.mean(stats["surge"])),
                               overtime=float(np.mean(stats["overtime"])))
    return UpperBoundEstimate(mean=mean, var_of_mean=var, first_stage_cost=fixed,
                              recourse_mean=mean - fixed, breakdown=breakdown,
                              iteration=iteration)


def evaluate_candidates(instance: Instance, runs: list, config: SaaConfig,
                        scenarios: list) -> list:
    """One estimate per run; identical solutions are evaluated once"""
    cache = {}
    out = []
    for run in runs:
        key = run.solution.key()
        if key not in cache:
            cache[key] = evaluate_upper_bound(instance, run.solution, config, scenarios,
                                              iteration=run.iteration)
        est = cache[key]
        out.append(UpperBoundEstimate(est.mean, est.var_of_mean, est.first_stage_cost,
                                      est.recourse_mean, est.breakdown, run.iteration))
    return out


# ═══════════════════════════════════════════════════════════════
# VSS
# ═══════════════════════════════════════════════════════════════

@dataclass
class VssResult:
    vss_percent: float
    ub_evp: UpperBoundEstimate
    evp: SolveResult


def compute_vss(instance: Instance, config: SaaConfig, ub: float,
                scenarios: list = None) -> VssResult:
    """EVP built on the mean of the UB bundle, evaluated on that same bundle"""
    if scenarios is None:
        scenarios = ub_scenarios(instance, config)
    evp = solve(build_evp(instance, scenarios), backend=get_backend(config.backend),
                limits=config.limits)
    est = evaluate_upper_bound(instance, evp.solution, config, scenarios)
    vss = vss_percent(est.mean, ub)
    logger.info("EVP: UB_EVP=%.2f  VSS=%.2f%%", est.mean, vss)
    return VssResult(vss_percent=vss, ub_evp=est, evp=evp)


# ═══════════════════════════════════════════════════════════════
# Full procedure
# ═══════════════════════════════════════════════════════════════

def run_saa(instance: Instance, config: SaaConfig = None, with_vss: bool = True) -> SaaReport:
    config = config or SaaConfig()
    logger.info("SAA on %s: N=%d M=%d P=%d seed=%d", instance.name or "instance",
                config.n_lb, config.m_iter, config.p_ub, config.seed)

    t0 = time.perf_counter()
    runs, failures = run_lower_bounds(instance, config)
    lb_mean, lb_var = lower_bound_statistics([r.objective for r in runs])
    t1 = time.perf_counter()

    bundle = ub_scenarios(instance, config)
    candidates = evaluate_candidates(instance, runs, config, bundle)
    best = min(candidates, key=lambda c: (c.mean, c.iteration))
    best_run = next(r for r in runs if r.iteration == best.iteration)
    t2 = time.perf_counter()

    vss = ub_evp = None
    if with_vss:
        result = compute_vss(instance, config, best.mean, bundle)
        vss, ub_evp = result.vss_percent, result.ub_evp.mean

    report = SaaReport(
        lb_mean=lb_mean,
        lb_var_of_mean=lb_var,
        lb_runs=runs,
        failures=failures,
        candidates=candidates,
        best_ub=best.mean,
        best_ub_var=best.var_of_mean,
        best_iteration=best.iteration,
        best_solution=best_run.solution,
        gap_percent=gap_percent(best.mean, lb_mean),
        vss_percent=vss,
        ub_evp=ub_evp,
        breakdown=best.breakdown,
        lb_seconds=t1 - t0,
        ub_seconds=t2 - t1,
    )
    logger.info("LB=%.2f UB=%.2f gap=%.3f%%", lb_mean, best.mean, report.gap_percent)
    return report
