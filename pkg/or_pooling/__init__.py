"""
OR Pooling
==========
Two-stage stochastic planning of elective surgery when specialties pool
part of their downstream ICU and ward beds. First stage: patient-to-room-day
assignment, room opening, block allocation and the split of shared beds.
Second stage: shared-bed use, surge capacity and overtime once surgery
durations and lengths of stay are known. Solved by sample average
approximation over a MILP extensive form.

Usage:
    from or_pooling import GeneratorConfig, SaaConfig, generate, run_pipeline
    instance = generate(GeneratorConfig(weeks=2, n_specialties=3, patients_per_week=10))
    result = run_pipeline(instance, SaaConfig.small())
"""

from .models import (
    DOWNSTREAMS,
    SpecialtyProfile,
    Patient,
    Instance,
    Scenario,
    FirstStageSolution,
    SecondStageOutcome,
    CostBreakdown,
    GeneratorConfig,
    SamplerConfig,
    SolverLimits,
    SaaConfig,
    SolveStatus,
    SaaReport,
)
from .errors import (OrPoolingError, ValidationError, OvertimeOverflow, SpaceTooLarge,
                     BackendUnavailable, SolverFailure)
from .generator import generate, generate_grid
from .sampling import sample_scenarios
from .costs import validate, first_stage_cost, cost_breakdown
from .recourse import evaluate, evaluate_many
from .milp import build_extensive, build_evp, solve
from .saa import run_saa, evaluate_upper_bound
from .analysis import compare_policies, sensitivity_sweep, occupancy_series, tune_grid
from .backends import get_backend
from .reporter import full_report


def run_pipeline(instance: Instance, config: SaaConfig = None,
                 verbose: bool = True, with_vss: bool = True) -> dict:
    """
    Run SAA on one instance and optionally print the full report.

    Args:
        instance: generated or loaded from JSON
        config: sample sizes, seed, backend (None uses the tuned defaults)
        verbose: whether to print the full report
        with_vss: also solve the mean-value problem

    An instance without patients is rejected: without block bounds its LB and
    UB are zero, and the gap and VSS percentages divide by them. `milp.solve` and
    `oracle.brute_force` still accept it.

    Returns:
        dict with keys:
            report: SaaReport
            gap_pct: float
            vss_pct: float (or None)
            best_solution: FirstStageSolution
    """
    if config is None:
        config = SaaConfig()

    _validate_instance(instance)
    backend = get_backend(config.backend)

    report = run_saa(instance, config, with_vss=with_vss)
    if verbose:
        full_report(instance, config, report, backend.name)

    return {
        "report": report,
        "gap_pct": report.gap_percent,
        "vss_pct": report.vss_percent,
        "best_solution": report.best_solution,
    }


def _validate_instance(instance: Instance):
    """Basic instance checks before the expensive solves; percentages need a patient"""
    if not isinstance(instance, Instance):
        raise TypeError(f"Expected Instance, got {type(instance)}")
    if not instance.patients:
        raise ValueError("At least 1 patient is required")
    for p in instance.patients:
        if p.mean_duration > instance.regular_time + instance.max_overtime:
            raise ValueError(f"patient {p.id}: mean duration exceeds regular time + max overtime")
