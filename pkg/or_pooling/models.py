"""
OR Pooling — Data Models
========================
SpecialtyProfile:    Surgical specialty statistics (duration, LOS)
Patient:             One elective surgery with its time window and costs
Instance:            Static problem data (rooms, horizon, beds, costs)
Scenario:            One realisation of durations, LOS and carry-over occupancy
FirstStageSolution:  Surgery assignments, room openings, blocks, bed split
SecondStageOutcome:  Shared beds, surge, overtime and recourse cost of a scenario
CostBreakdown:       The five cost components of the objective

GeneratorConfig / SamplerConfig / SolverLimits / SaaConfig:
                     All tunable parameters (with defaults, user-adjustable)

Units: money in dollars, time in minutes, lengths of stay in whole days.
Days are numbered 1..|D|; rooms, specialties and patients from 0.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


DOWNSTREAMS = ("ICU", "ward")   # patients visit ICU first, then the ward
ICU, WARD = 0, 1

# Rounding slack for α·M products such as 0.3 × 10
_EPS = 1e-9


def shared_beds(alpha: float, beds: int) -> int:
    """⌊α·M⌋ beds pooled between specialties"""
    return int(math.floor(alpha * beds + _EPS))


def nonshared_beds(alpha: float, beds: int) -> int:
    """⌈(1−α)·M⌉ beds that can be split among specialties"""
    return int(math.ceil((1.0 - alpha) * beds - _EPS))


# ═══════════════════════════════════════════════════════════════
# Static problem data
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SpecialtyProfile:
    id: int
    name: str
    mean_duration: float    # minutes
    sd_duration: float      # minutes
    mean_los_ward: float    # days
    mean_los_icu: float     # days
    sd_los: float           # days, applies to the total LOS draw

    def __post_init__(self):
        for attr in ("mean_duration", "sd_duration", "mean_los_ward",
                     "mean_los_icu", "sd_los"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"specialty {self.id}: {attr} must be > 0")

    @property
    def mean_los_total(self) -> float:
        return self.mean_los_ward + self.mean_los_icu


@dataclass(frozen=True)
class Patient:
    id: int
    specialty: int
    earliest_day: int           # e_i
    latest_day: int             # may lie beyond the horizon (optional patient)
    priority: int               # urgency level 1..5
    mean_duration: float        # μ_i^duration, minutes
    max_duration: float         # t_i^max, minutes
    mean_los_total: float       # μ_i^LOS, days
    sd_los: float               # σ_i^LOS, days
    waiting_cost_rate: float    # $/day of waiting
    postpone_cost: float        # $ if pushed to the next horizon
    eligible_rooms: tuple       # R_i
    sd_duration: float = 0.0    # 0 → μ/6

    def __post_init__(self):
        if self.earliest_day > self.latest_day:
            raise ValueError(f"patient {self.id}: earliest_day > latest_day")
        if self.max_duration < self.mean_duration:
            raise ValueError(f"patient {self.id}: max_duration < mean_duration")
        if self.mean_duration <= 0:
            raise ValueError(f"patient {self.id}: mean_duration must be > 0")
        if not self.eligible_rooms:
            raise ValueError(f"patient {self.id}: eligible_rooms is empty")
        if self.sd_duration <= 0:
            object.__setattr__(self, "sd_duration", self.mean_duration / 6.0)
        object.__setattr__(self, "eligible_rooms", tuple(sorted(self.eligible_rooms)))


@dataclass(frozen=True)
class Instance:
    horizon_days: int
    rooms: int
    specialties: tuple          # tuple[SpecialtyProfile]
    patients: tuple             # tuple[Patient]
    regular_time: float         # A, minutes per room-day
    max_overtime: float         # O^max, minutes per room-day
    bed_stock: tuple            # M_h per downstream (ICU, ward)
    shared_fraction: tuple      # α_h per downstream
    or_open_cost: float         # c^OR per room-day
    overtime_cost_rate: float   # c^overtime per minute
    surge_cost: tuple           # c_h^bed per patient-day
    block_bounds: tuple = ()    # (A_s^min, A_s^max) per specialty, () → non-binding
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "specialties", tuple(self.specialties))
        object.__setattr__(self, "patients", tuple(self.patients))
        object.__setattr__(self, "bed_stock", tuple(int(m) for m in self.bed_stock))
        object.__setattr__(self, "shared_fraction",
                           tuple(float(a) for a in self.shared_fraction))
        object.__setattr__(self, "surge_cost", tuple(float(c) for c in self.surge_cost))
        if not self.block_bounds:
            object.__setattr__(self, "block_bounds", tuple(
                (0, self.rooms * self.horizon_days) for _ in self.specialties))
        else:
            object.__setattr__(self, "block_bounds", tuple(
                (int(lo), int(hi)) for lo, hi in self.block_bounds))
        self._check()

    def _check(self):
        n_h = len(DOWNSTREAMS)
        if self.horizon_days < 1 or self.rooms < 1:
            raise ValueError("horizon_days and rooms must be >= 1")
        for name in ("bed_stock", "shared_fraction", "surge_cost"):
            if len(getattr(self, name)) != n_h:
                raise ValueError(f"{name} needs one value per downstream {DOWNSTREAMS}")
        for h, alpha in enumerate(self.shared_fraction):
            if not 0.0 <= alpha <= 1.0:
                raise ValueError(f"shared_fraction[{DOWNSTREAMS[h]}] must be in [0, 1]")
        if any(m < 0 for m in self.bed_stock):
            raise ValueError("bed_stock cannot be negative")
        if len(self.block_bounds) != len(self.specialties):
            raise ValueError("block_bounds needs one (min, max) pair per specialty")
        if sum(lo for lo, _ in self.block_bounds) > self.rooms * self.horizon_days:
            raise ValueError("sum of A_s^min exceeds the number of room-days")
        for s, spec in enumerate(self.specialties):
            if spec.id != s:
                raise ValueError(f"specialty at position {s} has id {spec.id}")
        for i, p in enumerate(self.patients):
            if p.id != i:
                raise ValueError(f"patient at position {i} has id {p.id}")
            if not 0 <= p.specialty < len(self.specialties):
                raise ValueError(f"patient {i}: unknown specialty {p.specialty}")
            if not 1 <= p.earliest_day <= self.horizon_days:
                raise ValueError(f"patient {i}: earliest_day outside the horizon")
            if any(not 0 <= r < self.rooms for r in p.eligible_rooms):
                raise ValueError(f"patient {i}: eligible room out of range")

    # ─── Derived sets ───

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_specialties(self) -> int:
        return len(self.specialties)

    @property
    def days(self) -> range:
        return range(1, self.horizon_days + 1)

    def is_mandatory(self, patient: Patient) -> bool:
        return patient.latest_day <= self.horizon_days

    def operable_days(self, patient: Patient) -> range:
        """D_i: window clipped to the horizon end"""
        return range(patient.earliest_day,
                     min(patient.latest_day, self.horizon_days) + 1)

    def shared_capacity(self, h: int) -> int:
        return shared_beds(self.shared_fraction[h], self.bed_stock[h])

    def nonshared_capacity(self, h: int) -> int:
        return nonshared_beds(self.shared_fraction[h], self.bed_stock[h])

    def with_shared_fraction(self, alpha) -> "Instance":
        if isinstance(alpha, (int, float)):
            alpha = (float(alpha),) * len(DOWNSTREAMS)
        return replace(self, shared_fraction=tuple(alpha))


# ═══════════════════════════════════════════════════════════════
# Uncertainty
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class Scenario:
    """
    durations:     (|I|,) float minutes, t_iω
    los:           (|I|, |H|) int days, l_ihω
    carryover:     (|S|, |H|, |D|) int beds, b_shdω (day d at index d-1)
    los_total_raw: (|I|,) float, total LOS before rounding (for LOS scaling)
    """
    durations: np.ndarray
    los: np.ndarray
    carryover: np.ndarray
    los_total_raw: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "durations", np.asarray(self.durations, dtype=float))
        object.__setattr__(self, "los", np.asarray(self.los, dtype=np.int64))
        object.__setattr__(self, "carryover", np.asarray(self.carryover, dtype=np.int64))
        if self.los_total_raw is not None:
            object.__setattr__(self, "los_total_raw",
                               np.asarray(self.los_total_raw, dtype=float))
        if self.los.ndim != 2 or self.los.shape[0] != self.durations.shape[0]:
            raise ValueError("los must have shape (n_patients, n_downstreams)")
        if (self.los < 0).any() or (self.carryover < 0).any():
            raise ValueError("los and carryover must be nonnegative")


# ═══════════════════════════════════════════════════════════════
# Decisions and outcomes
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class Violation:
    constraint: str     # e.g. "Eq. (2)", "domain", "guard"
    message: str


@dataclass(frozen=True)
class FirstStageSolution:
    """
    assignment:      {patient: (room, day)} or {patient: None} for postponed
    room_open:       {(room, day)} with y_rd = 1
    block_specialty: {(room, day): specialty}, z_srd = 1
    bed_split:       u_sh as ((u_0,ICU, u_0,ward), (u_1,ICU, ...), ...)
    """
    assignment: dict
    room_open: frozenset
    block_specialty: dict
    bed_split: tuple

    def __post_init__(self):
        object.__setattr__(self, "room_open", frozenset(self.room_open))
        object.__setattr__(self, "bed_split",
                           tuple(tuple(int(v) for v in row) for row in self.bed_split))

    def assigned(self):
        """Yield (patient, room, day) for every scheduled surgery, by patient id"""
        for i in sorted(self.assignment):
            slot = self.assignment[i]
            if slot is not None:
                yield i, slot[0], slot[1]

    def postponed(self) -> list:
        return sorted(i for i, slot in self.assignment.items() if slot is None)

    def bed_split_array(self) -> np.ndarray:
        return np.asarray(self.bed_split, dtype=np.int64).reshape(
            len(self.bed_split), len(DOWNSTREAMS))

    def key(self) -> tuple:
        """Hashable identity, used to evaluate duplicate candidates once"""
        return (
            tuple(sorted(self.assignment.items())),
            tuple(sorted(self.room_open)),
            tuple(sorted(self.block_specialty.items())),
            self.bed_split,
        )


@dataclass(frozen=True, eq=False)
class SecondStageOutcome:
    shared_used: np.ndarray     # q, (|S|, |H|, |D|)
    surge_used: np.ndarray      # v, (|S|, |H|, |D|)
    overtime: np.ndarray        # o, (|R|, |D|) minutes
    recourse_cost: float
    surge_cost: float = 0.0
    overtime_cost: float = 0.0


@dataclass(frozen=True)
class CostBreakdown:
    waiting: float = 0.0
    postponement: float = 0.0
    or_fixed: float = 0.0
    overtime: float = 0.0
    surge: float = 0.0

    COMPONENTS = ("waiting", "postponement", "or_fixed", "overtime", "surge")

    @property
    def total(self) -> float:
        return self.waiting + self.postponement + self.or_fixed + self.overtime + self.surge

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(**{c: getattr(self, c) + getattr(other, c)
                                for c in self.COMPONENTS})

    def shares(self) -> dict:
        """Percentage of the total per component"""
        total = self.total
        if total == 0:
            return {c: 0.0 for c in self.COMPONENTS}
        return {c: 100.0 * getattr(self, c) / total for c in self.COMPONENTS}

    def as_dict(self) -> dict:
        d = {c: getattr(self, c) for c in self.COMPONENTS}
        d["total"] = self.total
        return d


# ═══════════════════════════════════════════════════════════════
# All tunable parameters, with defaults, user-adjustable
# ═══════════════════════════════════════════════════════════════

@dataclass
class GeneratorConfig:
    """
    Instance generation parameters.

    Grouped into four categories:
    1. Size of the instance
    2. Operating-room constants
    3. Downstream beds
    4. Unit costs
    """

    # ─── 1. Size ───
    weeks: int = 2                  # {2, 3, 4}
    n_specialties: int = 7          # 1..7, first rows of the specialty table
    seed: int = 0
    patients_per_week: int = 60     # 2 → 120, 3 → 180, 4 → 240 patients
    window_max: int = 7             # time-window length drawn from 1..window_max

    # ─── 2. Operating rooms ───
    rooms: int = 4
    regular_time: float = 480.0     # A, eight hours
    max_overtime: float = 180.0     # O^max, three hours
    max_duration_factor: float = 1.5  # t^max = μ + 3σ with σ = μ/6

    # ─── 3. Downstream beds ───
    bed_rule: str = "formula_0.8"   # or "preset"
    bed_factor: float = 0.8         # M_h = round(factor · Σ_i μ_ih^LOS / |D|)
    icu_beds: int = 35              # used by bed_rule="preset"
    ward_beds: int = 65
    icu_share: float = 0.4          # ICU part of a patient's total LOS
    los_spread: float = 0.25        # μ_i^LOS ~ U[(1−spread), (1+spread)] · LOS_s
    shared_fraction: float = 0.5    # Midlevel-Sharing policy

    # ─── 4. Unit costs ───
    or_open_cost: float = 4437.0
    overtime_cost_rate: float = 12.37
    surge_cost_icu: float = 109.58
    surge_cost_ward: float = 62.94
    waiting_cost_per_priority: float = 1000.0
    postpone_cost_per_priority: float = 15000.0


@dataclass
class SamplerConfig:
    seed: int = 0
    truncation_sigmas: float = 3.0  # durations kept within μ ± kσ (99.73% for k=3)
    icu_share: float = 0.4
    carryover_mode: str = "zero"    # or "synthetic"
    carryover_fraction: float = 0.0 # synthetic: share of M_h/|S| busy on day 1
    carryover_decay: float = 0.5    # synthetic: geometric decay per day

    def __post_init__(self):
        if self.truncation_sigmas <= 0:
            raise ValueError("truncation_sigmas must be > 0")
        if not 0.0 <= self.icu_share <= 1.0:
            raise ValueError("icu_share must be in [0, 1]")
        if self.carryover_mode not in ("zero", "synthetic"):
            raise ValueError(f"unknown carryover_mode: {self.carryover_mode}")


@dataclass
class SolverLimits:
    rel_gap: float = 1e-4
    time_limit: float = 3600.0      # seconds per solve
    threads: int = 1


@dataclass
class SaaConfig:
    n_lb: int = 30                  # |N| scenarios per lower-bound solve
    m_iter: int = 25                # |M| lower-bound iterations
    p_ub: int = 6000                # |P| upper-bound scenarios
    seed: int = 0
    backend: str = None             # None → OR_POOLING_SOLVER or "highs"
    jobs: int = 1                   # concurrent solver sessions / evaluation workers
    limits: SolverLimits = field(default_factory=SolverLimits)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        for name in ("n_lb", "m_iter", "p_ub", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def small(cls, **overrides) -> "SaaConfig":
        """Desk-scale profile"""
        params = dict(n_lb=10, m_iter=5, p_ub=1000)
        params.update(overrides)
        return cls(**params)


# ═══════════════════════════════════════════════════════════════
# Solver and experiment results
# ═══════════════════════════════════════════════════════════════

class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "FeasibleWithGap"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT = "TimeLimit"


@dataclass
class SolveResult:
    solution: FirstStageSolution
    objective: float            # recomputed: first-stage cost + mean closed-form recourse
    solver_objective: float
    bound: float
    status: SolveStatus
    seconds: float = 0.0


@dataclass
class UpperBoundEstimate:
    mean: float
    var_of_mean: float          # None when P = 1
    first_stage_cost: float
    recourse_mean: float
    breakdown: CostBreakdown = None
    iteration: int = None

    @property
    def sd(self) -> float:
        return math.sqrt(self.var_of_mean) if self.var_of_mean is not None else None


@dataclass
class LowerBoundRun:
    iteration: int
    seed: int
    objective: float            # f_N^m
    bound: float
    status: SolveStatus
    solution: FirstStageSolution
    seconds: float = 0.0


@dataclass
class SaaReport:
    lb_mean: float
    lb_var_of_mean: float
    lb_runs: list               # list[LowerBoundRun]
    failures: list              # list[(iteration, message)]
    candidates: list            # list[UpperBoundEstimate], one per LB run
    best_ub: float
    best_ub_var: float
    best_iteration: int
    best_solution: FirstStageSolution
    gap_percent: float
    vss_percent: float = None
    ub_evp: float = None
    breakdown: CostBreakdown = None
    lb_seconds: float = 0.0
    ub_seconds: float = 0.0

    @property
    def sd_lb(self) -> float:
        return math.sqrt(self.lb_var_of_mean) if self.lb_var_of_mean is not None else None

    @property
    def sd_ub(self) -> float:
        return math.sqrt(self.best_ub_var) if self.best_ub_var is not None else None

    def table_row(self, record_timing: bool = False) -> dict:
        """One benchmark row in the layout of the SAA results table"""
        shares = self.breakdown.shares() if self.breakdown else {}
        row = {
            "iterations": len(self.lb_runs),
            "LB": self.lb_mean,
            "SD_LB": self.sd_lb,
            "UB": self.best_ub,
            "SD_UB": self.sd_ub,
            "gap_pct": self.gap_percent,
            "vss_pct": self.vss_percent,
            "overtime_cost_pct": shares.get("overtime"),
            "surge_cost_pct": shares.get("surge"),
            "waiting_cost_pct": shares.get("waiting"),
            "postponement_cost_pct": shares.get("postponement"),
            "or_cost_pct": shares.get("or_fixed"),
        }
        if record_timing:
            total = self.lb_seconds + self.ub_seconds
            row["time_sec"] = total
            row["lb_time_pct"] = 100.0 * self.lb_seconds / total if total else 0.0
            row["ub_time_pct"] = 100.0 * self.ub_seconds / total if total else 0.0
        return row
