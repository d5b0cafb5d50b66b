"""
OR Pooling — Extensive-Form MILP
================================
build_extensive():  first stage + one copy of the second stage per scenario,
                    recourse weighted 1/N (sample-average objective)
build_evp():        the same model on a single mean-value scenario
solve():            run a backend, extract and validate the first-stage decision

Variable families                         Row tags
  x   (i, r, d)  binary  surgery slot       "2"  mandatory patient scheduled
  xp  i          binary  postponed          "3"  optional: scheduled or postponed
  y   (r, d)     binary  room open          "4"  open room ⇔ one specialty
  z   (s, r, d)  binary  block specialty    "5"  surgery only in own block
  u   (s, h)     integer non-shared beds    "6"  A_s^min ≤ blocks ≤ A_s^max (2 rows)
  q   (s,h,d,n)  cont.   shared beds        "7"  Σ_s u_sh ≤ ⌈(1−α_h)M_h⌉
  v   (s,h,d,n)  cont.   surge              "guard"  Σ t^max·x ≤ A + O^max
  o   (r, d, n)  cont.   overtime minutes   "14" bed balance, "15" shared cap,
                                            "16" overtime, "17" o ≤ O^max
"""

import logging
import math
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .backends import get_backend
from .costs import ensure_valid, first_stage_cost
from .errors import SolverFailure
from .models import (DOWNSTREAMS, FirstStageSolution, Instance, Scenario, SolverLimits,
                     SolveResult, SolveStatus)
from .recourse import evaluate_many

logger = logging.getLogger(__name__)

TAGS = ("2", "3", "4", "5", "6", "7", "guard", "14", "15", "16", "17")

# recomputed vs solver objective agreement
OBJECTIVE_RTOL = 1e-6


@dataclass
class Variable:
    name: str
    kind: str           # "B" binary, "I" integer, "C" continuous
    lb: float
    ub: float
    cost: float


@dataclass
class Row:
    tag: str
    cols: tuple
    vals: tuple
    sense: str          # "<=", ">=", "="
    rhs: float


@dataclass
class MilpModel:
    instance: Instance
    scenarios: list
    variables: list = field(default_factory=list)
    index: dict = field(default_factory=lambda: defaultdict(dict))
    rows: list = field(default_factory=list)

    def add_var(self, family: str, key, kind: str, lb: float, ub: float, cost: float) -> int:
        col = len(self.variables)
        label = "_".join(str(k) for k in (key if isinstance(key, tuple) else (key,)))
        self.variables.append(Variable(f"{family}_{label}", kind, lb, ub, cost))
        self.index[family][key] = col
        return col

    def add_row(self, tag: str, terms, sense: str, rhs: float):
        cols, vals = zip(*terms) if terms else ((), ())
        self.rows.append(Row(tag, tuple(cols), tuple(vals), sense, float(rhs)))

    def row_counts(self) -> Counter:
        return Counter(row.tag for row in self.rows)

    def without(self, *tags) -> "MilpModel":
        """Copy with every row carrying one of `tags` dropped"""
        return replace(self, rows=[r for r in self.rows if r.tag not in tags])

    def to_arrays(self) -> dict:
        """Dense cost vector, CSR matrix and bound arrays for array-based solvers"""
        n = len(self.variables)
        r_idx, c_idx, vals = [], [], []
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for k, row in enumerate(self.rows):
            r_idx.extend([k] * len(row.cols))
            c_idx.extend(row.cols)
            vals.extend(row.vals)
            lo[k] = row.rhs if row.sense in (">=", "=") else -np.inf
            hi[k] = row.rhs if row.sense in ("<=", "=") else np.inf
        return {
            "c": np.array([v.cost for v in self.variables]),
            "A": sparse.csr_matrix((vals, (r_idx, c_idx)), shape=(len(self.rows), n)),
            "row_lo": lo,
            "row_hi": hi,
            "lb": np.array([v.lb for v in self.variables]),
            "ub": np.array([v.ub for v in self.variables]),
            "integrality": np.array([0 if v.kind == "C" else 1 for v in self.variables]),
        }


# ═══════════════════════════════════════════════════════════════
# Model building
# ═══════════════════════════════════════════════════════════════

def _first_stage(model: MilpModel):
    inst = model.instance
    m = model
    for p in inst.patients:
        for r in p.eligible_rooms:
            for d in inst.operable_days(p):
                m.add_var("x", (p.id, r, d), "B", 0, 1,
                          p.waiting_cost_rate * (d - p.earliest_day))
        if not inst.is_mandatory(p):
            m.add_var("xp", p.id, "B", 0, 1, p.postpone_cost)
    for r in range(inst.rooms):
        for d in inst.days:
            m.add_var("y", (r, d), "B", 0, 1, inst.or_open_cost)
    for s in range(inst.n_specialties):
        for r in range(inst.rooms):
            for d in inst.days:
                m.add_var("z", (s, r, d), "B", 0, 1, 0.0)
    for s in range(inst.n_specialties):
        for h in range(len(DOWNSTREAMS)):
            m.add_var("u", (s, h), "I", 0, inst.nonshared_capacity(h), 0.0)

    x, xp, y, z, u = (m.index[f] for f in ("x", "xp", "y", "z", "u"))
    x_of = defaultdict(list)
    for (i, r, d), col in x.items():
        x_of[i].append(col)

    for p in inst.patients:
        terms = [(col, 1.0) for col in x_of[p.id]]
        if inst.is_mandatory(p):
            m.add_row("2", terms, "=", 1)
        else:
            m.add_row("3", terms + [(xp[p.id], 1.0)], "=", 1)
    for r in range(inst.rooms):
        for d in inst.days:
            terms = [(z[(s, r, d)], 1.0) for s in range(inst.n_specialties)]
            m.add_row("4", terms + [(y[(r, d)], -1.0)], "=", 0)
    for (i, r, d), col in x.items():
        s = inst.patients[i].specialty
        m.add_row("5", [(col, 1.0), (z[(s, r, d)], -1.0)], "<=", 0)
    for s, (lo, hi) in enumerate(inst.block_bounds):
        terms = [(z[(s, r, d)], 1.0) for r in range(inst.rooms) for d in inst.days]
        m.add_row("6", terms, ">=", lo)
        m.add_row("6", terms, "<=", hi)
    for h in range(len(DOWNSTREAMS)):
        terms = [(u[(s, h)], 1.0) for s in range(inst.n_specialties)]
        m.add_row("7", terms, "<=", inst.nonshared_capacity(h))

    limit = inst.regular_time + inst.max_overtime
    block_x = defaultdict(list)
    for (i, r, d), col in x.items():
        block_x[(r, d)].append((col, i))
    for r in range(inst.rooms):
        for d in inst.days:
            terms = [(col, inst.patients[i].max_duration) for col, i in block_x[(r, d)]]
            m.add_row("guard", terms, "<=", limit)
    return block_x


def incidence(instance: Instance, x_index: dict, scenario: Scenario) -> dict:
    """
    {(s, h, d): [x columns]}: surgery slot x_{i r d′} counts in (s_i, h, d)
    when d′ + Σ_{h′<h} l_ih′ ≤ d < d′ + Σ_{h′≤h} l_ih′, d inside the horizon.
    """
    cells = defaultdict(list)
    last = instance.horizon_days
    for (i, r, d0), col in x_index.items():
        s = instance.patients[i].specialty
        start = d0
        for h in range(len(DOWNSTREAMS)):
            end = start + int(scenario.los[i, h])
            for d in range(start, min(end, last + 1)):
                cells[(s, h, d)].append(col)
            start = end
    return cells


def _second_stage(model: MilpModel, block_x: dict):
    inst = model.instance
    m = model
    weight = 1.0 / len(model.scenarios)
    u = m.index["u"]
    for n, scen in enumerate(model.scenarios):
        cells = incidence(inst, m.index["x"], scen)
        for s in range(inst.n_specialties):
            for h in range(len(DOWNSTREAMS)):
                for d in inst.days:
                    qc = m.add_var("q", (s, h, d, n), "C", 0, np.inf, 0.0)
                    vc = m.add_var("v", (s, h, d, n), "C", 0, np.inf,
                                   weight * inst.surge_cost[h])
                    terms = [(col, 1.0) for col in cells.get((s, h, d), ())]
                    terms += [(u[(s, h)], -1.0), (qc, -1.0), (vc, -1.0)]
                    m.add_row("14", terms, "<=", -int(scen.carryover[s, h, d - 1]))
        q = m.index["q"]
        for h in range(len(DOWNSTREAMS)):
            for d in inst.days:
                terms = [(q[(s, h, d, n)], 1.0) for s in range(inst.n_specialties)]
                m.add_row("15", terms, "<=", inst.shared_capacity(h))
        for r in range(inst.rooms):
            for d in inst.days:
                oc = m.add_var("o", (r, d, n), "C", 0, np.inf,
                               weight * inst.overtime_cost_rate)
                terms = [(col, float(scen.durations[i])) for col, i in block_x[(r, d)]]
                m.add_row("16", terms + [(oc, -1.0)], "<=", inst.regular_time)
                m.add_row("17", [(oc, 1.0)], "<=", inst.max_overtime)


def build_extensive(instance: Instance, scenarios: list) -> MilpModel:
    if not scenarios:
        raise ValueError("build_extensive needs at least one scenario")
    model = MilpModel(instance=instance, scenarios=list(scenarios))
    block_x = _first_stage(model)
    _second_stage(model, block_x)
    logger.debug("built extensive form: %d vars, %d rows, N=%d",
                 len(model.variables), len(model.rows), len(scenarios))
    return model


def mean_scenario(scenarios: list) -> Scenario:
    """Per-patient mean duration; per-unit mean LOS and carry-over rounded half up"""
    if not scenarios:
        raise ValueError("mean_scenario needs at least one scenario")
    durations = np.mean([s.durations for s in scenarios], axis=0)
    los = np.floor(np.mean([s.los for s in scenarios], axis=0) + 0.5)
    carry = np.floor(np.mean([s.carryover for s in scenarios], axis=0) + 0.5)
    raw = None
    if all(s.los_total_raw is not None for s in scenarios):
        raw = np.mean([s.los_total_raw for s in scenarios], axis=0)
    return Scenario(durations, los.astype(np.int64), carry.astype(np.int64), raw)


def build_evp(instance: Instance, scenarios: list) -> MilpModel:
    return build_extensive(instance, [mean_scenario(scenarios)])


def expected_row_counts(instance: Instance, n_scenarios: int) -> dict:
    """Row count per tag as a closed form in |I|, |R|, |D|, |S|, |H|, N"""
    R, D, S, H = instance.rooms, instance.horizon_days, instance.n_specialties, len(DOWNSTREAMS)
    n_x = sum(len(p.eligible_rooms) * len(instance.operable_days(p)) for p in instance.patients)
    mandatory = sum(1 for p in instance.patients if instance.is_mandatory(p))
    counts = {
        "2": mandatory,
        "3": instance.n_patients - mandatory,
        "4": R * D,
        "5": n_x,
        "6": 2 * S,
        "7": H,
        "guard": R * D,
        "14": S * H * D * n_scenarios,
        "15": H * D * n_scenarios,
        "16": R * D * n_scenarios,
        "17": R * D * n_scenarios,
    }
    return {tag: n for tag, n in counts.items() if n}


# ═══════════════════════════════════════════════════════════════
# Solving
# ═══════════════════════════════════════════════════════════════

def extract_solution(model: MilpModel, values: np.ndarray) -> FirstStageSolution:
    inst = model.instance
    idx = model.index
    assignment = {p.id: None for p in inst.patients}
    for (i, r, d), col in idx["x"].items():
        if values[col] > 0.5:
            assignment[i] = (r, d)
    room_open = {key for key, col in idx["y"].items() if values[col] > 0.5}
    blocks = {(r, d): s for (s, r, d), col in idx["z"].items() if values[col] > 0.5}
    bed_split = tuple(
        tuple(int(round(values[idx["u"][(s, h)]])) for h in range(len(DOWNSTREAMS)))
        for s in range(inst.n_specialties)
    )
    return FirstStageSolution(assignment, frozenset(room_open), blocks, bed_split)


def recomputed_objective(instance: Instance, sol: FirstStageSolution, scenarios: list) -> float:
    """first-stage cost + mean closed-form recourse"""
    recourse = evaluate_many(instance, sol, scenarios)["recourse"]
    return first_stage_cost(instance, sol) + float(np.mean(recourse))


def solve(model: MilpModel, backend=None, limits: SolverLimits = None) -> SolveResult:
    """
    Solve and return the validated first-stage decision.

    `objective` is recomputed from the solution with the closed-form
    evaluator; `solver_objective` is the backend's own value. The two must
    agree to OBJECTIVE_RTOL, otherwise SolverFailure is raised. A non-optimal
    incumbent may carry slack recourse, so only there the solver value is
    allowed to exceed the recomputed one.
    """
    limits = limits or SolverLimits()
    if backend is None or isinstance(backend, str):
        backend = get_backend(backend)
    t0 = time.perf_counter()
    out = backend.run(model, limits)
    seconds = time.perf_counter() - t0

    if out.status == SolveStatus.INFEASIBLE:
        raise SolverFailure(out.status, out.message)
    if out.values is None:
        raise SolverFailure(out.status, out.message or "no incumbent")

    sol = extract_solution(model, out.values)
    ensure_valid(model.instance, sol)
    objective = recomputed_objective(model.instance, sol, model.scenarios)
    if not math.isclose(objective, out.objective,
                        rel_tol=OBJECTIVE_RTOL, abs_tol=OBJECTIVE_RTOL):
        # closed-form recourse is the per-scenario minimum, so it can only undercut
        # the solver at a non-optimal incumbent
        if out.status == SolveStatus.OPTIMAL or objective > out.objective:
            raise SolverFailure(out.status, f"recomputed objective {objective:.6f} does not "
                                            f"match solver objective {out.objective:.6f}")
        logger.warning("recomputed objective %.6f below incumbent %.6f (%s)",
                       objective, out.objective, out.status.value)
    logger.info("%s: %s objective=%.2f bound=%.2f (%.1fs)", backend.name,
                out.status.value, objective, out.bound, seconds)
    return SolveResult(solution=sol, objective=objective, solver_objective=out.objective,
                       bound=out.bound, status=out.status, seconds=seconds)
