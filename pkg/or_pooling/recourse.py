"""
OR Pooling — Second-Stage Evaluator
===================================
Optimal recourse for a fixed first stage, computed in closed form:

  1. occupancy:       patients present per (specialty, downstream, day)
  2. allocate_shared: overflow above u_sh gets shared beds in a fixed
                       specialty order until ⌊α_h·M_h⌋ is used up; the rest is surge
  3. overtime:        o_rd = max(Σ t_iω − A, 0)

Every surge patient-day in a downstream costs the same, so the total cost
does not depend on the specialty order; only the q/v split across
specialties does. No optimisation solver is involved.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from .errors import OvertimeOverflow
from .models import DOWNSTREAMS, FirstStageSolution, Instance, Scenario, SecondStageOutcome
from .sampling import STREAM_ORDER, make_rng

logger = logging.getLogger(__name__)


class _Plan:
    """Assigned surgeries of a solution as flat arrays (built once per solution)"""

    def __init__(self, instance: Instance, sol: FirstStageSolution):
        rows = list(sol.assigned())
        self.patient = np.array([i for i, _, _ in rows], dtype=np.int64)
        self.room = np.array([r for _, r, _ in rows], dtype=np.int64)
        self.day0 = np.array([d - 1 for _, _, d in rows], dtype=np.int64)
        self.specialty = np.array(
            [instance.patients[i].specialty for i in self.patient], dtype=np.int64)
        self.u = sol.bed_split_array()
        if self.u.size == 0:
            self.u = np.zeros((instance.n_specialties, len(DOWNSTREAMS)), dtype=np.int64)


# ═══════════════════════════════════════════════════════════════
# Step 1: Occupancy
# ═══════════════════════════════════════════════════════════════

def _occupancy(instance: Instance, plan: _Plan, scenario: Scenario) -> np.ndarray:
    n_s, n_h, n_d = instance.n_specialties, len(DOWNSTREAMS), instance.horizon_days
    # one extra day column absorbs discharges beyond the horizon
    diff = np.zeros((n_s, n_h, n_d + 1), dtype=np.int64)
    if plan.patient.size:
        los = scenario.los[plan.patient]                   # (n, H)
        through = np.cumsum(los, axis=1)
        before = through - los
        for h in range(n_h):
            start = np.minimum(plan.day0 + before[:, h], n_d)
            end = np.minimum(plan.day0 + through[:, h], n_d)
            np.add.at(diff, (plan.specialty, h, start), 1)
            np.add.at(diff, (plan.specialty, h, end), -1)
    return np.cumsum(diff, axis=2)[:, :, :n_d] + scenario.carryover


def occupancy(instance: Instance, sol: FirstStageSolution, scenario: Scenario) -> np.ndarray:
    """
    (|S|, |H|, |D|) count of patients present, carry-over included.

    Patient i operated on day d′ is in downstream h on day d iff
    d′ + Σ_{h′<h} l_ih′ ≤ d < d′ + Σ_{h′≤h} l_ih′. Days past the horizon are dropped.
    """
    return _occupancy(instance, _Plan(instance, sol), scenario)


# ═══════════════════════════════════════════════════════════════
# Step 2: Shared beds and surge
# ═══════════════════════════════════════════════════════════════

def _check_order(order, n_s: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (n_s,) or sorted(order.tolist()) != list(range(n_s)):
        raise ValueError(f"order must be a permutation of 0..{n_s - 1}, got {order.tolist()}")
    return order


def allocate_shared(instance: Instance, occupancy: np.ndarray, bed_split, order) -> tuple:
    """
    Returns (q, v), both (|S|, |H|, |D|) integer arrays.

    overflow_s = max(occ_s − u_s, 0); scanning `order`, each specialty takes
    min(overflow, remaining shared beds); v = overflow − q.
    """
    occ = np.asarray(occupancy, dtype=np.int64)
    n_s = occ.shape[0]
    order = _check_order(order, n_s)
    u = np.asarray(bed_split, dtype=np.int64).reshape(n_s, len(DOWNSTREAMS))
    overflow = np.maximum(occ - u[:, :, None], 0)

    q = np.zeros_like(overflow)
    for h in range(len(DOWNSTREAMS)):
        cap = instance.shared_capacity(h)
        granted = np.minimum(np.cumsum(overflow[order, h, :], axis=0), cap)
        q[order, h, :] = np.diff(granted, axis=0, prepend=0)
    return q, overflow - q


# ═══════════════════════════════════════════════════════════════
# Step 3: Overtime
# ═══════════════════════════════════════════════════════════════

def _overtime(instance: Instance, plan: _Plan, scenario: Scenario) -> np.ndarray:
    load = np.zeros((instance.rooms, instance.horizon_days))
    if plan.patient.size:
        np.add.at(load, (plan.room, plan.day0), scenario.durations[plan.patient])
    limit = instance.regular_time + instance.max_overtime
    over = np.argwhere(load > limit + 1e-9)
    if over.size:
        r, d0 = over[0]
        raise OvertimeOverflow(int(r), int(d0) + 1, float(load[r, d0]), limit)
    return np.maximum(load - instance.regular_time, 0.0)


def overtime(instance: Instance, sol: FirstStageSolution, scenario: Scenario) -> np.ndarray:
    """(|R|, |D|) overtime minutes; raises OvertimeOverflow past A + O^max"""
    return _overtime(instance, _Plan(instance, sol), scenario)


# ═══════════════════════════════════════════════════════════════
# Full evaluation
# ═══════════════════════════════════════════════════════════════

def _evaluate(instance: Instance, plan: _Plan, scenario: Scenario, order,
              keep_tables: bool = True) -> SecondStageOutcome:
    occ = _occupancy(instance, plan, scenario)
    q, v = allocate_shared(instance, occ, plan.u, order)
    o = _overtime(instance, plan, scenario)
    # integer surge days per downstream keep the cost identical for every order
    surge_cost = sum(instance.surge_cost[h] * int(v[:, h, :].sum())
                     for h in range(len(DOWNSTREAMS)))
    overtime_cost = instance.overtime_cost_rate * float(o.sum())
    if not keep_tables:
        q = v = None
    return SecondStageOutcome(shared_used=q, surge_used=v, overtime=o,
                              recourse_cost=surge_cost + overtime_cost,
                              surge_cost=surge_cost, overtime_cost=overtime_cost)


def evaluate(instance: Instance, sol: FirstStageSolution, scenario: Scenario,
             order=None) -> SecondStageOutcome:
    """Recourse cost Σ c_h^bed·v + Σ c^overtime·o of one scenario"""
    if order is None:
        order = tuple(range(instance.n_specialties))
    return _evaluate(instance, _Plan(instance, sol), scenario, order)


def specialty_orders(n_specialties: int, count: int, seed: int = 0) -> list:
    rng = make_rng(seed, STREAM_ORDER)
    return [tuple(int(s) for s in rng.permutation(n_specialties)) for _ in range(count)]


def evaluate_many(instance: Instance, sol: FirstStageSolution, scenarios: list,
                  seed: int = 0, jobs: int = 1) -> dict:
    """
    Evaluate one solution on a bundle, one seeded specialty order per scenario.

    Returns per-scenario arrays: recourse, surge, overtime (cost) and
    overtime_minutes, in bundle order regardless of `jobs`.
    """
    plan = _Plan(instance, sol)
    orders = specialty_orders(instance.n_specialties, len(scenarios), seed)

    def run(chunk):
        rows = []
        for k in chunk:
            out = _evaluate(instance, plan, scenarios[k], orders[k], keep_tables=False)
            rows.append((out.recourse_cost, out.surge_cost, out.overtime_cost,
                         float(out.overtime.sum())))
        return rows

    index = range(len(scenarios))
    if jobs > 1 and len(scenarios) > 1:
        chunks = [index[j::jobs] for j in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, chunks))
        rows = [None] * len(scenarios)
        for chunk, part in zip(chunks, parts):
            for k, row in zip(chunk, part):
                rows[k] = row
    else:
        rows = run(index)

    table = np.asarray(rows, dtype=float).reshape(len(scenarios), 4)
    return {
        "recourse": table[:, 0],
        "surge": table[:, 1],
        "overtime": table[:, 2],
        "overtime_minutes": table[:, 3],
    }


def outcome_frame(instance: Instance, sol: FirstStageSolution, scenario: Scenario,
                  order=None) -> pd.DataFrame:
    """Per-day occupancy table: day, specialty, downstream, occupied, shared_used, surge_used"""
    occ = occupancy(instance, sol, scenario)
    out = evaluate(instance, sol, scenario, order)
    rows = []
    for d in range(instance.horizon_days):
        for s in range(instance.n_specialties):
            for h, name in enumerate(DOWNSTREAMS):
                rows.append({
                    "day": d + 1,
                    "specialty": s,
                    "downstream": name,
                    "occupied": int(occ[s, h, d]),
                    "shared_used": int(out.shared_used[s, h, d]),
                    "surge_used": int(out.surge_used[s, h, d]),
                })
    return pd.DataFrame(rows, columns=["day", "specialty", "downstream",
                                       "occupied", "shared_used", "surge_used"])
