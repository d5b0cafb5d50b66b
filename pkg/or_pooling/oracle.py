"""
OR Pooling — Reference Oracles
==============================
brute_force():  exhaustive search over every feasible first-stage decision
                of a tiny instance (assignments × non-shared bed splits)
recourse_lp():  second-stage LP for a fixed first stage, solved with HiGHS

Both exist to cross-check the MILP and the closed-form evaluator; neither
is meant for instances beyond a handful of patients.
"""

import itertools
import logging
import math
from collections import Counter

import numpy as np
from scipy.optimize import linprog

from .costs import first_stage_cost
from .errors import OvertimeOverflow, SpaceTooLarge
from .models import DOWNSTREAMS, FirstStageSolution, Instance, Scenario
from .recourse import _Plan, _occupancy, _overtime

logger = logging.getLogger(__name__)

DEFAULT_LIMIT = 10 ** 7


# ═══════════════════════════════════════════════════════════════
# Exhaustive search
# ═══════════════════════════════════════════════════════════════

def _options(instance: Instance) -> list:
    """Admissible slots per patient; None stands for postponement"""
    out = []
    for p in instance.patients:
        slots = [(r, d) for r in p.eligible_rooms for d in instance.operable_days(p)]
        if not instance.is_mandatory(p):
            slots.append(None)
        out.append(slots)
    return out


def _blocks(instance: Instance, assignment: dict):
    """Minimal block layout for an assignment, or None if none exists"""
    blocks = {}
    for i, slot in assignment.items():
        if slot is None:
            continue
        s = instance.patients[i].specialty
        if blocks.setdefault(slot, s) != s:
            return None
    count = Counter(blocks.values())
    empty = [(r, d) for r in range(instance.rooms) for d in instance.days
             if (r, d) not in blocks]
    for s, (lo, hi) in enumerate(instance.block_bounds):
        if count.get(s, 0) > hi:
            return None
        for _ in range(lo - count.get(s, 0)):
            if not empty:
                return None
            blocks[empty.pop(0)] = s
    return blocks


def _splits(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length `parts` with sum ≤ total"""
    rows = [c for c in itertools.product(range(total + 1), repeat=parts) if sum(c) <= total]
    return np.array(rows, dtype=np.int64).reshape(len(rows), parts)


def _best_split(instance: Instance, occ: np.ndarray, h: int, splits: np.ndarray) -> tuple:
    """(u column, mean surge cost) minimising surge in downstream h; occ is (N, S, D)"""
    cap = instance.shared_capacity(h)
    overflow = np.maximum(occ[None, :, :, :] - splits[:, None, :, None], 0)   # (K, N, S, D)
    surge = np.maximum(overflow.sum(axis=2) - cap, 0).sum(axis=2)              # (K, N)
    mean = surge.mean(axis=1) * instance.surge_cost[h]
    k = int(np.argmin(mean))
    return splits[k], float(mean[k])


def brute_force(instance: Instance, scenarios: list, limit: int = DEFAULT_LIMIT) -> tuple:
    """
    Returns (FirstStageSolution, objective) minimising
    first-stage cost + mean closed-form recourse over `scenarios`.
    """
    options = _options(instance)
    size = math.prod(len(o) for o in options)
    if size > limit:
        raise SpaceTooLarge(size, limit)

    n_s, n_h = instance.n_specialties, len(DOWNSTREAMS)
    splits = [_splits(instance.nonshared_capacity(h), n_s) for h in range(n_h)]
    guard = instance.regular_time + instance.max_overtime
    empty_split = tuple((0,) * n_h for _ in range(n_s))

    best, best_obj = None, math.inf
    for combo in itertools.product(*options):
        assignment = dict(enumerate(combo))
        load = Counter()
        for i, slot in assignment.items():
            if slot is not None:
                load[slot] += instance.patients[i].max_duration
        if any(v > guard + 1e-9 for v in load.values()):
            continue
        blocks = _blocks(instance, assignment)
        if blocks is None:
            continue

        draft = FirstStageSolution(assignment, frozenset(blocks), blocks, empty_split)
        cost = first_stage_cost(instance, draft, check=False)
        if cost >= best_obj:
            continue

        plan = _Plan(instance, draft)
        try:
            over = np.mean([instance.overtime_cost_rate * _overtime(instance, plan, sc).sum()
                            for sc in scenarios])
        except OvertimeOverflow:
            continue
        occ = np.stack([_occupancy(instance, plan, sc) for sc in scenarios])   # (N, S, H, D)
        u = np.zeros((n_s, n_h), dtype=np.int64)
        surge = 0.0
        for h in range(n_h):
            u[:, h], part = _best_split(instance, occ[:, :, h, :], h, splits[h])
            surge += part
        total = cost + over + surge
        if total < best_obj - 1e-9:
            best_obj = total
            best = FirstStageSolution(assignment, frozenset(blocks), blocks,
                                      tuple(tuple(int(x) for x in row) for row in u))

    if best is None:
        return None, math.inf
    logger.debug("brute force searched %d assignments, best %.4f", size, best_obj)
    return best, best_obj


# ═══════════════════════════════════════════════════════════════
# Second-stage LP
# ═══════════════════════════════════════════════════════════════

def literal_occupancy(instance: Instance, sol: FirstStageSolution, scenario: Scenario) -> np.ndarray:
    """Occupancy from the day-by-day membership test, one cell at a time"""
    n_h = len(DOWNSTREAMS)
    occ = np.array(scenario.carryover, dtype=np.int64, copy=True)
    for i, _, d_op in sol.assigned():
        s = instance.patients[i].specialty
        for h in range(n_h):
            before = int(scenario.los[i, :h].sum())
            through = int(scenario.los[i, :h + 1].sum())
            for d in instance.days:
                if d_op + before <= d < d_op + through:
                    occ[s, h, d - 1] += 1
    return occ


def recourse_lp(instance: Instance, sol: FirstStageSolution, scenario: Scenario) -> float:
    """
    Optimal value of the second-stage LP (q, v, o continuous) for a fixed first stage.

    Raises OvertimeOverflow when no o ≤ O^max can absorb a block's load.
    """
    n_s, n_h, n_d, n_r = (instance.n_specialties, len(DOWNSTREAMS),
                          instance.horizon_days, instance.rooms)
    occ = literal_occupancy(instance, sol, scenario)
    u = sol.bed_split_array() if sol.bed_split else np.zeros((n_s, n_h), dtype=np.int64)

    load = np.zeros((n_r, n_d))
    for i, r, d in sol.assigned():
        load[r, d - 1] += scenario.durations[i]
    limit = instance.regular_time + instance.max_overtime
    if (load > limit + 1e-9).any():
        r, d0 = np.argwhere(load > limit + 1e-9)[0]
        raise OvertimeOverflow(int(r), int(d0) + 1, float(load[r, d0]), limit)

    cells = n_s * n_h * n_d
    n_q, n_o = cells, n_r * n_d
    # column layout: q (s,h,d) | v (s,h,d) | o (r,d)
    c = np.concatenate([
        np.zeros(n_q),
        np.broadcast_to(np.asarray(instance.surge_cost)[None, :, None], (n_s, n_h, n_d)).ravel(),
        np.full(n_o, instance.overtime_cost_rate),
    ])
    rows, rhs = [], []
    for s in range(n_s):
        for h in range(n_h):
            for d in range(n_d):
                k = (s * n_h + h) * n_d + d
                a = np.zeros(2 * n_q + n_o)
                a[k] = a[n_q + k] = -1.0
                rows.append(a)
                rhs.append(u[s, h] - occ[s, h, d])
    for h in range(n_h):
        for d in range(n_d):
            a = np.zeros(2 * n_q + n_o)
            for s in range(n_s):
                a[(s * n_h + h) * n_d + d] = 1.0
            rows.append(a)
            rhs.append(instance.shared_capacity(h))
    for r in range(n_r):
        for d in range(n_d):
            a = np.zeros(2 * n_q + n_o)
            a[2 * n_q + r * n_d + d] = -1.0
            rows.append(a)
            rhs.append(instance.regular_time - load[r, d])

    bounds = [(0, None)] * (2 * n_q) + [(0, instance.max_overtime)] * n_o
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs, dtype=float),
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"second-stage LP failed: {res.message}")
    return float(res.fun)
