"""
OR Pooling — First-Stage Cost and Feasibility
=============================================
validate():            Every constraint violation of a FirstStageSolution
first_stage_cost():    Waiting + postponement + room-opening cost
cost_breakdown():      The five components for a solution and its recourse
indicators():          Waiting days, postponements, open rooms, overtime minutes

validate() is the single feasibility authority: the MILP, the brute-force
oracle and the CLI's `evaluate` command all call it before trusting a solution.
"""

from collections import Counter, defaultdict

from .errors import ValidationError
from .models import DOWNSTREAMS, CostBreakdown, FirstStageSolution, Instance, Violation


# ═══════════════════════════════════════════════════════════════
# Feasibility
# ═══════════════════════════════════════════════════════════════

def validate(instance: Instance, sol: FirstStageSolution, guard: bool = True) -> list:
    """
    Check a first-stage solution against the assignment, block and bed-split
    constraints, the D_i/R_i domain and, when `guard` is set,
    Σ t_i^max ≤ A + O^max per block.

    Optional patients missing from `assignment` count as postponed.
    Returns a list of Violation; empty means feasible.
    """
    out = []
    n_rooms, horizon = instance.rooms, instance.horizon_days
    open_set = set(sol.room_open)

    # ─── Patients ───
    for i in sol.assignment:
        if not 0 <= i < instance.n_patients:
            out.append(Violation("domain", f"unknown patient {i}"))

    for p in instance.patients:
        slot = sol.assignment.get(p.id)
        if slot is None:
            if instance.is_mandatory(p):
                out.append(Violation(
                    "Eq. (2)", f"mandatory patient {p.id} is not scheduled"))
            continue
        room, day = slot
        if day not in instance.operable_days(p) or room not in p.eligible_rooms:
            out.append(Violation(
                "domain", f"patient {p.id} at (room {room}, day {day}) is outside "
                          f"D_i={list(instance.operable_days(p))} / R_i={list(p.eligible_rooms)}"))

    # ─── Blocks ───
    for (r, d) in sorted(open_set):
        if not (0 <= r < n_rooms and 1 <= d <= horizon):
            out.append(Violation("domain", f"open room-day ({r}, {d}) outside the instance"))
        if (r, d) not in sol.block_specialty:
            out.append(Violation("Eq. (4)", f"open room {r} day {d} has no specialty"))
    for (r, d), s in sorted(sol.block_specialty.items()):
        if (r, d) not in open_set:
            out.append(Violation("Eq. (4)", f"room {r} day {d} has specialty {s} but is closed"))
        if not 0 <= s < instance.n_specialties:
            out.append(Violation("domain", f"room {r} day {d}: unknown specialty {s}"))

    for i, r, d in sol.assigned():
        if not 0 <= i < instance.n_patients:
            continue
        s_i = instance.patients[i].specialty
        block = sol.block_specialty.get((r, d))
        if block != s_i:
            out.append(Violation(
                "Eq. (5)", f"patient {i} (specialty {s_i}) in room {r} day {d} "
                           f"whose block specialty is {block}"))

    blocks = Counter(sol.block_specialty.values())
    for s, (lo, hi) in enumerate(instance.block_bounds):
        if not lo <= blocks.get(s, 0) <= hi:
            out.append(Violation(
                "Eq. (6)", f"specialty {s} has {blocks.get(s, 0)} blocks, "
                           f"allowed [{lo}, {hi}]"))

    # ─── Non-shared beds ───
    u = sol.bed_split
    if len(u) != instance.n_specialties or any(len(row) != len(DOWNSTREAMS) for row in u):
        out.append(Violation(
            "domain", f"bed_split must be {instance.n_specialties} x {len(DOWNSTREAMS)}"))
    else:
        for h, name in enumerate(DOWNSTREAMS):
            column = [row[h] for row in u]
            if any(v < 0 for v in column):
                out.append(Violation("domain", f"negative non-shared beds in {name}"))
            cap = instance.nonshared_capacity(h)
            if sum(column) > cap:
                out.append(Violation(
                    "Eq. (7)", f"{name}: {sum(column)} non-shared beds > {cap}"))

    # ─── Feasibility guard ───
    if guard:
        limit = instance.regular_time + instance.max_overtime
        for (r, d), load in sorted(max_load(instance, sol).items()):
            if load > limit + 1e-9:
                out.append(Violation(
                    "guard", f"room {r} day {d}: Σ t_max = {load:.2f} > A + O^max = {limit:.2f}"))
    return out


def max_load(instance: Instance, sol: FirstStageSolution) -> dict:
    """Σ t_i^max per occupied (room, day)"""
    load = defaultdict(float)
    for i, r, d in sol.assigned():
        if 0 <= i < instance.n_patients:
            load[(r, d)] += instance.patients[i].max_duration
    return dict(load)


def ensure_valid(instance: Instance, sol: FirstStageSolution, guard: bool = True):
    violations = validate(instance, sol, guard=guard)
    if violations:
        raise ValidationError(violations)


# ═══════════════════════════════════════════════════════════════
# First-stage cost
# ═══════════════════════════════════════════════════════════════

def _first_stage_parts(instance: Instance, sol: FirstStageSolution) -> tuple:
    waiting = 0.0
    for i, r, d in sol.assigned():
        p = instance.patients[i]
        waiting += p.waiting_cost_rate * (d - p.earliest_day)
    postponement = 0.0
    for p in instance.patients:
        if sol.assignment.get(p.id) is None and not instance.is_mandatory(p):
            postponement += p.postpone_cost
    or_fixed = instance.or_open_cost * len(sol.room_open)
    return waiting, postponement, or_fixed


def first_stage_cost(instance: Instance, sol: FirstStageSolution, check: bool = True) -> float:
    """
    Σ c_id^waiting·x + Σ c_i^postpone·x′ + Σ c^OR·y  with c_id^waiting = α_i^waiting·(d − e_i).

    Raises ValidationError if the solution breaks any constraint.
    """
    if check:
        ensure_valid(instance, sol, guard=False)
    return sum(_first_stage_parts(instance, sol))


def cost_breakdown(instance: Instance, sol: FirstStageSolution,
                   surge: float = 0.0, overtime: float = 0.0) -> CostBreakdown:
    """Split the objective; `surge` and `overtime` are mean recourse costs"""
    waiting, postponement, or_fixed = _first_stage_parts(instance, sol)
    return CostBreakdown(waiting=waiting, postponement=postponement,
                         or_fixed=or_fixed, overtime=overtime, surge=surge)


def indicators(instance: Instance, sol: FirstStageSolution,
               overtime_minutes: float = 0.0) -> dict:
    """Operational indicators of the sensitivity tables"""
    waiting_days = sum(d - instance.patients[i].earliest_day for i, _, d in sol.assigned())
    return {
        "waiting_days": int(waiting_days),
        "postponements": sum(1 for p in instance.patients
                             if sol.assignment.get(p.id) is None
                             and not instance.is_mandatory(p)),
        "open_rooms": len(sol.room_open),
        "overtime_minutes": float(overtime_minutes),
    }
