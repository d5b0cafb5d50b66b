"""
First-stage cost and feasibility tests
"""
import pytest

from conftest import instance, patient, solution
from or_pooling.costs import cost_breakdown, ensure_valid, first_stage_cost, indicators, validate
from or_pooling.errors import ValidationError
from or_pooling.models import FirstStageSolution


def _constraints(violations):
    return sorted(v.constraint for v in violations)


# ══════════════════════════════════════════════════════════════
#  first_stage_cost / cost_breakdown
# ══════════════════════════════════════════════════════════════

class TestFirstStageCost:
    def test_operated_on_earliest_day_waits_nothing(self):
        inst = instance([patient(0, earliest=1, latest=5, priority=3)], horizon=5)
        sol = solution({0: (0, 1)}, {(0, 1): 0})
        assert cost_breakdown(inst, sol).waiting == 0

    def test_two_days_late_priority_three(self):
        # rate 3 × 1000 $/day, 2 days
        inst = instance([patient(0, earliest=1, latest=5, priority=3)], horizon=5)
        sol = solution({0: (0, 3)}, {(0, 3): 0})
        assert cost_breakdown(inst, sol).waiting == 6000

    def test_five_open_room_days(self):
        inst = instance([], horizon=5)
        sol = solution({}, {(0, d): 0 for d in range(1, 6)})
        assert first_stage_cost(inst, sol) == pytest.approx(22185)

    def test_missing_optional_patient_is_postponed(self):
        inst = instance([patient(0, earliest=1, latest=5, priority=2)], horizon=2)
        sol = solution({}, {})
        assert first_stage_cost(inst, sol) == 30000

    def test_explicit_postponement(self):
        inst = instance([patient(0, earliest=2, latest=4, priority=1)], horizon=2)
        sol = solution({0: None}, {})
        parts = cost_breakdown(inst, sol)
        assert parts.postponement == 15000
        assert parts.or_fixed == 0

    def test_invalid_solution_raises(self):
        inst = instance([patient(0)])
        with pytest.raises(ValidationError):
            first_stage_cost(inst, solution({}, {}))

    def test_breakdown_adds_recourse(self):
        inst = instance([patient(0)])
        parts = cost_breakdown(inst, solution({0: (0, 1)}, {(0, 1): 0}),
                               surge=10.0, overtime=5.0)
        assert parts.total == pytest.approx(4437 + 15)
        assert sum(parts.shares().values()) == pytest.approx(100.0)


# ══════════════════════════════════════════════════════════════
#  validate
# ══════════════════════════════════════════════════════════════

class TestValidate:
    def test_feasible(self):
        inst = instance([patient(0)])
        assert validate(inst, solution({0: (0, 1)}, {(0, 1): 0})) == []

    def test_unscheduled_mandatory_patient(self):
        inst = instance([patient(0)])
        assert _constraints(validate(inst, solution({}, {}))) == ["Eq. (2)"]

    def test_full_nonshared_split_allowed(self):
        # α = 0.5 of (4, 6) → ⌈2⌉ ICU, ⌈3⌉ ward
        inst = instance([])
        assert validate(inst, solution({}, {}, ((2, 3),))) == []

    def test_nonshared_split_over_capacity(self):
        inst = instance([])
        assert _constraints(validate(inst, solution({}, {}, ((3, 3),)))) == ["Eq. (7)"]

    def test_outside_eligible_rooms(self):
        inst = instance([patient(0, rooms=(0,))], rooms=2)
        sol = solution({0: (1, 1)}, {(1, 1): 0})
        assert _constraints(validate(inst, sol)) == ["domain"]

    def test_outside_time_window(self):
        inst = instance([patient(0, earliest=2, latest=2)], horizon=3)
        sol = solution({0: (0, 1)}, {(0, 1): 0})
        assert _constraints(validate(inst, sol)) == ["domain"]

    def test_open_room_without_specialty(self):
        inst = instance([])
        sol = FirstStageSolution({}, frozenset({(0, 1)}), {}, ((0, 0),))
        assert _constraints(validate(inst, sol)) == ["Eq. (4)"]

    def test_wrong_block_specialty(self):
        inst = instance([patient(0, spec=1)], n_specialties=2)
        sol = solution({0: (0, 1)}, {(0, 1): 0}, n_specialties=2)
        assert _constraints(validate(inst, sol)) == ["Eq. (5)"]

    def test_block_bounds(self):
        inst = instance([], n_specialties=2, block_bounds=((0, 1), (1, 2)))
        sol = solution({}, {(0, 1): 0, (0, 2): 0}, n_specialties=2)
        assert _constraints(validate(inst, sol)) == ["Eq. (6)", "Eq. (6)"]

    def test_guard_at_boundary(self):
        # t_max = 1.5 · 440 = 660 = A + O^max
        inst = instance([patient(0, mu=440.0)])
        assert validate(inst, solution({0: (0, 1)}, {(0, 1): 0})) == []

    def test_guard_exceeded(self):
        inst = instance([patient(0, mu=300.0), patient(1, mu=300.0)])
        sol = solution({0: (0, 1), 1: (0, 1)}, {(0, 1): 0})
        assert _constraints(validate(inst, sol)) == ["guard"]
        assert validate(inst, sol, guard=False) == []

    def test_ensure_valid_carries_violations(self):
        inst = instance([patient(0)])
        with pytest.raises(ValidationError) as exc:
            ensure_valid(inst, solution({}, {}))
        assert len(exc.value.violations) == 1
        assert "Eq. (2)" in str(exc.value)


# ══════════════════════════════════════════════════════════════
#  indicators
# ══════════════════════════════════════════════════════════════

class TestIndicators:
    def test_counts(self):
        inst = instance([patient(0, earliest=1, latest=2), patient(1, earliest=1, latest=9)])
        sol = solution({0: (0, 2), 1: None}, {(0, 2): 0})
        ind = indicators(inst, sol, overtime_minutes=12.5)
        assert ind == {"waiting_days": 1, "postponements": 1, "open_rooms": 1,
                       "overtime_minutes": 12.5}
