"""
Extensive-form MILP tests: row structure, EVP, solving, brute-force cross-check
"""
import logging
from dataclasses import replace

import numpy as np
import pytest

from conftest import instance, patient, scenario
from or_pooling.backends import (BACKENDS, PROVEN_GAP, SolverBackend, cbc_status, get_backend,
                                 parse_cbc_log, relative_gap, write_lp)
from or_pooling.errors import BackendUnavailable, SolverFailure, SpaceTooLarge
from or_pooling.milp import (build_evp, build_extensive, expected_row_counts, mean_scenario,
                             solve)
from or_pooling.models import SolverLimits, SolveStatus
from or_pooling.oracle import brute_force
from or_pooling.sampling import sample_scenarios

EXACT = SolverLimits(rel_gap=0.0, time_limit=60)


def _tiny(rng: np.random.Generator):
    """≤5 patients, 2 rooms, 3 days, 2 specialties, ≤3 scenarios"""
    n = int(rng.integers(1, 6))
    pats = []
    for i in range(n):
        e = int(rng.integers(1, 4))
        pats.append(patient(i, spec=int(rng.integers(0, 2)), earliest=e,
                            latest=e + int(rng.integers(0, 3)),
                            mu=float(rng.uniform(80, 250)), los=float(rng.uniform(1, 5)),
                            priority=int(rng.integers(1, 6)), rooms=(0, 1)))
    inst = instance(pats, n_specialties=2, horizon=3, rooms=2,
                    beds=(int(rng.integers(1, 4)), int(rng.integers(1, 5))),
                    alpha=float(rng.choice([0.0, 0.5, 1.0])))
    return inst, sample_scenarios(inst, int(rng.integers(1, 4)), seed=int(rng.integers(1000)))


def _feasible():
    pats = [patient(i, spec=i % 2, earliest=1, latest=3, mu=120.0, los=3.0, priority=1 + i,
                    rooms=(0, 1)) for i in range(4)]
    inst = instance(pats, n_specialties=2, horizon=3, rooms=2, beds=(2, 3))
    return inst, sample_scenarios(inst, 3, seed=5)


class _Shifted(SolverBackend):
    """HiGHS with the reported objective (and optionally status) rewritten"""
    name = "shifted"

    def __init__(self, inner, shift, status=None):
        self.inner, self.shift, self.status = inner, shift, status

    def available(self) -> bool:
        return True

    def run(self, model, limits):
        out = self.inner.run(model, limits)
        return replace(out, objective=self.shift(out.objective), status=self.status or out.status)


# ══════════════════════════════════════════════════════════════
#  Model structure
# ══════════════════════════════════════════════════════════════

class TestBuildExtensive:
    def test_mandatory_patient_row(self):
        inst = instance([patient(0)], horizon=1)
        counts = build_extensive(inst, [scenario(inst)]).row_counts()
        assert counts["2"] == 1
        assert "3" not in counts

    def test_optional_patient_row(self):
        inst = instance([patient(0, latest=4)], horizon=1)
        model = build_extensive(inst, [scenario(inst)])
        assert model.row_counts()["3"] == 1
        assert "xp" in model.index

    def test_row_counts_closed_form(self):
        rng = np.random.default_rng(0)
        inst, scen = _tiny(rng)
        for n in (1, 3):
            model = build_extensive(inst, scen[:1] * n)
            assert dict(model.row_counts()) == expected_row_counts(inst, n)

    def test_scenario_rows_scale_with_n(self):
        inst = instance([patient(0), patient(1)], n_specialties=1, horizon=2)
        one = build_extensive(inst, [scenario(inst)]).row_counts()
        four = build_extensive(inst, [scenario(inst)] * 4).row_counts()
        for tag in ("14", "15", "16", "17"):
            assert four[tag] == 4 * one[tag]
        for tag in ("2", "4", "5", "6", "7", "guard"):
            assert four[tag] == one[tag]

    def test_needs_scenarios(self):
        with pytest.raises(ValueError):
            build_extensive(instance([]), [])

    def test_arrays_shape(self):
        inst = instance([patient(0)], horizon=1)
        model = build_extensive(inst, [scenario(inst)])
        arr = model.to_arrays()
        assert arr["A"].shape == (len(model.rows), len(model.variables))
        assert arr["c"].shape == (len(model.variables),)


class TestMeanScenario:
    def test_mean_duration(self):
        inst = instance([patient(0)], horizon=1)
        a = scenario(inst, durations=[100.0], los=[[1, 2]])
        b = scenario(inst, durations=[140.0], los=[[2, 2]])
        mean = mean_scenario([a, b])
        assert mean.durations.tolist() == [120.0]
        # 1.5 rounds up to 2
        assert mean.los.tolist() == [[2, 2]]

    def test_identical_scenarios(self):
        inst = instance([patient(0)], horizon=2)
        s = scenario(inst, durations=[90.0], los=[[1, 1]])
        mean = mean_scenario([s, s, s])
        np.testing.assert_array_equal(mean.durations, s.durations)
        np.testing.assert_array_equal(mean.los, s.los)

    def test_evp_is_single_scenario(self):
        inst = instance([patient(0)], horizon=1)
        model = build_evp(inst, [scenario(inst)] * 5)
        assert len(model.scenarios) == 1


# ══════════════════════════════════════════════════════════════
#  Solving
# ══════════════════════════════════════════════════════════════

class TestSolve:
    def test_forced_assignment(self, highs):
        inst = instance([patient(0)], horizon=1, beds=(10, 10))
        result = solve(build_extensive(inst, [scenario(inst, los=[[1, 1]])]), highs, EXACT)
        assert result.solution.assignment == {0: (0, 1)}
        assert result.objective == pytest.approx(4437.0)
        assert result.status == SolveStatus.OPTIMAL

    def test_no_patients(self, highs):
        inst = instance([], horizon=2)
        result = solve(build_extensive(inst, [scenario(inst)]), highs, EXACT)
        assert result.solution.room_open == frozenset()
        assert result.objective == 0

    def test_postpones_when_cheaper(self, highs):
        inst = instance([patient(0, latest=5)], horizon=1, or_open_cost=20000.0)
        result = solve(build_extensive(inst, [scenario(inst)]), highs, EXACT)
        assert result.solution.assignment == {0: None}
        assert result.objective == pytest.approx(15000.0)

    def test_infeasible_block_bounds(self, highs):
        inst = instance([patient(0)], n_specialties=2, horizon=1,
                        block_bounds=((0, 0), (0, 1)))
        with pytest.raises(SolverFailure) as exc:
            solve(build_extensive(inst, [scenario(inst)]), highs, EXACT)
        assert exc.value.status == SolveStatus.INFEASIBLE

    def test_guard_splits_long_surgeries(self, highs):
        # two 300-minute surgeries (t_max 450) cannot share one room-day
        inst = instance([patient(0, mu=300.0, rooms=(0, 1)), patient(1, mu=300.0, rooms=(0, 1))],
                        horizon=1, rooms=2)
        result = solve(build_extensive(inst, [scenario(inst)]), highs, EXACT)
        rooms = {slot[0] for slot in result.solution.assignment.values()}
        assert rooms == {0, 1}

    def test_matches_brute_force(self, highs):
        rng = np.random.default_rng(7)
        for _ in range(20):
            inst, scen = _tiny(rng)
            expected_sol, expected = brute_force(inst, scen)
            if expected_sol is None:
                with pytest.raises(SolverFailure):
                    solve(build_extensive(inst, scen), highs, EXACT)
                continue
            result = solve(build_extensive(inst, scen), highs, EXACT)
            assert result.objective == pytest.approx(expected, rel=1e-6, abs=1e-6)

    def test_solver_objective_agrees_with_evaluator(self, highs):
        inst, scen = _feasible()
        result = solve(build_extensive(inst, scen), highs, EXACT)
        assert result.solver_objective == pytest.approx(result.objective, rel=1e-6, abs=1e-6)

    def _forced(self):
        inst = instance([patient(0)], horizon=1, beds=(10, 10))
        return build_extensive(inst, [scenario(inst, los=[[1, 1]])])

    def test_optimal_objective_mismatch_raises(self, highs):
        backend = _Shifted(highs, lambda f: f * 2 + 1000)
        with pytest.raises(SolverFailure, match="does not match solver objective"):
            solve(self._forced(), backend, EXACT)

    def test_solver_below_true_cost_raises(self, highs):
        backend = _Shifted(highs, lambda f: f - 500, status=SolveStatus.FEASIBLE)
        with pytest.raises(SolverFailure):
            solve(self._forced(), backend, EXACT)

    def test_slack_incumbent_warns(self, highs, caplog):
        backend = _Shifted(highs, lambda f: f + 500, status=SolveStatus.FEASIBLE)
        with caplog.at_level(logging.WARNING, logger="or_pooling.milp"):
            result = solve(self._forced(), backend, EXACT)
        assert result.objective == pytest.approx(4437.0)
        assert result.solver_objective == pytest.approx(4937.0)
        assert any(r.levelno == logging.WARNING for r in caplog.records)


class TestBruteForce:
    def test_refuses_large_space(self):
        inst = instance([patient(i, latest=3, rooms=(0, 1)) for i in range(10)],
                        horizon=3, rooms=2)
        with pytest.raises(SpaceTooLarge):
            brute_force(inst, [scenario(inst)], limit=1000)

    def test_forced(self):
        inst = instance([patient(0)], horizon=1, beds=(10, 10))
        sol, obj = brute_force(inst, [scenario(inst, los=[[1, 1]])])
        assert sol.assignment == {0: (0, 1)}
        assert obj == pytest.approx(4437.0)


# ══════════════════════════════════════════════════════════════
#  Backends
# ══════════════════════════════════════════════════════════════

class TestBackends:
    def test_unknown_backend(self):
        with pytest.raises(BackendUnavailable):
            get_backend("gurobi")

    def test_env_var(self, monkeypatch, highs):
        monkeypatch.setenv("OR_POOLING_SOLVER", "highs")
        assert get_backend().name == "highs"

    def test_registry(self):
        assert set(BACKENDS) == {"highs", "cbc"}

    def test_cbc_agrees_with_highs(self, highs):
        try:
            cbc = get_backend("cbc")
        except BackendUnavailable as e:
            pytest.skip(str(e))
        inst, scen = _feasible()
        a = solve(build_extensive(inst, scen), highs, EXACT)
        b = solve(build_extensive(inst, scen), cbc, SolverLimits(rel_gap=0.0, time_limit=60))
        assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)
        assert b.status == SolveStatus.OPTIMAL
        assert b.bound == pytest.approx(b.solver_objective, rel=1e-6, abs=1e-6)

    def test_relative_gap(self):
        assert relative_gap(100.0, 100.0) == 0.0
        assert relative_gap(100.0, 90.0) == pytest.approx(0.1)
        assert relative_gap(100.0, float("nan")) == float("inf")


CBC_CLOSED = """\
Result - Optimal solution found

Objective value:                4437.00000000
Enumerated nodes:               0
Total iterations:               0
"""

CBC_TIMED_OUT = """\
Result - Stopped on time limit

Objective value:                12500.00000000
Lower bound:                    12000.000
Gap:                            0.04
Enumerated nodes:               812
"""

CBC_WITHIN_GAP = """\
Result - Optimal solution found (within gap tolerance)

Objective value:                9100.00000000
Lower bound:                    9000.000
Gap:                            0.01
"""


class TestCbcStatus:
    def test_parse_closed_tree(self):
        assert parse_cbc_log(CBC_CLOSED) == ("Optimal solution found", None)

    def test_parse_bound(self):
        assert parse_cbc_log(CBC_TIMED_OUT) == ("Stopped on time limit", 12000.0)

    def test_parse_empty(self):
        assert parse_cbc_log("") == ("", None)

    def test_closed_at_zero_gap_is_optimal(self):
        result, bound = parse_cbc_log(CBC_CLOSED)
        assert cbc_status(result, bound, 4437.0, 0.0) == (SolveStatus.OPTIMAL, 4437.0)

    def test_closed_with_gap_tolerance_has_no_bound(self):
        result, bound = parse_cbc_log(CBC_CLOSED)
        status, bound = cbc_status(result, bound, 4437.0, 1e-4)
        assert status == SolveStatus.FEASIBLE
        assert np.isnan(bound)

    def test_within_gap_is_feasible(self):
        result, bound = parse_cbc_log(CBC_WITHIN_GAP)
        assert cbc_status(result, bound, 9100.0, 0.02) == (SolveStatus.FEASIBLE, 9000.0)

    def test_time_limit_keeps_bound(self):
        result, bound = parse_cbc_log(CBC_TIMED_OUT)
        assert cbc_status(result, bound, 12500.0, 0.0) == (SolveStatus.TIME_LIMIT, 12000.0)

    def test_matching_bound_is_optimal(self):
        status, _ = cbc_status("Stopped on time limit", 500.0, 500.0 * (1 + PROVEN_GAP / 2), 0.0)
        assert status == SolveStatus.OPTIMAL

    def test_write_lp(self, tmp_path):
        pytest.importorskip("pulp")
        inst = instance([patient(0)], horizon=1)
        path = write_lp(build_extensive(inst, [scenario(inst)]), tmp_path / "model.lp")
        text = open(path).read()
        assert "Minimize" in text or "MINIMIZE" in text
        assert "eq2_0" in text
