"""
Closed-form second-stage evaluator tests
"""
import numpy as np
import pytest

from conftest import instance, patient, random_fixture, scenario, solution
from or_pooling.errors import OvertimeOverflow
from or_pooling.oracle import literal_occupancy, recourse_lp
from or_pooling.recourse import (allocate_shared, evaluate, evaluate_many, occupancy,
                                 outcome_frame, overtime, specialty_orders)


def _single(los, horizon=7, beds=(4, 6), alpha=0.5, assigned=True):
    inst = instance([patient(0)], horizon=horizon, beds=beds, alpha=alpha)
    sol = solution({0: (0, 1) if assigned else None}, {(0, 1): 0} if assigned else {})
    return inst, sol, scenario(inst, los=[los])


# ══════════════════════════════════════════════════════════════
#  occupancy
# ══════════════════════════════════════════════════════════════

class TestOccupancy:
    def test_icu_then_ward(self):
        inst, sol, scen = _single([2, 3])
        occ = occupancy(inst, sol, scen)
        assert occ[0, 0].tolist() == [1, 1, 0, 0, 0, 0, 0]
        assert occ[0, 1].tolist() == [0, 0, 1, 1, 1, 0, 0]

    def test_no_icu_stay(self):
        inst, sol, scen = _single([0, 2])
        occ = occupancy(inst, sol, scen)
        assert not occ[0, 0].any()
        assert occ[0, 1].tolist() == [1, 1, 0, 0, 0, 0, 0]

    def test_stay_past_horizon_is_cut(self):
        inst, sol, scen = _single([2, 3], horizon=3)
        occ = occupancy(inst, sol, scen)
        assert occ[0, 0].tolist() == [1, 1, 0]
        assert occ[0, 1].tolist() == [0, 0, 1]

    def test_unassigned_patient_occupies_nothing(self):
        inst = instance([patient(0, latest=9)], horizon=3)
        sol = solution({0: None}, {})
        assert not occupancy(inst, sol, scenario(inst, los=[[2, 3]])).any()

    def test_carryover_added(self):
        inst, sol, scen = _single([1, 0], horizon=2)
        scen.carryover[0, 0, :] = [3, 1]
        assert occupancy(inst, sol, scen)[0, 0].tolist() == [4, 1]

    def test_matches_day_by_day_membership(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            inst, sol, scen = random_fixture(rng)
            np.testing.assert_array_equal(occupancy(inst, sol, scen),
                                          literal_occupancy(inst, sol, scen))


# ══════════════════════════════════════════════════════════════
#  allocate_shared
# ══════════════════════════════════════════════════════════════

class TestAllocateShared:
    def _two(self, alpha=0.5):
        # ICU: 6 beds, α = 0.5 → 3 shared
        return instance([], n_specialties=2, horizon=1, beds=(6, 6), alpha=alpha)

    def test_order_decides_split(self):
        inst = self._two()
        occ = np.zeros((2, 2, 1), dtype=np.int64)
        occ[:, 0, 0] = [2, 2]
        q, v = allocate_shared(inst, occ, ((0, 0), (0, 0)), (0, 1))
        assert q[:, 0, 0].tolist() == [2, 1]
        assert v[:, 0, 0].tolist() == [0, 1]
        q, v = allocate_shared(inst, occ, ((0, 0), (0, 0)), (1, 0))
        assert q[:, 0, 0].tolist() == [1, 2]
        assert v[:, 0, 0].tolist() == [1, 0]

    def test_nonshared_beds_absorb_first(self):
        inst = self._two()
        occ = np.zeros((2, 2, 1), dtype=np.int64)
        occ[:, 0, 0] = [2, 2]
        q, v = allocate_shared(inst, occ, ((2, 0), (1, 0)), (0, 1))
        assert q[:, 0, 0].tolist() == [0, 1]
        assert not v.any()

    def test_no_overflow(self):
        inst = self._two()
        q, v = allocate_shared(inst, np.zeros((2, 2, 1), dtype=np.int64),
                               ((0, 0), (0, 0)), (0, 1))
        assert not q.any() and not v.any()

    def test_no_sharing(self):
        inst = self._two(alpha=0.0)
        occ = np.full((2, 2, 1), 3, dtype=np.int64)
        q, v = allocate_shared(inst, occ, ((1, 1), (0, 2)), (0, 1))
        assert not q.any()
        np.testing.assert_array_equal(v, np.maximum(occ - np.array([[1, 1], [0, 2]])[:, :, None], 0))

    def test_bad_order(self):
        inst = self._two()
        with pytest.raises(ValueError):
            allocate_shared(inst, np.zeros((2, 2, 1)), ((0, 0), (0, 0)), (0, 0))

    def test_surge_conservation(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            n_s = int(rng.integers(1, 5))
            beds = int(rng.integers(0, 12))
            alpha = float(rng.choice([0.0, 0.3, 0.5, 0.7, 1.0]))
            inst = instance([], n_specialties=n_s, horizon=1, beds=(beds, beds), alpha=alpha)
            occ = rng.integers(0, 8, size=(n_s, 2, 1))
            u = rng.integers(0, 4, size=(n_s, 2))
            q, v = allocate_shared(inst, occ, u, tuple(rng.permutation(n_s)))
            overflow = np.maximum(occ - u[:, :, None], 0).sum(axis=0)
            expected = np.maximum(overflow - inst.shared_capacity(0), 0)
            assert (v.sum(axis=0)[0] == expected[0]).all()
            assert (q >= 0).all() and (q.sum(axis=0)[0] <= inst.shared_capacity(0)).all()


# ══════════════════════════════════════════════════════════════
#  overtime
# ══════════════════════════════════════════════════════════════

class TestOvertime:
    def _block(self, durations):
        pats = [patient(i, mu=50.0) for i in range(len(durations))]
        inst = instance(pats, horizon=1)
        sol = solution({i: (0, 1) for i in range(len(pats))}, {(0, 1): 0})
        return inst, sol, scenario(inst, durations=durations)

    def test_above_regular_time(self):
        assert overtime(*self._block([300.0, 220.0]))[0, 0] == pytest.approx(40.0)

    def test_below_regular_time(self):
        assert overtime(*self._block([250.0, 150.0]))[0, 0] == 0.0

    def test_exactly_at_limit(self):
        assert overtime(*self._block([330.0, 330.0]))[0, 0] == pytest.approx(180.0)

    def test_overflow_raises(self):
        with pytest.raises(OvertimeOverflow) as exc:
            overtime(*self._block([400.0, 300.0]))
        assert (exc.value.room, exc.value.day) == (0, 1)


# ══════════════════════════════════════════════════════════════
#  evaluate
# ══════════════════════════════════════════════════════════════

class TestEvaluate:
    def test_one_icu_surge_day(self):
        inst, sol, scen = _single([1, 0], horizon=1, beds=(0, 6), alpha=0.0)
        out = evaluate(inst, sol, scen)
        assert out.recourse_cost == pytest.approx(109.58)
        assert out.overtime_cost == 0

    def test_nothing_to_pay(self):
        inst, sol, scen = _single([1, 1], horizon=3, beds=(4, 6))
        assert evaluate(inst, sol, scen).recourse_cost == 0

    def test_matches_lp(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            inst, sol, scen = random_fixture(rng)
            lp = recourse_lp(inst, sol, scen)
            assert evaluate(inst, sol, scen).recourse_cost == pytest.approx(lp, rel=1e-6, abs=1e-6)

    def test_cost_independent_of_order(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            inst, sol, scen = random_fixture(rng)
            base = evaluate(inst, sol, scen).recourse_cost
            for order in specialty_orders(inst.n_specialties, 20, seed=int(rng.integers(1000))):
                assert evaluate(inst, sol, scen, order).recourse_cost == base


class TestEvaluateMany:
    def test_workers_do_not_change_results(self):
        rng = np.random.default_rng(4)
        inst, sol, scen = random_fixture(rng)
        bundle = [scen] * 7
        one = evaluate_many(inst, sol, bundle, seed=1, jobs=1)
        three = evaluate_many(inst, sol, bundle, seed=1, jobs=3)
        for key in one:
            np.testing.assert_array_equal(one[key], three[key])

    def test_components_add_up(self):
        rng = np.random.default_rng(5)
        inst, sol, scen = random_fixture(rng)
        out = evaluate_many(inst, sol, [scen, scen])
        np.testing.assert_allclose(out["recourse"], out["surge"] + out["overtime"])
        assert out["overtime_minutes"].shape == (2,)

    def test_orders_are_permutations(self):
        for order in specialty_orders(4, 10, seed=0):
            assert sorted(order) == [0, 1, 2, 3]


class TestOutcomeFrame:
    def test_columns_and_rows(self):
        inst, sol, scen = _single([2, 3], horizon=4)
        df = outcome_frame(inst, sol, scen)
        assert list(df.columns) == ["day", "specialty", "downstream",
                                    "occupied", "shared_used", "surge_used"]
        assert len(df) == 4 * 1 * 2
        icu = df[df["downstream"] == "ICU"]["occupied"].tolist()
        assert icu == [1, 1, 0, 0]
