"""
Pytest configuration: add project root to sys.path
so 'from or_pooling.xxx import ...' works, plus shared tiny-instance builders.
"""
import sys
import os

import numpy as np
import pytest

# Project root (code/)
_project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if _project_root not in sys.path:
    sys.path.insert(0, _project_root)

from or_pooling.errors import BackendUnavailable  # noqa: E402
from or_pooling.models import (FirstStageSolution, Instance, Patient, Scenario,  # noqa: E402
                               SpecialtyProfile)


# ── --runslow ────────────────────────────────────────────────────

def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-size acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# ── Builders ─────────────────────────────────────────────────────

def specialty(s: int, mu: float = 100.0) -> SpecialtyProfile:
    return SpecialtyProfile(id=s, name=f"S{s}", mean_duration=mu, sd_duration=mu / 6,
                            mean_los_ward=2.0, mean_los_icu=1.0, sd_los=1.0)


def patient(i: int, spec: int = 0, earliest: int = 1, latest: int = 1, mu: float = 100.0,
            los: float = 3.0, priority: int = 1, rooms=(0,)) -> Patient:
    return Patient(id=i, specialty=spec, earliest_day=earliest, latest_day=latest,
                   priority=priority, mean_duration=mu, max_duration=1.5 * mu,
                   mean_los_total=los, sd_los=1.0, waiting_cost_rate=1000.0 * priority,
                   postpone_cost=15000.0 * priority, eligible_rooms=rooms)


def instance(patients=(), n_specialties: int = 1, horizon: int = 2, rooms: int = 1,
             beds=(4, 6), alpha: float = 0.5, **kw) -> Instance:
    return Instance(
        horizon_days=horizon,
        rooms=rooms,
        specialties=tuple(specialty(s) for s in range(n_specialties)),
        patients=tuple(patients),
        regular_time=kw.pop("regular_time", 480.0),
        max_overtime=kw.pop("max_overtime", 180.0),
        bed_stock=beds,
        shared_fraction=(alpha, alpha),
        or_open_cost=kw.pop("or_open_cost", 4437.0),
        overtime_cost_rate=kw.pop("overtime_cost_rate", 12.37),
        surge_cost=kw.pop("surge_cost", (109.58, 62.94)),
        **kw,
    )


def scenario(inst: Instance, durations=None, los=None) -> Scenario:
    n = inst.n_patients
    durations = [p.mean_duration for p in inst.patients] if durations is None else durations
    los = np.zeros((n, 2), dtype=np.int64) if los is None else los
    carry = np.zeros((inst.n_specialties, 2, inst.horizon_days), dtype=np.int64)
    return Scenario(np.asarray(durations, float).reshape(n), np.asarray(los).reshape(n, 2),
                    carry)


def solution(assignment: dict, blocks: dict, bed_split=None, n_specialties: int = 1):
    bed_split = bed_split if bed_split is not None else ((0, 0),) * n_specialties
    return FirstStageSolution(assignment, frozenset(blocks), blocks, bed_split)


def random_fixture(rng: np.random.Generator, max_specialties: int = 4, max_days: int = 14):
    """(instance, solution, scenario) with random occupancy, u and α"""
    n_s = int(rng.integers(1, max_specialties + 1))
    horizon = int(rng.integers(1, max_days + 1))
    rooms = int(rng.integers(1, 3))
    alpha = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
    beds = (int(rng.integers(0, 8)), int(rng.integers(0, 12)))
    n = int(rng.integers(0, 8))
    pats, assignment, blocks = [], {}, {}
    for i in range(n):
        r, d = int(rng.integers(0, rooms)), int(rng.integers(1, horizon + 1))
        s = blocks.setdefault((r, d), int(rng.integers(0, n_s)))
        pats.append(patient(i, spec=s, earliest=d, latest=d, mu=float(rng.uniform(60, 150)),
                            rooms=tuple(range(rooms))))
        assignment[i] = (r, d)
    inst = instance(pats, n_specialties=n_s, horizon=horizon, rooms=rooms, beds=beds,
                    alpha=alpha)
    u = np.zeros((n_s, 2), dtype=np.int64)
    for h in range(2):
        cap = inst.nonshared_capacity(h)
        for s in rng.permutation(n_s):
            u[s, h] = rng.integers(0, cap - u[:, h].sum() + 1)
    sol = FirstStageSolution(assignment, frozenset(blocks), blocks,
                             tuple(tuple(int(v) for v in row) for row in u))
    # realised block load stays below A + O^max = 660
    per_block = {}
    for i, slot in assignment.items():
        per_block.setdefault(slot, []).append(i)
    durations = np.empty(n)
    for slot, members in per_block.items():
        share = 650.0 / len(members)
        for i in members:
            durations[i] = rng.uniform(0.5, 1.0) * min(share, 1.5 * pats[i].mean_duration)
    los = rng.integers(0, 5, size=(n, 2))
    carry = rng.integers(0, 3, size=(n_s, 2, horizon))
    return inst, sol, Scenario(durations, los, carry)


@pytest.fixture
def highs():
    from or_pooling.backends import get_backend
    try:
        return get_backend("highs")
    except BackendUnavailable as e:
        pytest.skip(str(e))
