"""
JSON document and scenario-bundle tests
"""
import json

import numpy as np
import pytest

from conftest import instance, patient, solution
from or_pooling.generator import generate
from or_pooling.models import GeneratorConfig, SaaConfig, SolverLimits
from or_pooling.saa import run_saa
from or_pooling.sampling import sample_scenarios
from or_pooling.serialization import (SCHEMA, dump_json, instance_from_dict, instance_to_dict,
                                      load_json, provenance, read_bundle, report_to_dict,
                                      solution_from_dict, solution_to_dict, write_bundle)


class TestInstanceDocument:
    def test_file_round_trip(self, tmp_path):
        inst = generate(GeneratorConfig(seed=2, n_specialties=3, patients_per_week=6))
        path = dump_json(instance_to_dict(inst), tmp_path / "inst.json")
        assert instance_from_dict(load_json(path)) == inst

    def test_block_bounds_survive(self):
        inst = instance([patient(0)], n_specialties=2, block_bounds=((0, 1), (1, 2)))
        assert instance_from_dict(instance_to_dict(inst)).block_bounds == ((0, 1), (1, 2))

    def test_wrong_schema(self):
        doc = instance_to_dict(instance([patient(0)]))
        doc["schema"] = "or_pooling/0"
        with pytest.raises(ValueError, match="unsupported schema"):
            instance_from_dict(doc)

    def test_wrong_kind(self):
        doc = solution_to_dict(solution({}, {}))
        with pytest.raises(ValueError, match="expected a 'instance' document"):
            instance_from_dict(doc)

    def test_missing_field(self):
        doc = instance_to_dict(instance([patient(0)]))
        del doc["rooms"]
        with pytest.raises(ValueError, match="rooms"):
            instance_from_dict(doc)

    def test_provenance_attached(self):
        doc = instance_to_dict(instance([]), prov=provenance(seed=np.int64(3)))
        assert doc["provenance"] == {"schema": SCHEMA, "seed": 3}
        assert type(doc["provenance"]["seed"]) is int


class TestSolutionDocument:
    def test_postponed_and_scheduled(self):
        sol = solution({0: (0, 1), 1: None}, {(0, 1): 0}, bed_split=((2, 3),))
        doc = solution_to_dict(sol)
        assert doc["assignment"] == [{"patient": 0, "room": 0, "day": 1},
                                     {"patient": 1, "postponed": True}]
        back = solution_from_dict(doc)
        assert back.assignment == sol.assignment
        assert back.room_open == sol.room_open
        assert back.block_specialty == sol.block_specialty
        assert back.bed_split == ((2, 3),)


class TestJsonFiles:
    def test_sorted_keys_and_newline(self, tmp_path):
        path = dump_json({"b": 1, "a": {"d": 2, "c": 3}}, tmp_path / "x.json")
        text = path.read_text()
        assert text.endswith("\n")
        assert list(json.loads(text)) == ["a", "b"]
        assert list(json.loads(text)["a"]) == ["c", "d"]

    def test_rewrite_is_byte_identical(self, tmp_path):
        inst = generate(GeneratorConfig(seed=9, n_specialties=2, patients_per_week=4))
        a = dump_json(instance_to_dict(inst), tmp_path / "a.json").read_bytes()
        b = dump_json(instance_to_dict(inst), tmp_path / "b.json").read_bytes()
        assert a == b

    def test_creates_parent_directories(self, tmp_path):
        path = dump_json({}, tmp_path / "deep" / "dir" / "x.json")
        assert path.exists()


class TestScenarioBundle:
    def test_round_trip(self, tmp_path):
        inst = instance([patient(0), patient(1, los=5.0)], horizon=3)
        scen = sample_scenarios(inst, 4, seed=8)
        path = write_bundle(tmp_path / "s.jsonl", scen, instance_name="tiny")
        header, back = read_bundle(path)
        assert header["count"] == 4
        assert header["instance"] == "tiny"
        for a, b in zip(scen, back):
            np.testing.assert_array_equal(a.durations, b.durations)
            np.testing.assert_array_equal(a.los, b.los)
            np.testing.assert_array_equal(a.carryover, b.carryover)
            np.testing.assert_array_equal(a.los_total_raw, b.los_total_raw)

    def test_one_scenario_per_line(self, tmp_path):
        inst = instance([patient(0)])
        path = write_bundle(tmp_path / "s.jsonl", sample_scenarios(inst, 3, seed=0))
        assert len(path.read_text().splitlines()) == 4

    def test_count_mismatch(self, tmp_path):
        inst = instance([patient(0)])
        path = write_bundle(tmp_path / "s.jsonl", sample_scenarios(inst, 3, seed=0))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError, match="header says 3"):
            read_bundle(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            read_bundle(path)


class TestReportDocument:
    @pytest.fixture
    def report(self, highs):
        pats = [patient(i, spec=i % 2, earliest=1, latest=2, mu=120.0, rooms=(0, 1))
                for i in range(3)]
        inst = instance(pats, n_specialties=2, horizon=2, rooms=2)
        cfg = SaaConfig(n_lb=2, m_iter=2, p_ub=10, seed=1,
                        limits=SolverLimits(rel_gap=0.0, time_limit=60))
        return run_saa(inst, cfg, with_vss=False)

    def test_timing_excluded_by_default(self, report):
        doc = report_to_dict(report)
        assert "timing" not in doc
        assert all("seconds" not in r for r in doc["lb_runs"])
        assert doc["kind"] == "saa_report"
        assert doc["best_solution"]["kind"] == "solution"

    def test_timing_opt_in(self, report):
        doc = report_to_dict(report, record_timing=True)
        assert set(doc["timing"]) == {"lb_seconds", "ub_seconds"}
        assert all("seconds" in r for r in doc["lb_runs"])

    def test_serializable(self, report, tmp_path):
        path = dump_json(report_to_dict(report), tmp_path / "r.json")
        assert load_json(path)["best_ub"] == pytest.approx(report.best_ub)
