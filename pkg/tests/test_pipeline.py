"""
Top-level pipeline tests
"""
import pytest

from conftest import instance, patient
from or_pooling import SaaConfig, SolverLimits, run_pipeline


def _config():
    return SaaConfig(n_lb=2, m_iter=2, p_ub=20, seed=3,
                     limits=SolverLimits(rel_gap=0.0, time_limit=60))


class TestRunPipeline:
    def test_result_keys(self, highs):
        inst = instance([patient(0, latest=2), patient(1, latest=2)], horizon=2)
        result = run_pipeline(inst, _config(), verbose=False)
        assert set(result) == {"report", "gap_pct", "vss_pct", "best_solution"}
        assert result["gap_pct"] == result["report"].gap_percent
        assert result["vss_pct"] is not None

    def test_prints_report(self, highs, capsys):
        inst = instance([patient(0)], horizon=1)
        run_pipeline(inst, _config(), with_vss=False)
        out = capsys.readouterr().out
        assert "Sample Average Approximation Report" in out
        assert "Cost Breakdown" in out

    def test_rejects_non_instance(self):
        with pytest.raises(TypeError):
            run_pipeline({"patients": []})

    def test_rejects_empty_instance(self):
        with pytest.raises(ValueError, match="patient"):
            run_pipeline(instance([]))

    def test_rejects_oversized_surgery(self):
        inst = instance([patient(0, mu=700.0)], horizon=1)
        with pytest.raises(ValueError, match="exceeds regular time"):
            run_pipeline(inst, verbose=False)
