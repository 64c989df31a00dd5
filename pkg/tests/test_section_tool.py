import json
import math
import tempfile
from pathlib import Path

import pytest

# Import SectionTool
import sys
sys.path.append(str(Path(__file__).parent.parent))

from section_tool import (
    EXIT_HYPOTHESIS,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    SectionTool,
    exit_code,
)

MU_2 = (1.0 + math.sqrt(2.0)) / 2.0


@pytest.fixture
def temp_sections_config():
    """Create temporary sections config for testing"""
    config = {
        "kmax": 1000,
        "cap": 10000,
        "restarts": 2,
        "seed": 0,
        "grid": [10, 100, 1000, 10000],
        "workers": 2,
        "oracle": {"max_n": 6},
    }

    with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
        json.dump(config, f)
        config_path = f.name

    yield config_path

    # Cleanup
    Path(config_path).unlink()


@pytest.fixture
def section_tool(temp_sections_config):
    """Create SectionTool instance for testing"""
    return SectionTool(temp_sections_config)


@pytest.fixture
def decreasing_spec(tmp_path):
    path = tmp_path / "decreasing.txt"
    path.write_text("\n".join(str(v) for v in range(20, 0, -1)) + "\n", encoding="utf-8")
    return f"file:{path}"


def test_section_tool_initialization(section_tool):
    """Test SectionTool initialization"""
    assert section_tool.config["kmax"] == 1000
    assert section_tool.config["tol_factor"] == 1e-14
    assert section_tool.workers == 2
    assert section_tool.oracle_settings.max_n == 6
    assert len(section_tool._run_history) == 0


def test_missing_config_uses_defaults(tmp_path):
    """Test a missing config file falls back to defaults"""
    tool = SectionTool(str(tmp_path / "absent.json"))
    assert tool.config["kmax"] == 10000
    assert tool.workers >= 1


def test_workers_from_environment(temp_sections_config, monkeypatch):
    """Test SECTIONS_WORKERS overrides the config"""
    monkeypatch.setenv("SECTIONS_WORKERS", "3")
    assert SectionTool(temp_sections_config).workers == 3


def test_record_run_event(section_tool):
    """Test recording run events"""
    section_tool.record_run_event("mu", "unit", 1.5, {"ok": True})

    history = section_tool.get_run_history()
    assert len(history) == 1

    run = history[0]
    assert run["command"] == "mu"
    assert run["weights"] == "unit"
    assert run["elapsed"] == 1.5
    assert run["ok"] is True
    assert "timestamp" in run


def test_run_history_limit(section_tool):
    """Test run history size limit"""
    for i in range(1100):
        section_tool.record_run_event("mu", f"power:alpha={1 + i % 5}", 0.1, {"ok": True})

    assert len(section_tool.get_run_history()) == 1000


def test_run_metrics(section_tool):
    """Test run metrics calculation"""
    section_tool.record_run_event("mu", "unit", 1.0, {"ok": True})
    section_tool.record_run_event("mu", "unit", 2.0, {"ok": True})
    section_tool.record_run_event("mu", "unit", 3.0, {"ok": False, "reason": "bracket_failure"})

    metrics = section_tool.get_run_metrics()
    assert metrics["mu"]["count"] == 3
    assert metrics["mu"]["failures"] == 1
    assert metrics["mu"]["avg_duration"] == 2.0
    assert metrics["mu"]["max_duration"] == 3.0
    assert metrics["mu"]["min_duration"] == 1.0
    assert metrics["theta"]["count"] == 0


def test_mu_command(section_tool):
    """Test mu rows and history"""
    result = section_tool.mu("unit", [1, 2])
    assert result["ok"] is True
    assert result["columns"] == ["N", "mu_N", "residual", "iterations"]
    assert result["rows"][0][:2] == [1, 1.0]
    assert result["rows"][1][1] == pytest.approx(MU_2, abs=1e-12)
    assert abs(result["rows"][1][2]) <= 1e-10
    assert section_tool.get_run_history()[-1]["command"] == "mu"
    assert exit_code(result) == EXIT_OK


def test_mu_range_is_ordered_and_increasing(section_tool):
    """Test parallel rows keep input order"""
    result = section_tool.mu("power:alpha=1", list(range(10, 101, 10)))
    Ns = [row[0] for row in result["rows"]]
    mus = [row[1] for row in result["rows"]]
    assert Ns == list(range(10, 101, 10))
    assert all(b > a for a, b in zip(mus, mus[1:]))


def test_mu_is_deterministic(section_tool):
    """Test identical arguments give identical rows"""
    first = section_tool.mu("unit", [5, 50, 500])
    second = section_tool.mu("unit", [5, 50, 500])
    assert first["rows"] == second["rows"]


def test_bad_weights_is_usage_error(section_tool):
    """Test error handling for malformed specs"""
    result = section_tool.mu("nonsense", [2])
    assert result["ok"] is False
    assert result["reason"] == "invalid_weights"
    assert "error" in result
    assert exit_code(result) == EXIT_USAGE
    assert section_tool.get_run_history()[-1]["ok"] is False


def test_hypotheses_unit(section_tool):
    """Test unit weights pass"""
    result = section_tool.hypotheses("unit")
    assert result["ok"] is True
    assert result["passed"] is True
    assert result["footer"]["M"] == 1.0
    assert exit_code(result) == EXIT_OK


def test_hypotheses_decreasing(section_tool, decreasing_spec):
    """Test a failing condition is named and maps to exit 1"""
    result = section_tool.hypotheses(decreasing_spec)
    assert result["ok"] is True
    assert result["passed"] is False
    assert "monotone" in result["footer"]["failed"]
    assert exit_code(result) == EXIT_HYPOTHESIS


def test_breakdown_command(section_tool):
    """Test finite and infinite breakdown rows"""
    result = section_tool.breakdown("unit", [0.5, 2.8], cap=1000)
    first, second = result["rows"]
    assert first[1] == 1
    assert first[3] is False
    assert math.isinf(second[1])
    assert second[3] is True
    assert "mu>=e^M" in second[4]
    assert math.isinf(second[2])


def test_asymptotic_command(section_tool):
    """Test the fit footer"""
    result = section_tool.asymptotic("unit")
    assert result["ok"] is True
    assert [row[0] for row in result["rows"]] == [10, 100, 1000, 10000]
    assert result["footer"]["target"] == pytest.approx(2 * math.pi ** 2 * math.e)


def test_asymptotic_short_grid(section_tool):
    """Test a one-point grid is a usage error"""
    result = section_tool.asymptotic("unit", grid=[10])
    assert result["reason"] == "precondition"
    assert exit_code(result) == EXIT_USAGE


def test_extremal_command(section_tool):
    """Test the N = 2 vector and the oracle footer"""
    result = section_tool.extremal("unit", 2)
    assert [row[1] for row in result["rows"]] == pytest.approx([0.853553, 0.146447], abs=1e-6)
    assert result["footer"]["oracle_gap"] <= 1e-6
    assert result["footer"]["stationarity_residual"] <= 1e-10


def test_extremal_skips_oracle_above_max_n(section_tool):
    """Test the oracle only runs for small N"""
    result = section_tool.extremal("unit", 7)
    assert "oracle_objective" not in result["footer"]


def test_theta_command(section_tool):
    """Test both theta modes and the exclusive-argument check"""
    by_mu = section_tool.theta("unit", mus=[2.0, 2.5])
    assert by_mu["columns"] == ["mu", "theta_inf", "surrogate", "difference"]
    assert len(by_mu["rows"]) == 2
    by_grid = section_tool.theta("unit", grid=[50, 500])
    assert "band_width" in by_grid["footer"]
    neither = section_tool.theta("unit")
    assert neither["reason"] == "usage"


def test_exit_code_mapping():
    """Test the exit-code contract"""
    assert exit_code({"ok": True}) == EXIT_OK
    assert exit_code({"ok": True, "passed": False}) == EXIT_HYPOTHESIS
    assert exit_code({"ok": False, "reason": "bracket_failure"}) == EXIT_NUMERIC
    assert exit_code({"ok": False, "reason": "non_convergence"}) == EXIT_NUMERIC
    assert exit_code({"ok": False, "reason": "hypothesis_failure"}) == EXIT_HYPOTHESIS
    assert exit_code({"ok": False, "reason": "out_of_range"}) == EXIT_USAGE


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
