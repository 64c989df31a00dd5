import json
import math
from pathlib import Path

import pytest

# Import the CLI
import sys
sys.path.append(str(Path(__file__).parent.parent))

from main import format_cell, main, parse_config

MU_2 = (1.0 + math.sqrt(2.0)) / 2.0


@pytest.fixture
def config_file(tmp_path):
    """Small config so CLI runs stay fast"""
    path = tmp_path / "sections.json"
    path.write_text(json.dumps({"kmax": 1000, "cap": 10000, "workers": 2, "restarts": 2}))
    return str(path)


def _run(capsys, config_file, *argv):
    code = main([*argv, "--config", config_file])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.mark.parametrize("argv", [
    [],
    ["mu"],
    ["mu", "--weights", "unit"],
    ["mu", "--weights", "unit", "--n", "0"],
    ["mu", "--weights", "unit", "--n", "2", "--n-range", "1:3"],
    ["mu", "--weights", "unit", "--n-range", "5:1"],
    ["breakdown", "--weights", "unit", "--mu", "abc"],
    ["theta", "--weights", "unit"],
    ["extremal", "--weights", "unit", "--n", "2", "--seed", "-1"],
    ["frobnicate", "--weights", "unit"],
])
def test_usage_errors_exit_64(argv):
    """Test argument errors exit with 64"""
    with pytest.raises(SystemExit) as exc:
        parse_config(argv)
    assert exc.value.code == 64


def test_parse_config_values():
    """Test numeric shorthands and inclusive ranges"""
    config = parse_config(["mu", "--weights", "unit", "--n-range", "10:100:10", "--kmax", "1e3"])
    assert config.n == list(range(10, 101, 10))
    assert config.kmax == 1000
    config = parse_config(["asymptotic", "--weights", "unit", "--grid", "1e3,1e4,1e5,1e6"])
    assert config.grid == [1000, 10000, 100000, 1000000]


def test_format_cell():
    """Test CSV cell rendering"""
    assert format_cell(math.inf) == "INF"
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(7) == "7"


def test_mu_csv(capsys, config_file):
    """Test the mu header and the N = 2 row"""
    code, out, _ = _run(capsys, config_file, "mu", "--weights", "unit", "--n", "2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "N,mu_N,residual,iterations"
    N, mu, _, _ = lines[1].split(",")
    assert N == "2"
    assert float(mu) == pytest.approx(MU_2, abs=1e-12)
    assert any(line.startswith("# M,") for line in lines)


def test_mu_json(capsys, config_file):
    """Test JSON output parses back to the same values"""
    code, out, _ = _run(capsys, config_file, "mu", "--weights", "unit", "--n", "2", "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert payload["command"] == "mu"
    assert payload["rows"][0]["N"] == 2
    assert payload["rows"][0]["mu_N"] == pytest.approx(MU_2, abs=1e-12)


def test_mu_range(capsys, config_file):
    """Test ten increasing rows for 10:100:10"""
    code, out, _ = _run(capsys, config_file, "mu", "--weights", "power:alpha=1", "--n-range", "10:100:10")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:] if not line.startswith("#")]
    assert [int(r[0]) for r in rows] == list(range(10, 101, 10))
    mus = [float(r[1]) for r in rows]
    assert all(b > a for a, b in zip(mus, mus[1:]))


def test_output_is_byte_identical(tmp_path, config_file):
    """Test repeated runs with --out write the same bytes"""
    outputs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        code = main(["extremal", "--weights", "unit", "--n", "3", "--seed", "5",
                     "--out", str(path), "--config", config_file])
        assert code == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


def test_breakdown_inf(capsys, config_file):
    """Test mu above e reports INF"""
    code, out, _ = _run(capsys, config_file, "breakdown", "--weights", "unit", "--mu", "0.5,2.8")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:] if not line.startswith("#")]
    assert rows[0][1] == "1"
    assert rows[1][1] == "INF"
    assert rows[1][3] == "true"


def test_breakdown_json_writes_null(capsys, config_file):
    """Test infinite values become null with the infinite flag set"""
    code, out, _ = _run(capsys, config_file, "breakdown", "--weights", "unit", "--mu", "2.8",
                        "--format", "json")
    assert code == 0
    row = json.loads(out)["rows"][0]
    assert row["N_mu"] is None
    assert row["infinite"] is True


def test_asymptotic_short_grid(capsys, config_file):
    """Test a one-point grid is a usage error"""
    code, out, err = _run(capsys, config_file, "asymptotic", "--weights", "unit", "--grid", "10")
    assert code == 64
    assert out == ""
    assert "precondition" in err


def test_bad_weights(capsys, config_file):
    """Test malformed weight specs exit with 64"""
    code, _, err = _run(capsys, config_file, "mu", "--weights", "power:alpha=0.5", "--n", "2")
    assert code == 64
    assert "invalid_weights" in err


def test_hypotheses_decreasing_file(tmp_path, capsys, config_file):
    """Test a decreasing weight file fails with exit 1 and names the condition"""
    path = tmp_path / "decreasing.txt"
    path.write_text("\n".join(str(v) for v in range(20, 0, -1)) + "\n", encoding="utf-8")
    code, out, err = _run(capsys, config_file, "hypotheses", "--weights", f"file:{path}")
    assert code == 1
    assert "monotone" in err
    assert out.splitlines()[0].startswith("condition,status")


def test_hypotheses_unit(capsys, config_file):
    """Test unit weights pass with exit 0"""
    code, out, _ = _run(capsys, config_file, "hypotheses", "--weights", "unit")
    assert code == 0
    assert "# passed,true" in out.splitlines()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
