"""
Tests for the rsquant command line
"""

import json
import math
import sys
from pathlib import Path

import pytest
from typer.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from cli.main import app
from storage.artifacts import read_codebook, read_csv, read_json, sidecar_path

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def test_init_writes_defaults(tmp_path):
    config_path = tmp_path / "rsquant_config.json"
    result = invoke("init", "--config-path", config_path)
    assert result.exit_code == 0
    data = json.loads(config_path.read_text(encoding="utf-8"))
    assert data["density"] == "normal"
    assert data["seed"] is None


def test_catalog_lists_aliases():
    result = invoke("catalog")
    assert result.exit_code == 0
    assert "uniform01" in result.output


def test_quantize_uniform_gives_midpoints(tmp_path):
    result = invoke("quantize", "--density", "uniform01", "--n", 8, "--r", 2, "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    [path] = tmp_path.glob("codebook_*_n8_r2.json")
    book = read_codebook(path)
    assert book.points == pytest.approx([(2 * k - 1) / 16 for k in range(1, 9)], abs=1e-9)
    payload = read_json(path)
    assert payload["distortion"] == pytest.approx(1 / (12 * 64), rel=1e-8)
    assert "workers" not in payload["config"]


def test_constants_normal(tmp_path):
    result = invoke("constants", "--density", "normal", "--r", 2, "--s", 2.5, "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    [path] = tmp_path.glob("constants_*.json")
    data = read_json(path)
    assert data["Qrs"] == pytest.approx(4.859, rel=1e-3)
    assert data["Qr"] == pytest.approx(math.pi * math.sqrt(3) / 2, rel=1e-10)


def test_mismatch_flags_supercritical(tmp_path):
    result = invoke("mismatch", "--density", "normal", "--r", 2, "--s", 3.5, "--n", "8..32", "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    [path] = tmp_path.glob("mismatch_*_s3.5.csv")
    assert [row["n"] for row in read_csv(path)] == ["8", "16", "32"]
    sidecar = read_json(sidecar_path(path))
    assert sidecar["supercritical"] is True
    assert sidecar["criterion"]["kind"] == "supercritical"
    assert set(sidecar["columns"]) == {"n", "distortion", "scaled", "stderr"}


def test_unknown_density_exits_2(tmp_path):
    result = invoke("constants", "--density", "nosuch", "--out-dir", tmp_path)
    assert result.exit_code == 2
    assert "nosuch" in result.output


def test_counterexample_rejects_theta(tmp_path):
    """θ=0.5 lies outside (2/3, s/(s+1)) for r=2."""
    result = invoke("counterexample", "--theta", 0.5, "--r", 2, "--s", 4, "--n", "16..64", "--out-dir", tmp_path)
    assert result.exit_code == 2
    assert not list(tmp_path.glob("*.csv"))


def test_counterexample_table(tmp_path):
    result = invoke("counterexample", "--theta", 0.75, "--r", 2, "--s", 4, "--n", "16..256", "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    [path] = tmp_path.glob("counterexample_*.csv")
    assert len(read_csv(path)) == 5
    assert read_json(sidecar_path(path))["target_exponent"] == pytest.approx(0.25)


def test_monte_carlo_needs_seed(tmp_path):
    result = invoke("mismatch", "--density", "normal", "--method", "mc", "--n", "8,16", "--out-dir", tmp_path)
    assert result.exit_code == 2
    assert "--seed" in result.output


def test_quad_square_on_normal(tmp_path):
    result = invoke("quad", "--density", "normal", "--n", 20, "--function", "square", "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    [path] = tmp_path.glob("quad_*_n20.csv")
    [row] = read_csv(path)
    assert row["function"] == "square"
    assert float(row["error"]) <= float(row["holder_bound"]) * (1 + 1e-9) + 1e-12


def test_quad_rejects_foreign_function(tmp_path):
    result = invoke("quad", "--density", "normal", "--n", 5, "--function", "exp_u", "--out-dir", tmp_path)
    assert result.exit_code == 2


def test_wiener_outputs(tmp_path):
    result = invoke("wiener", "--n", "4,16", "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    quantizer = read_json(tmp_path / "wiener_T1_N16.json")
    assert quantizer["atoms"] <= 16
    rates = read_csv(tmp_path / "wiener_rates_T1.csv")
    assert [row["N"] for row in rates] == ["4", "16"]
    assert float(rates[1]["l2_error"]) < float(rates[0]["l2_error"])
    assert not (tmp_path / "wiener_moments_T1.csv").exists()


def test_codebook_info(tmp_path):
    invoke("quantize", "--density", "uniform01", "--n", 3, "--r", 2, "--out-dir", tmp_path)
    [path] = tmp_path.glob("codebook_*.json")
    result = invoke("codebook-info", path)
    assert result.exit_code == 0
    assert "n=3" in result.output


def test_wiener_moments_record_norm_band(tmp_path):
    result = invoke("wiener", "--n", "10", "--s", "2,2.5", "--paths", 4000, "--seed", 3, "--out-dir", tmp_path)
    assert result.exit_code == 0, result.output
    path = tmp_path / "wiener_moments_T1.csv"
    assert len(read_csv(path)) == 2
    assert read_json(sidecar_path(path))["within_band"] is True
