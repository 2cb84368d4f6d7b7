"""
Tests for configuration, artifact files and the codebook cache
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from distributions.catalog import Normal, Uniform
from quantizer.scalar import lloyd1d, midpoint_grid
from quantizer.vector import CodebookND
from storage.artifacts import (codebook_to_dict, format_float, read_codebook, read_csv, read_json, sidecar_path,
                               to_json, write_codebook, write_csv)
from storage.database import CodebookCache
from utils import __version__
from utils.config import Config, ExperimentConfig, parse_float_list, parse_n_range, resolve_workers
from utils.errors import CodebookError, PreconditionError


def test_parse_n_range_doubling():
    assert parse_n_range("50..800") == [50, 100, 200, 400, 800]
    assert parse_n_range("4,8,16") == [4, 8, 16]
    assert parse_n_range(7) == [7]


def test_parse_n_range_rejects_bad_input():
    with pytest.raises(PreconditionError):
        parse_n_range("8,4")
    with pytest.raises(PreconditionError):
        parse_n_range("10..5")


def test_parse_float_list():
    assert parse_float_list("2, 2.5,3") == [2.0, 2.5, 3.0]
    assert parse_float_list(4) == [4.0]


def test_resolve_workers():
    assert resolve_workers(3) == 3
    assert resolve_workers(0) >= 1


def test_config_defaults_and_save(tmp_path):
    """A fresh config holds every default and survives a save/load cycle."""
    config_path = tmp_path / "rsquant.json"
    config = Config(str(config_path))
    assert config.config == ExperimentConfig().as_dict()
    config.save()
    assert Config(str(config_path)).experiment() == ExperimentConfig()


def test_key_value_config_with_overrides(tmp_path):
    config_path = tmp_path / "run.conf"
    config_path.write_text("# mismatch run\ndensity = pareto(b=3)\nr = 1\ns = 1.4, 1.6\nn_list = 8..64\nseed = 11\n",
                           encoding="utf-8")
    cfg = Config(str(config_path)).experiment(r=2.0, seed=None)
    assert cfg.density == "pareto(b=3)"
    assert cfg.r == 2.0
    assert cfg.s == [1.4, 1.6]
    assert cfg.n_list == [8, 16, 32, 64]
    assert cfg.seed == 11


def test_config_rejects_unknown_keys(tmp_path):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"densty": "normal"}), encoding="utf-8")
    with pytest.raises(PreconditionError, match="densty"):
        Config(str(config_path))


def test_effective_config_drops_runtime_keys():
    """Worker count and output locations never reach the sidecars."""
    a = ExperimentConfig(workers=1, out_dir="a").effective()
    b = ExperimentConfig(workers=8, out_dir="b", cache_path="x.db").effective()
    assert a == b
    assert "workers" not in a


def test_s_values_default_to_r():
    assert ExperimentConfig(r=3.0).s_values() == [3.0]
    assert ExperimentConfig(s=[2.5]).s_values() == [2.5]


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(math.inf) == "Infinity"
    assert format_float(-math.inf) == "-Infinity"
    assert format_float(math.nan) == "NaN"


def test_json_keeps_17_digits():
    text = to_json({"x": 1 / 3, "n": 4, "flag": True, "arr": np.array([0.5, math.inf])})
    data = json.loads(text)
    assert data["x"] == 1 / 3
    assert data["n"] == 4 and data["flag"] is True
    assert data["arr"][1] == math.inf
    assert '"0.33333333333333331"' not in text


def test_csv_with_sidecar(tmp_path):
    target = write_csv(tmp_path / "rates.csv", ["n", "scaled"], [[4, 1 / 12], [8, 1 / 12]],
                       {"n": "codebook size", "scaled": "n^r·D_r"}, {"r": 2.0}, density="uniform")
    rows = read_csv(target)
    assert rows[0] == {"n": "4", "scaled": "0.083333333333333329"}
    sidecar = read_json(sidecar_path(target))
    assert sidecar["columns"]["scaled"] == "n^r·D_r"
    assert sidecar["config"] == {"r": 2.0}
    assert sidecar["density"] == "uniform"


def test_csv_requires_column_descriptions(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", ["n", "x"], [[1, 2]], {"n": "size"})


def test_codebook_files_round_trip(tmp_path):
    book = lloyd1d(Normal(), 7, 2.0)
    loaded = read_codebook(write_codebook(tmp_path / "cb.json", book))
    assert np.array_equal(loaded.points, book.points)
    assert np.array_equal(loaded.weights, book.weights)
    assert loaded.density_id == book.density_id

    nd = CodebookND(np.array([[0.25, 0.5], [0.75, 0.5]]), 2.0, Uniform(d=2).id, np.array([0.5, 0.5]))
    loaded_nd = read_codebook(write_codebook(tmp_path / "nd.json", nd))
    assert isinstance(loaded_nd, CodebookND)
    assert loaded_nd.dim == 2


def test_codebook_meta_records_tool_version(tmp_path):
    book = lloyd1d(Normal(), 3, 2.0)
    assert codebook_to_dict(book)["meta"]["tool_version"] == __version__
    payload = read_json(write_codebook(tmp_path / "cb.json", book))
    assert payload["meta"]["tool_version"] == __version__

    nd = CodebookND(np.array([[0.25, 0.5], [0.75, 0.5]]), 2.0, Uniform(d=2).id, np.array([0.5, 0.5]))
    assert codebook_to_dict(nd)["train_meta"]["tool_version"] == __version__


def test_codebook_file_missing_field(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"points": [0.5]}), encoding="utf-8")
    with pytest.raises(CodebookError):
        read_codebook(path)


def test_codebook_cache(tmp_path):
    """Cache hits return the stored codebook; entries are listed per density."""
    cache = CodebookCache(str(tmp_path / "cache.db"))
    cache.initialize()
    assert cache.get(Uniform().id, 2.0, 4) is None
    cache.put(midpoint_grid(4))
    cache.put(lloyd1d(Normal(), 3, 2.0))
    hit = cache.get(Uniform().id, 2.0, 4)
    assert np.array_equal(hit.points, midpoint_grid(4).points)
    assert [e["n"] for e in cache.entries(Uniform().id)] == [4]
    assert len(cache.entries()) == 2
    cache.close()

    reopened = CodebookCache(str(tmp_path / "cache.db"))
    assert reopened.get(Normal().id, 2.0, 3).n == 3
    reopened.close()
