"""
Artifact files: codebooks, reports and rate tables

Floats are written with 17 significant digits so every value read back is
bit-identical; +inf is spelled Infinity. All writes go to a temporary file
in the target directory and are renamed into place.
"""

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from quantizer.scalar import Codebook1D
from quantizer.vector import CodebookND
from utils import __version__
from utils.errors import CodebookError

_MARK = "\x00f17:"
_MARKED = re.compile(r'"\\u0000f17:([^"]*)"')

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, ".17g")


def _plain(obj: Any) -> Any:
    """JSON-ready tree with floats tagged for 17-digit output."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _MARK + format_float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def to_json(obj: Any) -> str:
    text = json.dumps(_plain(obj), indent=2, ensure_ascii=False)
    return _MARKED.sub(lambda m: m.group(1), text) + "\n"


def _atomic_write(path: PathLike, text: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def write_json(path: PathLike, obj: Any) -> Path:
    return _atomic_write(path, to_json(obj))


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]],
              columns: Mapping[str, str], config: Optional[Mapping[str, Any]] = None,
              **extra: Any) -> Path:
    """CSV table plus a JSON sidecar naming the quantity behind each column."""
    missing = [name for name in header if name not in columns]
    if missing:
        raise ValueError(f"sidecar lacks a description for columns {missing}")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    target = _atomic_write(path, buffer.getvalue())
    sidecar = {"file": target.name, "columns": dict(columns), "config": dict(config or {}),
               "tool_version": __version__}
    sidecar.update(extra)
    write_json(sidecar_path(target), sidecar)
    return target


def read_csv(path: PathLike) -> list:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


# codebooks ------------------------------------------------------------------


def codebook_to_dict(codebook: Union[Codebook1D, CodebookND]) -> Dict[str, Any]:
    if isinstance(codebook, Codebook1D):
        return {
            "kind": "codebook-1d",
            "density": codebook.density_id,
            "r": codebook.r,
            "n": codebook.n,
            "points": codebook.points,
            "weights": codebook.weights,
            "residual": codebook.residual,
            "converged": codebook.converged,
            "iterations": codebook.iterations,
            "meta": {**codebook.meta, "tool_version": __version__},
            "tool_version": __version__,
        }
    return {
        "kind": "codebook-nd",
        "density": codebook.density_id,
        "r": codebook.r,
        "n": codebook.n,
        "dim": codebook.dim,
        "norm": codebook.norm,
        "points": codebook.points,
        "weights": codebook.weights,
        "train_meta": {**codebook.train_meta, "tool_version": __version__},
        "tool_version": __version__,
    }


def codebook_from_dict(data: Mapping[str, Any]) -> Union[Codebook1D, CodebookND]:
    try:
        if "dim" in data:
            return CodebookND(np.asarray(data["points"], dtype=float), float(data["r"]), data["density"],
                              np.asarray(data["weights"], dtype=float), data.get("norm", "euclidean"),
                              dict(data.get("train_meta", {})))
        return Codebook1D(np.asarray(data["points"], dtype=float), float(data["r"]), data["density"],
                          np.asarray(data["weights"], dtype=float), float(data.get("residual", 0.0)),
                          bool(data.get("converged", True)), int(data.get("iterations", 0)),
                          dict(data.get("meta", {})))
    except KeyError as e:
        raise CodebookError(f"codebook file lacks field {e}") from e


def write_codebook(path: PathLike, codebook: Union[Codebook1D, CodebookND]) -> Path:
    return write_json(path, codebook_to_dict(codebook))


def read_codebook(path: PathLike) -> Union[Codebook1D, CodebookND]:
    return codebook_from_dict(read_json(path))
