"""
Configuration management for rsquant

A config file is either JSON or flat `key = value` text. Every field has a
default; CLI flags override file values.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import psutil

from utils.errors import PreconditionError


def parse_n_range(spec: Union[str, int, List[int]]) -> List[int]:
    """Expand `a..b` into doubling steps a, 2a, ... <= b; also accepts `4,8,16`."""
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, (list, tuple)):
        values = [int(v) for v in spec]
    else:
        text = str(spec).strip()
        if ".." in text:
            lo, hi = (int(part) for part in text.split("..", 1))
            if lo < 1 or hi < lo:
                raise PreconditionError(f"invalid n range '{text}'")
            values = []
            n = lo
            while n <= hi:
                values.append(n)
                n *= 2
        else:
            values = [int(part) for part in text.split(",") if part.strip()]
    if not values or any(v < 1 for v in values):
        raise PreconditionError(f"invalid n list {spec!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise PreconditionError(f"n list must be strictly increasing: {values}")
    return values


def parse_float_list(spec: Union[str, float, List[float]]) -> List[float]:
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    return [float(part) for part in str(spec).split(",") if part.strip()]


def resolve_workers(workers: int) -> int:
    """0 means one worker per physical core."""
    if workers > 0:
        return workers
    return psutil.cpu_count(logical=False) or 1


# scheduling and location only; outputs do not depend on them
RUNTIME_KEYS = ("workers", "cache_path", "out_dir")


@dataclass
class ExperimentConfig:
    density: str = "normal"
    r: float = 2.0
    s: List[float] = field(default_factory=list)
    n_list: List[int] = field(default_factory=lambda: parse_n_range("50..800"))
    method: str = "auto"
    seed: Optional[int] = None
    norm: str = "euclidean"
    out_dir: str = "results"
    tol: float = 1e-10
    max_iter: int = 100_000
    workers: int = 0
    mc_samples: int = 200_000
    budget_factor: int = 1000
    theta: float = 0.75
    b: float = 0.25
    paths: int = 100_000
    grid: int = 1024
    T: float = 1.0
    wiener_n: List[int] = field(default_factory=lambda: parse_n_range("4..1024"))
    cache_path: str = ":memory:"

    def s_values(self) -> List[float]:
        """The configured s list, or [r] when none was given."""
        return list(self.s) if self.s else [self.r]

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def effective(self) -> Dict[str, Any]:
        """Settings that determine results; echoed into every sidecar."""
        values = self.as_dict()
        for key in RUNTIME_KEYS:
            values.pop(key, None)
        return values


_COERCE = {
    "r": float,
    "s": parse_float_list,
    "n_list": parse_n_range,
    "wiener_n": parse_n_range,
    "seed": lambda v: None if v in (None, "", "none") else int(v),
    "tol": float,
    "max_iter": int,
    "workers": int,
    "mc_samples": int,
    "budget_factor": int,
    "theta": float,
    "b": float,
    "paths": int,
    "grid": int,
    "T": float,
}


def _parse_key_values(text: str) -> Dict[str, Any]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


class Config:
    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path) if config_path else None
        self.config = self._load_or_default()

    def _load_or_default(self) -> Dict[str, Any]:
        """Load the config file on top of the defaults."""
        values = ExperimentConfig().as_dict()
        if self.config_path is None or not self.config_path.exists():
            return values

        text = self.config_path.read_text(encoding="utf-8")
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError:
            loaded = _parse_key_values(text)
        if not isinstance(loaded, dict):
            raise PreconditionError(f"{self.config_path}: config must be an object")

        known = {f.name for f in fields(ExperimentConfig)}
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise PreconditionError(f"{self.config_path}: unknown keys {unknown}")
        values.update({key: self._coerce(key, value) for key, value in loaded.items()})
        return values

    @staticmethod
    def _coerce(key: str, value: Any) -> Any:
        convert = _COERCE.get(key)
        try:
            return convert(value) if convert else value
        except (TypeError, ValueError) as e:
            raise PreconditionError(f"config key '{key}': {e}") from e

    def save(self, path: Optional[str] = None):
        """Save configuration to file as JSON."""
        target = Path(path) if path else self.config_path
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.config, f, indent=2, ensure_ascii=False)

    def experiment(self, **overrides: Any) -> ExperimentConfig:
        """Effective config: file values with non-None CLI overrides applied."""
        values = dict(self.config)
        for key, value in overrides.items():
            if value is not None:
                values[key] = self._coerce(key, value)
        return ExperimentConfig(**values)
