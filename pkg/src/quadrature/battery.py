"""
Test functions with known expectations for the quadrature bounds
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import special, stats

from distributions.base import quad
from distributions.catalog import Normal, Uniform, parse_density
from utils.errors import PreconditionError


@dataclass(frozen=True)
class TestFunction:
    name: str
    density: str
    f: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    truth: float
    # sup |f''| when the Hessian is bounded, else None
    lip_grad: Optional[float]
    # |f''(x)| <= A(|x|^{d-η} + 1)
    eta: float = 1.0

    __test__ = False

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.abs(self.f2(x))

    def make_density(self):
        return parse_density(self.density)


def _abs_moment(p: float) -> float:
    """E|X|^p for X ~ N(0, 1)."""
    return 2 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)


@lru_cache(maxsize=None)
def _gaussian_truth(name: str) -> float:
    f = {"log1p_sq": lambda x: math.log1p(x * x), "hyperbolic": lambda x: math.sqrt(1 + x * x)}[name]
    return quad(lambda x: f(x) * stats.norm.pdf(x), -math.inf, math.inf, epsabs=0.0, epsrel=1e-13).value


def _power(p: float):
    return (lambda x: np.abs(x) ** p,
            lambda x: p * (p - 1) * np.abs(x) ** (p - 2))


def _battery() -> List[TestFunction]:
    gauss, unif = Normal().id, Uniform().id
    f25, f25_2 = _power(2.5)
    f28, f28_2 = _power(2.8)
    return [
        TestFunction("square", gauss, lambda x: x ** 2, lambda x: np.full_like(x, 2.0), 1.0, 2.0),
        TestFunction("cos", gauss, np.cos, lambda x: -np.cos(x), math.exp(-0.5), 1.0),
        TestFunction("log1p_sq", gauss, lambda x: np.log1p(x ** 2),
                     lambda x: 2 * (1 - x ** 2) / (1 + x ** 2) ** 2, _gaussian_truth("log1p_sq"), 2.0),
        TestFunction("hyperbolic", gauss, lambda x: np.sqrt(1 + x ** 2),
                     lambda x: (1 + x ** 2) ** -1.5, _gaussian_truth("hyperbolic"), 1.0),
        TestFunction("abs_pow_2.5", gauss, f25, f25_2, _abs_moment(2.5), None, eta=0.5),
        TestFunction("abs_pow_2.8", gauss, f28, f28_2, _abs_moment(2.8), None, eta=0.2),
        TestFunction("square_u", unif, lambda x: x ** 2, lambda x: np.full_like(x, 2.0), 1.0 / 3.0, 2.0),
        TestFunction("exp_u", unif, np.exp, np.exp, math.e - 1.0, math.e),
        TestFunction("sin_pi_u", unif, lambda x: np.sin(math.pi * x),
                     lambda x: -math.pi ** 2 * np.sin(math.pi * x), 2.0 / math.pi, math.pi ** 2),
        TestFunction("pow_2.5_u", unif, f25, f25_2, 1.0 / 3.5, 3.75),
    ]


def battery() -> List[TestFunction]:
    """The ten test functions: six under N(0, 1), four under U([0, 1])."""
    return _battery()


def by_name() -> Dict[str, TestFunction]:
    return {fn.name: fn for fn in _battery()}


def test_function(name: str) -> TestFunction:
    functions = by_name()
    if name not in functions:
        raise PreconditionError(f"unknown test function '{name}'; available: {', '.join(functions)}")
    return functions[name]
