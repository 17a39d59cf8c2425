"""Excursion (first-return) laws at a distinguished symbol.

Each law exposes the tail q(k) = P(r >= k) with q(1) = 1, the mass function
p(k) = q(k) - q(k+1), its moments, and a compact encoding used by the
compiled samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

# sampler codes shared with the compiled kernels
POWER, SHIFTED_POWER, GEOMETRIC, TABLE = 0, 1, 2, 3


class ReturnLaw:
    # unannotated class defaults; ``alpha`` is left to subclasses so dataclass fields stay required
    power_constant = None  # q(n+1) ~ K n^{-alpha}
    power_exact = False  # q(n+1) == K n^{-alpha} for every n >= 1

    def q(self, k):  # pragma: no cover - abstract
        raise NotImplementedError

    def p(self, k) -> float:
        return self.q(k) - self.q(k + 1)

    @property
    def total_mass(self) -> float:
        return 1.0

    @property
    def mean(self) -> float:
        return math.inf

    def sampler_code(self) -> tuple[int, np.ndarray]:
        raise NotImplementedError(f"{type(self).__name__} has no compiled sampler")

    def to_json(self) -> dict:
        return {"kind": type(self).__name__}

    def validate(self, k_max: int = 200) -> None:
        if abs(self.q(1) - 1.0) > 1e-15:
            raise ValueError("q_1 must equal 1")
        prev = 1.0
        for k in range(2, k_max):
            v = self.q(k)
            if v > prev + 1e-15:
                raise ValueError(f"q is not monotone at k={k}")
            prev = v


@dataclass(frozen=True)
class PowerTail(ReturnLaw):
    """q(x) = x^{-alpha} for x >= 1."""

    alpha: float

    def __post_init__(self):
        if not (0 < self.alpha):
            raise ValueError("alpha must be positive")

    @property
    def power_constant(self):
        return 1.0

    def q(self, k):
        return 1.0 if k <= 1 else float(k) ** (-self.alpha)

    @property
    def mean(self):
        return math.inf if self.alpha <= 1 else float(_zeta_sum(self.alpha))

    def sampler_code(self):
        return POWER, np.array([self.alpha])

    def to_json(self):
        return {"kind": "power", "alpha": self.alpha}


def _zeta_sum(alpha):
    from scipy.special import zeta
    return zeta(alpha, 1)


@dataclass(frozen=True)
class ShiftedPowerTail(ReturnLaw):
    """q_1 = 1, q_k = (1 - p_1)(k - 1)^{-alpha}: exact power tail q_{n+1} = (1-p_1) n^{-alpha}."""

    alpha: float
    p1: float

    def __post_init__(self):
        if not (0 < self.alpha) or not (0 <= self.p1 < 1):
            raise ValueError("need alpha > 0 and 0 <= p1 < 1")

    power_exact = True

    @property
    def power_constant(self):
        return 1.0 - self.p1

    def q(self, k):
        if k <= 1:
            return 1.0
        return (1.0 - self.p1) * max(float(k) - 1.0, 1.0) ** (-self.alpha)

    @property
    def mean(self):
        return math.inf if self.alpha <= 1 else 1.0 + (1 - self.p1) * float(_zeta_sum(self.alpha))

    def sampler_code(self):
        return SHIFTED_POWER, np.array([self.alpha, self.p1])

    def to_json(self):
        return {"kind": "shifted_power", "alpha": self.alpha, "p1": self.p1}


@dataclass(frozen=True)
class GeometricTail(ReturnLaw):
    """q_k = r^{k-1}; finite mean 1 / (1 - r)."""

    r: float
    alpha = None

    def __post_init__(self):
        if not (0 <= self.r < 1):
            raise ValueError("need 0 <= r < 1")

    def q(self, k):
        return 1.0 if k <= 1 else self.r ** (float(k) - 1.0)

    @property
    def mean(self):
        return 1.0 / (1.0 - self.r)

    def sampler_code(self):
        return GEOMETRIC, np.array([self.r])

    def to_json(self):
        return {"kind": "geometric", "r": self.r}


class TabulatedTail(ReturnLaw):
    """Explicit q_1..q_K; beyond K the tail is the constant ``defect`` (0 for a proper law)."""

    def __init__(self, q: Sequence[float], defect: float = 0.0):
        arr = np.asarray(q, dtype=float)
        if len(arr) == 0 or abs(arr[0] - 1.0) > 1e-15:
            raise ValueError("q_1 must equal 1")
        if (np.diff(arr) > 1e-15).any():
            raise ValueError("q must be nonincreasing")
        if defect < 0 or defect > arr[-1] + 1e-15:
            raise ValueError("defect must lie in [0, q_K]")
        self._q = arr
        self.defect = float(defect)
        self.alpha = None

    def q(self, k):
        k = int(math.ceil(k)) if k > 1 else 1
        return float(self._q[k - 1]) if k <= len(self._q) else self.defect

    @property
    def total_mass(self):
        return 1.0 - self.defect

    @property
    def mean(self):
        return math.inf if self.defect > 0 else float(self._q.sum())

    def sampler_code(self):
        if self.defect > 0:
            raise ValueError("defective laws cannot be sampled")
        return TABLE, self._q.copy()

    def to_json(self):
        return {"kind": "tabulated", "q": self._q.tolist(), "defect": self.defect}


@dataclass(frozen=True)
class TreeTail(ReturnLaw):
    """q_m = prod_{j<m} (1 - alpha/j) = Gamma(m - alpha) / (Gamma(m) Gamma(1 - alpha))."""

    alpha: float

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def power_constant(self):
        return 1.0 / math.gamma(1.0 - self.alpha)

    def q(self, k):
        if k <= 1:
            return 1.0
        k = float(k)
        return float(np.exp(gammaln(k - self.alpha) - gammaln(k) - gammaln(1.0 - self.alpha)))

    def to_json(self):
        return {"kind": "tree", "alpha": self.alpha}


def law_from_json(doc: dict) -> ReturnLaw:
    kind = doc["kind"]
    if kind == "power":
        return PowerTail(doc["alpha"])
    if kind == "shifted_power":
        return ShiftedPowerTail(doc["alpha"], doc["p1"])
    if kind == "geometric":
        return GeometricTail(doc["r"])
    if kind == "tabulated":
        return TabulatedTail(doc["q"], doc.get("defect", 0.0))
    if kind == "tree":
        return TreeTail(doc["alpha"])
    raise ValueError(f"unknown law kind {kind!r}")
