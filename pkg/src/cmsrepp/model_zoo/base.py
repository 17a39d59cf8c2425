"""The simulable model object shared by every constructor."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..kernel import StochasticKernel
from ..measure_scaling import (
    MarkovMeasure,
    ScalingProfile,
    cylinder_measure,
    normalizing_sequence,
)
from ..shift_core import PointDescriptor, Symbol, TransitionStructure, Word, as_word, is_admissible
from ..targets import CylinderTarget
from ..thermo import Potential, RecurrenceClass, classify_recurrence, markov_potential
from .laws import ReturnLaw


@dataclass
class ShiftModel:
    name: str
    family: str
    ts: TransitionStructure
    kernel: StochasticKernel
    measure: MarkovMeasure
    return_law: ReturnLaw | None = None
    base_symbol: Symbol | None = 0
    alpha: float | None = None
    named_points: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    total_mass: float | None = None  # mu(Omega) when finite and known

    # ---------------------------------------------------------------- theory
    def potential(self) -> Potential:
        return markov_potential(self.measure.pi, self.kernel, tol=1e-10)

    def recurrence(self) -> RecurrenceClass:
        if self.return_law is not None:
            return classify_recurrence(self.return_law)
        if self.total_mass is not None and math.isfinite(self.total_mass):
            return RecurrenceClass("positive_recurrent", {"finite_invariant_mass": self.total_mass})
        raise ValueError(f"model {self.name} has no closed-form return law")

    def scaling_profile(self, v: Symbol | None = None, n_max: int = 1 << 20) -> ScalingProfile:
        if self.recurrence().label == "positive_recurrent":
            return normalizing_sequence(self, self.base_symbol, n_max)
        return normalizing_sequence(self, self.base_symbol if v is None else v, n_max, "from_tail",
                                    alpha=self.alpha)

    def point(self, name: str) -> PointDescriptor:
        try:
            return self.named_points[name]
        except KeyError:
            raise KeyError(f"model {self.name} has no point {name!r}; known: {sorted(self.named_points)}") from None

    # ---------------------------------------------------------------- targets
    def cylinder_target(self, word: Word | str | Sequence[Symbol]) -> CylinderTarget:
        w = as_word(word)
        if not is_admissible(w, self.ts):
            raise ValueError(f"target word {w} is not admissible")
        return CylinderTarget("word", cylinder_measure(self.measure, w), w.depth, word=w)

    def target_for(self, point: PointDescriptor, n: int) -> CylinderTarget:
        return self.cylinder_target(point.prefix(n))

    # ---------------------------------------------------------------- checks
    def invariant_report(self) -> dict:
        worst_row = 0.0
        for a in self.ts.alphabet:
            tot = sum(p for _, p in self.kernel.row(a)) + self.kernel.remainder(a)
            worst_row = max(worst_row, abs(tot - 1.0))
        return {"row_sum_residual": worst_row, "stationarity_residual": self.measure.stationarity_residual()}

    def to_json(self) -> str:
        doc: dict[str, Any] = {
            "name": self.name,
            "family": self.family,
            "base_symbol": _sym(self.base_symbol),
            "alpha": self.alpha,
            "truncation": len(self.ts.alphabet),
            "return_law": self.return_law.to_json() if self.return_law is not None else None,
            "named_points": sorted(self.named_points),
            "meta": {k: v for k, v in self.meta.items() if _plain(v)},
        }
        return json.dumps(doc, indent=2, default=_sym)


def _sym(s):
    if isinstance(s, tuple):
        return list(s)
    if isinstance(s, (np.integer, np.floating)):
        return s.item()
    return s if isinstance(s, (int, float, str)) or s is None else str(s)


def _plain(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def stationary_distribution(p: np.ndarray) -> np.ndarray:
    """Normalized left Perron vector of a finite stochastic matrix."""
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    # one refinement step keeps the residual at machine precision
    pi = pi + np.linalg.lstsq(a, b - a @ pi, rcond=None)[0]
    if (pi < -1e-14).any():
        raise ValueError("chain is not irreducible")
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def build_finite_chain(p: Sequence[Sequence[float]], symbols: Sequence[Symbol] | None = None,
                       name: str = "finite_chain") -> ShiftModel:
    """Finite mixing Markov chain with its stationary probability (positive recurrent)."""
    mat = np.asarray(p, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("square stochastic matrix required")
    syms = tuple(range(mat.shape[0])) if symbols is None else tuple(symbols)
    edges = [(syms[i], syms[j]) for i in range(len(syms)) for j in range(len(syms)) if mat[i, j] > 0]
    ts = TransitionStructure.from_edges(syms, edges, name=name)
    idx = {s: i for i, s in enumerate(syms)}
    kern = StochasticKernel(ts, lambda a, b: mat[idx[a], idx[b]])
    kern.check_rows(1e-12)
    pi = stationary_distribution(mat)
    meas = MarkovMeasure(lambda s: float(pi[idx[s]]), kern)
    model = ShiftModel(name, "finite_sft", ts, kern, meas, base_symbol=syms[0], alpha=1.0,
                       total_mass=1.0, meta={"matrix": mat.tolist()})
    for s in syms:
        if mat[idx[s], idx[s]] > 0:
            model.named_points[f"fixed_{s}"] = PointDescriptor.eventually_periodic((), (s,))
    return model


def build_bernoulli(k: int = 2) -> ShiftModel:
    """Uniform Bernoulli measure on the full k-shift."""
    return build_finite_chain(np.full((k, k), 1.0 / k), name=f"bernoulli_{k}")


def delta_word_weights(model: ShiftModel, delta: Sequence[Symbol], n: int) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Restricted kernel M on Delta, start weights pi_Delta, and tail vectors M^j 1 for j < n."""
    m, syms = model.kernel.dense(tuple(delta))
    pi = np.array([model.measure.pi(s) for s in syms])
    tails = np.empty((n, len(syms)))
    tails[0] = 1.0
    for j in range(1, n):
        tails[j] = m @ tails[j - 1]
    return m, pi, (syms, tails)


def embedded_sft_target(model: ShiftModel, delta: Sequence[Symbol], n: int) -> CylinderTarget:
    """Union of the n-cylinders spelled inside Delta, with measure pi_Delta^T M^{n-1} 1."""
    if n < 1:
        raise ValueError("n must be positive")
    delta = tuple(delta)
    for s in delta:
        if s not in model.ts.alphabet:
            raise ValueError(f"symbol {s!r} is not in the alphabet")
    _, pi, (syms, tails) = delta_word_weights(model, delta, n)
    mass = float(pi @ tails[n - 1])
    return CylinderTarget("union_delta", mass, n, delta=syms)
