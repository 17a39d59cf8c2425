"""Markov measures, cylinder masses, return tails and the rare-event scaling."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .kernel import StochasticKernel
from .shift_core import Symbol, TruncationError, Word, as_word, is_admissible


def pareto_constant(alpha: float) -> float:
    """sin(pi a) / (pi a), i.e. 1 / (Gamma(1+a) Gamma(1-a)); equals 1 at a = 1."""
    if alpha >= 1:
        return 1.0
    return math.sin(math.pi * alpha) / (math.pi * alpha)


class MarkovMeasure:
    """Invariant measure mu[a_0..a_k] = pi(a_0) prod P(a_i, a_{i+1}); pi need not be summable.

    ``inflow_remainder(b)`` gives the exact mass flowing into ``b`` from
    predecessors beyond the truncation (nonzero only for symbols with
    infinitely many predecessors).
    """

    def __init__(self, pi: Callable[[Symbol], float] | Mapping, kernel: StochasticKernel,
                 inflow_remainder: Callable[[Symbol], float] | None = None):
        self._pi = (lambda s: pi[s]) if isinstance(pi, Mapping) else pi
        self.kernel = kernel
        self._inflow = inflow_remainder or (lambda b: 0.0)

    @property
    def ts(self):
        return self.kernel.ts

    def pi(self, s: Symbol) -> float:
        return float(self._pi(s))

    def stationarity_residual(self, symbols: Sequence[Symbol] | None = None) -> float:
        ts = self.ts
        worst = 0.0
        for b in (ts.alphabet if symbols is None else symbols):
            inflow = sum(self.pi(a) * self.kernel(a, b) for a in ts.in_neighbors(b)) + self._inflow(b)
            worst = max(worst, abs(inflow - self.pi(b)) / max(1.0, self.pi(b)))
        return worst


@dataclass(frozen=True)
class CylinderMass:
    value: float
    null: bool


def cylinder_measure(mm: MarkovMeasure, word: Word | str | Sequence[Symbol], with_flag: bool = False):
    w = as_word(word).symbols
    if not is_admissible(w, mm.ts):
        raise ValueError(f"word {w} is not admissible")
    val = mm.pi(w[0])
    for a, b in zip(w, w[1:]):
        val *= mm.kernel(a, b)
    if with_flag:
        return CylinderMass(val, val == 0.0)
    return val


def bounded_distortion_check(mm: MarkovMeasure, a: Word | str | Sequence[Symbol],
                             b: Word | str | Sequence[Symbol]) -> dict:
    """mu[ab] mu[b_0] / (mu[a b_0] mu[b]); identically 1 for Markov measures."""
    wa, wb = as_word(a).symbols, as_word(b).symbols
    num = cylinder_measure(mm, wa + wb) * cylinder_measure(mm, wb[:1])
    den = cylinder_measure(mm, wa + wb[:1]) * cylinder_measure(mm, wb)
    if num == 0 or den == 0:
        return {"ratio": float("nan"), "null": True}
    return {"ratio": num / den, "null": False}


# --------------------------------------------------------------------------
# return tails


def _kmp_failure(w: Sequence) -> list[int]:
    fail = [0] * len(w)
    k = 0
    for i in range(1, len(w)):
        while k and w[i] != w[k]:
            k = fail[k - 1]
        if w[i] == w[k]:
            k += 1
        fail[i] = k
    return fail


def _kmp_step(w, fail, state: int, s) -> int:
    while state and (state == len(w) or w[state] != s):
        state = fail[state - 1]
    if w[state] == s:
        state += 1
    return state


def avoidance_tails(mm: MarkovMeasure, word: Word | str | Sequence[Symbol], k_max: int) -> np.ndarray:
    """mu([w] ∩ {r_[w] > k}) for k = 0..k_max by forward dynamic programming."""
    w = as_word(word).symbols
    n = len(w)
    fail = _kmp_failure(w)
    kern = mm.kernel
    start = cylinder_measure(mm, w)
    # state after having read all of w
    mass = {(w[-1], n): start}
    out = [start]
    for _ in range(k_max):
        new: dict = {}
        for (a, st), m in mass.items():
            if m == 0.0:
                continue
            if kern.remainder(a) > 0:
                raise TruncationError(f"return-tail recursion reached the truncation edge at {a!r}")
            for b, p in kern.row(a):
                if p <= 0:
                    continue
                nst = _kmp_step(w, fail, st, b)
                if nst == n:
                    continue  # an occurrence of w completes: that starting time is a return
                key = (b, nst)
                new[key] = new.get(key, 0.0) + m * p
        mass = new
        out.append(sum(mass.values()))
    # out[j] excludes occurrences finishing by time n-1+j, i.e. starting in 1..j
    return np.asarray(out)


def return_tail(model, v: Symbol, n: int, method: str = "auto") -> float:
    """mu([v] ∩ {r_[v] > n}); closed form when the model carries one."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    law = getattr(model, "return_law", None)
    if method in ("auto", "closed") and law is not None and getattr(model, "base_symbol", None) == v:
        return model.measure.pi(v) * law.q(n + 1)
    if method == "closed":
        raise ValueError("model has no closed-form return law at this symbol")
    return float(avoidance_tails(model.measure, (v,), n)[n])


def wandering_rate(model, target, n: int) -> float:
    """w_n(A) = sum_{k<n} mu(A ∩ {r_A > k})."""
    if n < 1:
        raise ValueError("n must be positive")
    word = getattr(target, "word", None)
    if word is None:
        word = as_word(target)
    word = as_word(word)
    if word.depth == 1:
        return float(sum(return_tail(model, word[0], k) for k in range(n)))
    tails = avoidance_tails(model.measure, word, n - 1)
    return float(tails.sum())


# --------------------------------------------------------------------------
# scaling profiles


@dataclass
class ScalingProfile:
    """Normalizing sequence a_n and the derived scaling gamma(s) = 1 / a^{<-}(1/s).

    ``provenance`` is ``exact_power`` (a(t) = c t^alpha, continuous inverse),
    ``kac`` (gamma = identity, for finite invariant measure), or a tabulated
    kind (``from_tail`` / ``from_partition_sums``) inverted on the integers.
    """

    alpha: float
    provenance: str
    c: float = 1.0
    a_fn: Callable[[int], float] | None = None
    n_max: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def kac(self) -> bool:
        return self.provenance == "kac"

    def a(self, n) -> float:
        if self.provenance == "exact_power":
            return self.c * float(n) ** self.alpha
        if self.provenance == "kac":
            return self.c * float(n)
        if self.n_max is not None and n > self.n_max:
            raise ValueError(f"a_n requested at n={n} beyond the tabulated range {self.n_max}")
        return float(self.a_fn(int(n)))

    def a_inverse(self, x: float) -> float:
        """inf{y >= 0 : a(y) > x} (left edge on plateaus)."""
        if self.provenance == "exact_power":
            return (x / self.c) ** (1.0 / self.alpha)
        if self.provenance == "kac":
            return x / self.c
        if self.a(1) > x:
            return 1.0
        lo, hi = 1, 2  # invariant: a(lo) <= x
        while True:
            if self.n_max is not None and hi >= self.n_max:
                hi = self.n_max
                if self.a(hi) <= x:
                    raise ValueError(f"a^<-({x}) lies beyond the tabulated range n <= {self.n_max}")
                break
            if self.a(hi) > x:
                break
            lo, hi = hi, 2 * hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.a(mid) > x:
                hi = mid
            else:
                lo = mid
        return float(hi)

    def gamma(self, s: float) -> float:
        if s <= 0:
            raise ValueError("s must be positive")
        if self.provenance == "exact_power":
            return (self.c * s) ** (1.0 / self.alpha)
        if self.provenance == "kac":
            return self.c * s
        return 1.0 / self.a_inverse(1.0 / s)

    def to_json(self) -> str:
        return json.dumps({"alpha": self.alpha, "provenance": self.provenance, "c": self.c,
                           "n_max": self.n_max, **self.meta}, indent=2)

    def to_csv(self, ns: Sequence[int]) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["n", "a_n"])
        for n in ns:
            wr.writerow([n, repr(self.a(n))])
        return buf.getvalue()


def exact_power_profile(alpha: float, c: float) -> ScalingProfile:
    return ScalingProfile(alpha=alpha, provenance="exact_power", c=c)


def kac_profile(total_mass: float = 1.0) -> ScalingProfile:
    """gamma(s) = s / mu(Omega): Kac scaling for a finite invariant measure."""
    return ScalingProfile(alpha=1.0, provenance="kac", c=1.0 / total_mass)


def gamma_scaling(profile: ScalingProfile, s: float) -> float:
    return profile.gamma(s)


@dataclass(frozen=True)
class RVEstimate:
    alpha: float
    se: float
    band: tuple
    warning: bool


def rv_index_estimate(points: Sequence[tuple[float, float]]) -> RVEstimate:
    """Negated OLS slope of log t_n on log n, with a +-2 SE band."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 8:
        raise ValueError("need at least 8 (n, t_n) points")
    n, t = pts[:, 0], pts[:, 1]
    if (t <= 0).any() or (n <= 0).any():
        raise ValueError("tails and indices must be positive")
    if math.log10(n.max() / n.min()) < 2 - 1e-9:
        raise ValueError("points must span at least two decades")
    x, y = np.log(n), np.log(t)
    xm = x - x.mean()
    slope = float((xm * (y - y.mean())).sum() / (xm ** 2).sum())
    resid = y - y.mean() - slope * xm
    dof = len(x) - 2
    se = float(math.sqrt((resid ** 2).sum() / dof / (xm ** 2).sum())) if dof > 0 else 0.0
    alpha = -slope
    warn = not (0 < alpha <= 1)
    if warn:
        warnings.warn(f"estimated tail index {alpha:.3g} is outside (0, 1]", stacklevel=2)
    return RVEstimate(alpha, se, (alpha - 2 * se, alpha + 2 * se), warn)


def normalizing_sequence(model, v: Symbol, n_max: int, method: str = "from_tail",
                         alpha: float | None = None) -> ScalingProfile:
    """Build a_n at symbol v.

    ``from_tail``: a_n = c_alpha / mu([v] ∩ {r > n}); collapses to an exact
    power profile when the model's tail is an exact power.
    ``from_partition_sums``: a_n = (1/mu[v]) sum_{k<=n} Z_k, tabulated to n_max.
    """
    recurrence = getattr(model, "recurrence", None)
    if recurrence is not None and recurrence().label == "positive_recurrent":
        mass = getattr(model, "total_mass", None)
        if mass is None:
            mass = model.return_law.mean * model.measure.pi(model.base_symbol)
        return kac_profile(mass)
    if method == "from_tail":
        law = getattr(model, "return_law", None)
        if alpha is None:
            alpha = getattr(model, "alpha", None)
        if alpha is None:
            grid = np.unique(np.geomspace(10, n_max, 24).astype(int))
            alpha = rv_index_estimate([(k, return_tail(model, v, k)) for k in grid]).alpha
        if not (0 < alpha <= 1):
            raise ValueError(f"tail index {alpha} outside (0, 1]")
        c = pareto_constant(alpha)
        if law is not None and getattr(law, "power_constant", None) is not None \
                and getattr(model, "base_symbol", None) == v:
            # tail ~ K n^{-alpha}: a(t) = (c / (pi(v) K)) t^alpha
            k = law.power_constant * model.measure.pi(v)
            return ScalingProfile(alpha, "exact_power", c=c / k,
                                  meta={"source": "from_tail", "tail_constant": k})
        cache: dict = {}

        def a_fn(n):
            if n not in cache:
                cache[n] = c / return_tail(model, v, n)
            return cache[n]

        return ScalingProfile(alpha, "from_tail", a_fn=a_fn, n_max=n_max)
    if method == "from_partition_sums":
        return model.partition_sum_profile(v, n_max)
    raise ValueError(f"unknown method {method!r}")
