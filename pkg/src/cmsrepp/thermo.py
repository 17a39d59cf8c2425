"""Markovian potentials, partition sums, Gurevich pressure and extremal indices."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .kernel import KernelRowError, StochasticKernel
from .shift_core import (
    Symbol,
    TransitionStructure,
    Word,
    as_word,
    enumerate_periodic_words,
    is_admissible,
    prime_period,
)


class PressureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Potential:
    """Two-coordinate potential phi(x) = f(x_0, x_1), or a constant."""

    kind: str
    value: Callable[[Symbol, Symbol], float] | None = None
    constant: float = 0.0
    normalized: "Potential | None" = None

    @classmethod
    def markovian(cls, value: Callable[[Symbol, Symbol], float] | Mapping) -> "Potential":
        if isinstance(value, Mapping):
            table = dict(value)
            return cls("markovian", lambda a, b: table[(a, b)])
        return cls("markovian", value)

    @classmethod
    def const(cls, c: float) -> "Potential":
        return cls("constant", constant=float(c))

    def edge(self, a: Symbol, b: Symbol) -> float:
        if self.kind == "constant":
            return self.constant
        v = float(self.value(a, b))
        if not math.isfinite(v):
            raise ValueError(f"potential is not finite on edge {a!r}->{b!r}")
        return v

    def evaluate(self, prefix: Word | Sequence[Symbol]) -> float:
        w = as_word(prefix)
        if w.depth < 2:
            raise ValueError("a Markovian potential needs two coordinates")
        return self.edge(w[0], w[1])


def markov_potential(pi: Callable[[Symbol], float] | Mapping, kernel: StochasticKernel,
                     tol: float = 1e-12) -> Potential:
    """phi(a,b) = log(pi(a) P(a,b) / pi(b)), carrying the kernel form log P as ``normalized``.

    Both have the same periodic sums; the first one is fixed by the transfer
    operator (L 1 = 1) exactly, the second only up to a coboundary.
    """
    pi_fn = (lambda s: pi[s]) if isinstance(pi, Mapping) else pi
    kernel.check_rows(tol)

    def phi(a, b):
        p = kernel(a, b)
        if p <= 0:
            return -math.inf
        return math.log(pi_fn(a)) + math.log(p) - math.log(pi_fn(b))

    def log_p(a, b):
        p = kernel(a, b)
        return math.log(p) if p > 0 else -math.inf

    return Potential("markovian", phi, normalized=Potential("markovian", log_p))


def birkhoff_sum(phi: Potential, word: Word | str | Sequence[Symbol], ts: TransitionStructure,
                 periodic: bool = False) -> float:
    w = as_word(word).symbols
    if not is_admissible(w, ts) or (periodic and not ts.adjacency(w[-1], w[0])):
        raise ValueError(f"word {w} is not admissible{' as a cycle' if periodic else ''}")
    if not periodic and len(w) < 2:
        raise ValueError("need depth >= 2 for an open Birkhoff sum")
    pairs = list(zip(w, w[1:]))
    if periodic:
        pairs.append((w[-1], w[0]))
    return float(sum(phi.edge(a, b) for a, b in pairs))


@dataclass
class PartitionSums:
    v: Symbol
    n: list
    z: list
    z_star: list


def _weighted_rows(phi: Potential, ts: TransitionStructure, a):
    out = []
    for b in ts.out_neighbors(a):
        val = phi.edge(a, b)
        if val != -math.inf:
            out.append((b, math.exp(val)))
    return out


def partition_sums(phi: Potential, ts: TransitionStructure, v: Symbol, n_max: int,
                   method: str = "transfer") -> PartitionSums:
    """Z_n and Z_n^* at v for n = 1..n_max.

    ``method="transfer"`` propagates weights along the graph, which gives the
    same sums as the explicit cycle enumeration (``method="enumerate"``)
    without the exponential blow-up.
    """
    bound = ts.cycle_exhaustive_upto
    if bound is not None and n_max > bound:
        # same contract as the enumeration
        enumerate_periodic_words(ts, v, n_max)
    ns = list(range(1, n_max + 1))
    if method == "enumerate":
        z = [sum(math.exp(birkhoff_sum(phi, w, ts, periodic=True)) for w in enumerate_periodic_words(ts, v, n))
             for n in ns]
        zs = [sum(math.exp(birkhoff_sum(phi, w, ts, periodic=True))
                  for w in enumerate_periodic_words(ts, v, n, first_return_only=True)) for n in ns]
        return PartitionSums(v, ns, z, zs)
    rows: dict = {}

    def row(a):
        if a not in rows:
            rows[a] = _weighted_rows(phi, ts, a)
        return rows[a]

    z, zs = [], []
    full = {v: 1.0}  # weight of paths from v of length k ending at each symbol
    avoid = {v: 1.0}  # same, but never revisiting v after time 0
    for _ in ns:
        nf: dict = {}
        na: dict = {}
        back_full = 0.0
        back_avoid = 0.0
        for a, w in full.items():
            for b, e in row(a):
                nf[b] = nf.get(b, 0.0) + w * e
        for a, w in avoid.items():
            for b, e in row(a):
                if b == v:
                    back_avoid += w * e
                else:
                    na[b] = na.get(b, 0.0) + w * e
        back_full = nf.get(v, 0.0)
        z.append(back_full)
        zs.append(back_avoid)
        full, avoid = nf, na
    return PartitionSums(v, ns, z, zs)


def spectral_radius(m: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Perron root of a nonnegative irreducible matrix.

    Power iteration from the all-ones vector on M + I (aperiodic even when M
    is not), stopped when the Collatz-Wielandt bounds meet.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("square matrix required")
    if (m < 0).any():
        raise ValueError("nonnegative matrix required")
    a = m + np.eye(m.shape[0])
    x = np.ones(m.shape[0])
    for _ in range(max_iter):
        y = a @ x
        if not np.all(x > 0):
            raise PressureError("power iteration left the positive cone (reducible matrix?)")
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol * max(1.0, hi):
            return float(0.5 * (lo + hi) - 1.0)
        x = y / np.max(y)
    raise PressureError("power iteration did not converge")


@dataclass
class PressureReport:
    estimates: list
    P_G: float
    lam: float
    method: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "estimates": [
                {"n": n, "Z_n": z, "Z_n_star": zs, "log_growth": lg, "ratio": r}
                for (n, z, zs, lg, r) in self.estimates
            ],
            "P_G": self.P_G,
            "lambda": self.lam,
            "method": self.method,
            **self.meta,
        }
        return json.dumps(doc, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def gurevich_pressure(sums: PartitionSums, *, matrix: np.ndarray | None = None, stochastic: bool = False,
                      eig_tol: float = 1e-6) -> PressureReport:
    """Pressure from the ratio Z_{n+1}/Z_n, cross-checked by (1/n) log Z_n.

    With a finite weighted matrix the Perron root is authoritative; for a
    stochastic kernel the pressure is 0 and the partition sums must agree.
    """
    z = sums.z
    if any(v <= 0 for v in z):
        raise PressureError("nonpositive partition sum; graph not mixing at this horizon")
    rows = []
    for i, n in enumerate(sums.n):
        ratio = z[i + 1] / z[i] if i + 1 < len(z) else float("nan")
        rows.append((n, z[i], sums.z_star[i], math.log(z[i]) / n, ratio))
    n_last = sums.n[-1]
    p_ratio = math.log(z[-1] / z[-2]) if len(z) >= 2 else math.log(z[0])
    p_mean = math.log(z[-1]) / n_last
    slack = 10.0 / n_last
    if abs(p_ratio - p_mean) > slack:
        raise PressureError(f"ratio estimate {p_ratio} and (1/n)log Z_n {p_mean} disagree beyond {slack}")
    meta = {"ratio_estimate": p_ratio, "log_growth_estimate": p_mean}
    if matrix is not None:
        p_eig = math.log(spectral_radius(matrix))
        meta["eigenvalue_estimate"] = p_eig
        if abs(p_eig - p_ratio) > eig_tol:
            raise PressureError(f"eigenvalue pressure {p_eig} vs ratio {p_ratio}")
        return PressureReport(rows, p_eig, math.exp(p_eig), "eigenvalue", meta)
    if stochastic:
        if abs(p_ratio) > slack:
            raise PressureError(f"stochastic kernel but ratio estimate is {p_ratio}")
        return PressureReport(rows, 0.0, 1.0, "exact_zero_for_stochastic", meta)
    return PressureReport(rows, p_ratio, math.exp(p_ratio), "ratio_limit", meta)


def weighted_matrix(phi: Potential, ts: TransitionStructure, symbols: Sequence[Symbol] | None = None):
    syms = tuple(ts.alphabet if symbols is None else symbols)
    idx = {s: i for i, s in enumerate(syms)}
    m = np.zeros((len(syms), len(syms)))
    for a in syms:
        for b in ts.out_neighbors(a):
            if b in idx:
                val = phi.edge(a, b)
                if val != -math.inf:
                    m[idx[a], idx[b]] = math.exp(val)
    return m


@dataclass
class RecurrenceClass:
    label: str
    evidence: dict
    heuristic: bool = False


def classify_recurrence(return_law=None, sums: PartitionSums | None = None, lam: float = 1.0) -> RecurrenceClass:
    """Exact from a closed-form return law; otherwise a flagged partial-sum diagnostic."""
    if return_law is not None:
        mass = float(return_law.total_mass)
        mean = float(return_law.mean)
        ev = {"sum_p": mass, "sum_k_p": mean}
        if mass < 1.0 - 1e-12:
            return RecurrenceClass("transient", ev)
        if math.isinf(mean):
            return RecurrenceClass("null_recurrent", ev)
        return RecurrenceClass("positive_recurrent", ev)
    if sums is None:
        raise ValueError("need a return law or partition sums")
    n = np.asarray(sums.n, dtype=float)
    z = np.asarray(sums.z) * lam ** (-n)
    zs = np.asarray(sums.z_star) * lam ** (-n)
    half = len(n) // 2
    s_z = float(z.sum())
    s_zs = float(zs.sum())
    s_nzs = float((n * zs).sum())
    # crude divergence test: the second half still carries a sizeable share of the sum
    z_growing = z[half:].sum() > 0.25 * s_z
    nzs_growing = (n * zs)[half:].sum() > 0.25 * s_nzs
    ev = {"sum_Z": s_z, "sum_Z_star": s_zs, "sum_n_Z_star": s_nzs, "n_max": int(n[-1])}
    if not z_growing and s_zs < 1 - 1e-3:
        label = "transient"
    elif nzs_growing:
        label = "null_recurrent"
    else:
        label = "positive_recurrent"
    return RecurrenceClass(label, ev, heuristic=True)


def extremal_index(phi: Potential, word: Word | str | Sequence[Symbol], ts: TransitionStructure,
                   P_G: float = 0.0) -> float:
    """theta = 1 - exp(S_q phi(w) - q P_G) for the cycle w of prime period q."""
    w = as_word(word).symbols
    q = len(w)
    if prime_period(w) != q:
        raise ValueError(f"word {w} is not of prime period {q}")
    s = birkhoff_sum(phi, w, ts, periodic=True)
    theta = 1.0 - math.exp(s - q * P_G)
    if theta <= -1e-12 or theta > 1.0 + 1e-12:
        raise PressureError(f"extremal index {theta} outside (0,1]; check P_G")
    return min(max(theta, 0.0), 1.0)


def _is_primitive(m: np.ndarray) -> bool:
    k = m.shape[0]
    b = (m > 0).astype(np.int64)
    p = b.copy()
    for _ in range(k * k):
        if (p > 0).all():
            return True
        p = np.minimum(p @ b, 1)
    return bool((p > 0).all())


def embedded_sft_relative_pressure(kernel: StochasticKernel, delta: Sequence[Symbol]) -> float:
    """log of the Perron root of P restricted to delta x delta (must be < 0)."""
    delta = tuple(delta)
    m, _ = kernel.dense(delta)
    if not _is_primitive(m):
        raise PressureError(f"restriction to {delta} is not topologically mixing")
    rho = spectral_radius(m)
    if rho <= 0:
        raise PressureError("restriction has no admissible cycle")
    p_star = math.log(rho)
    if p_star >= 0:
        raise PressureError(f"relative pressure {p_star} is not negative")
    return p_star


__all__ = [
    "Potential", "PressureReport", "RecurrenceClass", "PartitionSums", "PressureError", "KernelRowError",
    "markov_potential", "birkhoff_sum", "partition_sums", "gurevich_pressure", "spectral_radius",
    "weighted_matrix", "classify_recurrence", "extremal_index", "embedded_sft_relative_pressure",
]
