"""Limit laws and limit point processes: tails, Laplace transforms, samplers, and the G_alpha test."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Sequence

import mpmath as mp
import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .measure_scaling import pareto_constant

ML_CUTOVER = 5.0


class CapabilityError(ValueError):
    """The law does not provide the requested operation."""


class GAlphaViolation(ValueError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


# ---------------------------------------------------------------- samplers


def sample_one_sided_stable(alpha: float, rng: np.random.Generator, size=None):
    """Positive alpha-stable draw with E exp(-s S) = exp(-s^alpha) (Kanter's representation)."""
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if alpha == 1:
        return np.ones(size) if size is not None else 1.0
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = (np.sin(alpha * u) ** (alpha / (1 - alpha)) * np.sin((1 - alpha) * u)
         / np.sin(u) ** (1 / (1 - alpha)))
    return (a / e) ** ((1 - alpha) / alpha)


def sample_mittag_leffler(alpha: float, lam: float, rng: np.random.Generator, size=None):
    """H = E^{1/alpha} S_alpha with E exponential of rate lam; Laplace lam / (lam + s^alpha)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    e = rng.standard_exponential(size) / lam
    if alpha == 1:
        return e
    return e ** (1 / alpha) * sample_one_sided_stable(alpha, rng, size)


# ---------------------------------------------------------------- Mittag-Leffler function


def _ml_series_mp(alpha: float, z: float) -> float:
    """E_alpha(-z) by its power series in enough precision to absorb the cancellation."""
    if z == 0:
        return 1.0
    a = mp.mpf(alpha)
    # size of the largest term decides the working precision
    ks = np.arange(0, 4000)
    logs = ks * math.log10(z) - np.array([math.lgamma(alpha * k + 1) for k in ks]) / math.log(10)
    peak = float(logs.max())
    with mp.workdps(int(max(peak, 0)) + 30):
        zz = mp.mpf(z)
        total = mp.mpf(0)
        k = 0
        while True:
            term = (-zz) ** k / mp.gamma(a * k + 1)
            total += term
            if k > 5 and abs(term) < mp.mpf(10) ** (-25) and logs[min(k, len(logs) - 1)] < peak:
                break
            k += 1
            if k > 20000:
                raise RuntimeError("Mittag-Leffler series did not converge")
        return float(total)


@lru_cache(maxsize=32)
def _ml_chebyshev(alpha: float, deg: int = 96):
    """Chebyshev interpolant of the series on [0, ML_CUTOVER]."""
    nodes = C.chebpts2(deg + 1)
    zs = (nodes + 1) * ML_CUTOVER / 2
    vals = np.array([_ml_series_mp(alpha, float(z)) for z in zs])
    coef = C.chebfit(nodes, vals, deg)
    return coef


def _ml_integral(alpha: float, z: np.ndarray) -> np.ndarray:
    """E_alpha(-z) = (sin(a pi)/pi) int_0^inf r^{a-1} e^{-r z^{1/a}} / (r^{2a} + 2 r^a cos(a pi) + 1) dr."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    sa, ca = math.sin(alpha * math.pi), math.cos(alpha * math.pi)
    step = min(0.02, 0.1 * sa)
    for i0 in range(0, len(z), 1024):
        y = z[i0: i0 + 1024] ** (1 / alpha)
        u_lo = -40.0 / alpha
        u_hi = math.log(60.0 / float(y.min())) + 3.0
        u = np.arange(u_lo, u_hi + step, step)
        r = np.exp(u)
        ra = np.exp(alpha * u)
        weight = ra / (ra * ra + 2 * ra * ca + 1)
        g = weight[None, :] * np.exp(-np.outer(y, r))
        out[i0: i0 + 1024] = (sa / math.pi) * step * g.sum(axis=1)
    return out


def ml_function_negative(alpha: float, z, method: str = "auto"):
    """E_alpha(-z) for z >= 0; ``method`` in {auto, series, integral}."""
    z_arr = np.asarray(z, dtype=float)
    if (z_arr < 0).any():
        raise ValueError("argument must be nonnegative")
    if alpha == 1:
        res = np.exp(-z_arr)
        return float(res) if res.ndim == 0 else res
    if method == "series":
        res = np.vectorize(lambda x: _ml_series_mp(alpha, float(x)))(z_arr)
    elif method == "integral":
        res = _ml_integral(alpha, z_arr.ravel()).reshape(z_arr.shape)
    else:
        flat = z_arr.ravel()
        res = np.empty_like(flat)
        small = flat <= ML_CUTOVER
        if small.any():
            coef = _ml_chebyshev(float(alpha))
            res[small] = C.chebval(2 * flat[small] / ML_CUTOVER - 1, coef)
        if (~small).any():
            res[~small] = _ml_integral(alpha, flat[~small])
        res = res.reshape(z_arr.shape)
    return float(res) if np.ndim(res) == 0 else res


def ml_tail(alpha: float, lam: float, t):
    """P(H_alpha(lam) > t) = E_alpha(-lam t^alpha)."""
    t_arr = np.asarray(t, dtype=float)
    if (t_arr < 0).any():
        raise ValueError("t must be nonnegative")
    return ml_function_negative(alpha, lam * t_arr ** alpha)


# ---------------------------------------------------------------- law specifications


@dataclass
class LawSpec:
    """Named analytic law; ``params`` holds its parameters and ``base`` a nested law when needed."""

    kind: str
    params: dict = field(default_factory=dict)
    base: "LawSpec | None" = None

    KINDS = ("exponential", "mittag_leffler", "compound_geom_delay", "pareto", "zero_atom_mix", "tabulated_tail",
             "j_alpha", "j_tilde_alpha", "dirac", "geometric")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown law kind {self.kind!r}")
        p = self.params
        if "alpha" in p and not (0 < p["alpha"] <= 1):
            raise ValueError("alpha must lie in (0, 1]")
        if "lam" in p and not p["lam"] > 0:
            raise ValueError("lambda must be positive")
        if "theta" in p and not (0 < p["theta"] <= 1):
            raise ValueError("theta must lie in (0, 1]")

    @property
    def capabilities(self) -> set:
        caps = {"laplace"}
        if self.kind in ("j_alpha", "j_tilde_alpha"):
            return caps
        caps |= {"tail", "cdf"}
        if self.kind != "zero_atom_mix" or "sampler" in self.base.capabilities:
            caps.add("sampler")
        return caps

    @property
    def atom_at_zero(self) -> float:
        if self.kind == "compound_geom_delay":
            return 1.0 - self.params["theta"]
        if self.kind == "zero_atom_mix":
            return self.params["rho"] + (1 - self.params["rho"]) * self.base.atom_at_zero
        if self.kind == "dirac":
            return 1.0 if self.params["c"] == 0 else 0.0
        if self.kind == "tabulated_tail":
            return float(self.params.get("atom", 0.0))
        return 0.0

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"kind": self.kind, "parameters": _plain(self.params)}
        if self.base is not None:
            doc["base"] = self.base.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "LawSpec":
        base = cls.from_json(doc["base"]) if doc.get("base") else None
        return cls(doc["kind"], dict(doc.get("parameters", {})), base)

    def __str__(self):
        inner = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.params.items()
                          if k not in ("t", "tail"))
        return f"{self.kind}({inner}{', ' + str(self.base) if self.base else ''})"


def _plain(p: dict) -> dict:
    out = {}
    for k, v in p.items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def exponential(lam: float = 1.0) -> LawSpec:
    return LawSpec("exponential", {"lam": lam})


def mittag_leffler(alpha: float, lam: float) -> LawSpec:
    return LawSpec("mittag_leffler", {"alpha": alpha, "lam": lam})


def compound_geom_delay(alpha: float, theta: float, lam: float) -> LawSpec:
    """W_{alpha,theta}(lam): 0 with probability 1 - theta, else H_alpha(lam)."""
    return LawSpec("compound_geom_delay", {"alpha": alpha, "theta": theta, "lam": lam})


def pareto(alpha: float, lam: float | None = None) -> LawSpec:
    """P(W > t) = 1 ∧ lam t^{-alpha}; lam defaults to sin(pi a)/(pi a)."""
    return LawSpec("pareto", {"alpha": alpha, "lam": pareto_constant(alpha) if lam is None else lam})


def zero_atom_mix(rho: float, base: LawSpec) -> LawSpec:
    if not (0 <= rho <= 1):
        raise ValueError("rho must lie in [0, 1]")
    return LawSpec("zero_atom_mix", {"rho": rho}, base)


def tabulated_tail(t: Sequence[float], tail: Sequence[float], atom: float = 0.0) -> LawSpec:
    t = np.asarray(t, dtype=float)
    v = np.asarray(tail, dtype=float)
    if len(t) < 2 or (np.diff(t) <= 0).any():
        raise ValueError("tabulated grid must be strictly increasing")
    if (np.diff(v) > 1e-15).any():
        raise ValueError("tabulated tail must be nonincreasing")
    return LawSpec("tabulated_tail", {"t": t, "tail": v, "atom": atom})


def j_alpha(alpha: float, nu: LawSpec) -> LawSpec:
    return LawSpec("j_alpha", {"alpha": alpha}, nu)


def j_tilde_alpha(alpha: float, nu: LawSpec) -> LawSpec:
    return LawSpec("j_tilde_alpha", {"alpha": alpha}, nu)


def dirac(c: float = 0.0) -> LawSpec:
    return LawSpec("dirac", {"c": c})


def geometric(theta: float) -> LawSpec:
    """Geo(theta) on {1, 2, ...}: P(k) = theta (1 - theta)^{k-1}."""
    return LawSpec("geometric", {"theta": theta})


# ---------------------------------------------------------------- evaluation


def law_tail(spec: LawSpec, t):
    """P(W > t)."""
    if "tail" not in spec.capabilities:
        raise CapabilityError(f"{spec.kind} is defined by its Laplace transform only")
    t_arr = np.asarray(t, dtype=float)
    p = spec.params
    k = spec.kind
    if k == "exponential":
        res = np.exp(-p["lam"] * np.maximum(t_arr, 0))
    elif k == "mittag_leffler":
        res = ml_tail(p["alpha"], p["lam"], np.maximum(t_arr, 0))
    elif k == "compound_geom_delay":
        res = p["theta"] * np.asarray(ml_tail(p["alpha"], p["lam"], np.maximum(t_arr, 0)))
        res = np.where(t_arr < 0, 1.0, res)
    elif k == "pareto":
        with np.errstate(divide="ignore"):
            res = np.minimum(1.0, p["lam"] * np.where(t_arr > 0, t_arr, 0.0) ** (-p["alpha"]))
    elif k == "zero_atom_mix":
        res = (1 - p["rho"]) * np.asarray(law_tail(spec.base, t_arr))
        res = np.where(t_arr < 0, 1.0, res)
    elif k == "tabulated_tail":
        res = _tab_tail(p, t_arr)
    elif k == "dirac":
        res = (t_arr < p["c"]).astype(float)
    elif k == "geometric":
        res = np.where(t_arr < 1, 1.0, (1 - p["theta"]) ** np.floor(np.maximum(t_arr, 1)))
    else:  # pragma: no cover
        raise CapabilityError(k)
    return float(res) if np.ndim(res) == 0 else res


def law_cdf(spec: LawSpec, t):
    v = law_tail(spec, t)
    return 1.0 - v if np.ndim(v) == 0 else 1.0 - np.asarray(v)


def _tab_tail(p: dict, t: np.ndarray) -> np.ndarray:
    grid, tail = p["t"], p["tail"]
    atom = p.get("atom", 0.0)
    top = 1.0 - atom
    res = np.interp(t, grid, tail, left=np.nan, right=np.nan)
    res = np.where(t < grid[0], top, res)
    beyond = t > grid[-1]
    if beyond.any():
        beta = _tab_end_index(grid, tail)
        res = np.where(beyond, tail[-1] * (np.where(beyond, t, grid[-1]) / grid[-1]) ** (-beta) if beta else 0.0,
                       res)
    return np.where(t < 0, 1.0, res)


def _tab_end_index(grid, tail) -> float:
    """Power index continuing the table past its last point (0 means the tail stops)."""
    if tail[-1] <= 0 or tail[-2] <= 0 or tail[-2] == tail[-1]:
        return 0.0
    return float(-math.log(tail[-1] / tail[-2]) / math.log(grid[-1] / grid[-2]))


def law_laplace(spec: LawSpec, s):
    """E exp(-s W) for s >= 0."""
    s_arr = np.asarray(s, dtype=float)
    if (s_arr < 0).any():
        raise ValueError("s must be nonnegative")
    p = spec.params
    k = spec.kind
    if k == "exponential":
        res = p["lam"] / (p["lam"] + s_arr)
    elif k == "mittag_leffler":
        res = p["lam"] / (p["lam"] + s_arr ** p["alpha"])
    elif k == "compound_geom_delay":
        res = 1 - p["theta"] + p["theta"] * p["lam"] / (p["lam"] + s_arr ** p["alpha"])
    elif k == "pareto":
        res = _pareto_laplace(p["alpha"], p["lam"], s_arr)
    elif k == "zero_atom_mix":
        res = p["rho"] + (1 - p["rho"]) * np.asarray(law_laplace(spec.base, s_arr))
    elif k == "tabulated_tail":
        res = np.vectorize(lambda x: _tab_laplace(p, float(x)))(s_arr)
    elif k == "dirac":
        res = np.exp(-s_arr * p["c"])
    elif k == "geometric":
        th = p["theta"]
        e = np.exp(-s_arr)
        res = th * e / (1 - (1 - th) * e)
    elif k == "j_alpha":
        a = p["alpha"]
        res = 1.0 / (np.asarray(law_laplace(spec.base, s_arr)) + s_arr ** a / gamma_fn(1 + a))
    elif k == "j_tilde_alpha":
        a = p["alpha"]
        lv = np.asarray(law_laplace(spec.base, s_arr))
        res = lv / (lv + s_arr ** a / gamma_fn(1 + a))
    else:  # pragma: no cover
        raise CapabilityError(k)
    return float(res) if np.ndim(res) == 0 else res


def _pareto_laplace(alpha: float, lam: float, s: np.ndarray) -> np.ndarray:
    """1 - s int_0^inf e^{-st} (1 ∧ lam t^{-a}) dt, with the Pareto part through the upper incomplete gamma."""
    t0 = lam ** (1 / alpha)
    s_safe = np.where(s > 0, s, 1.0)
    if alpha == 1:
        from scipy.special import exp1
        body = np.exp(-s_safe * t0) - lam * s_safe * exp1(s_safe * t0)
    else:
        body = np.exp(-s_safe * t0) - lam * s_safe ** alpha * gamma_fn(1 - alpha) * gammaincc(1 - alpha, s_safe * t0)
    return np.where(s > 0, body, 1.0)


def _tab_laplace(p: dict, s: float) -> float:
    """Trapezoid quadrature of s e^{-st} against the tail, plus the power-law continuation."""
    if s == 0:
        return 1.0
    grid, tail = np.asarray(p["t"]), np.asarray(p["tail"])
    top = 1.0 - p.get("atom", 0.0)
    # [0, t_0]: tail is flat at its top value
    head = top * (1 - math.exp(-s * grid[0]))
    # trapezoid on the table (linear interpolation is integrated exactly against e^{-st} up to O(h^2))
    f = tail * np.exp(-s * grid)
    body = s * float(np.sum((f[1:] + f[:-1]) * np.diff(grid)) / 2)
    beta = _tab_end_index(grid, tail)
    end = 0.0
    if beta:
        tt = grid[-1]
        # s int_T^inf e^{-st} tail_T (t/T)^{-beta} dt = tail_T T^beta s^beta Gamma(1-beta, sT)
        end = float(tail[-1] * tt ** beta * s ** beta * mp.gammainc(1 - beta, s * tt))
    return 1.0 - head - body - end


def law_sample(spec: LawSpec, rng: np.random.Generator, size=None):
    if "sampler" not in spec.capabilities:
        raise CapabilityError(f"{spec.kind} has no sampler; validate it through its Laplace transform")
    p = spec.params
    k = spec.kind
    if k == "exponential":
        return rng.standard_exponential(size) / p["lam"]
    if k == "mittag_leffler":
        return sample_mittag_leffler(p["alpha"], p["lam"], rng, size)
    if k == "compound_geom_delay":
        keep = rng.uniform(size=size) < p["theta"]
        return np.where(keep, sample_mittag_leffler(p["alpha"], p["lam"], rng, size), 0.0)
    if k == "pareto":
        return (p["lam"] / rng.uniform(size=size)) ** (1 / p["alpha"])
    if k == "zero_atom_mix":
        keep = rng.uniform(size=size) >= p["rho"]
        return np.where(keep, law_sample(spec.base, rng, size), 0.0)
    if k == "dirac":
        return np.full(size, p["c"]) if size is not None else p["c"]
    if k == "geometric":
        return rng.geometric(p["theta"], size)
    if k == "tabulated_tail":
        u = rng.uniform(size=size)
        return _tab_inverse(p, u)
    raise CapabilityError(k)  # pragma: no cover


def _tab_inverse(p: dict, u):
    """Smallest t with tail(t) <= u (generalized inverse of the tail)."""
    grid, tail = np.asarray(p["t"]), np.asarray(p["tail"])
    atom = p.get("atom", 0.0)
    u = np.asarray(u, dtype=float)
    out = np.interp(-u, -tail, grid)  # tail is nonincreasing
    out = np.where(u >= 1 - atom, 0.0, out)
    beta = _tab_end_index(grid, tail)
    below = u < tail[-1]
    if below.any():
        ext = grid[-1] * (np.where(below, u, tail[-1]) / tail[-1]) ** (-1 / beta) if beta else np.inf
        out = np.where(below, ext, out)
    return out


# ---------------------------------------------------------------- G_alpha


@dataclass
class GAlphaResult:
    passed: bool
    violation: str = ""
    t: float | None = None
    s: float | None = None
    grid_size: int = 0

    def __bool__(self):
        return self.passed


def default_g_alpha_grid(n: int = 200, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def g_alpha_check(tail: Callable[[float], float] | LawSpec, alpha: float, grid=None, tol: float = 1e-12) -> GAlphaResult:
    """Grid-relative test of tail <= 1 ∧ c t^{-a} and of the increment bound between every grid pair."""
    f = (lambda t: law_tail(tail, t)) if isinstance(tail, LawSpec) else tail
    grid = default_g_alpha_grid() if grid is None else np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise ValueError("grid needs at least two points")
    vals = np.array([float(f(t)) for t in grid])
    if (np.diff(vals) > tol).any():
        i = int(np.argmax(np.diff(vals) > tol))
        raise ValueError(f"tail is not monotone between t={grid[i]:.6g} and t={grid[i + 1]:.6g}")
    c = pareto_constant(alpha)
    h = c * grid ** (-alpha)
    bound = np.minimum(1.0, h)
    bad = vals > bound + tol
    if bad.any():
        i = int(np.argmax(bad))
        return GAlphaResult(False, f"domination fails: tail({grid[i]:.6g}) = {vals[i]:.6g} > "
                                   f"1 ∧ c t^-a = {bound[i]:.6g}", float(grid[i]), None, len(grid))
    inc = vals[:, None] - vals[None, :]
    hinc = h[:, None] - h[None, :]
    upper = np.triu(np.ones_like(inc, dtype=bool), k=1)
    bad = upper & (inc > hinc + tol * np.maximum(1.0, np.abs(hinc)))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return GAlphaResult(False, f"increment bound fails: tail({grid[i]:.6g}) - tail({grid[j]:.6g}) = "
                                   f"{inc[i, j]:.6g} > {hinc[i, j]:.6g}", float(grid[i]), float(grid[j]), len(grid))
    return GAlphaResult(True, grid_size=len(grid))


# ---------------------------------------------------------------- point processes


@dataclass
class PointProcessSpec:
    """``rpp`` (iid waits W), ``drpp`` (first wait V then W), optionally compounded by ``multiplicity``."""

    kind: str
    waiting: LawSpec
    delay: LawSpec | None = None
    multiplicity: LawSpec | None = None

    def __post_init__(self):
        if self.kind not in ("rpp", "drpp"):
            raise ValueError("kind is 'rpp' or 'drpp'")
        if self.kind == "drpp" and self.delay is None:
            raise ValueError("delayed renewal process needs a delay law")
        w = self.waiting
        if w.kind in ("dirac",) and w.params["c"] <= 0:
            raise ValueError("waiting law must satisfy P(W > 0) > 0")

    def to_json(self) -> dict:
        return {"kind": self.kind, "waiting": self.waiting.to_json(),
                "delay": self.delay.to_json() if self.delay else None,
                "multiplicity": self.multiplicity.to_json() if self.multiplicity else None}

    def __str__(self):
        s = f"{self.kind.upper()}({self.waiting}"
        if self.delay is not None:
            s += f"; delay {self.delay}"
        if self.multiplicity is not None:
            s += f"; marks {self.multiplicity}"
        return s + ")"


def ppp(lam: float = 1.0) -> PointProcessSpec:
    return PointProcessSpec("rpp", exponential(lam))


def cppp(lam: float, multiplicity: LawSpec) -> PointProcessSpec:
    return PointProcessSpec("rpp", exponential(lam), multiplicity=multiplicity)


def fpp(alpha: float, lam: float) -> PointProcessSpec:
    return PointProcessSpec("rpp", mittag_leffler(alpha, lam))


def cfpp(alpha: float, lam: float, multiplicity: LawSpec) -> PointProcessSpec:
    return PointProcessSpec("rpp", mittag_leffler(alpha, lam), multiplicity=multiplicity)


def sample_point_process(spec: PointProcessSpec, horizon: float, rng: np.random.Generator) -> list[tuple[float, int]]:
    """Events (time, multiplicity) on [0, horizon] by cumulative sums of waiting times."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    for law in (spec.waiting, spec.delay):
        if law is not None and "sampler" not in law.capabilities:
            raise CapabilityError(f"{law.kind} has no sampler; compare Laplace transforms instead")
    events = []
    t = float(law_sample(spec.delay, rng)) if spec.kind == "drpp" else float(law_sample(spec.waiting, rng))
    while t <= horizon:
        m = int(law_sample(spec.multiplicity, rng)) if spec.multiplicity is not None else 1
        events.append((t, m))
        t += float(law_sample(spec.waiting, rng))
    return events


def law_from_json(text: str | dict) -> LawSpec:
    doc = json.loads(text) if isinstance(text, str) else text
    return LawSpec.from_json(doc)


__all__ = [
    "LawSpec", "PointProcessSpec", "GAlphaResult", "GAlphaViolation", "CapabilityError", "sample_one_sided_stable",
    "sample_mittag_leffler", "ml_tail", "ml_function_negative", "law_tail", "law_cdf", "law_laplace", "law_sample",
    "g_alpha_check", "default_g_alpha_grid", "sample_point_process", "exponential", "mittag_leffler",
    "compound_geom_delay", "pareto", "zero_atom_mix", "tabulated_tail", "j_alpha", "j_tilde_alpha", "dirac",
    "geometric", "ppp", "cppp", "fpp", "cfpp", "law_from_json",
]
