"""Chains whose delay law at the climbing point is any prescribed Pareto-dominated law.

Two pieces live here.  ``build_hoc_renewal`` turns a return law p_k and a
retention table c_{k,n} into a Markov chain on the real states {0, 1, 2, ...}
(walking down to 0) and the imaginary states ni (climbing), for which
mu(B_n ∩ {r_[0] = k}) = c_{k,n} p_k with B_n = [0 1i ... (n-1)i].
``realize_target_law`` chooses the table so that the rescaled delay at the
imaginary climbing point converges to the target law.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath as mp
import numpy as np

from ..kernel import StochasticKernel
from ..measure_scaling import MarkovMeasure, pareto_constant
from ..shift_core import Alphabet, Classification, PointDescriptor, TransitionStructure, register_point_rule
from .base import ShiftModel
from .laws import GeometricTail, PowerTail, ReturnLaw, ShiftedPowerTail

mp.mp.dps = 40


class ScheduleError(ValueError):
    """No schedule satisfies the level constraints."""


# ---------------------------------------------------------------- high precision tails


def _q_mp(law: ReturnLaw, x) -> mp.mpf:
    """Continuous tail q(x) at real x >= 1 in working precision."""
    x = mp.mpf(x)
    if x <= 1:
        return mp.mpf(1)
    if isinstance(law, PowerTail):
        return x ** (-mp.mpf(law.alpha))
    if isinstance(law, ShiftedPowerTail):
        return (1 - mp.mpf(law.p1)) * (x - 1) ** (-mp.mpf(law.alpha)) if x >= 2 else (1 - mp.mpf(law.p1))
    if isinstance(law, GeometricTail):
        return mp.mpf(law.r) ** (x - 1)
    return mp.mpf(law.q(float(x)))


def _qi(law: ReturnLaw, k: int) -> mp.mpf:
    """q at an integer argument (ceil already applied)."""
    return _q_mp(law, k)


def _p_mp(law: ReturnLaw, k: int) -> mp.mpf:
    digits = max(int(mp.log10(max(k, 2))) + 30, mp.mp.dps)
    with mp.workdps(digits):
        return +(_q_mp(law, k) - _q_mp(law, k + 1))


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


# ---------------------------------------------------------------- HoC / renewal chain


def _imag(n: int):
    return 0 if n == 0 else ("i", n)


@register_point_rule("imag_climb")
def _classify_imag(p: PointDescriptor, ts: TransitionStructure, probe_depth: int) -> Classification:
    syms = p.prefix(probe_depth).symbols
    return Classification("finitely_recurrent", symbol=0, counts={s: 1 for s in syms},
                          last_visit={s: j for j, s in enumerate(syms)},
                          certificate="climbs the imaginary axis without returning")


def build_hoc_renewal(law: ReturnLaw, c: Callable[[int, int], float], n_imag: int, k_real: int = 32, *,
                      support: int | None = None, beyond: str = "empty",
                      tail_sum: Callable[[int, int], float] | None = None, tol: float = 1e-9) -> ShiftModel:
    """Chain on real states 0..k_real-1 and imaginary states 1i..(n_imag)i.

    ``c(k, n)`` must satisfy c(k, 1) = 1, be nonincreasing in n and vanish for
    k < n.  Sums over k use ``tail_sum(n, J) = sum_{k >= J} c(k, n) p_k`` when
    given; otherwise c(k, n) is taken constant in k beyond ``support``.  Levels
    above n_imag + 1 are either ``"empty"`` (c = 0) or ``"full"`` (c = 1 for k >= n).
    """
    if beyond not in ("empty", "full"):
        raise ValueError("beyond must be 'empty' or 'full'")
    if tail_sum is None:
        if support is None:
            raise ValueError("give either tail_sum or support")
        sup = int(support)

        def tail_sum(n, j):
            acc = 0.0
            for k in range(max(j, 1), sup + 1):
                v = c(k, n)
                if v:
                    acc += v * law.p(k)
            return acc + c(sup + 1, n) * law.q(max(j, sup + 1))

    s_cache: dict = {}

    def S(n):
        if n not in s_cache:
            s_cache[n] = float(tail_sum(n, 1))
        return s_cache[n]

    if abs(S(1) - 1.0) > tol:
        raise ValueError(f"level 1 must carry the whole return law, got mass {S(1)}")
    for n in range(1, n_imag + 2):
        if S(n + 1) > S(n) * (1 + 1e-12):
            raise ValueError(f"retention is not monotone in n at level {n}")
    n_imag = max([n for n in range(0, n_imag + 1) if S(n + 1) > 0], default=0)

    def down(n, k):
        """P(ni, k) for a real target k >= 0 (k = 0 is the base)."""
        j = n + k + 1
        d = c(j, n + 1) - c(j, n + 2)
        if d < -tol:
            raise ValueError(f"negative kernel entry: c({j},{n + 1}) < c({j},{n + 2})")
        return max(d, 0.0) * law.p(j) / S(n + 1)

    def up(n):
        return S(n + 2) / S(n + 1)

    def real_mass(k):
        """pi(k) = sum_{j > k} (1 - c(j, j - k + 1)) p_j."""
        acc = 0.0
        for n in range(2, n_imag + 2):
            j = k + n - 1
            acc += (1.0 - c(j, n)) * law.p(j)
        if beyond == "empty":
            acc += law.q(k + n_imag + 1)
        return acc

    reals = [0] + [k for k in range(1, k_real) if real_mass(k) > 0]
    real_set = set(reals)
    imags = [_imag(n) for n in range(1, n_imag + 1)]
    syms = reals + imags

    def level(s):
        return 0 if s == 0 else (s[1] if isinstance(s, tuple) else None)

    def prob(a, b):
        la = level(a)
        if la is None:  # real k > 0 walks down
            return 1.0 if b == a - 1 else 0.0
        if isinstance(b, tuple):
            return up(la) if b[1] == la + 1 else 0.0
        return down(la, b)

    def succ(a):
        la = level(a)
        if la is None:
            return (a - 1,)
        return tuple(reals) + ((_imag(la + 1),) if la + 1 <= n_imag else ())

    def adj(a, b):
        return prob(a, b) > 0 or (level(a) is not None and b == 0)

    def remainder(a):
        la = level(a)
        if la is None:
            return 0.0
        out = 0.0
        if la + 1 > n_imag:
            out += up(la)
        # real targets beyond the truncation, and truncated-away real states
        j0 = la + k_real + 1
        out += max(tail_sum(la + 1, j0) - tail_sum(la + 2, j0), 0.0) / S(la + 1)
        for k in range(1, k_real):
            if k not in real_set:
                out += down(la, k)
        return out

    def pi(s):
        la = level(s)
        return real_mass(s) if la is None else S(la + 1)

    def inflow(b):
        if b == 0 and beyond == "full":
            return law.q(n_imag + 2)
        if b == k_real - 1 and b in real_set:
            return real_mass(k_real)
        return 0.0

    alph = Alphabet.generated_from("hoc_renewal", lambda _: syms, k_real,
                                   member=lambda s: (isinstance(s, int) and s >= 0)
                                   or (isinstance(s, tuple) and len(s) == 2 and s[0] == "i"))
    ts = TransitionStructure(alph, adj, succ, cycle_exhaustive_upto=min(k_real, n_imag + 1), name="hoc_renewal")
    kern = StochasticKernel(ts, prob, row_remainder=remainder)
    kern.check_rows(tol)
    meas = MarkovMeasure(pi, kern, inflow_remainder=inflow)
    alpha = getattr(law, "alpha", None) if not math.isfinite(law.mean) else None
    model = ShiftModel("hoc_renewal", "hoc_renewal", ts, kern, meas, return_law=law, base_symbol=0, alpha=alpha,
                       meta={"n_imag": n_imag, "k_real": k_real})
    model.named_points["x_imag"] = PointDescriptor.named("x_imag", _imag, rule_name="imag_climb")
    model.retention = c
    model.level_mass = S
    return model


# ---------------------------------------------------------------- the realizer


@dataclass
class RealizerPlan:
    alpha: float
    rho: float
    law: ReturnLaw
    levels: int
    s: dict  # level -> int
    u: dict
    m: dict
    M: dict
    eps: dict
    eta: dict  # level -> array over E_p in order
    cu: dict  # level -> c_{u_p, n} (same for every n <= p)
    block_mass: dict = field(repr=False, default_factory=dict)  # level -> mpf array of sum_{A_{p,k}} p_m
    target_tail: Callable[[float], float] | None = field(repr=False, default=None)

    # ---- grid helpers
    @staticmethod
    def grid(p: int) -> range:
        return range(-(2 ** p) + 1, p * 2 ** p)

    def block_bounds(self, p: int, k: int) -> tuple[int, int]:
        """Integer range [lo, hi) of A_{p,k}."""
        two = 2 ** p
        s = self.s[p]
        return _ceil_div((two + k) * s, two), _ceil_div((two + k + 1) * s, two)

    def block_index(self, p: int, k: int) -> int | None:
        two = 2 ** p
        idx = (k * two) // self.s[p] - two
        if -two + 1 <= idx <= p * two - 1:
            return idx
        return None

    # ---- retention table
    def c(self, k: int, n: int) -> float:
        if k < 1 or n < 1:
            return 0.0
        if n == 1:
            return 1.0
        if n > self.levels:
            return 0.0
        for p in range(n, self.levels + 1):
            if k == self.u[p]:
                return float(self.cu[p])
            if k < self.u[p]:
                return 0.0
            idx = self.block_index(p, k)
            if idx is not None:
                return float(self.eta[p][idx + 2 ** p - 1])
        return 0.0

    def tail_sum(self, n: int, j: int) -> float:
        return float(self.tail_sum_mp(n, j))

    def tail_sum_mp(self, n: int, j: int) -> mp.mpf:
        """sum_{k >= j} c_{k,n} p_k in closed form."""
        j = max(int(j), 1)
        if n <= 1:
            return _qi(self.law, j)
        if n > self.levels:
            return mp.mpf(0)
        acc = mp.mpf(0)
        for p in range(n, self.levels + 1):
            if self.u[p] >= j:
                acc += self.cu[p] * _p_mp(self.law, self.u[p])
            acc += self._blocks_from(p, j)
        return acc

    def _blocks_from(self, p: int, j: int) -> mp.mpf:
        lo0, _ = self.block_bounds(p, -(2 ** p) + 1)
        if j <= lo0:
            return self._suffix[p][0]
        idx = self.block_index(p, j)
        if idx is None:
            return mp.mpf(0)
        pos = idx + 2 ** p - 1
        _, hi = self.block_bounds(p, idx)
        part = self.eta[p][pos] * (_qi(self.law, j) - _qi(self.law, hi))
        rest = self._suffix[p][pos + 1] if pos + 1 < len(self._suffix[p]) else mp.mpf(0)
        return part + rest

    def level_mass(self, n: int) -> mp.mpf:
        """mu(B_n) = sum_k c_{k,n} p_k."""
        return self.tail_sum_mp(n, 1)

    # ---- delay law
    def gamma(self, u) -> mp.mpf:
        k = self.law.power_constant
        c = pareto_constant(self.alpha) / k
        return (mp.mpf(c) * u) ** (1 / mp.mpf(self.alpha))

    def delay_tail(self, n: int, t: float) -> float:
        """mu_{B_n}(gamma(mu(B_n)) r_[0] >= t)."""
        mass = self.level_mass(n)
        g = self.gamma(mass)
        j = int(mp.ceil(mp.mpf(t) / g))
        return float(self.tail_sum_mp(n, j) / mass)

    def delay_deviation(self, n: int, q: int = 3) -> float:
        ts = [1 + k * 2.0 ** (-q) for k in self.grid(q)]
        return max(abs(self.delay_tail(n, t) - self.target_tail(t)) for t in ts)

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "rho": self.rho,
            "law": self.law.to_json(),
            "levels": self.levels,
            "schedule": {str(n): {"s": str(self.s[n]), "u": str(self.u[n]), "m": self.m[n], "M": self.M[n],
                                  "eps": self.eps[n]} for n in sorted(self.s)},
            "eta": {str(n): [float(x) for x in self.eta[n]] for n in sorted(self.eta)},
            "c_u": {str(n): float(self.cu[n]) for n in sorted(self.cu)},
            "level_mass": {str(n): float(self.level_mass(n)) for n in range(1, self.levels + 1)},
        }
        return json.dumps(doc, indent=2)

    def build(self, k_real: int = 32) -> ShiftModel:
        return build_hoc_renewal(self.law, self.c, self.levels - 1, k_real, tail_sum=self.tail_sum, beyond="empty")


def _min_int(pred: Callable[[int], bool], lo: int) -> int:
    """Smallest integer x >= lo with pred(x), pred monotone; doubling then bisection."""
    if pred(lo):
        return lo
    step_lo, hi = lo, max(2 * lo, lo + 1)
    while not pred(hi):
        step_lo, hi = hi, 2 * hi
        if hi.bit_length() > 200_000:
            raise ScheduleError("doubling search diverged")
    while hi - step_lo > 1:
        mid = (step_lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            step_lo = mid
    return hi


def _rv_uniform_ok(law: ReturnLaw, alpha: float, s: int, n: int, eps: float) -> bool:
    """|q(ts)/q(s) - t^{-alpha}| <= eps on t = (1 + j) 2^{-n} up to (n+1) (integer arguments)."""
    two = 2 ** n
    qs = _qi(law, s)
    a = mp.mpf(alpha)
    for j in range(0, (n + 1) * two):
        t = mp.mpf(1 + j) / two
        val = _qi(law, _ceil_div((1 + j) * s, two)) / qs
        if abs(val - t ** (-a)) > eps:
            return False
    return True


def realize_target_law(nu_tail: Callable[[float], float], alpha: float, law: ReturnLaw | None = None,
                       n_levels: int = 4, *, check_grid=None,
                       m_seq: Callable[[int], float] = lambda n: 2.0 ** (-n),
                       M_seq: Callable[[int], int] = lambda n: n + 1,
                       eps_seq: Callable[[int], float] = lambda n: 3.0 ** (-n)) -> RealizerPlan:
    """Plan a retention table whose delay limit at the imaginary climbing point has tail ``nu_tail``.

    ``m_seq``, ``M_seq`` and ``eps_seq`` give the level schedule; u_n is the
    least integer past M_{n-1} s_{n-1} with q(u_n) <= m_{n-1} q(M_{n-1} s_{n-1}).
    """
    from ..limit_laws import GAlphaViolation, g_alpha_check

    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    if not (1 <= n_levels <= 8):
        raise ValueError("n_levels must lie in 1..8 at desk scale")
    law = law or PowerTail(alpha)
    if getattr(law, "alpha", None) != alpha or law.power_constant is None:
        raise ValueError("return law must have an explicit power tail of the same index")
    verdict = g_alpha_check(nu_tail, alpha, check_grid)
    if not verdict.passed:
        raise GAlphaViolation(verdict.violation, verdict.t)
    rho = 1.0 - float(nu_tail(1e-300))
    cap = 1.0 if rho == 0 else min((1.0 - rho) / rho, 1.0)
    if cap <= 0:
        raise ScheduleError("atom at 0 carries all the mass: q(m_n s_n) <= 0 * p_{u_n} is infeasible")
    h_const = pareto_constant(alpha)

    def h(t):
        return h_const * t ** (-alpha)

    s, u, m, M, eps, eta, cu, blocks = {}, {}, {}, {}, {}, {}, {}, {}
    for n in range(1, n_levels + 1):
        m[n] = float(m_seq(n))
        M[n] = int(M_seq(n))
        eps[n] = float(eps_seq(n))
        if n == 1:
            u[n] = 1
        else:
            top = M[n - 1] * s[n - 1]
            target = _qi(law, top) * mp.mpf(m[n - 1])
            u[n] = _min_int(lambda x: _qi(law, x) <= target, max(n, top + 1))
        pu = _p_mp(law, u[n])
        if pu <= 0:
            raise ScheduleError(f"p_{{u_{n}}} vanishes; the return law has no mass that far out")
        bound = mp.mpf(cap) * pu
        two = 2 ** n
        s_a = _min_int(lambda x: _q_mp(law, mp.mpf(x) / two) <= bound, (u[n] + 1) * two)
        s[n] = _min_int(lambda x: _rv_uniform_ok(law, alpha, x, n, eps[n]), s_a) \
            if not _rv_uniform_ok(law, alpha, s_a, n, eps[n]) else s_a
        # eta on the level-n grid
        ks = list(RealizerPlan.grid(n))
        vals = np.empty(len(ks))
        for i, k in enumerate(ks):
            a, b = 1 + k * 2.0 ** (-n), 1 + (k + 1) * 2.0 ** (-n)
            df = nu_tail(a) - nu_tail(b)
            dh = h(a) - h(b)
            e = df / dh
            if e < -1e-12 or e > 1 + 1e-9:
                raise GAlphaViolation(f"increment bound fails on [{a}, {b}]: eta = {e}", a)
            vals[i] = min(max(e, 0.0), 1.0)
        eta[n] = vals
    plan = RealizerPlan(alpha, rho, law, n_levels, s, u, m, M, eps, eta, cu, blocks, nu_tail)
    plan._suffix = {}
    for p in range(1, n_levels + 1):
        masses = []
        for k in RealizerPlan.grid(p):
            lo, hi = plan.block_bounds(p, k)
            masses.append(_qi(law, lo) - _qi(law, hi))
        weighted = [plan.eta[p][i] * masses[i] for i in range(len(masses))]
        suffix = [mp.mpf(0)] * (len(weighted) + 1)
        for i in range(len(weighted) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + weighted[i]
        plan._suffix[p] = suffix
        blocks[p] = masses
        pu = _p_mp(law, u[p])
        cu[p] = (mp.mpf(rho) / ((1 - mp.mpf(rho)) * pu)) * suffix[0] if rho > 0 else mp.mpf(0)
        if cu[p] > 1 + mp.mpf(1e-12):
            raise ScheduleError(f"c_(u_{p}) = {float(cu[p])} exceeds 1")
    return plan


__all__ = ["RealizerPlan", "ScheduleError", "build_hoc_renewal", "realize_target_law"]
