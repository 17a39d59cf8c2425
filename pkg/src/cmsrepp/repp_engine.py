"""Simulation of return and hitting times to shrinking targets.

Three compiled back ends share one output format:

* a sparse-kernel walker for any Markov model (word targets through a KMP
  automaton, union targets through a run counter);
* an excursion sampler for house-of-cards towers, which draws whole
  excursion lengths from the return law and matches the target as a
  pattern of excursion lengths;
* a level-skipping sampler for the simple-random-walk skew product, which
  jumps over stretches away from the target level using the exact
  first-passage law.

Every replica gets its own seed derived from one root seed, so results do
not depend on thread scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

# the bundled TBB is too old for numba; prefer OpenMP and fall back to the portable pool
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .model_zoo.laws import GEOMETRIC, POWER, SHIFTED_POWER, TABLE
from .shift_core import PointDescriptor, Symbol, Word, as_word
from .targets import CylinderTarget

BIG = 1 << 61


class HorizonWarning(UserWarning):
    pass


class HorizonError(RuntimeError):
    pass


# ---------------------------------------------------------------- start laws


@dataclass(frozen=True)
class StartLaw:
    """``conditioned_on_target`` (mu restricted to B_n) or ``density_on_uniform_set`` (mu restricted to [anchor])."""

    kind: str = "conditioned_on_target"
    anchor: Symbol | None = None
    normalization: float | None = None

    def __post_init__(self):
        if self.kind not in ("conditioned_on_target", "density_on_uniform_set"):
            raise ValueError(f"unknown start law {self.kind!r}")
        if self.kind == "density_on_uniform_set" and self.anchor is None:
            raise ValueError("density start needs an anchor symbol")

    def to_json(self) -> dict:
        return {"kind": self.kind, "anchor": _plain_symbol(self.anchor), "normalization": self.normalization}


CONDITIONED = StartLaw()


def hitting_start_density(model, anchor_symbol: Symbol) -> StartLaw:
    """Start in the 1-cylinder [anchor] with the normalized invariant measure."""
    try:
        mass = float(model.measure.pi(anchor_symbol))
    except (KeyError, IndexError):
        raise ValueError(f"anchor {anchor_symbol!r} is not a symbol of the model") from None
    if not (0 < mass < math.inf):
        raise ValueError(f"anchor {anchor_symbol!r} must have positive finite measure")
    return StartLaw("density_on_uniform_set", anchor_symbol, mass)


def _plain_symbol(s):
    if isinstance(s, tuple):
        return list(s)
    if isinstance(s, np.integer):
        return int(s)
    return s


# ---------------------------------------------------------------- samples


@dataclass
class ReppSample:
    """Raw event indices per replica (padded with -1), censoring flags and provenance."""

    raw: np.ndarray  # (replicas, k_max) int64
    counts: np.ndarray  # events recorded per replica
    censored: np.ndarray  # bool: stopped by the horizon before k_max events
    escaped: np.ndarray  # bool: walked out of the truncated alphabet (counted as censored)
    gamma: float
    horizon_raw: int
    seed: int | None
    model: str
    target: dict
    start: dict
    engine: str
    point: str | None = None
    depth: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return len(self.counts)

    @property
    def k_max(self) -> int:
        return self.raw.shape[1]

    @property
    def horizon(self) -> float:
        """Censoring horizon in rescaled time."""
        return self.horizon_raw * self.gamma

    def events(self, i: int) -> np.ndarray:
        return self.raw[i, : self.counts[i]]

    def rescaled(self, i: int) -> np.ndarray:
        return self.events(i) * self.gamma

    def first_return(self) -> tuple[np.ndarray, np.ndarray]:
        """Rescaled first event per replica and a censoring mask (censored values are set to the horizon)."""
        has = self.counts > 0
        vals = np.where(has, self.raw[:, 0], self.horizon_raw).astype(float) * self.gamma
        return vals, ~has

    def censored_fraction(self) -> float:
        return float(np.mean(self.counts == 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["replica", "k", "raw", "rescaled", "censored"])
        for i in range(self.replicas):
            for k in range(self.counts[i]):
                wr.writerow([i, k + 1, int(self.raw[i, k]), repr(float(self.raw[i, k] * self.gamma)), 0])
            if self.censored[i]:
                wr.writerow([i, self.counts[i] + 1, "", "", 1])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"model": self.model, "target": self.target, "point": self.point, "start": self.start,
                "gamma": self.gamma, "horizon_raw": self.horizon_raw, "horizon_rescaled": self.horizon,
                "seed": self.seed, "engine": self.engine, "replicas": self.replicas, "k_max": self.k_max,
                "censored_replicas": int(self.censored.sum()), "escaped_replicas": int(self.escaped.sum()),
                **self.meta}

    def to_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, default=_plain_symbol)


@dataclass
class DelaySample:
    """Draws of gamma(mu(B_n)) (j_v + r_[v] o T^{j_v}) under mu_{B_n}."""

    values: np.ndarray  # rescaled; censored entries hold the horizon
    censored: np.ndarray
    v: Symbol
    j_v: int
    n: int
    gamma: float
    horizon: float
    seed: int | None = None
    engine: str = ""

    def to_json(self) -> str:
        return json.dumps({"v": _plain_symbol(self.v), "j_v": self.j_v, "n": self.n, "gamma": self.gamma,
                           "horizon": self.horizon, "seed": self.seed, "engine": self.engine,
                           "draws": len(self.values), "censored": int(self.censored.sum())}, indent=2)


# ---------------------------------------------------------------- seeds


def replica_seeds(seed: int | np.random.Generator | None, replicas: int) -> tuple[np.ndarray, int | None]:
    """uint32 seeds for each replica: SeedSequence(root).generate_state(replicas)."""
    if isinstance(seed, np.random.Generator):
        root = int(seed.integers(0, 2 ** 63 - 1))
    elif seed is None:
        raise ValueError("a seed is required for reproducible simulation")
    else:
        root = int(seed)
    states = np.random.SeedSequence(root).generate_state(replicas, dtype=np.uint32)
    return states.astype(np.int64), root


# ---------------------------------------------------------------- compiled pieces


@nb.njit(cache=True)
def _q_at(code, par, qtab, k):
    if k <= 1:
        return 1.0
    if code == POWER:
        return float(k) ** (-par[0])
    if code == SHIFTED_POWER:
        return (1.0 - par[1]) * (float(k) - 1.0) ** (-par[0])
    if code == GEOMETRIC:
        return par[0] ** (float(k) - 1.0)
    if k <= qtab.shape[0]:
        return qtab[k - 1]
    return 0.0


@nb.njit(cache=True)
def _draw_len(code, par, qtab, ell):
    """Excursion length L conditioned on L >= ell, by inversion of the tail."""
    u = 1.0 - np.random.random()
    x = u * _q_at(code, par, qtab, ell)
    if code == POWER:
        y = x ** (-1.0 / par[0])
        L = BIG if y >= 1e18 else np.int64(math.floor(y))
    elif code == SHIFTED_POWER:
        if x > 1.0 - par[1]:
            L = np.int64(1)
        else:
            y = 1.0 + (x / (1.0 - par[1])) ** (-1.0 / par[0])
            L = BIG if y >= 1e18 else np.int64(math.floor(y))
    elif code == GEOMETRIC:
        if par[0] <= 0.0:
            L = np.int64(1)
        else:
            L = np.int64(1 + math.floor(math.log(x) / math.log(par[0])))
    else:
        # largest k with q_k >= x in the nonincreasing table
        lo, hi = 1, qtab.shape[0]
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if qtab[mid - 1] >= x:
                lo = mid
            else:
                hi = mid - 1
        L = np.int64(lo)
    if L < ell:
        L = np.int64(ell)
    return L


@nb.njit(cache=True)
def _pattern_match(ring, nblocks, ctype, cval):
    m = cval.shape[0]
    for i in range(m):
        L = ring[(nblocks - m + i) % m]
        if ctype[i] == 0:
            if L != cval[i]:
                return False
        elif L < cval[i]:
            return False
    return True


@nb.njit(parallel=True, cache=True)
def _hoc_pattern_kernel(code, par, qtab, ctype, cval, k0, mode, anchor, k_max, horizon, seeds,
                        out, counts, cens):
    """Events where excursion lengths match the pattern (=, >=) with the target starting k0 into the first block."""
    m = cval.shape[0]
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        ring = np.zeros(m, np.int64)
        starts = np.zeros(m, np.int64)
        if mode == 0:
            t = -k0
            for i in range(m):
                if i < m - 1:
                    L = cval[i]
                else:
                    L = _draw_len(code, par, qtab, cval[i])
                ring[i] = L
                starts[i] = t
                t = t + L if L < BIG else BIG
            nbk = m
            min_hit = 1
        else:
            L = _draw_len(code, par, qtab, anchor + 1)
            ring[0] = L
            starts[0] = -anchor
            t = -anchor + L if L < BIG else BIG
            nbk = 1
            min_hit = 0
            if m == 1 and _pattern_match(ring, nbk, ctype, cval) and -anchor + k0 >= 0:
                counts[r] = 1
                out[r, 0] = -anchor + k0
        c = counts[r]
        done = c >= k_max
        while not done:
            # earliest block that can still open a match
            if m == 1:
                first = t
            elif nbk - m + 1 >= 0:
                first = starts[(nbk - m + 1) % m]
            else:
                first = -BIG
            if first + k0 > horizon or t >= BIG:
                cens[r] = True
                break
            L = _draw_len(code, par, qtab, 1)
            ring[nbk % m] = L
            starts[nbk % m] = t
            t = t + L if L < BIG - t else BIG
            nbk += 1
            if nbk >= m and _pattern_match(ring, nbk, ctype, cval):
                hit = starts[(nbk - m) % m] + k0
                if hit >= min_hit:
                    if hit > horizon:
                        cens[r] = True
                        break
                    out[r, c] = hit
                    c += 1
                    if c >= k_max:
                        done = True
        counts[r] = c


@nb.njit(parallel=True, cache=True)
def _hoc_union_kernel(code, par, qtab, d, n, mode, init_sym, k_max, horizon, seeds, out, counts, cens):
    """Events where the next n symbols all lie in {0..d}."""
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        e = init_sym[r]
        if mode == 0:
            t = np.int64(n - 1)
            cnt = np.int64(n)
        else:
            t = np.int64(0)
            cnt = np.int64(1) if e <= d else np.int64(0)
            if cnt >= n:
                out[r, 0] = 0
                counts[r] = 1
        c = counts[r]
        # finish the current excursion (height e)
        L = _draw_len(code, par, qtab, e + 1)
        stop = False
        if c >= k_max:
            stop = True
        if not stop:
            top = L - 1 if L - 1 < d else d
            t_end = t + (L - 1 - e) if L < BIG else BIG
            for h in range(e + 1, top + 1):
                t += 1
                cnt += 1
                if cnt >= n:
                    hit = t - n + 1
                    if hit > horizon:
                        cens[r] = True
                        stop = True
                        break
                    out[r, c] = hit
                    c += 1
                    if c >= k_max:
                        stop = True
                        break
            if not stop and L - 1 > d:
                cnt = 0
                t = t_end
        while not stop:
            if t + 2 - n > horizon or t >= BIG:
                cens[r] = True
                break
            L = _draw_len(code, par, qtab, 1)
            inside = L if L <= d + 1 else d + 1
            for h in range(inside):
                t += 1
                cnt += 1
                if cnt >= n:
                    hit = t - n + 1
                    if hit > horizon:
                        cens[r] = True
                        stop = True
                        break
                    out[r, c] = hit
                    c += 1
                    if c >= k_max:
                        stop = True
                        break
            if stop:
                break
            if L > d + 1:
                cnt = 0
                t = t + (L - inside) if L < BIG - t else BIG
        counts[r] = c


@nb.njit(parallel=True, cache=True)
def _hoc_entrance_kernel(code, par, qtab, h0, t0, v, horizon, seeds, out, cens):
    """First time > t0 at symbol v, starting at height h0 at time t0."""
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        L = _draw_len(code, par, qtab, h0 + 1)
        t = t0
        if v > h0 and L >= v + 1:
            out[r] = t + (v - h0)
            continue
        t = t + (L - h0) if L < BIG else BIG  # back at 0
        if v == 0:
            if t > horizon:
                cens[r] = True
            else:
                out[r] = t
            continue
        while True:
            if t + v > horizon or t >= BIG:
                cens[r] = True
                break
            L = _draw_len(code, par, qtab, 1)
            if L >= v + 1:
                out[r] = t + v
                break
            t += L


@nb.njit(cache=True)
def _csr_step(indptr, targets, cum, s):
    lo = indptr[s]
    hi = indptr[s + 1]
    u = np.random.random()
    j = lo + np.searchsorted(cum[lo:hi], u, side="right")
    if j >= hi:
        j = hi - 1
    return targets[j]


@nb.njit(parallel=True, cache=True)
def _csr_word_kernel(indptr, targets, cum, table, n, init_sym, init_auto, t0, min_hit, k_max, horizon, seeds,
                     out, counts, cens, esc):
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        s = init_sym[r]
        a = init_auto
        t = t0
        c = 0
        if a == n and t - n + 1 >= min_hit:
            out[r, 0] = t - n + 1
            c = 1
        while c < k_max:
            if t + 2 - n > horizon:
                cens[r] = True
                break
            s = _csr_step(indptr, targets, cum, s)
            if s < 0:
                esc[r] = True
                cens[r] = True
                break
            t += 1
            a = table[a, s]
            if a == n:
                hit = t - n + 1
                if hit >= min_hit:
                    out[r, c] = hit
                    c += 1
        counts[r] = c


@nb.njit(parallel=True, cache=True)
def _csr_union_kernel(indptr, targets, cum, member, n, init_sym, init_cnt, t0, min_hit, k_max, horizon, seeds,
                      out, counts, cens, esc):
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        s = init_sym[r]
        cnt = init_cnt
        t = t0
        c = 0
        if cnt >= n and t - n + 1 >= min_hit:
            out[r, 0] = t - n + 1
            c = 1
        while c < k_max:
            if t + 2 - n > horizon:
                cens[r] = True
                break
            s = _csr_step(indptr, targets, cum, s)
            if s < 0:
                esc[r] = True
                cens[r] = True
                break
            t += 1
            if member[s]:
                cnt += 1
            else:
                cnt = 0
            if cnt >= n:
                hit = t - n + 1
                if hit >= min_hit:
                    out[r, c] = hit
                    c += 1
        counts[r] = c


@nb.njit(cache=True)
def _log_u2j(j):
    """log of C(2j, j) 4^{-j}."""
    if j == 0:
        return 0.0
    if j < 1000:
        return math.lgamma(2.0 * j + 1.0) - 2.0 * math.lgamma(j + 1.0) - 2.0 * j * math.log(2.0)
    x = float(j)
    return -0.5 * math.log(math.pi * x) - 1.0 / (8.0 * x) + 1.0 / (192.0 * x ** 3)


@nb.njit(cache=True)
def _srw_first_passage_one(cap):
    """First passage time from 1 to 0: T = 2J - 1 with P(J > j) = u_{2j}; values past ``cap`` return cap + 1."""
    lu = math.log(1.0 - np.random.random())
    lo = np.int64(0)  # invariant: u_{2 lo} >= U, so J > lo
    hi = np.int64(1)
    while _log_u2j(hi) >= lu:
        lo = hi
        hi *= 2
        if 2 * lo > cap:
            return cap + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _log_u2j(mid) >= lu:
            lo = mid
        else:
            hi = mid
    return 2 * hi - 1


@nb.njit(parallel=True, cache=True)
def _srw_kernel(word, init_buf, init_len, init_level, min_hit, k_max, horizon, seeds, out, counts, cens):
    """Skew product over fair coin flips, jump +1 on symbol 0 and -1 on symbol 1, target [word] x {0}."""
    n = word.shape[0]
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        buf = np.zeros(n, np.int8)
        head = 0
        size = init_len
        for i in range(init_len):
            buf[i] = init_buf[i]
        level = init_level
        t = np.int64(0)
        c = 0
        while c < k_max:
            if t > horizon:
                cens[r] = True
                break
            if level == 0:
                while size < n:
                    buf[(head + size) % n] = 1 if np.random.random() < 0.5 else 0
                    size += 1
                if t >= min_hit:
                    ok = True
                    for i in range(n):
                        if buf[(head + i) % n] != word[i]:
                            ok = False
                            break
                    if ok:
                        out[r, c] = t
                        c += 1
                        if c >= k_max:
                            break
                level += 1 if buf[head] == 0 else -1
                head = (head + 1) % n
                size -= 1
                t += 1
            else:
                while size > 0 and level != 0:
                    level += 1 if buf[head] == 0 else -1
                    head = (head + 1) % n
                    size -= 1
                    t += 1
                if level != 0:
                    k = level if level > 0 else -level
                    for _ in range(k):
                        t += _srw_first_passage_one(horizon)
                        if t > horizon:
                            break
                    level = 0
                    head = 0
                    size = 0
        counts[r] = c


@nb.njit(parallel=True, cache=True)
def _zext_word_kernel(indptr, targets, cum, hjump, table, n, init_sym, init_auto, pre_levels, min_hit, k_max,
                      horizon, seeds, out, counts, cens, esc):
    """Step-by-step skew product: symbol chain by the kernel, level by the jump of the current symbol.

    ``pre_levels`` holds the relative levels at times 0..t0 already fixed by the start.
    """
    t0 = pre_levels.shape[0] - 1
    for r in nb.prange(seeds.shape[0]):
        np.random.seed(seeds[r])
        hist = np.zeros(n + 1, np.int64)  # levels at the last n + 1 times (ring)
        for p in range(t0 + 1):
            hist[p % (n + 1)] = pre_levels[p]
        s = init_sym[r]
        a = init_auto
        t = np.int64(t0)
        lev = pre_levels[t0]
        c = 0
        while c < k_max:
            if t + 2 - n > horizon:
                cens[r] = True
                break
            lev += hjump[s]
            s = _csr_step(indptr, targets, cum, s)
            if s < 0:
                esc[r] = True
                cens[r] = True
                break
            t += 1
            hist[t % (n + 1)] = lev
            a = table[a, s]
            if a == n:
                hit = t - n + 1
                if hit >= min_hit and hist[hit % (n + 1)] == 0:
                    out[r, c] = hit
                    c += 1
        counts[r] = c


# ---------------------------------------------------------------- helpers


def kmp_table(word: Sequence[int], alphabet_size: int) -> np.ndarray:
    """Automaton table (n+1) x alphabet: state = length of the longest matched prefix."""
    w = list(word)
    n = len(w)
    fail = [0] * (n + 1)
    k = 0
    for i in range(1, n):
        while k and w[i] != w[k]:
            k = fail[k]
        if w[i] == w[k]:
            k += 1
        fail[i + 1] = k
    table = np.zeros((n + 1, alphabet_size), dtype=np.int64)
    for state in range(n + 1):
        for s in range(alphabet_size):
            k = state
            if k == n:
                k = fail[n]
            while k and w[k] != s:
                k = fail[k]
            table[state, s] = k + 1 if w[k] == s else 0
    return table


def excursion_pattern(word: Sequence[int]) -> tuple[np.ndarray, np.ndarray, int]:
    """Excursion-length conditions (0: equal, 1: at least) and the offset of the word in its first excursion."""
    w = [int(s) for s in word]
    for i in range(1, len(w)):
        if w[i] != 0 and w[i] != w[i - 1] + 1:
            raise ValueError(f"{w} is not a house-of-cards word")
    segs: list[list[int]] = []
    for s in w:
        if s == 0 or not segs:
            segs.append([s])
        else:
            segs[-1].append(s)
    k0 = segs[0][0]
    ctype, cval = [], []
    for i, seg in enumerate(segs):
        length = seg[-1] + 1  # the excursion reaches height seg[-1]
        if i < len(segs) - 1:
            ctype.append(0)
        else:
            ctype.append(1)
        cval.append(length)
    return np.array(ctype, dtype=np.int64), np.array(cval, dtype=np.int64), k0


def _law_arrays(law):
    code, arr = law.sampler_code()
    if code == TABLE:
        return code, np.zeros(1), np.asarray(arr, dtype=float)
    return code, np.asarray(arr, dtype=float), np.ones(1)


def _hoc_shortcut_ok(model) -> bool:
    if model.family != "hoc" or model.return_law is None:
        return False
    try:
        model.return_law.sampler_code()
    except (NotImplementedError, ValueError):
        return False
    return True


def _horizon_raw(gamma: float, horizon: float) -> int:
    raw = horizon / gamma
    return int(min(math.ceil(raw), BIG // 4))


def _gamma_for(model, target: CylinderTarget) -> float:
    return float(model.scaling_profile().gamma(target.measure))


def _draw_union_words(model, delta, n, replicas, root):
    """Initial Delta-words drawn proportionally to their cylinder measure; returns the last symbols."""
    from .model_zoo.base import delta_word_weights

    m, pi, (syms, tails) = delta_word_weights(model, delta, n)
    rng = np.random.default_rng(np.random.SeedSequence([root, 1]))
    w0 = pi * tails[n - 1]
    cur = rng.choice(len(syms), size=replicas, p=w0 / w0.sum())
    for j in range(1, n):
        wts = m[cur] * tails[n - 1 - j][None, :]
        wts /= wts.sum(axis=1, keepdims=True)
        u = rng.random(replicas)[:, None]
        cur = (np.cumsum(wts, axis=1) < u).sum(axis=1)
        cur = np.minimum(cur, len(syms) - 1)
    return np.array([syms[i] for i in cur])


# ---------------------------------------------------------------- public API


def sample_returns(model, target: CylinderTarget, point: PointDescriptor | None = None,
                   start: StartLaw | str = CONDITIONED, k_max: int = 1, horizon: float = 50.0,
                   rng: int | np.random.Generator | None = None, *, replicas: int = 1000,
                   engine: str = "auto", gamma: float | None = None, strict: bool = False,
                   point_name: str | None = None) -> ReppSample:
    """Simulate the first ``k_max`` returns (or hits) to ``target``; ``horizon`` is in rescaled time."""
    if isinstance(start, str):
        start = StartLaw(start) if start == "conditioned_on_target" else hitting_start_density(model, start)
    if k_max < 1 or replicas < 1:
        raise ValueError("k_max and replicas must be positive")
    if point is not None and target.form == "word":
        if point.prefix(target.depth).symbols != target.word.symbols:
            raise ValueError("target word must be the prefix of the point")
    seeds, root = replica_seeds(rng, replicas)
    g = float(gamma) if gamma is not None else _gamma_for(model, target)
    h_raw = _horizon_raw(g, horizon)
    out = np.full((replicas, k_max), -1, dtype=np.int64)
    counts = np.zeros(replicas, dtype=np.int64)
    cens = np.zeros(replicas, dtype=bool)
    esc = np.zeros(replicas, dtype=bool)
    n = target.depth
    cond = start.kind == "conditioned_on_target"

    is_z = hasattr(model, "h_vec")
    if is_z:
        used = _run_zext(model, target, start, k_max, h_raw, seeds, out, counts, cens, esc, engine)
    elif engine in ("auto", "excursion") and _hoc_shortcut_ok(model) and _hoc_target_ok(target):
        used = "excursion"
        code, par, qtab = _law_arrays(model.return_law)
        if target.form == "word":
            ctype, cval, k0 = excursion_pattern(target.word.symbols)
            anchor = 0 if cond else int(start.anchor)
            _hoc_pattern_kernel(code, par, qtab, ctype, cval, k0, 0 if cond else 1, anchor, k_max, h_raw, seeds,
                                out, counts, cens)
        else:
            d = max(target.delta)
            if cond:
                init = _draw_union_words(model, target.delta, n, replicas, root).astype(np.int64)
            else:
                init = np.full(replicas, int(start.anchor), dtype=np.int64)
            _hoc_union_kernel(code, par, qtab, d, n, 0 if cond else 1, init, k_max, h_raw, seeds, out, counts,
                              cens)
    else:
        if engine == "excursion":
            raise ValueError("excursion shortcut needs a house-of-cards model with a samplable return law")
        used = "markov"
        indptr, targets, cum = model.kernel.csr()
        alph = model.ts.alphabet
        if target.form == "word":
            word_idx = [alph.index(s) for s in target.word.symbols]
            table = kmp_table(word_idx, len(alph))
            if cond:
                init = np.full(replicas, word_idx[-1], dtype=np.int64)
                _csr_word_kernel(indptr, targets, cum, table, n, init, n, n - 1, 1, k_max, h_raw, seeds, out,
                                 counts, cens, esc)
            else:
                a_idx = alph.index(start.anchor)
                init = np.full(replicas, a_idx, dtype=np.int64)
                _csr_word_kernel(indptr, targets, cum, table, n, init, int(table[0, a_idx]), 0, 0, k_max, h_raw,
                                 seeds, out, counts, cens, esc)
        else:
            member = np.zeros(len(alph), dtype=np.bool_)
            for s in target.delta:
                member[alph.index(s)] = True
            if cond:
                last = _draw_union_words(model, target.delta, n, replicas, root)
                init = np.array([alph.index(s) for s in last], dtype=np.int64)
                _csr_union_kernel(indptr, targets, cum, member, n, init, n, n - 1, 1, k_max, h_raw, seeds, out,
                                  counts, cens, esc)
            else:
                a_idx = alph.index(start.anchor)
                init = np.full(replicas, a_idx, dtype=np.int64)
                _csr_union_kernel(indptr, targets, cum, member, n, init, int(member[a_idx]), 0, 0, k_max, h_raw,
                                  seeds, out, counts, cens, esc)

    sample = ReppSample(out, counts, cens, esc, g, h_raw, root, model.name, target.to_json(), start.to_json(), used,
                        point=point_name or (point.name if point is not None else None), depth=n)
    frac = float(np.mean(counts == 0))
    if frac > 0.5:
        msg = f"{frac:.0%} of replicas saw no event before the horizon; raise the horizon"
        if strict:
            raise HorizonError(msg)
        warnings.warn(msg, HorizonWarning, stacklevel=2)
    if esc.any():
        msg = f"{int(esc.sum())} replicas left the truncated alphabet; they are flagged as censored"
        if strict:
            raise HorizonError(msg)
        warnings.warn(msg, HorizonWarning, stacklevel=2)
    return sample


def _hoc_target_ok(target: CylinderTarget) -> bool:
    if target.form == "word":
        try:
            excursion_pattern(target.word.symbols)
        except ValueError:
            return False
        return True
    d = max(target.delta)
    return set(target.delta) == set(range(d + 1))


def _run_zext(model, target, start, k_max, h_raw, seeds, out, counts, cens, esc, engine) -> str:
    if target.form != "word":
        raise ValueError("skew products support word targets only")
    level = 0 if target.level is None else int(target.level)
    cond = start.kind == "conditioned_on_target"
    n = target.depth
    word = target.word.symbols
    if engine in ("auto", "level_skip") and model.is_simple_random_walk:
        up = [b[0] for b, h in zip(model.blocks, model.h_vec) if h == 1][0]
        bits = np.array([0 if s == up else 1 for s in word], dtype=np.int8)
        if cond:
            init_buf, init_len, init_level, min_hit = bits.copy(), n, 0, 1
        else:
            init_buf = np.array([0 if start.anchor == up else 1] + [0] * (n - 1), dtype=np.int8)
            init_len, init_level, min_hit = 1, -level, 0
        _srw_kernel(bits, init_buf, init_len, init_level, min_hit, k_max, h_raw, seeds, out, counts, cens)
        return "level_skip"
    if engine == "level_skip":
        raise ValueError("level skipping needs the simple-random-walk skew product")
    if model.depth != 1:
        raise ValueError("step-by-step skew product simulation supports depth-1 jumps")
    base = model.base
    indptr, targets, cum = base.kernel.csr()
    alph = base.ts.alphabet
    hjump = np.array([model.jump((s,)) for s in alph], dtype=np.int64)
    idx = [alph.index(s) for s in word]
    table = kmp_table(idx, len(alph))
    reps = len(seeds)
    if cond:
        # level at the word's last symbol: sum of jumps over the first n-1 symbols
        pre = np.concatenate([[0], np.cumsum([int(hjump[i]) for i in idx[:-1]])]).astype(np.int64)
        init = np.full(reps, idx[-1], dtype=np.int64)
        _zext_word_kernel(indptr, targets, cum, hjump, table, n, init, n, pre, 1, k_max, h_raw, seeds, out,
                          counts, cens, esc)
    else:
        a_idx = alph.index(start.anchor)
        init = np.full(reps, a_idx, dtype=np.int64)
        _zext_word_kernel(indptr, targets, cum, hjump, table, n, init, int(table[0, a_idx]),
                          np.array([-level], np.int64), 0, k_max, h_raw, seeds, out, counts, cens, esc)
    return "markov_skew"


def sample_delay(model, target: CylinderTarget, v: Symbol, j_v: int, horizon: float = 50.0,
                 rng: int | np.random.Generator | None = None, *, replicas: int = 1000,
                 gamma: float | None = None, engine: str = "auto") -> DelaySample:
    """Rescaled entrance time j_v + r_[v] o T^{j_v} under mu_{B_n}, for a word target."""
    if target.form != "word":
        raise ValueError("delay sampling needs a word target")
    word = target.word.symbols
    n = target.depth
    if not (0 <= j_v < n):
        raise ValueError("j_v must index a position of the target word")
    seeds, root = replica_seeds(rng, replicas)
    g = float(gamma) if gamma is not None else _gamma_for(model, target)
    h_raw = _horizon_raw(g, horizon)
    # an entrance inside the word is deterministic
    for pos in range(j_v + 1, n):
        if word[pos] == v:
            vals = np.full(replicas, pos * g)
            return DelaySample(vals, np.zeros(replicas, bool), v, j_v, n, g, horizon, root, "deterministic")
    out = np.full(replicas, -1, dtype=np.int64)
    cens = np.zeros(replicas, dtype=bool)
    if engine in ("auto", "excursion") and _hoc_shortcut_ok(model):
        code, par, qtab = _law_arrays(model.return_law)
        _hoc_entrance_kernel(code, par, qtab, int(word[-1]), n - 1, int(v), h_raw, seeds, out, cens)
        used = "excursion"
    else:
        indptr, targets, cum = model.kernel.csr()
        alph = model.ts.alphabet
        member = np.zeros(len(alph), dtype=np.bool_)
        member[alph.index(v)] = True
        init = np.full(replicas, alph.index(word[-1]), dtype=np.int64)
        buf = np.full((replicas, 1), -1, dtype=np.int64)
        counts = np.zeros(replicas, dtype=np.int64)
        esc = np.zeros(replicas, dtype=bool)
        _csr_union_kernel(indptr, targets, cum, member, 1, init, 0, n - 1, n, 1, h_raw, seeds, buf, counts, cens, esc)
        out = np.where(counts > 0, buf[:, 0], -1)
        used = "markov"
    vals = np.where(cens, h_raw, out).astype(float) * g
    return DelaySample(vals, cens, v, j_v, n, g, horizon, root, used)


# ---------------------------------------------------------------- clusters


@dataclass
class ClusterData:
    multiplicities: np.ndarray  # complete clusters only
    gaps: np.ndarray  # rescaled start-to-start gaps between consecutive complete clusters
    first_gap: np.ndarray  # per replica: rescaled time to the start of the second cluster
    first_gap_censored: np.ndarray
    threshold: int


def extract_clusters(sample: ReppSample, period: int | None, gap_threshold: int | None = None,
                     include_start: bool | None = None) -> ClusterData:
    """Group events whose raw gaps are below ``gap_threshold`` (default: target depth)."""
    if period is None or period < 1:
        raise ValueError("clusters are defined only for periodic points (give the prime period)")
    thr = sample.depth if gap_threshold is None else int(gap_threshold)
    if include_start is None:
        include_start = sample.start.get("kind") == "conditioned_on_target"
    mults: list[int] = []
    gaps: list[float] = []
    fg = np.full(sample.replicas, sample.horizon)
    fg_c = np.ones(sample.replicas, dtype=bool)
    for i in range(sample.replicas):
        ev = sample.events(i)
        if include_start:
            ev = np.concatenate([[0], ev])
        if len(ev) == 0:
            continue
        # runs of gaps < thr
        breaks = np.nonzero(np.diff(ev) >= thr)[0]
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks + 1, [len(ev)]])
        # the last run is complete only if a later event could not join it
        stopped_by_kmax = sample.counts[i] == sample.k_max and not sample.censored[i]
        last_complete = (not stopped_by_kmax) and (ev[-1] + thr <= sample.horizon_raw or not sample.censored[i])
        n_runs = len(starts)
        for k in range(n_runs):
            if k == n_runs - 1 and not last_complete:
                break
            mults.append(int(ends[k] - starts[k]))
        for k in range(n_runs - 1):
            gaps.append(float(ev[starts[k + 1]] - ev[starts[k]]) * sample.gamma)
        if n_runs >= 2:
            fg[i] = float(ev[starts[1]] - ev[starts[0]]) * sample.gamma
            fg_c[i] = False
    return ClusterData(np.array(mults, dtype=np.int64), np.array(gaps), fg, fg_c, thr)


__all__ = [
    "StartLaw", "CONDITIONED", "ReppSample", "DelaySample", "ClusterData", "HorizonWarning", "HorizonError",
    "hitting_start_density", "sample_returns", "sample_delay", "extract_clusters", "replica_seeds", "kmp_table",
    "excursion_pattern",
]
