"""Skew products (omega, z) -> (sigma omega, z + h(omega)) over a finite Markov base."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..measure_scaling import ScalingProfile, cylinder_measure
from ..shift_core import PointDescriptor, Word, as_word, is_admissible, prime_period
from ..targets import CylinderTarget
from ..thermo import RecurrenceClass, birkhoff_sum
from .base import ShiftModel, build_bernoulli


class DriftError(ValueError):
    """Jump function has nonzero mean or is degenerate."""


@dataclass
class ZExtensionModel:
    """Skew product over ``base`` with a jump h depending on the first ``depth`` symbols.

    Internally the base is recoded on admissible ``depth``-blocks so that the
    jump becomes a function of the current state.
    """

    base: ShiftModel
    h: Callable[[tuple], int]
    depth: int = 1
    name: str = "z_extension"
    alpha: float = 0.5
    named_points: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    family: str = "z_extension"

    def __post_init__(self):
        syms = tuple(self.base.ts.alphabet)
        blocks = [b for b in itertools.product(syms, repeat=self.depth) if is_admissible(b, self.base.ts)]
        self.blocks = blocks
        idx = {b: i for i, b in enumerate(blocks)}
        self._block_index = idx
        k = len(blocks)
        p = np.zeros((k, k))
        for b in blocks:
            for c, pr in self.base.kernel.row(b[-1]):
                nb = b[1:] + (c,)
                if nb in idx:
                    p[idx[b], idx[nb]] += pr
        self.p_rec = p
        self.h_vec = np.array([int(self.h(b)) for b in blocks], dtype=np.int64)
        self.pi_rec = np.array([cylinder_measure(self.base.measure, b) for b in blocks])
        if not self.h_vec.any():
            raise DriftError("jump function is identically zero; the level never moves")
        drift = float(self.pi_rec @ self.h_vec)
        if abs(drift) > 1e-12:
            raise DriftError(f"jump function has drift {drift}, expected 0")
        self.variance_rate = self._variance_rate()
        self.h_max = int(np.abs(self.h_vec).max())
        self._fourier = None
        self._dp_cache: dict = {}

    # ---------------------------------------------------------------- structure
    @property
    def ts(self):
        return self.base.ts

    @property
    def kernel(self):
        return self.base.kernel

    @property
    def measure(self):
        return self.base.measure

    @property
    def return_law(self):
        return None

    @property
    def is_simple_random_walk(self) -> bool:
        """Fair coin base with h = +1 on one symbol and -1 on the other."""
        if self.depth != 1 or len(self.blocks) != 2:
            return False
        if not np.allclose(self.p_rec, 0.5, atol=1e-15):
            return False
        return sorted(self.h_vec.tolist()) == [-1, 1]

    def _variance_rate(self) -> float:
        """Asymptotic variance of S_n h / sqrt(n) via the fundamental matrix."""
        k = len(self.blocks)
        pi = self.pi_rec
        f = self.h_vec.astype(float)
        z = np.linalg.solve(np.eye(k) - self.p_rec + np.outer(np.ones(k), pi), f)
        return float(2 * pi @ (f * z) - pi @ (f * f))

    def recurrence(self) -> RecurrenceClass:
        return RecurrenceClass("null_recurrent", {"drift": 0.0, "variance_rate": self.variance_rate},
                               heuristic=False)

    def jump(self, word: Sequence) -> int:
        return int(self.h(tuple(word[: self.depth])))

    def potential(self):
        return self.base.potential()

    def point(self, name: str) -> PointDescriptor:
        return self.named_points[name]

    # ---------------------------------------------------------------- targets
    def cylinder_target(self, word, level: int = 0) -> CylinderTarget:
        w = as_word(word)
        if not is_admissible(w, self.ts):
            raise ValueError(f"target word {w} is not admissible")
        if w.depth < self.depth:
            raise ValueError("target word must be at least as deep as the jump function")
        return CylinderTarget("word", cylinder_measure(self.measure, w), w.depth, word=w, level=level)

    def target_for(self, point: PointDescriptor, n: int, level: int = 0) -> CylinderTarget:
        return self.cylinder_target(point.prefix(n), level)

    # ---------------------------------------------------------------- partition sums
    def _states_at(self, v) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.blocks) if b[0] == v], dtype=np.int64)

    def partition_sums_dp(self, v, n_max: int) -> tuple[np.ndarray, np.ndarray]:
        """Z_k and Z_k^* at [v] x {0} for k = 1..n_max (weights exp S_k phi_* = path probabilities)."""
        key = (v, n_max)
        if key in self._dp_cache:
            return self._dp_cache[key]
        k_states = len(self.blocks)
        starts = self._states_at(v)
        width = 2 * n_max * self.h_max + 1
        off = n_max * self.h_max
        z = np.zeros(n_max)
        zs = np.zeros(n_max)
        pt = self.p_rec
        hv = self.h_vec
        edges = [(a, b, pt[a, b]) for a in range(k_states) for b in np.nonzero(pt[a])[0]]
        for s0 in starts:
            full = np.zeros((k_states, width))
            avoid = np.zeros((k_states, width))
            full[s0, off] = 1.0
            avoid[s0, off] = 1.0
            for step in range(n_max):
                r = step * self.h_max  # occupied window is off-r .. off+r
                lo, hi = off - r, off + r + 1
                nf = np.zeros_like(full)
                na = np.zeros_like(avoid)
                for a, b, pr in edges:
                    sh = hv[a]
                    nf[b, lo + sh: hi + sh] += pr * full[a, lo:hi]
                    na[b, lo + sh: hi + sh] += pr * avoid[a, lo:hi]
                full, avoid = nf, na
                z[step] += full[s0, off]
                zs[step] += avoid[s0, off]
                avoid[starts, off] = 0.0  # first-return paths may not revisit the base cell
        self._dp_cache[key] = (z, zs)
        return z, zs

    def _fourier_setup(self, v, n_grid: int, chunk: int = 1 << 17):
        if self._fourier is not None and self._fourier[0] == (v, n_grid):
            return self._fourier[1]
        kk = n_grid * self.h_max + 1
        j = np.arange(0, kk // 2 + 1)
        starts = self._states_at(v)
        lam_all, w_all = [], []
        for c0 in range(0, len(j), chunk):
            th = 2 * np.pi * j[c0: c0 + chunk] / kk
            m = self.p_rec[None, :, :] * np.exp(1j * th[:, None, None] * self.h_vec[None, :, None])
            lam, vec = np.linalg.eig(m)
            inv = np.linalg.inv(vec)
            w = np.einsum("tuj,tju->tj", vec[:, starts, :], inv[:, :, starts])
            lam_all.append(lam)
            w_all.append(w)
        lam = np.concatenate(lam_all)
        w = np.concatenate(w_all)
        mult = np.full(len(j), 2.0)
        mult[0] = 1.0
        if kk % 2 == 0:
            mult[-1] = 1.0
        data = (lam, w, mult, kk)
        self._fourier = ((v, n_grid), data)
        return data

    def cumulative_z_fourier(self, v, n: int, n_grid: int = 1 << 22) -> float:
        """sum_{k<=n} Z_k by exact discrete Fourier inversion in the level (valid for n <= n_grid)."""
        if n > n_grid:
            raise ValueError("n beyond the Fourier grid")
        lam, w, mult, kk = self._fourier_setup(v, n_grid)
        with np.errstate(divide="ignore", invalid="ignore"):
            loglam = np.log(lam)
            g = lam * np.expm1(n * loglam) / np.expm1(loglam)
        near = np.abs(loglam) < 1e-13
        g = np.where(near, n * lam, g)
        g = np.where(lam == 0, 0.0, g)
        total = (mult[:, None] * w * g).sum()
        return float(total.real / kk)

    def partition_sum_profile(self, v=None, n_max: int = 1 << 22, dp_max: int = 1 << 14) -> ScalingProfile:
        """a_n = (1 / mu[v]) sum_{k<=n} Z_k, tabulated by DP then Fourier."""
        v = self.blocks[0][0] if v is None else v
        mass = self.measure.pi(v)
        dp_n = min(dp_max, n_max)
        z, _ = self.partition_sums_dp(v, dp_n)
        cum = np.cumsum(z) / mass
        cache: dict = {}

        def a_fn(n):
            n = int(n)
            if n < 1:
                return 0.0
            if n <= dp_n:
                return float(cum[n - 1])
            if n not in cache:
                cache[n] = self.cumulative_z_fourier(v, n, n_max) / mass
            return cache[n]

        return ScalingProfile(self.alpha, "from_partition_sums", a_fn=a_fn, n_max=n_max,
                              meta={"symbol": v, "dp_max": dp_n})

    def scaling_profile(self, v=None, n_max: int = 1 << 22) -> ScalingProfile:
        return self.partition_sum_profile(v, n_max)

    # ---------------------------------------------------------------- periodic points
    def periodic_level_sum(self, word) -> int:
        w = as_word(word).symbols
        ext = w * (self.depth + 1)
        return int(sum(self.jump(ext[i: i + self.depth]) for i in range(len(w))))

    def extremal_index(self, word) -> float:
        w = as_word(word).symbols
        if prime_period(w) != len(w):
            raise ValueError(f"{w} is not a prime period")
        if self.periodic_level_sum(w) != 0:
            raise ValueError("cycle drifts in level; the lifted point is not periodic")
        s = birkhoff_sum(self.potential().normalized, w, self.ts, periodic=True)
        return 1.0 - math.exp(s)

    def to_json(self) -> dict:
        return {"name": self.name, "family": self.family, "depth": self.depth,
                "jumps": {str(Word(b)): int(hv) for b, hv in zip(self.blocks, self.h_vec)},
                "alpha": self.alpha, "simple_random_walk": self.is_simple_random_walk}


def thue_morse(i: int) -> int:
    return bin(i).count("1") & 1


def build_z_extension(base: ShiftModel, h: Mapping[tuple, int] | Callable[[tuple], int], depth: int = 1,
                      name: str = "z_extension") -> ZExtensionModel:
    fn = (lambda b: h[tuple(b)]) if isinstance(h, Mapping) else h
    model = ZExtensionModel(base, fn, depth, name)
    syms = tuple(base.ts.alphabet)
    model.named_points["thue_morse"] = PointDescriptor.named(
        "thue_morse", lambda i: syms[thue_morse(i)] if len(syms) >= 2 else syms[0], rule_name="thue_morse")
    return model


def build_srw_extension() -> ZExtensionModel:
    """Fair coin base, level +1 on 0 and -1 on 1."""
    model = build_z_extension(build_bernoulli(2), {(0,): 1, (1,): -1}, 1, name="srw_extension")
    model.named_points["cycle_01"] = PointDescriptor.eventually_periodic((), (0, 1))
    return model


from ..shift_core import Classification, register_point_rule  # noqa: E402


@register_point_rule("thue_morse")
def _classify_thue_morse(p, ts, probe_depth):
    counts: dict = {}
    last: dict = {}
    for i, s in enumerate(p.prefix(probe_depth).symbols):
        counts[s] = counts.get(s, 0) + 1
        last[s] = i
    return Classification("infinitely_recurrent", symbol=p.symbol(0), counts=counts, last_visit=last,
                          infinite_symbols=tuple(sorted(counts)),
                          certificate="Thue-Morse sequence: cube-free, hence not eventually periodic")
