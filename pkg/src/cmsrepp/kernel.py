"""Stochastic kernels over a (possibly truncated) transition structure."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .shift_core import Symbol, TransitionStructure, TruncationError


class KernelRowError(ValueError):
    def __init__(self, symbol, total):
        super().__init__(f"row {symbol!r} sums to {total!r}, expected 1")
        self.symbol = symbol
        self.total = total


class StochasticKernel:
    """Transition probabilities P(a, b) supported on the edges of ``ts``.

    ``row_remainder(a)`` returns the exact probability of jumping from ``a``
    to a symbol outside the truncation (zero by default).
    """

    def __init__(
        self,
        ts: TransitionStructure,
        prob: Callable[[Symbol, Symbol], float] | Mapping,
        row_remainder: Callable[[Symbol], float] | None = None,
    ):
        self.ts = ts
        if isinstance(prob, Mapping):
            table = {a: dict(row) for a, row in prob.items()}
            self._prob = lambda a, b: table.get(a, {}).get(b, 0.0)
        else:
            self._prob = prob
        self._remainder = row_remainder or (lambda a: 0.0)
        self._row_cache: dict = {}

    def __call__(self, a: Symbol, b: Symbol) -> float:
        if not self.ts.adjacency(a, b):
            return 0.0
        return float(self._prob(a, b))

    def row(self, a: Symbol) -> tuple:
        """((b, P(a,b)), ...) over successors inside the truncation."""
        try:
            return self._row_cache[a]
        except KeyError:
            pass
        r = tuple((b, float(self._prob(a, b))) for b in self.ts.out_neighbors(a))
        self._row_cache[a] = r
        return r

    def remainder(self, a: Symbol) -> float:
        return float(self._remainder(a))

    def check_rows(self, tol: float = 1e-12, symbols=None) -> None:
        for a in (self.ts.alphabet if symbols is None else symbols):
            vals = self.row(a)
            if any(p < 0 for _, p in vals):
                raise KernelRowError(a, [p for _, p in vals])
            total = sum(p for _, p in vals) + self.remainder(a)
            if abs(total - 1.0) > tol:
                raise KernelRowError(a, total)

    def dense(self, symbols=None) -> tuple[np.ndarray, tuple]:
        """Dense matrix restricted to ``symbols`` (default: the whole truncation)."""
        syms = tuple(self.ts.alphabet if symbols is None else symbols)
        idx = {s: i for i, s in enumerate(syms)}
        m = np.zeros((len(syms), len(syms)))
        for a in syms:
            for b, p in self.row(a):
                j = idx.get(b)
                if j is not None:
                    m[idx[a], j] = p
        return m, syms

    def csr(self):
        """Integer-indexed sparse rows for the simulators.

        Returns (indptr, targets, cumulative probabilities); a target of -1
        marks mass escaping the truncation.
        """
        alph = self.ts.alphabet
        indptr = [0]
        targets: list[int] = []
        cum: list[float] = []
        for a in alph:
            acc = 0.0
            for b, p in self.row(a):
                if p <= 0:
                    continue
                acc += p
                targets.append(alph.index(b))
                cum.append(acc)
            rem = self.remainder(a)
            if rem > 0:
                acc += rem
                targets.append(-1)
                cum.append(acc)
            if not cum or indptr[-1] == len(cum):
                raise TruncationError(f"symbol {a!r} has no outgoing mass")
            cum[-1] = max(cum[-1], 1.0)
            indptr.append(len(cum))
        return (np.asarray(indptr, dtype=np.int64), np.asarray(targets, dtype=np.int64),
                np.asarray(cum, dtype=np.float64))
