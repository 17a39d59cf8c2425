"""Symbolic phase space: alphabets, transition graphs, words and point descriptors.

Countable alphabets are carried as an enumeration rule plus a truncation bound.
Anything that has to sum over the alphabet checks the model's declaration of
how far the truncation is exhaustive and refuses to return partial answers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

Symbol = Hashable


class UnknownSymbolError(ValueError):
    """Raised when a word mentions a symbol outside the alphabet."""

    def __init__(self, symbol: Symbol):
        super().__init__(f"unknown symbol {symbol!r}")
        self.symbol = symbol


class TruncationError(RuntimeError):
    """Raised when a query would need symbols beyond the truncation bound."""


class _ExceedsCap:
    __slots__ = ()

    def __repr__(self) -> str:
        return "EXCEEDS_CAP"

    def __str__(self) -> str:
        return "exceeds cap"


EXCEEDS_CAP = _ExceedsCap()


# --------------------------------------------------------------------------
# alphabet / graph


class Alphabet:
    """Finite or generated (countable, truncated) set of symbols."""

    def __init__(
        self,
        symbols: Iterable[Symbol],
        *,
        generated: bool = False,
        rule: str | None = None,
        bound: int | None = None,
        member: Callable[[Symbol], bool] | None = None,
    ):
        syms = tuple(symbols)
        index = {}
        for i, s in enumerate(syms):
            if s in index:
                raise ValueError(f"duplicate symbol {s!r} in alphabet")
            index[s] = i
        self._symbols = syms
        self._index = index
        self.generated = generated
        self.rule = rule
        self.bound = bound
        self._member = member

    @classmethod
    def finite(cls, symbols: Iterable[Symbol]) -> "Alphabet":
        return cls(symbols)

    @classmethod
    def generated_from(
        cls,
        rule: str,
        enumerate_fn: Callable[[int], Iterable[Symbol]],
        bound: int,
        member: Callable[[Symbol], bool],
    ) -> "Alphabet":
        """Build from ``enumerate_fn(bound)``; ``member`` decides membership past the bound."""
        return cls(enumerate_fn(bound), generated=True, rule=rule, bound=bound, member=member)

    @property
    def symbols(self) -> tuple:
        return self._symbols

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols)

    def __contains__(self, s: Symbol) -> bool:
        if s in self._index:
            return True
        return bool(self._member is not None and self._member(s))

    def in_truncation(self, s: Symbol) -> bool:
        return s in self._index

    def index(self, s: Symbol) -> int:
        try:
            return self._index[s]
        except (KeyError, TypeError):
            if s in self:
                raise TruncationError(f"symbol {s!r} lies beyond the truncation bound") from None
            raise UnknownSymbolError(s) from None


class TransitionStructure:
    """Adjacency predicate plus truncated successor lists.

    ``cycle_exhaustive_upto`` is the largest cycle length for which every
    cycle through a truncated symbol stays inside the truncation (``None``
    means always, e.g. for a finite alphabet).
    """

    def __init__(
        self,
        alphabet: Alphabet,
        adjacency: Callable[[Symbol, Symbol], bool],
        successors: Callable[[Symbol], Iterable[Symbol]],
        *,
        cycle_exhaustive_upto: int | None = None,
        mixing_witness: Mapping[tuple, int] | None = None,
        name: str = "",
    ):
        self.alphabet = alphabet
        self._adj = adjacency
        self._succ_fn = successors
        self.cycle_exhaustive_upto = cycle_exhaustive_upto
        self.mixing_witness = dict(mixing_witness or {})
        self.name = name
        self._succ_cache: dict = {}
        self._pred_cache: dict | None = None

    @classmethod
    def from_edges(cls, symbols: Sequence[Symbol], edges: Iterable[tuple], name: str = "") -> "TransitionStructure":
        alph = Alphabet.finite(symbols)
        edge_set = set()
        succ: dict = {s: [] for s in alph}
        for a, b in edges:
            for s in (a, b):
                if s not in alph:
                    raise UnknownSymbolError(s)
            if (a, b) not in edge_set:
                edge_set.add((a, b))
                succ[a].append(b)
        frozen = {k: tuple(v) for k, v in succ.items()}
        return cls(alph, lambda a, b: (a, b) in edge_set, lambda a: frozen[a], name=name)

    @classmethod
    def full_shift(cls, k: int) -> "TransitionStructure":
        syms = list(range(k))
        return cls.from_edges(syms, [(a, b) for a in syms for b in syms], name=f"full_{k}_shift")

    def adjacency(self, a: Symbol, b: Symbol) -> bool:
        return bool(self._adj(a, b))

    def out_neighbors(self, a: Symbol) -> tuple:
        """Successors of ``a`` that lie inside the truncation."""
        try:
            return self._succ_cache[a]
        except KeyError:
            pass
        out = tuple(b for b in self._succ_fn(a) if self.alphabet.in_truncation(b))
        self._succ_cache[a] = out
        return out

    def in_neighbors(self, b: Symbol) -> tuple:
        if self._pred_cache is None:
            pred: dict = {s: [] for s in self.alphabet}
            for a in self.alphabet:
                for c in self.out_neighbors(a):
                    pred[c].append(a)
            self._pred_cache = {k: tuple(v) for k, v in pred.items()}
        return self._pred_cache[b]

    def check_no_dead_ends(self) -> list:
        """Symbols of the truncation lacking an out- or in-neighbour there."""
        bad = []
        for s in self.alphabet:
            if not self.out_neighbors(s) or not self.in_neighbors(s):
                bad.append(s)
        return bad

    def to_json(self) -> dict:
        edges = [[a, b] for a in self.alphabet for b in self.out_neighbors(a)]
        return {
            "alphabet": {"symbols": list(self.alphabet.symbols), "generated": self.alphabet.generated,
                         "rule": self.alphabet.rule},
            "edges": edges,
            "truncation": self.alphabet.bound,
        }


# rule name -> builder(truncation) -> TransitionStructure
GRAPH_RULES: dict[str, Callable[[int], TransitionStructure]] = {}


def register_graph_rule(name: str):
    def deco(fn):
        GRAPH_RULES[name] = fn
        return fn
    return deco


def load_graph(doc: str | Mapping[str, Any]) -> TransitionStructure:
    """Load ``{alphabet, edges}`` or ``{rule, truncation}`` from JSON text or a dict."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if "rule" in doc:
        rule = doc["rule"]
        if rule not in GRAPH_RULES:
            raise KeyError(f"unregistered graph rule {rule!r}; known: {sorted(GRAPH_RULES)}")
        return GRAPH_RULES[rule](int(doc.get("truncation", 64)))
    alph = doc["alphabet"]
    symbols = alph["symbols"] if isinstance(alph, Mapping) else alph
    edges = [tuple(e) for e in doc["edges"]]
    return TransitionStructure.from_edges(symbols, edges, name=doc.get("name", ""))


# --------------------------------------------------------------------------
# words and points


@dataclass(frozen=True)
class Word:
    symbols: tuple

    def __post_init__(self):
        if len(self.symbols) == 0:
            raise ValueError("words have positive depth")
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def depth(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def __getitem__(self, i):
        return self.symbols[i]

    def __iter__(self):
        return iter(self.symbols)

    def __str__(self) -> str:
        if all(isinstance(s, int) and 0 <= s < 10 for s in self.symbols):
            return "".join(str(s) for s in self.symbols)
        return " ".join(map(str, self.symbols))

    @classmethod
    def parse(cls, text: str) -> "Word":
        """``"0120"`` -> (0, 1, 2, 0); space separated tokens are read as ints when possible."""
        tokens = text.split() if " " in text.strip() else list(text.strip())
        out = []
        for tok in tokens:
            try:
                out.append(int(tok))
            except ValueError:
                out.append(tok)
        return cls(tuple(out))


def as_word(w: Word | str | Sequence[Symbol]) -> Word:
    if isinstance(w, Word):
        return w
    if isinstance(w, str):
        return Word.parse(w)
    return Word(tuple(w))


@dataclass(frozen=True)
class PointDescriptor:
    """Finite description of an infinite sequence.

    ``kind`` is ``"eventually_periodic"`` (``preperiod`` then ``period``
    repeated) or ``"named"`` (``name`` plus a ``rule`` producing symbol i).
    """

    kind: str
    preperiod: tuple = ()
    period: tuple = ()
    name: str = ""
    rule: Callable[[int], Symbol] | None = field(default=None, compare=False)
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def eventually_periodic(cls, preperiod: Sequence[Symbol] | str, period: Sequence[Symbol] | str) -> "PointDescriptor":
        pre = tuple(as_word(preperiod).symbols) if len(preperiod) else ()
        per = tuple(as_word(period).symbols)
        return cls("eventually_periodic", pre, per, name=f"{_fmt(pre)}({_fmt(per)})^inf")

    @classmethod
    def named(cls, name: str, rule: Callable[[int], Symbol], **meta) -> "PointDescriptor":
        return cls("named", name=name, rule=rule, meta=dict(meta))

    def symbol(self, i: int) -> Symbol:
        if self.kind == "eventually_periodic":
            if i < len(self.preperiod):
                return self.preperiod[i]
            return self.period[(i - len(self.preperiod)) % len(self.period)]
        return self.rule(i)

    def prefix(self, n: int) -> Word:
        return Word(tuple(self.symbol(i) for i in range(n)))


def _fmt(seq) -> str:
    return str(Word(tuple(seq))) if seq else ""


# --------------------------------------------------------------------------
# operations


def is_admissible(word: Word | str | Sequence[Symbol], ts: TransitionStructure) -> bool:
    w = as_word(word)
    for s in w:
        if s not in ts.alphabet:
            raise UnknownSymbolError(s)
    return all(ts.adjacency(a, b) for a, b in zip(w.symbols, w.symbols[1:]))


def shortest_path_length(ts: TransitionStructure, src: Symbol, dst: Symbol, max_len: int) -> int | None:
    """Fewest edges (>= 1) on a path src -> dst inside the truncation, or None."""
    if max_len < 1:
        return None
    seen = {src: 0}
    queue = deque([src])
    while queue:
        a = queue.popleft()
        d = seen[a]
        if d >= max_len:
            continue
        for b in ts.out_neighbors(a):
            if b == dst:
                return d + 1
            if b not in seen:
                seen[b] = d + 1
                queue.append(b)
    return None


def topological_return_time(word: Word | str | Sequence[Symbol], ts: TransitionStructure, search_cap: int):
    """Smallest k >= 1 such that [w] meets T^{-k}[w]; ``EXCEEDS_CAP`` if none up to the cap."""
    w = as_word(word).symbols
    n = len(w)
    if search_cap < n:
        raise ValueError("search_cap must be at least the word depth")
    if not is_admissible(w, ts):
        raise ValueError(f"word {w} is not admissible")
    best = None
    for k in range(1, n):
        if w[k:] == w[: n - k]:
            best = k
            break
    # bridge from the last symbol back to the first
    d = shortest_path_length(ts, w[-1], w[0], max_len=search_cap - n + 1)
    if d is not None:
        k = n + d - 1
        if best is None or k < best:
            best = k
    if best is None or best > search_cap:
        return EXCEEDS_CAP
    return best


def prime_period(seq: Sequence[Symbol]) -> int:
    """Length of the shortest block whose repetition gives the cycle ``seq``."""
    n = len(seq)
    for q in range(1, n + 1):
        if n % q == 0 and all(seq[i] == seq[i % q] for i in range(n)):
            return q
    return n


def reduce_eventually_periodic(pre: Sequence[Symbol], per: Sequence[Symbol]) -> tuple[tuple, tuple]:
    pre = list(pre)
    per = list(per)
    q = prime_period(per)
    per = per[:q]
    while pre and pre[-1] == per[-1]:
        pre.pop()
        per = [per[-1]] + per[:-1]
    return tuple(pre), tuple(per)


@dataclass
class Classification:
    """Outcome of point classification.

    ``kind`` is one of ``periodic``, ``infinitely_recurrent``,
    ``finitely_recurrent`` or ``undetermined``.
    """

    kind: str
    q: int | None = None
    preperiod_length: int = 0
    symbol: Symbol | None = None
    certificate: str = ""
    counts: dict = field(default_factory=dict)
    last_visit: dict = field(default_factory=dict)
    infinite_symbols: tuple = ()
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "q": self.q,
            "preperiod_length": self.preperiod_length,
            "symbol": self.symbol,
            "certificate": self.certificate,
            "counts": {str(k): v for k, v in self.counts.items()},
            "last_visit": {str(k): v for k, v in self.last_visit.items()},
            "infinite_symbols": list(self.infinite_symbols),
            **({"meta": self.meta} if self.meta else {}),
        }


# model-specific classification rules: name -> fn(descriptor, ts, probe_depth) -> Classification
POINT_RULES: dict[str, Callable[[PointDescriptor, TransitionStructure, int], Classification]] = {}


def register_point_rule(name: str):
    def deco(fn):
        POINT_RULES[name] = fn
        return fn
    return deco


def _visit_stats(symbols: Sequence[Symbol]) -> tuple[dict, dict]:
    counts: dict = {}
    last: dict = {}
    for i, s in enumerate(symbols):
        counts[s] = counts.get(s, 0) + 1
        last[s] = i
    return counts, last


def classify_point(p: PointDescriptor, ts: TransitionStructure, probe_depth: int = 64) -> Classification:
    if p.kind == "eventually_periodic":
        pre, per = reduce_eventually_periodic(p.preperiod, p.period)
        q = len(per)
        pre_counts, pre_last = _visit_stats(pre)
        cyc = set(per)
        counts = {s: c for s, c in pre_counts.items() if s not in cyc}
        last = {s: j for s, j in pre_last.items() if s not in cyc}
        if not pre:
            return Classification("periodic", q=q, symbol=per[0], certificate="exact period",
                                  infinite_symbols=tuple(per))
        # strictly preperiodic: every symbol of the cycle is seen infinitely often
        return Classification(
            "infinitely_recurrent", q=q, preperiod_length=len(pre), symbol=per[0],
            certificate=f"eventually periodic with preperiod {len(pre)}",
            counts=counts, last_visit=last, infinite_symbols=tuple(per),
        )
    rule_name = p.meta.get("rule_name", p.name)
    if rule_name in POINT_RULES:
        return POINT_RULES[rule_name](p, ts, probe_depth)
    counts, last = _visit_stats(p.prefix(probe_depth).symbols)
    return Classification("undetermined", counts=counts, last_visit=last,
                          certificate=f"no rule registered for {rule_name!r}")


def enumerate_periodic_words(ts: TransitionStructure, v: Symbol, n: int, first_return_only: bool = False) -> list[Word]:
    """All admissible words of length n starting at v whose last symbol leads back to v."""
    if n < 1:
        raise ValueError("n must be positive")
    if v not in ts.alphabet:
        raise UnknownSymbolError(v)
    bound = ts.cycle_exhaustive_upto
    if bound is not None and n > bound:
        raise TruncationError(
            f"truncation of {ts.name or 'graph'} is exhaustive only for cycles up to length {bound}, asked {n}")
    out: list[Word] = []
    path = [v]

    def extend():
        if len(path) == n:
            if ts.adjacency(path[-1], v):
                out.append(Word(tuple(path)))
            return
        for b in ts.out_neighbors(path[-1]):
            if first_return_only and b == v:
                continue
            path.append(b)
            extend()
            path.pop()

    extend()
    return out
