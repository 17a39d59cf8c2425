"""Tower-shaped null-recurrent chains: house of cards, its tree and renewal variants, several towers."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..kernel import StochasticKernel
from ..measure_scaling import MarkovMeasure
from ..shift_core import (
    Alphabet,
    Classification,
    PointDescriptor,
    TransitionStructure,
    register_graph_rule,
    register_point_rule,
)
from ..thermo import birkhoff_sum
from .base import ShiftModel
from .laws import PowerTail, ReturnLaw, TabulatedTail

# ---------------------------------------------------------------- helpers


def _coerce_law(law=None, alpha=None, q=None) -> ReturnLaw:
    if law is not None:
        return law
    if q is not None:
        return TabulatedTail(q)
    if alpha is not None:
        return PowerTail(alpha)
    raise ValueError("give a return law, a tail sequence q or an index alpha")


def _law_alpha(law: ReturnLaw):
    if math.isfinite(law.mean):
        return None
    return getattr(law, "alpha", None)


def _reach(law: ReturnLaw, truncation: int) -> int:
    """Number of tower states 0..K-1 with positive mass, capped by the truncation."""
    k = 1
    while k < truncation and law.q(k + 1) > 0:
        k += 1
    return k


class _LazySequence:
    """Symbol rule backed by a generator, memoised so prefix(n) stays cheap."""

    def __init__(self, gen_factory: Callable[[], "iter"]):
        self._factory = gen_factory
        self._gen = gen_factory()
        self._buf: list = []

    def __call__(self, i: int):
        while len(self._buf) <= i:
            self._buf.append(next(self._gen))
        return self._buf[i]


def runs_then_two(i: int) -> int:
    """Heights 1,2, 1,1,2, 1,1,1,2, ...: j ones followed by a two, for j = 1, 2, 3, ..."""
    j = 1
    while i >= j + 1:
        i -= j + 1
        j += 1
    return 2 if i == j else 1


def excursion_point(name: str, heights: Callable[[int], int], climb: Callable[[int], Sequence] | None = None,
                    rule_name: str = "excursion_heights", **meta) -> PointDescriptor:
    """Point made of successive excursions from 0; ``climb(h)`` lists the symbols of one of height h."""
    climb = climb or (lambda h: range(h + 1))

    def gen():
        i = 0
        while True:
            yield from climb(heights(i))
            i += 1

    return PointDescriptor.named(name, _LazySequence(gen), rule_name=rule_name, heights=heights, **meta)


# ---------------------------------------------------------------- point rules


@register_point_rule("climb")
def _classify_climb(p: PointDescriptor, ts: TransitionStructure, probe_depth: int) -> Classification:
    """word w followed by start, start+1, ...: each symbol is visited finitely often."""
    head = tuple(p.meta.get("prefix", ()))
    start = int(p.meta.get("start", 0))
    counts: dict = {}
    last: dict = {}
    for i, s in enumerate(head):
        counts[s] = counts.get(s, 0) + 1
        last[s] = i
    for k in range(start, max(probe_depth, start + 1)):
        j = len(head) + k - start
        counts[k] = counts.get(k, 0) + 1
        last[k] = j
    return Classification("finitely_recurrent", symbol=p.symbol(0), counts=counts, last_visit=last,
                          certificate="climbs the tower without returning; counts listed up to the probe depth",
                          meta={"prefix_length": len(head), "start": start})


@register_point_rule("excursion_heights")
def _classify_heights(p: PointDescriptor, ts: TransitionStructure, probe_depth: int) -> Classification:
    counts: dict = {}
    last: dict = {}
    for i, s in enumerate(p.prefix(probe_depth).symbols):
        counts[s] = counts.get(s, 0) + 1
        last[s] = i
    recurrent = tuple(p.meta.get("recurrent_symbols", (0,)))
    return Classification("infinitely_recurrent", symbol=recurrent[0], counts=counts, last_visit=last,
                          infinite_symbols=recurrent,
                          certificate=p.meta.get("certificate", "returns to the base after every excursion"))


@register_point_rule("renewal_any")
def _classify_renewal(p: PointDescriptor, ts: TransitionStructure, probe_depth: int) -> Classification:
    counts: dict = {}
    last: dict = {}
    for i, s in enumerate(p.prefix(probe_depth).symbols):
        counts[s] = counts.get(s, 0) + 1
        last[s] = i
    return Classification("infinitely_recurrent", symbol=0, counts=counts, last_visit=last, infinite_symbols=(0,),
                          certificate="every admissible orbit of the renewal graph descends to 0 again")


def climb_point(prefix: Sequence[int] = (), start: int = 0, name: str | None = None) -> PointDescriptor:
    """prefix followed by (start, start+1, start+2, ...); x_up is climb_point()."""
    prefix = tuple(prefix)
    m = len(prefix)

    def rule(i):
        return prefix[i] if i < m else start + (i - m)

    label = name or ("x_up" if not prefix and start == 0 else f"{''.join(map(str, prefix))}+up{start}")
    return PointDescriptor.named(label, rule, rule_name="climb", prefix=prefix, start=start)


def preimage_weight(model: ShiftModel, point: PointDescriptor) -> float:
    """exp(S_m phi_*(x)) for x = w + x_up with |w| = m; 1 for x_up itself."""
    head = tuple(point.meta.get("prefix", ()))
    if not head:
        return 1.0
    start = int(point.meta.get("start", 0))
    word = head + (start,)
    return math.exp(birkhoff_sum(model.potential().normalized, word, model.ts))


# ---------------------------------------------------------------- house of cards


def _hoc_structure(k_states: int, name: str = "house_of_cards") -> TransitionStructure:
    alph = Alphabet.generated_from("house_of_cards", lambda b: range(b), k_states,
                                   member=lambda s: isinstance(s, (int, np.integer)) and s >= 0)

    def adj(a, b):
        return b == 0 or b == a + 1

    return TransitionStructure(alph, adj, lambda a: (0, a + 1), cycle_exhaustive_upto=k_states, name=name)


register_graph_rule("house_of_cards")(_hoc_structure)


def build_house_of_cards(law: ReturnLaw | None = None, truncation: int = 256, *, alpha: float | None = None,
                         q: Sequence[float] | None = None) -> ShiftModel:
    """Tower 0 -> 1 -> 2 -> ... with resets to 0, tuned so that mu_[0](r >= k) = q_k."""
    law = _coerce_law(law, alpha, q)
    law.validate(min(truncation + 2, 400))
    k_states = _reach(law, truncation)
    qv = [law.q(k) for k in range(1, k_states + 3)]  # qv[k-1] = q_k

    def climb(k):
        return qv[k + 1] / qv[k] if qv[k] > 0 else 0.0  # q_{k+2} / q_{k+1}

    def prob(a, b):
        if b == a + 1:
            return climb(a)
        if b == 0:
            return 1.0 - climb(a)
        return 0.0

    ts = _hoc_structure(k_states)
    kern = StochasticKernel(ts, prob, row_remainder=lambda a: climb(a) if a == k_states - 1 else 0.0)
    kern.check_rows(1e-12)
    meas = MarkovMeasure(lambda s: qv[s], kern, inflow_remainder=lambda b: qv[k_states] if b == 0 else 0.0)
    model = ShiftModel("house_of_cards", "hoc", ts, kern, meas, return_law=law, base_symbol=0,
                       alpha=_law_alpha(law), meta={"excursion": "tower", "truncation": k_states})
    model.named_points["x_up"] = climb_point()
    model.named_points["fixed_0"] = PointDescriptor.eventually_periodic((), (0,))
    model.named_points["heights_1_2"] = excursion_point(
        "heights_1_2", runs_then_two, recurrent_symbols=(0, 1, 2),
        certificate="bounded excursions; the runs of height one grow, so the orbit is not eventually periodic")
    return model


# ---------------------------------------------------------------- renewal


def build_renewal(law: ReturnLaw | None = None, truncation: int = 256, *, alpha: float | None = None,
                  q: Sequence[float] | None = None) -> ShiftModel:
    """Arrows of the house of cards reversed: 0 jumps to k with probability p_{k+1}, then walks down."""
    law = _coerce_law(law, alpha, q)
    law.validate(min(truncation + 2, 400))
    if law.total_mass < 1 - 1e-12:
        raise ValueError("renewal chain needs a proper return law")
    k_states = _reach(law, truncation)
    qv = [law.q(k) for k in range(1, k_states + 3)]

    def prob(a, b):
        if a == 0:
            return qv[b] - qv[b + 1]  # p_{b+1}
        return 1.0 if b == a - 1 else 0.0

    alph = Alphabet.generated_from("renewal", lambda b: range(b), k_states,
                                   member=lambda s: isinstance(s, (int, np.integer)) and s >= 0)
    ts = TransitionStructure(
        alph,
        lambda a, b: (a == 0 and b >= 0) or (a > 0 and b == a - 1),
        lambda a: range(k_states) if a == 0 else (a - 1,),
        cycle_exhaustive_upto=k_states,
        name="renewal",
    )
    kern = StochasticKernel(ts, prob, row_remainder=lambda a: qv[k_states] if a == 0 else 0.0)
    kern.check_rows(1e-12)
    meas = MarkovMeasure(lambda s: qv[s], kern,
                         inflow_remainder=lambda b: qv[k_states] if b == k_states - 1 else 0.0)
    model = ShiftModel("renewal", "renewal", ts, kern, meas, return_law=law, base_symbol=0,
                       alpha=_law_alpha(law), meta={"truncation": k_states})
    if qv[0] - qv[1] > 0:
        model.named_points["fixed_0"] = PointDescriptor.eventually_periodic((), (0,))
    model.named_points["descend"] = excursion_point(
        "descend", lambda i: i + 1, climb=lambda h: [0] + list(range(h, 0, -1)), rule_name="renewal_any")
    model.named_points["heights_1_2"] = excursion_point(
        "heights_1_2", runs_then_two, climb=lambda h: [0] + list(range(h, 0, -1)), rule_name="renewal_any")
    return model


# ---------------------------------------------------------------- tree house of cards


def _tree_symbols(depth: int) -> list[str]:
    out = ["0"]
    frontier = ["0"]
    for _ in range(depth):
        frontier = [s + c for s in frontier for c in "01"]
        out.extend(frontier)
    return out


def build_tree_hoc(alpha: float, depth: int = 10) -> ShiftModel:
    """Binary tree of towers: from 0a (|a| = n-1) go to 0a0 or 0a1 with (1 - alpha/n)/2 each, else reset."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    from .laws import TreeTail

    law = TreeTail(alpha)
    syms = _tree_symbols(depth)

    def member(s):
        return isinstance(s, str) and s.startswith("0") and set(s) <= {"0", "1"}

    alph = Alphabet.generated_from("tree_house_of_cards", lambda b: syms, depth, member)

    def adj(a, b):
        return b == "0" or (len(b) == len(a) + 1 and b.startswith(a))

    def succ(a):
        return ("0", a + "0", a + "1") if a != "0" else ("0", "00", "01")

    ts = TransitionStructure(alph, adj, succ, cycle_exhaustive_upto=depth + 1, name="tree_house_of_cards")

    def prob(a, b):
        n = len(a)
        if b == "0":
            return alpha / n
        return (1.0 - alpha / n) / 2.0

    def remainder(a):
        return 1.0 - alpha / len(a) if len(a) == depth + 1 else 0.0

    kern = StochasticKernel(ts, prob, row_remainder=remainder)
    kern.check_rows(1e-12)

    def pi(s):
        return 2.0 ** (1 - len(s)) * law.q(len(s))

    meas = MarkovMeasure(pi, kern, inflow_remainder=lambda b: law.q(depth + 2) if b == "0" else 0.0)
    model = ShiftModel("tree_house_of_cards", "tree_hoc", ts, kern, meas, return_law=law, base_symbol="0",
                       alpha=alpha, meta={"depth": depth})
    model.named_points["fixed_0"] = PointDescriptor("eventually_periodic", (), ("0",), name="(0)^inf")
    model.named_points["cycle_0_00"] = PointDescriptor("eventually_periodic", (), ("0", "00"), name="(0 00)^inf")
    model.named_points["cycle_0_01_011"] = PointDescriptor("eventually_periodic", (), ("0", "01", "011"),
                                                           name="(0 01 011)^inf")
    return model


# ---------------------------------------------------------------- several towers


class MixtureTail(ReturnLaw):
    """Return law of a base symbol feeding several towers: q = sum_i w_i q^(i)."""

    def __init__(self, laws: Sequence[ReturnLaw], weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if len(laws) != len(w) or len(w) == 0:
            raise ValueError("one weight per tower")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("tower weights must be nonnegative and sum to 1")
        self.laws = tuple(laws)
        self.weights = w
        heavy = [i for i, l in enumerate(laws) if w[i] > 0 and not math.isfinite(l.mean)
                 and getattr(l, "alpha", None) is not None and getattr(l, "power_constant", None) is not None]
        if heavy:
            a = min(laws[i].alpha for i in heavy)
            lead = [i for i in heavy if laws[i].alpha == a]
            self.alpha = a
            self.power_constant = float(sum(w[i] * laws[i].power_constant for i in lead))
        else:
            self.alpha = None
            self.power_constant = None

    def q(self, k):
        return float(sum(wi * l.q(k) for wi, l in zip(self.weights, self.laws)))

    @property
    def total_mass(self):
        return float(sum(wi * l.total_mass for wi, l in zip(self.weights, self.laws)))

    @property
    def mean(self):
        return float(sum(wi * l.mean for wi, l in zip(self.weights, self.laws) if wi > 0))

    def tower_shares(self) -> np.ndarray:
        """lim_n w_i q^(i)_n / q_n for each tower (tails lighter than the leading power get 0)."""
        out = np.zeros(len(self.laws))
        if self.alpha is None:
            raise ValueError("tower shares need at least one regularly varying tower")
        for i, l in enumerate(self.laws):
            if getattr(l, "alpha", None) == self.alpha and not math.isfinite(l.mean) \
                    and getattr(l, "power_constant", None) is not None:
                out[i] = self.weights[i] * l.power_constant / self.power_constant
        return out

    def to_json(self):
        return {"kind": "mixture", "weights": self.weights.tolist(), "laws": [l.to_json() for l in self.laws]}


def build_multi_tower(laws: Sequence[ReturnLaw], weights: Sequence[float], truncation: int = 256) -> ShiftModel:
    """Base symbol 0 choosing tower i with weight w_i; tower i climbs with its own hazard chain.

    Tower states are (i, k) for k >= 1 with pi((i, k)) = w_i q^(i)_{k+1}.
    """
    mix = MixtureTail(laws, weights)
    w = mix.weights
    reach = [_reach(l, truncation) for l in laws]
    qs = [[l.q(k) for k in range(1, reach[i] + 3)] for i, l in enumerate(laws)]
    syms: list = [0] + [(i, k) for i in range(len(laws)) for k in range(1, reach[i])]
    in_trunc = set(syms)

    def climb(i, k):
        return qs[i][k + 1] / qs[i][k] if qs[i][k] > 0 else 0.0

    def prob(a, b):
        if a == 0:
            if b == 0:
                return float(sum(w[i] * (1.0 - qs[i][1]) for i in range(len(laws))))
            return w[b[0]] * qs[b[0]][1]
        i, k = a
        if b == 0:
            return 1.0 - climb(i, k)
        return climb(i, k)

    def succ(a):
        if a == 0:
            return (0,) + tuple((i, 1) for i in range(len(laws)) if w[i] > 0)
        return (0, (a[0], a[1] + 1))

    def adj(a, b):
        if b == 0:
            return True
        if a == 0:
            return b[1] == 1
        return b == (a[0], a[1] + 1)

    def member(s):
        return s == 0 or (isinstance(s, tuple) and len(s) == 2 and 0 <= s[0] < len(laws) and s[1] >= 1)

    alph = Alphabet.generated_from("multi_tower", lambda b: syms, truncation, member)
    ts = TransitionStructure(alph, adj, succ, cycle_exhaustive_upto=min(reach), name="multi_tower")

    def remainder(a):
        if a == 0:
            # towers with a single state send their climb straight out of the truncation
            return float(sum(w[i] * qs[i][1] for i in range(len(laws)) if (i, 1) not in in_trunc))
        i, k = a
        return climb(i, k) if (i, k + 1) not in in_trunc else 0.0

    kern = StochasticKernel(ts, prob, row_remainder=remainder)
    kern.check_rows(1e-12)

    def pi(s):
        return 1.0 if s == 0 else w[s[0]] * qs[s[0]][s[1]]

    def inflow(b):
        return float(sum(w[i] * qs[i][reach[i]] for i in range(len(laws)))) if b == 0 else 0.0

    meas = MarkovMeasure(pi, kern, inflow_remainder=inflow)
    model = ShiftModel("multi_tower", "multi_tower", ts, kern, meas, return_law=mix, base_symbol=0,
                       alpha=_law_alpha(mix), meta={"towers": len(laws), "weights": w.tolist()})
    for i in range(len(laws)):
        if w[i] > 0:
            model.named_points[f"x_up_{i}"] = PointDescriptor.named(
                f"x_up_{i}", (lambda i: lambda j: 0 if j == 0 else (i, j))(i), rule_name="tower_climb", tower=i)
    model.named_points["fixed_0"] = PointDescriptor.eventually_periodic((), (0,))
    if mix.alpha is not None:
        model.meta["tower_shares"] = mix.tower_shares().tolist()
    return model


@register_point_rule("tower_climb")
def _classify_tower_climb(p: PointDescriptor, ts: TransitionStructure, probe_depth: int) -> Classification:
    syms = p.prefix(probe_depth).symbols
    counts = {s: 1 for s in syms}
    last = {s: j for j, s in enumerate(syms)}
    return Classification("finitely_recurrent", symbol=0, counts=counts, last_visit=last,
                          certificate=f"climbs tower {p.meta.get('tower')} without returning")
