"""Constructors for the example systems and a name registry used by the CLI."""

import itertools

from ..shift_core import Classification, PointDescriptor, register_point_rule
from .base import (ShiftModel, build_bernoulli, build_finite_chain, delta_word_weights, embedded_sft_target,
                   stationary_distribution)
from .hoc import (_LazySequence, MixtureTail, build_house_of_cards, build_multi_tower, build_renewal, build_tree_hoc,
                  climb_point, excursion_point, preimage_weight, runs_then_two)
from .laws import GeometricTail, PowerTail, ReturnLaw, ShiftedPowerTail, TabulatedTail, TreeTail, law_from_json
from .realizer import RealizerPlan, ScheduleError, build_hoc_renewal, realize_target_law
from .zext import DriftError, ZExtensionModel, build_srw_extension, build_z_extension, thue_morse

THREE_STATE = [[0.2, 0.5, 0.3], [0.4, 0.1, 0.5], [0.6, 0.3, 0.1]]


def tm_blocks(i: int) -> int:
    """Blocks 012 and 12 concatenated in Thue-Morse order (0 opens every 012 block, so parsing is unique)."""
    j = 0
    while True:
        blk = (0, 1, 2) if thue_morse(j) == 0 else (1, 2)
        if i < len(blk):
            return blk[i]
        i -= len(blk)
        j += 1


def build_three_state():
    model = build_finite_chain(THREE_STATE, name="three_state")
    model.named_points["tm_blocks"] = PointDescriptor.named("tm_blocks", _LazySequence(
        lambda: (tm_blocks(i) for i in itertools.count())), rule_name="tm_blocks")
    model.named_points["cycle_12"] = PointDescriptor.eventually_periodic((), (1, 2))
    return model


@register_point_rule("tm_blocks")
def _classify_tm_blocks(p, ts, probe_depth):
    counts: dict = {}
    last: dict = {}
    for i, s in enumerate(p.prefix(probe_depth).symbols):
        counts[s] = counts.get(s, 0) + 1
        last[s] = i
    return Classification("infinitely_recurrent", symbol=p.symbol(0), counts=counts, last_visit=last,
                          infinite_symbols=(0, 1, 2),
                          certificate="Thue-Morse coding of two distinct blocks: not eventually periodic")


def _hoc(alpha=0.5, truncation=256, p1=None, **_):
    law = ShiftedPowerTail(alpha, p1) if p1 is not None else PowerTail(alpha)
    return build_house_of_cards(law, truncation)


MODELS = {
    "hoc": _hoc,
    "hoc_fixed": lambda alpha=0.5, truncation=256, p1=0.3, **_: _hoc(alpha, truncation, p1),
    "hoc_geometric": lambda r=0.5, truncation=256, **_: build_house_of_cards(GeometricTail(r), truncation),
    "renewal": lambda alpha=0.5, truncation=256, **_: build_renewal(PowerTail(alpha), truncation),
    "tree_hoc": lambda alpha=0.5, depth=10, **_: build_tree_hoc(alpha, depth),
    "bernoulli": lambda k=2, **_: build_bernoulli(int(k)),
    "three_state": lambda **_: build_three_state(),
    "srw": lambda **_: build_srw_extension(),
}


def build_model(name: str, **params):
    """Build a registered model by name (``hoc``, ``hoc_fixed``, ``renewal``, ``tree_hoc``, ...)."""
    try:
        maker = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    return maker(**params)


__all__ = [
    "ShiftModel", "ZExtensionModel", "RealizerPlan", "ReturnLaw", "PowerTail", "ShiftedPowerTail", "GeometricTail",
    "TabulatedTail", "TreeTail", "MixtureTail", "DriftError", "ScheduleError", "build_bernoulli",
    "build_finite_chain", "build_house_of_cards", "build_tree_hoc", "build_renewal", "build_multi_tower",
    "build_z_extension", "build_srw_extension", "build_hoc_renewal", "realize_target_law", "embedded_sft_target",
    "delta_word_weights", "climb_point", "excursion_point", "preimage_weight", "runs_then_two", "law_from_json",
    "stationary_distribution", "build_model", "MODELS", "build_three_state", "tm_blocks", "THREE_STATE",
]
