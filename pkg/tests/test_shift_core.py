import itertools

import pytest

from cmsrepp.model_zoo import build_house_of_cards, climb_point
from cmsrepp.shift_core import (EXCEEDS_CAP, Alphabet, PointDescriptor, TransitionStructure, TruncationError,
                                UnknownSymbolError, Word, classify_point, enumerate_periodic_words, is_admissible,
                                load_graph, prime_period, topological_return_time)


@pytest.fixture(scope="module")
def hoc_ts():
    return build_house_of_cards(alpha=0.5, truncation=64).ts


def test_admissibility_full_shift():
    assert is_admissible("010", TransitionStructure.full_shift(2))


def test_admissibility_tower(hoc_ts):
    assert not is_admissible("021", hoc_ts)
    assert is_admissible("0120", hoc_ts)


def test_unknown_symbol_is_rejected():
    with pytest.raises(UnknownSymbolError):
        is_admissible("012", TransitionStructure.full_shift(2))


def _brute_return_time(word, ts, cap):
    """Smallest k with a path w_0..w_{k-1} followed by w, found by enumeration of middles."""
    w = tuple(word)
    n = len(w)
    syms = [s for s in ts.alphabet.symbols if isinstance(s, int) and s < 6] if hasattr(ts.alphabet, "symbols") else None
    for k in range(1, cap + 1):
        if k < n:
            if w[k:] == w[: n - k]:
                return k
            continue
        # need w followed by k - n free symbols then w again
        for mid in itertools.product(syms, repeat=k - n):
            path = w + mid + w
            if all(ts.adjacency(a, b) for a, b in zip(path, path[1:])):
                return k
    return None


@pytest.mark.parametrize("word,expected", [("000", 1), ("010", 2)])
def test_return_time_overlaps(word, expected):
    assert topological_return_time(word, TransitionStructure.full_shift(2), 10) == expected


def test_return_time_bridge_matches_enumeration(hoc_ts):
    # the bridge 1 -> 0 is a single edge, so [01] meets T^{-2}[01]
    assert topological_return_time("01", hoc_ts, 10) == 2
    assert _brute_return_time((0, 1), hoc_ts, 10) == 2
    for w in [(0, 1, 2), (0, 0, 1), (1, 2, 3, 0)]:
        assert topological_return_time(w, hoc_ts, 12) == _brute_return_time(w, hoc_ts, 12)


def test_return_time_cap():
    ts = TransitionStructure.from_edges([0, 1, 2], [(0, 1), (1, 2), (2, 0)])
    assert topological_return_time("0", ts, 2) is EXCEEDS_CAP
    assert topological_return_time("0", ts, 3) == 3


def test_classify_fixed_point():
    c = classify_point(PointDescriptor.eventually_periodic("", "0"), TransitionStructure.full_shift(2))
    assert c.kind == "periodic" and c.q == 1


def test_classify_climb(hoc_ts):
    c = classify_point(climb_point(), hoc_ts)
    assert c.kind == "finitely_recurrent"
    assert all(c.counts[v] == 1 for v in range(10))
    assert all(c.last_visit[v] == v for v in range(10))


def test_classify_preperiodic():
    ts = TransitionStructure.full_shift(3)
    c = classify_point(PointDescriptor.eventually_periodic("012", "0"), ts)
    assert c.kind == "infinitely_recurrent"
    assert c.q == 1 and c.preperiod_length == 3
    assert c.counts == {1: 1, 2: 1}


def test_reduction_moves_preperiod_into_cycle():
    ts = TransitionStructure.full_shift(2)
    c = classify_point(PointDescriptor.eventually_periodic("1", "01"), ts)
    assert c.kind == "periodic" and c.q == 2


def test_unregistered_named_point_is_undetermined():
    c = classify_point(PointDescriptor.named("mystery", lambda i: i % 2), TransitionStructure.full_shift(2))
    assert c.kind == "undetermined"


def test_periodic_words_full_shift():
    ts = TransitionStructure.full_shift(2)
    assert {str(w) for w in enumerate_periodic_words(ts, 0, 2)} == {"00", "01"}
    assert {str(w) for w in enumerate_periodic_words(ts, 0, 2, first_return_only=True)} == {"01"}


def test_periodic_words_tower(hoc_ts):
    assert [str(w) for w in enumerate_periodic_words(hoc_ts, 0, 1)] == ["0"]
    # first returns to 0 of length n are exactly the climbs 0,1,...,n-1
    for n in range(2, 7):
        assert enumerate_periodic_words(hoc_ts, 0, n, True) == [Word(tuple(range(n)))]


def test_periodic_words_beyond_truncation():
    ts = build_house_of_cards(alpha=0.5, truncation=8).ts
    with pytest.raises(TruncationError):
        enumerate_periodic_words(ts, 0, 50)


def test_prime_period():
    assert prime_period((0, 1, 0, 1)) == 2
    assert prime_period((0, 0, 1)) == 3


def test_graph_json_roundtrip():
    ts = TransitionStructure.from_edges(["a", "b"], [("a", "b"), ("b", "a"), ("b", "b")], name="ab")
    back = load_graph(ts.to_json())
    assert back.adjacency("a", "b") and not back.adjacency("a", "a")


def test_finite_alphabet_index():
    alph = Alphabet.finite(["x", "y"])
    assert alph.index("y") == 1
