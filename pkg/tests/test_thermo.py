import math

import numpy as np
import pytest

from cmsrepp.kernel import KernelRowError, StochasticKernel
from cmsrepp.model_zoo import build_bernoulli, build_house_of_cards, build_model, build_tree_hoc
from cmsrepp.model_zoo.laws import GeometricTail
from cmsrepp.shift_core import TransitionStructure
from cmsrepp.thermo import (Potential, PressureError, birkhoff_sum, classify_recurrence,
                            embedded_sft_relative_pressure, extremal_index, gurevich_pressure, markov_potential,
                            partition_sums, spectral_radius, weighted_matrix)


def _two_state():
    ts = TransitionStructure.from_edges([0, 1], [(0, 0), (0, 1), (1, 0)])
    mat = {(0, 0): 0.5, (0, 1): 0.5, (1, 0): 1.0}
    return ts, StochasticKernel(ts, lambda a, b: mat.get((a, b), 0.0))


def test_markov_potential_bernoulli():
    m = build_bernoulli(2)
    phi = markov_potential({0: 0.5, 1: 0.5}, m.kernel)
    for a in (0, 1):
        for b in (0, 1):
            assert phi.edge(a, b) == pytest.approx(math.log(0.5), abs=1e-15)


def test_markov_potential_two_state_and_transfer_fixes_measure():
    ts, kern = _two_state()
    pi = {0: 2 / 3, 1: 1 / 3}
    phi = markov_potential(pi, kern)
    assert phi.edge(1, 0) == pytest.approx(math.log(0.5), abs=1e-15)
    # L_phi 1 = 1: sum over preimages a of b of exp(phi(a, b))
    for b in (0, 1):
        assert sum(math.exp(phi.edge(a, b)) for a in ts.in_neighbors(b)) == pytest.approx(1.0, abs=1e-14)
    # invariance of mu on 2-cylinders: mu[ab] = sum_c mu[cab]
    for a, b in [(0, 0), (0, 1), (1, 0)]:
        direct = pi[a] * kern(a, b)
        back = sum(pi[c] * kern(c, a) * kern(a, b) for c in ts.in_neighbors(a))
        assert back == pytest.approx(direct, abs=1e-15)


def test_defective_row_rejected():
    ts = TransitionStructure.from_edges([0, 1], [(0, 1), (1, 0)])
    kern = StochasticKernel(ts, lambda a, b: 0.5)
    with pytest.raises(KernelRowError):
        markov_potential({0: 0.5, 1: 0.5}, kern)


def test_birkhoff_sums():
    ts = TransitionStructure.full_shift(2)
    assert birkhoff_sum(Potential.const(math.log(0.5)), "010", ts, periodic=True) == pytest.approx(3 * math.log(0.5))
    m = build_bernoulli(2)
    assert birkhoff_sum(m.potential().normalized, "01", m.ts) == pytest.approx(math.log(0.5))
    hoc = build_model("hoc_fixed", truncation=32)
    assert birkhoff_sum(hoc.potential().normalized, "00", hoc.ts, periodic=True) == pytest.approx(2 * math.log(0.3))


def test_partition_sums_small_cases():
    m = build_bernoulli(2)
    sums = partition_sums(m.potential().normalized, m.ts, 0, 3)
    assert sums.z[2] == pytest.approx(0.5, abs=1e-15)
    hoc = build_model("hoc_fixed", truncation=32)
    s = partition_sums(hoc.potential().normalized, hoc.ts, 0, 2)
    assert s.z[0] == s.z_star[0] == pytest.approx(0.3)
    p = hoc.kernel
    assert s.z_star[1] == pytest.approx(p(0, 1) * p(1, 0), abs=1e-15)
    q = hoc.return_law.q
    assert s.z_star[1] == pytest.approx((1 - 0.3) * (1 - q(3) / q(2)), abs=1e-15)


def test_partition_sums_transfer_equals_enumeration():
    hoc = build_house_of_cards(alpha=0.5, truncation=32)
    phi = hoc.potential().normalized
    a = partition_sums(phi, hoc.ts, 0, 10)
    b = partition_sums(phi, hoc.ts, 0, 10, method="enumerate")
    np.testing.assert_allclose(a.z, b.z, rtol=1e-13)
    np.testing.assert_allclose(a.z_star, b.z_star, rtol=1e-13)


def test_pressure_bernoulli_both_potentials():
    m = build_bernoulli(2)
    for phi, expected in [(m.potential().normalized, 0.0), (Potential.const(0.0), math.log(2))]:
        rep = gurevich_pressure(partition_sums(phi, m.ts, 0, 30))
        assert rep.P_G == pytest.approx(expected, abs=1e-6)
        eig = math.log(spectral_radius(weighted_matrix(phi, m.ts)))
        assert eig == pytest.approx(expected, abs=1e-10)


def test_pressure_one_state_loop():
    ts = TransitionStructure.from_edges([0], [(0, 0)])
    phi = Potential.const(math.log(3.0))
    rep = gurevich_pressure(partition_sums(phi, ts, 0, 5), matrix=weighted_matrix(phi, ts))
    assert rep.P_G == pytest.approx(math.log(3.0), abs=1e-12)


def test_recurrence_classes():
    hoc = build_house_of_cards(alpha=0.5, truncation=32)
    assert classify_recurrence(hoc.return_law).label == "null_recurrent"
    assert classify_recurrence(GeometricTail(0.5)).label == "positive_recurrent"

    class Defective:
        total_mass = 0.9
        mean = math.inf

    assert classify_recurrence(Defective()).label == "transient"


def test_extremal_index_examples():
    hoc = build_model("hoc_fixed", truncation=32)
    assert extremal_index(hoc.potential().normalized, "0", hoc.ts) == pytest.approx(0.7, abs=1e-15)
    full = TransitionStructure.full_shift(2)
    assert extremal_index(Potential.const(0.0), "0", full, math.log(2)) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        extremal_index(Potential.const(0.0), "00", full, math.log(2))


def test_extremal_index_tree_product():
    tree = build_tree_hoc(0.5, depth=6)
    word = tree.point("cycle_0_01_011").period
    prod = 1.0
    for a, b in zip(word, word[1:] + word[:1]):
        prod *= tree.kernel(a, b)
    assert extremal_index(tree.potential().normalized, word, tree.ts) == pytest.approx(1 - prod, abs=1e-12)


def test_relative_pressure():
    hoc = build_house_of_cards(alpha=0.5, truncation=32)
    p = hoc.kernel
    assert embedded_sft_relative_pressure(p, [0]) == pytest.approx(math.log(p(0, 0)), abs=1e-14)
    a, b, c = p(0, 0), p(0, 1), p(1, 0)
    rho = (a + math.sqrt(a * a + 4 * b * c)) / 2
    assert embedded_sft_relative_pressure(p, [0, 1]) == pytest.approx(math.log(rho), abs=1e-12)
    with pytest.raises(PressureError):
        embedded_sft_relative_pressure(p, [1, 2])
