import math

import numpy as np
import pytest

from cmsrepp.measure_scaling import (bounded_distortion_check, cylinder_measure, exact_power_profile,
                                     gamma_scaling, kac_profile, normalizing_sequence, pareto_constant,
                                     return_tail, rv_index_estimate, wandering_rate)
from cmsrepp.model_zoo import build_bernoulli, build_finite_chain, build_house_of_cards
from cmsrepp.model_zoo.laws import GeometricTail


@pytest.fixture(scope="module")
def hoc():
    return build_house_of_cards(alpha=0.5, truncation=128)


def test_cylinder_measures(hoc):
    bern = build_bernoulli(2)
    assert cylinder_measure(bern.measure, "010") == pytest.approx(1 / 8, abs=1e-16)
    assert cylinder_measure(bern.measure, "1") == pytest.approx(0.5)
    assert hoc.measure.pi(0) == 1.0
    assert cylinder_measure(hoc.measure, "01") == pytest.approx(hoc.return_law.q(2), abs=1e-15)


def test_return_tail_closed_form_matches_dp(hoc):
    for n in range(0, 51, 5):
        closed = return_tail(hoc, 0, n, method="closed")
        assert closed == pytest.approx((n + 1) ** -0.5, rel=1e-14)
        assert return_tail(hoc, 0, n, method="dp") == pytest.approx(closed, rel=1e-12)


def test_return_tail_deterministic_cycle():
    cyc = build_finite_chain([[0, 1], [1, 0]])
    assert return_tail(cyc, 0, 2) == 0.0
    assert return_tail(cyc, 0, 0) == pytest.approx(0.5)


def test_wandering_rate(hoc):
    target = hoc.cylinder_target("0")
    assert wandering_rate(hoc, target, 1) == pytest.approx(1.0)
    assert wandering_rate(hoc, target, 3) == pytest.approx(1 + 2 ** -0.5 + 3 ** -0.5, rel=1e-14)
    cyc = build_finite_chain([[0, 1], [1, 0]])
    assert wandering_rate(cyc, cyc.cylinder_target("0"), 10) == pytest.approx(2 * 0.5)


def test_power_profile_for_exact_tail(hoc):
    prof = normalizing_sequence(hoc, 0, 1 << 20)
    assert prof.provenance == "exact_power"
    # a(t) = c_alpha t^alpha with mu[0] = 1 and q_n = n^{-1/2}
    assert prof.a(100) == pytest.approx(pareto_constant(0.5) * 10, rel=1e-14)


def test_positive_recurrent_profile_is_kac():
    geo = build_house_of_cards(GeometricTail(0.5), truncation=64)
    assert normalizing_sequence(geo, 0, 1000).kac
    assert kac_profile(2.0).gamma(0.5) == pytest.approx(0.25)


def test_gamma_inversion():
    assert gamma_scaling(exact_power_profile(0.5, 1.0), 0.01) == pytest.approx(1e-4)
    prof = exact_power_profile(0.3, 2.5)
    s = 0.07
    assert prof.gamma(s) == pytest.approx((2.5 * s) ** (1 / 0.3))
    # inverse then forward
    assert prof.a(1 / prof.gamma(s)) == pytest.approx(1 / s)


def test_srw_profile_slope_and_roundtrip(srw):
    prof = srw.scaling_profile()
    ns = np.unique(np.geomspace(16, 1 << 14, 24).astype(int))
    slope = np.polyfit(np.log(ns), np.log([prof.a(n) for n in ns]), 1)[0]
    assert 0.45 <= slope <= 0.55
    # Z_k vanishes at odd k, so a_n is flat on pairs and the lattice step is 2
    g = prof.gamma(1 / prof.a(1024))
    assert prof.a(1025) == prof.a(1024)
    assert abs(1 / g - 1024) <= 2


def test_rv_estimates():
    ns = np.geomspace(10, 1e5, 30)
    assert rv_index_estimate([(n, n ** -0.5) for n in ns]).alpha == pytest.approx(0.5, abs=1e-12)
    est = rv_index_estimate([(n, n ** -0.7 * (1 + 0.1 / math.log(n))) for n in ns])
    assert 0.65 <= est.alpha <= 0.75
    ns = np.arange(1, 200, 5)
    with pytest.warns(UserWarning):
        r = rv_index_estimate([(n, math.exp(-n / 20)) for n in ns])
    assert r.warning and r.alpha > 1


def test_bounded_distortion_is_one(hoc):
    bern = build_bernoulli(2)
    assert bounded_distortion_check(bern.measure, "01", "10")["ratio"] == pytest.approx(1.0, abs=1e-12)
    assert bounded_distortion_check(hoc.measure, "0", "012")["ratio"] == pytest.approx(1.0, abs=1e-12)
    assert bounded_distortion_check(hoc.measure, "0123", "45")["ratio"] == pytest.approx(1.0, abs=1e-12)


def test_stationarity(hoc):
    assert hoc.measure.stationarity_residual() <= 1e-10
