import math

import numpy as np
import pytest

from cmsrepp.limit_laws import GAlphaViolation, pareto_constant
from cmsrepp.model_zoo import (DriftError, build_bernoulli, build_hoc_renewal, build_house_of_cards, build_model,
                               build_multi_tower, build_renewal, build_tree_hoc, build_z_extension,
                               embedded_sft_target, realize_target_law)
from cmsrepp.model_zoo.laws import GeometricTail, PowerTail, TabulatedTail
from cmsrepp.shift_core import classify_point
from cmsrepp.thermo import embedded_sft_relative_pressure

from oracles import first_return_masses

C_HALF = pareto_constant(0.5)


def test_hoc_hazard_and_return_law():
    hoc = build_house_of_cards(alpha=0.5, truncation=64)
    assert hoc.kernel(1, 2) == pytest.approx(math.sqrt(2 / 3), rel=1e-15)
    masses = first_return_masses(hoc, (0,), 12)
    q = hoc.return_law.q
    for k in range(1, 13):
        assert masses[k] == pytest.approx(q(k) - q(k + 1), abs=1e-15)
    assert hoc.invariant_report()["row_sum_residual"] <= 1e-12
    assert hoc.invariant_report()["stationarity_residual"] <= 1e-10


def test_hoc_degenerate_and_geometric():
    loop = build_house_of_cards(TabulatedTail([1.0, 0.0]), truncation=8)
    assert loop.kernel(0, 0) == 1.0
    geo = build_house_of_cards(GeometricTail(0.5), truncation=64)
    assert geo.recurrence().label == "positive_recurrent"


def test_tree_hoc_kernel_and_tail():
    tree = build_tree_hoc(0.5, depth=12)
    assert tree.kernel("0", "0") == pytest.approx(0.5)
    assert tree.kernel("0", "00") == pytest.approx(0.25)
    assert tree.kernel("0", "01") == pytest.approx(0.25)
    from cmsrepp.measure_scaling import rv_index_estimate
    ns = np.unique(np.geomspace(10, 1e4, 30).astype(int))
    est = rv_index_estimate([(n, tree.return_law.q(n)) for n in ns])
    assert 0.45 <= est.alpha <= 0.55


def test_renewal_points_all_infinitely_recurrent():
    ren = build_renewal(alpha=0.5)
    assert ren.recurrence().label == "null_recurrent"
    for name, p in ren.named_points.items():
        kind = classify_point(p, ren.ts).kind
        assert kind in ("infinitely_recurrent", "periodic"), name
    assert ren.invariant_report()["row_sum_residual"] <= 1e-12
    assert build_renewal(GeometricTail(0.5)).recurrence().label == "positive_recurrent"


def test_multi_tower_shares():
    two = build_multi_tower([PowerTail(0.5), PowerTail(0.5)], [0.5, 0.5])
    np.testing.assert_allclose(two.return_law.tower_shares(), [0.5, 0.5], atol=1e-12)
    light = build_multi_tower([PowerTail(0.5), GeometricTail(0.5)], [0.5, 0.5])
    np.testing.assert_allclose(light.return_law.tower_shares(), [1.0, 0.0], atol=1e-12)


def test_single_tower_matches_house_of_cards():
    one = build_multi_tower([PowerTail(0.5)], [1.0], truncation=64)
    hoc = build_house_of_cards(alpha=0.5, truncation=64)
    assert one.kernel(0, 0) == pytest.approx(hoc.kernel(0, 0), abs=1e-15)
    for k in range(1, 40):
        assert one.kernel((0, k), (0, k + 1)) == pytest.approx(hoc.kernel(k, k + 1), abs=1e-15)
        assert one.kernel((0, k), 0) == pytest.approx(hoc.kernel(k, 0), abs=1e-15)


def test_z_extension_rules():
    with pytest.raises(DriftError):
        build_z_extension(build_bernoulli(2), {(0,): 0, (1,): 0})
    with pytest.raises(DriftError):
        build_z_extension(build_bernoulli(2), {(0,): 1, (1,): 0})


def test_srw_periodic_theta(srw):
    assert srw.alpha == 0.5
    assert srw.extremal_index((0, 1)) == pytest.approx(0.75, abs=1e-15)


def test_full_retention_recovers_plain_tower():
    law = PowerTail(0.5)
    chain = build_hoc_renewal(law, lambda k, n: 1.0 if k >= n else 0.0, n_imag=5, k_real=40, support=200,
                              beyond="full")
    # B_n = [0 1i ... (n-1)i] carries mu([0] ∩ {r >= n}) = q_n
    assert chain.level_mass(3) == pytest.approx(law.q(3), rel=1e-12)
    word = (0,) + tuple(("i", j) for j in range(1, 4))
    masses = first_return_masses(chain, word, 6)
    # returns later than level 5i + 1 leave through the truncation remainder
    for k in range(4, 7):
        assert masses[k] == pytest.approx(law.p(k), abs=1e-12)
    assert chain.kernel.remainder(("i", 5)) == pytest.approx(law.q(7) / law.q(6), rel=1e-12)


def test_retention_identity_custom_table():
    law = PowerTail(0.5)

    def c(k, n):
        if n == 1:
            return 1.0
        if n > 6 or k < n:
            return 0.0
        return (1.0 if k % 3 else 0.5) / (1 + 0.1 * n)

    chain = build_hoc_renewal(law, c, n_imag=6, k_real=60, support=400)
    assert chain.measure.stationarity_residual() <= 1e-12
    for n in range(1, 7):
        word = (0,) + tuple(("i", j) for j in range(1, n))
        masses = first_return_masses(chain, word, 30)
        for k in range(n, 31):
            assert masses[k] == pytest.approx(c(k, n) * law.p(k), abs=1e-12), (n, k)


def _half_pareto(t):
    return min(1.0, 0.5 * C_HALF * t ** -0.5) if t > 0 else 1.0


def test_realizer_boundary_law():
    plan = realize_target_law(lambda t: min(1.0, C_HALF * t ** -0.5) if t > 0 else 1.0, 0.5, n_levels=3)
    for n in range(1, 4):
        ks = list(plan.grid(n))
        branch = [i for i, k in enumerate(ks) if 1 + k * 2.0 ** -n >= C_HALF ** 2]
        np.testing.assert_allclose(plan.eta[n][branch], 1.0, atol=1e-9)
        assert plan.cu[n] == 0


def test_realizer_half_pareto_eta():
    plan = realize_target_law(_half_pareto, 0.5, n_levels=3)
    flat_end = (0.5 * C_HALF) ** 2
    for n in range(1, 4):
        for i, k in enumerate(plan.grid(n)):
            a, b = 1 + k * 2.0 ** -n, 1 + (k + 1) * 2.0 ** -n
            if a >= flat_end:
                assert plan.eta[n][i] == pytest.approx(0.5, abs=1e-9)
            elif b <= flat_end:
                assert plan.eta[n][i] == pytest.approx(0.0, abs=1e-12)


def test_realizer_rejects_outside_g_alpha():
    with pytest.raises(GAlphaViolation):
        realize_target_law(lambda t: min(1.0, 2 * C_HALF * t ** -0.5) if t > 0 else 1.0, 0.5, n_levels=2)


def test_realizer_table_invariants():
    plan = realize_target_law(_half_pareto, 0.5, n_levels=4)
    for k in range(1, 400):
        assert plan.c(k, 1) == 1.0
        for n in range(1, 5):
            assert plan.c(k, n + 1) <= plan.c(k, n) + 1e-15
            if k < n:
                assert plan.c(k, n) == 0.0


def test_embedded_sft_target_masses():
    hoc = build_model("hoc_fixed", truncation=32)
    assert embedded_sft_target(hoc, [0], 3).measure == pytest.approx(0.3 ** 2, abs=1e-15)
    bern = build_bernoulli(3)
    assert embedded_sft_target(bern, [0, 1, 2], 1).measure == pytest.approx(1.0)
    hoc = build_house_of_cards(alpha=0.5, truncation=64)
    e = math.exp(embedded_sft_relative_pressure(hoc.kernel, [0, 1]))
    ratio = embedded_sft_target(hoc, [0, 1], 26).measure / embedded_sft_target(hoc, [0, 1], 25).measure
    assert abs(ratio - e) <= 1e-3


def test_model_json_roundtrip():
    import json
    doc = json.loads(build_house_of_cards(alpha=0.5, truncation=32).to_json())
    assert doc["family"] == "hoc" and doc["alpha"] == 0.5
    from cmsrepp.model_zoo.laws import law_from_json
    assert law_from_json(doc["return_law"]).q(9) == pytest.approx(1 / 3)


def test_realizer_schedule_parameters():
    default = realize_target_law(_half_pareto, 0.5, n_levels=3)
    wide = realize_target_law(_half_pareto, 0.5, n_levels=3, M_seq=lambda n: 2 * n + 2)
    assert default.M[1] == 2 and wide.M[1] == 4
    # u_2 is the first integer with q(u) <= m_1 q(M_1 s_1); q = k^{-1/2} makes it 4 M_1 s_1
    assert default.u[2] == 4 * default.M[1] * default.s[1]
    assert wide.u[2] == 4 * wide.M[1] * wide.s[1]
