import numpy as np
import pytest

from morsesplit.normal_form import (build_chart, chart_invariants, chart_inverse,
                                    maximizer_phi, psi_forward, sample_chart_points,
                                    verify_behavior_estimates)

from conftest import built, certificate


def chart_for(name):
    _, model, s, red, lf = built(name)
    return build_chart(model, s, red, certificate(name)), lf


@pytest.mark.parametrize("name", ["quartic_saddle", "monkey_saddle", "double_well",
                                  "resonant_pendulum"])
def test_chart_invariants(name):
    chart, lf = chart_for(name)
    entries, report = chart_invariants(chart, lf, count=30)
    bad = [e for e in entries if e["hard"] and not e["passed"]]
    assert not bad, bad
    assert report["normal_form_max_residual"] <= 1e-8


def test_maximizer_is_zero_on_fiber_of_theta():
    chart, _ = chart_for("quartic_saddle")
    s = chart.splitting
    z = np.array([0.1])
    assert np.allclose(maximizer_phi(chart, z, np.zeros(s.n_plus)), 0, atol=1e-12)


def test_psi_and_inverse_are_mutually_inverse():
    chart, _ = chart_for("monkey_saddle")
    zs, ups, ums = sample_chart_points(chart, 10, seed=3)
    for z, up, um in zip(zs, ups, ums):
        x, y = chart_inverse(chart, z, up, um)
        p1, p2 = psi_forward(chart, z, x, y)
        assert np.allclose(p1, up, atol=1e-10) and np.allclose(p2, um, atol=1e-10)


def test_chart_radius_respects_sizes():
    chart, _ = chart_for("resonant_pendulum")
    assert 0 < chart.eps < chart.eps1 < chart.delta
    assert chart.rho == pytest.approx(np.sqrt(chart.p(chart.eps) / 2))


def test_behavior_estimates_are_reported():
    chart, _ = chart_for("quartic_3d")
    rep = verify_behavior_estimates(chart, cert=certificate("quartic_3d"), samples=20)
    assert {"margin_i", "margin_ii", "margin_iii"} <= set(rep)
