import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from morsesplit import CriticalPointClassifier, MorsePalaisChart, SplittingReduction


def test_params_and_clone():
    est = SplittingReduction("graph_coupled", r0=0.2)
    assert est.get_params()["r0"] == 0.2
    again = clone(est).set_params(r0=0.1)
    assert again.r0 == 0.1 and est.r0 == 0.2


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SplittingReduction("graph_coupled").transform([[0.1]])


def test_reduction_transform_closed_form():
    est = SplittingReduction("graph_coupled").fit()
    z = np.array([[0.1], [-0.2]])
    sign = np.sign(est.splitting_.basis_H0[0, 0])
    P = est.transform(sign * z)
    assert np.allclose(P[:, 1], -z[:, 0] ** 2, atol=1e-10)
    assert np.allclose(est.reduced_value(sign * z), z[:, 0] ** 4 / 2, atol=1e-10)
    with pytest.raises(ValueError, match="columns"):
        est.transform([[0.1, 0.2]])


def test_chart_round_trip():
    ch = MorsePalaisChart("resonant_pendulum").fit()
    U = np.zeros((2, 32))
    U[:, :2] = [[0.05, 0.02], [-0.1, 0.0]]
    U[:, 2] = 0.3 * ch.chart_radius_
    U[:, -1] = -0.2 * ch.chart_radius_
    W = ch.inverse_transform(U)
    assert np.allclose(ch.transform(W), U, atol=1e-10)


def test_classifier():
    clf = CriticalPointClassifier("monkey_saddle").fit()
    assert clf.critical_groups_ == [0, 2, 0]
    assert clf.degree_ == -2
    assert clf.predict() == "mountain_pass_type"
    assert list(clf.predict(np.zeros(3))) == ["mountain_pass_type"] * 3
    with pytest.raises(ValueError):
        CriticalPointClassifier("saddle", resolution=7).fit()
