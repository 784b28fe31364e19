import csv

import numpy as np
import pytest
import sympy as sp

from morsesplit.catalog import _poly
from morsesplit.functional import build_model, cyclic_shift
from morsesplit.reduction import (NonContractionError, ReducedFunctional, ball_grid,
                                  check_equivariance, dump_grid_csv, h_derivative_at_theta,
                                  reduce, reduction_invariants, solve_h)
from morsesplit.spectral import split

from conftest import built


def closed_form_oracle():
    """Solve the complement equation of y^2/2 + x^2 y + x^4 symbolically."""
    x, y = sp.symbols("x y")
    f = y ** 2 / 2 + x ** 2 * y + x ** 4
    (h,) = sp.solve(sp.diff(f, y), y)
    return sp.lambdify(x, h), sp.lambdify(x, sp.simplify(f.subs(y, h)))


def test_graph_coupled_matches_symbolic_solution():
    h_exact, L_exact = closed_form_oracle()
    _, model, s, red, lf = built("graph_coupled")
    sign = np.sign(s.basis_H0[0, 0])
    for z in np.linspace(-0.3, 0.3, 13):
        zc = np.array([sign * z])
        p = red.point(zc)
        assert p[0] == pytest.approx(z, abs=1e-14)
        assert p[1] == pytest.approx(h_exact(z), abs=1e-9)
        assert lf.value(zc) == pytest.approx(L_exact(z), abs=1e-9)


def test_solve_h_is_zero_at_theta_and_for_nondegenerate_points():
    _, model, s, red, _ = built("quartic_min")
    assert np.allclose(red.solve(np.zeros(1)), 0)
    _, model, s, red, lf = built("saddle")
    info = solve_h(model, s, np.zeros(0))
    assert np.allclose(info.x, 0) and info.x.shape == (2,)
    assert lf.value(np.zeros(0)) == 0.0


def test_non_contraction_is_reported():
    m = build_model(_poly("steep", [(0.5, (0, 2)), (1, (0, 4)), (1, (2, 1)), (1, (4, 0))],
                          (0, 0), radius=10))
    s = split(m)
    with pytest.raises(NonContractionError, match="shrink r0"):
        solve_h(m, s, np.array([2.0]))
    red = reduce(m, s)
    assert red.contraction_factor < 0.5 and red.r0 <= 10


def test_h_derivative_shape_and_tangency():
    _, model, s, _, _ = built("monkey_saddle")
    D = h_derivative_at_theta(model, s)
    assert D.shape == (model.dim - s.nu, s.nu)
    assert np.abs(D).max() < 1e-12


def test_ball_grid_counts():
    g = ball_grid(2, 1.0, 17)
    assert np.linalg.norm(g, axis=1).max() <= 1 + 1e-12
    assert any(np.allclose(p, 0) for p in g)


@pytest.mark.parametrize("name", ["quartic_saddle", "monkey_saddle", "resonant_pendulum",
                                  "elliptic_bifurcation"])
def test_reduction_invariants(name):
    _, _, _, _, lf = built(name)
    bad = [e for e in reduction_invariants(lf) if e["hard"] and not e["passed"]]
    assert not bad, bad


def test_newton_mode_agrees_with_fixed_point():
    _, model, s, red, _ = built("quartic_3d")
    z = np.array([0.2])
    a = solve_h(model, s, z).x
    b = solve_h(model, s, z, mode="newton").x
    assert np.allclose(a, b, atol=1e-11)


def test_cyclic_equivariance_and_rejection():
    _, model, s, red, _ = built("resonant_pendulum")
    J = cyclic_shift(model.dim, 3)
    rep = check_equivariance(model, model, J, red, red)
    assert rep["admissible"] and rep["passed"]
    # a scaling is not an isometry, so it is rejected before any comparison
    rep = check_equivariance(model, model, 2 * np.eye(model.dim), red, red)
    assert not rep["admissible"] and "not an admissible J" in rep["reason"]


def test_grid_csv(tmp_path):
    _, model, s, red, lf = built("graph_coupled")
    path = dump_grid_csv(lf, tmp_path / "g.csv", points_per_axis=5)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 5
    assert {"z0", "h0", "h1", "reduced_value", "residual"} <= set(rows[0])
    assert max(float(r["residual"]) for r in rows) < 1e-10


def test_reduced_gradient_is_ambient_projection():
    _, model, s, red, lf = built("monkey_saddle_2d")
    z = np.array([0.05, -0.03])
    g = lf.gradient(z)
    fd = lf.fd_gradient(z)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-12)
    assert isinstance(lf, ReducedFunctional)
