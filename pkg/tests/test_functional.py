import dataclasses
import math

import numpy as np
import pytest

from morsesplit.catalog import elliptic_spec, first_dirichlet_eigenvalue, pendulum_spec
from morsesplit.functional import (ModelError, ProblemSpec, build_model, custom_model,
                                   cyclic_shift, finite_difference_gradient, model_invariants,
                                   parse_problem, periodic_difference)
from morsesplit.tolerances import DEFAULT, Tolerances


def poly(terms, crit, **extra):
    return {"kind": "polynomial",
            "parameters": {"terms": [{"coeffs": c, "powers": p} for c, p in terms], **extra},
            "critical_point": crit}


def test_polynomial_value_and_translation():
    spec = parse_problem(poly([(1, [2, 0]), (-1, [0, 2])], [0.5, 0.0]), name="shifted")
    with pytest.raises(ModelError, match="A\\(0\\)|critical"):
        build_model(spec)
    spec = parse_problem(poly([(1, [4, 0]), (1, [0, 2])], [0, 0]))
    m = build_model(spec)
    x = np.array([0.3, -0.2])
    assert m.value(x) == pytest.approx(0.3 ** 4 + 0.04)
    assert np.allclose(m.gradient(x), [4 * 0.027, -0.4])


def test_translation_moves_theta_to_origin():
    # (x-1)^2 has its minimum at x = 1
    spec = parse_problem(poly([(1, [2]), (-2, [1]), (1, [0])], [1.0]))
    m = build_model(spec)
    assert m.value(np.zeros(1)) == pytest.approx(0.0)
    assert m.gradient(np.array([0.1]))[0] == pytest.approx(0.2)


@pytest.mark.parametrize("doc, msg", [
    ({"kind": "polynomial", "parameters": {"terms": []}, "critical_point": [0], "x": 1},
     "unknown problem keys"),
    ({"kind": "cubic", "parameters": {}, "critical_point": [0]}, "unknown problem kind"),
    ({"kind": "polynomial", "parameters": {"terms": [], "bogus": 1}, "critical_point": [0]},
     "unknown parameters"),
    ({"kind": "elliptic_1d", "parameters": {"grid_size": 8, "nonlinearity": "u",
                                            "primitive": "u**2/2"}, "critical_point": [0] * 8},
     "exactly one"),
])
def test_parse_rejects_bad_documents(doc, msg):
    with pytest.raises(ModelError, match=msg):
        parse_problem(doc)


def test_lagrangian_periodicity_check():
    doc = {"kind": "lagrangian_action",
           "parameters": {"lagrangian": "0.5*v**2 - q**2*t", "period": 1.0, "grid_size": 8},
           "critical_point": [0] * 8}
    with pytest.raises(ModelError, match="periodic"):
        build_model(parse_problem(doc))


def test_pendulum_hessian_matches_dft_oracle():
    # circulant Hessian: eigenvalues (2 sin(pi k/N)/dt)^2 - 1 in the mass inner product
    N, T = 64, 2 * math.pi
    m = build_model(pendulum_spec(N, T))
    dt = T / N
    B = m.hessian(np.zeros(N))
    got = np.sort(np.linalg.eigvals(B).real)
    oracle = np.sort([(2 * math.sin(math.pi * k / N) / dt) ** 2 - 1 for k in range(N)])
    assert np.allclose(got, oracle, atol=1e-9)
    assert (oracle < 0).sum() == 3


def test_elliptic_kernel_is_first_dirichlet_mode():
    N = 31
    m = build_model(elliptic_spec(N))
    B = m.hessian(np.zeros(N))
    phi = np.sin(np.pi * np.arange(1, N + 1) / (N + 1))
    assert np.linalg.norm(B @ phi) < 1e-8 * np.linalg.norm(phi)
    assert first_dirichlet_eigenvalue(N) == pytest.approx(np.pi ** 2, rel=1e-2)


def test_periodic_difference_and_shift():
    D = periodic_difference(6, 0.5)
    assert np.allclose(D @ np.ones(6), 0)
    J = cyclic_shift(6, 1)
    assert np.allclose(J @ np.arange(6), np.roll(np.arange(6), 1))


def test_model_invariants_pass_on_catalog_model():
    m = build_model(pendulum_spec(16))
    entries = model_invariants(m, samples=5)
    assert all(e["passed"] for e in entries), entries


def test_corrupted_gradient_is_caught():
    m = build_model(parse_problem(poly([(1, [4, 0]), (1, [0, 2])], [0, 0])))
    bad = dataclasses.replace(m, gradient=lambda x: m.gradient(x) + 1e-3 * x[::-1] ** 2)
    entries = {e["name"]: e for e in model_invariants(bad, samples=10)}
    assert not entries["fd_gradient"]["passed"]


def test_fd_gradient_rejects_underflowing_step():
    m = build_model(parse_problem(poly([(1, [2])], [0])))
    with pytest.raises(ValueError, match="underflow"):
        finite_difference_gradient(m, np.array([1e10]), step=1e-5)


def test_custom_model_rejects_asymmetric_hessian():
    with pytest.raises(ModelError, match="self-adjoint"):
        custom_model(lambda x: 0.0, lambda x: np.zeros(2),
                     lambda x: np.array([[1.0, 2.0], [0.0, 1.0]]), 2)


def test_spec_round_trips_through_json():
    spec = pendulum_spec(8)
    again = parse_problem(spec.to_json())
    assert isinstance(again, ProblemSpec)
    assert again.parameters == spec.parameters


def test_tolerance_overrides():
    t = DEFAULT.updated({"normal_form": 1e-9})
    assert t.normal_form == 1e-9 and DEFAULT.normal_form == 1e-8
    with pytest.raises(KeyError):
        DEFAULT.updated({"nope": 1.0})
    with pytest.raises(ValueError):
        DEFAULT.updated({"normal_form": 0.0})
    assert isinstance(t, Tolerances) and "degree_integer" in t.as_dict()
