import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morsesplit.functional import custom_model
from morsesplit.spectral import (SplittingError, ball_samples, certify_conditions, split,
                                 splitting_invariants)

from conftest import built, certificate


def quadratic(diag, mass=None):
    B = np.diag(diag)
    M = np.eye(len(diag)) if mass is None else mass
    # H-gradient of x.M B x / 2 is B x when M B is symmetric
    return custom_model(lambda x: 0.5 * x @ M @ B @ x, lambda x: B @ x, lambda x: B, len(diag),
                        h_inner=M)


def test_blocks_and_gap():
    s = split(quadratic([-3.0, 0.0, 0.0, 2.0, 5.0]))
    assert (s.nu, s.mu, s.n_plus) == (2, 1, 2)
    assert s.a0 == pytest.approx(1.0)
    assert np.allclose(s.complement_eigenvalues, [-3, 2, 5])


def test_vacuous_gap_defaults():
    s = split(quadratic([0.0, 0.0]))
    assert s.gap_vacuous and s.a0 == 1.0 and s.nu == 2


def test_ambiguous_null_band_is_an_error():
    with pytest.raises(SplittingError):
        split(quadratic([1.0, 3e-8]))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([-2.0, -0.5, 0.0, 0.7, 1.5]), min_size=2, max_size=6),
       st.integers(0, 10_000))
def test_projector_identities_with_mass(diag, seed):
    rng = np.random.default_rng(seed)
    n = len(diag)
    G = rng.standard_normal((n, n))
    M = G @ G.T + n * np.eye(n)
    # an M-self-adjoint operator with the given spectrum
    L = np.linalg.cholesky(M)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Linv = np.linalg.inv(L)
    B = Linv.T @ Q @ np.diag(diag) @ Q.T @ L.T
    m = custom_model(lambda x: 0.5 * x @ M @ B @ x, lambda x: B @ x, lambda x: B, n, h_inner=M)
    s = split(m)
    assert s.nu == diag.count(0.0)
    assert s.mu == sum(d < 0 for d in diag)
    assert all(e["passed"] for e in splitting_invariants(m, s)), splitting_invariants(m, s)


def test_ball_samples_stay_inside():
    pts = ball_samples(3, 0.5, 64, seed=1)
    assert pts.shape == (64, 3)
    assert np.linalg.norm(pts, axis=1).max() <= 0.5 + 1e-12


def test_certificate_on_catalog():
    cert = certificate("quartic_saddle")
    inside = cert.radii < cert.certified_radius
    assert inside.any() and cert.point_pass[inside].all()
    assert not cert.point_pass[~inside].all()
    assert 0 < cert.certified_radius < cert.radius
    assert cert.a1 > 0
    with pytest.raises(ValueError):
        _, model, s, _, _ = built("quartic_saddle")
        certify_conditions(model, s, model.domain_radius, samples=4)
