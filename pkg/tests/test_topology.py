import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morsesplit.catalog import catalog
from morsesplit.topology import (TopologyError, brouwer_degree, check_isolated, classify, euler_sum,
                                 full_space_groups_oracle, local_homology, rational_rank,
                                 relative_homology, shift, star_cubes)

from conftest import built


def test_exact_rank():
    assert rational_rank(np.array([[1, 2], [2, 4]])) == 1
    assert rational_rank(np.zeros((0, 3))) == 0
    # determinant 1, but floating point rank calls it singular
    m = [[10 ** 8, 10 ** 8 + 1], [10 ** 8 - 1, 10 ** 8]]
    assert np.linalg.matrix_rank(np.array(m, dtype=float)) == 1
    assert rational_rank(m) == 2


def test_star_of_a_vertex():
    assert len(star_cubes((0, 0))) == 9
    assert len(star_cubes((0, 0, 0))) == 27


@pytest.mark.parametrize("f, betti", [
    (lambda x: x[0] ** 2 + x[1] ** 2, [1, 0, 0]),
    (lambda x: x[0] ** 2 - x[1] ** 2, [0, 1, 0]),
    (lambda x: -x[0] ** 2 - x[1] ** 2, [0, 0, 1]),
    (lambda x: x[0] ** 3 - 3 * x[0] * x[1] ** 2, [0, 2, 0]),
    (lambda x: x[0] ** 3 + x[1] ** 2, [0, 0, 0]),
])
def test_local_homology_oracles(f, betti):
    got = local_homology(f, 2, 0.5, 16)
    assert list(got) + [0] * (3 - len(got)) == betti


@pytest.mark.parametrize("k", [1, 2, 3, -1, -2])
def test_winding_degree_of_complex_powers(k):
    def grad(z):
        w = complex(z[0], z[1])
        v = w ** k if k > 0 else np.conj(w) ** (-k)
        return np.array([v.real, v.imag])
    assert brouwer_degree(grad, 2, 0.5) == k


@pytest.mark.parametrize("signs, deg", [((1, 1, 1), 1), ((1, 1, -1), -1), ((-1, -1, -1), -1)])
def test_solid_angle_degree_of_diagonal_maps(signs, deg):
    assert brouwer_degree(lambda z: np.array(signs) * z, 3, 0.5) == deg


def test_sign_degree_in_one_dimension():
    assert brouwer_degree(lambda z: z ** 3, 1, 0.5) == 1
    assert brouwer_degree(lambda z: -z, 1, 0.5) == -1
    assert brouwer_degree(lambda z: z ** 2, 1, 0.5) == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=4), st.integers(0, 4))
def test_shift_and_euler(reduced, mu):
    rep = shift(reduced, mu, len(reduced) - 1)
    assert rep.betti_shifted[mu:] == reduced
    assert euler_sum(rep.betti_shifted) == (-1) ** mu * euler_sum(reduced)


def test_classification_precedence():
    assert classify([1, 0], 0, 0) == "local_minimum"
    assert classify([0, 1, 0], 1, 2) == "mountain_pass_type"
    assert classify([0, 1, 0], 1, 1) == "nondegenerate_index_mu"
    assert classify([0, 0, 0], 0, 1) == "general"


@pytest.mark.parametrize("name", [n for n, e in catalog().items()
                                  if e.spec and len(e.spec.critical_point) <= 3 and e.nu >= 1])
def test_full_space_oracle_matches_expected(name):
    entry, model, s, red, _ = built(name)
    full = full_space_groups_oracle(model, red.r0, 32)
    assert list(full) == list(entry.groups) + [0] * (len(full) - len(entry.groups))


def test_non_isolated_point_is_rejected():
    with pytest.raises(TopologyError, match="not isolated"):
        check_isolated(lambda x: np.array([2 * x[0], 0.0]), 2, 0.5, 16)
