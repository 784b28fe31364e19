from functools import lru_cache

import pytest

from morsesplit.catalog import catalog
from morsesplit.functional import build_model
from morsesplit.reduction import ReducedFunctional, reduce
from morsesplit.spectral import certify_conditions, split


@lru_cache(maxsize=None)
def built(name: str):
    """Model, splitting, reduction and reduced functional for a catalog entry."""
    entry = catalog()[name]
    model = build_model(entry.spec)
    s = split(model)
    red = reduce(model, s)
    return entry, model, s, red, ReducedFunctional(red)


@lru_cache(maxsize=None)
def certificate(name: str):
    _, model, s, _, _ = built(name)
    return certify_conditions(model, s, model.domain_radius, 64, 0)


@pytest.fixture(scope="session")
def names():
    return list(catalog())
