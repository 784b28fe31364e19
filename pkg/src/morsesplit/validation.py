"""Input checks shared by the estimator classes."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .catalog import catalog
from .functional import FunctionalModel, ProblemSpec, build_model, parse_problem
from .tolerances import DEFAULT, Tolerances

__all__ = ["check_array", "check_is_fitted", "check_points", "resolve_model"]


def check_points(X, dim: int, name: str = "X") -> np.ndarray:
    """2-D float array with ``dim`` columns; a 1-D input is one point."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if dim == 0:
        if arr.shape[-1] != 0:
            raise ValueError(f"{name} must have 0 columns, got {arr.shape[-1]}")
        return arr.reshape(len(arr), 0)
    arr = check_array(arr, dtype=float)
    if arr.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {arr.shape[1]}")
    return arr


def resolve_model(problem, tol: Tolerances = DEFAULT) -> FunctionalModel:
    """Accept a model, a problem spec, a catalog name or a problem dict."""
    if isinstance(problem, FunctionalModel):
        return problem
    if isinstance(problem, ProblemSpec):
        return build_model(problem, tol)
    if isinstance(problem, str):
        cat = catalog()
        if problem not in cat:
            raise ValueError(f"unknown catalog problem {problem!r}")
        return build_model(cat[problem].spec, tol)
    if isinstance(problem, dict):
        return build_model(parse_problem(problem), tol)
    raise TypeError(f"cannot build a model from {type(problem).__name__}")
