"""Numerical tolerances shared by all stages.

Every value can be overridden from a run configuration via
:meth:`Tolerances.updated`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    # functional model consistency
    symmetry: float = 1e-10
    fd_gradient_rel: float = 1e-6
    fd_hessian_rel: float = 1e-5
    fd_step: float = 1e-5
    min_rel_step: float = 1e-12
    critical_point: float = 1e-9
    # spectral splitting
    null_tol_rel: float = 1e-8
    null_tol_abs: float = 1e-12
    projector: float = 1e-12
    eigen_residual: float = 1e-10
    # reduction
    residual_tol: float = 1e-11
    iterations_max: int = 500
    contraction_bound: float = 0.5 + 1e-6
    lipschitz_bound: float = 2.0 + 1e-6
    r0_floor: float = 1e-6
    uniqueness: float = 1e-8
    reduced_gradient_rel: float = 1e-5
    reduced_hessian_step: float = 1e-5
    reduced_hessian_factor: float = 1e-4
    equivariance: float = 1e-10
    # normal form
    maximizer_tol: float = 1e-10
    invert_tol: float = 1e-10
    normal_form: float = 1e-8
    # topology
    degree_integer: float = 0.1

    def updated(self, overrides: dict | None) -> "Tolerances":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        for key, val in overrides.items():
            if not val > 0:
                raise ValueError(f"tolerance {key!r} must be positive, got {val!r}")
        return replace(self, **overrides)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT = Tolerances()
