"""Spectral splitting of the Hessian at the critical point.

The Hessian operator ``B`` is self-adjoint for the mass inner product, so
the splitting comes from the generalized symmetric eigenproblem
``(M B) v = lam M v``.  Eigenvectors are ``M``-orthonormal, which makes
coordinates in every block plain Euclidean coordinates for the H-norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import qmc

from .functional import FunctionalModel, _entry
from .parallel import pmap
from .tolerances import DEFAULT, Tolerances


class SplittingError(RuntimeError):
    """The kernel of the Hessian cannot be separated from the rest of the spectrum."""


@dataclass(frozen=True)
class SpectralSplitting:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    h_inner: np.ndarray
    null_tol: float
    nu: int
    mu: int
    a0: float
    gap_vacuous: bool = False

    # column blocks, sorted ascending: [H-, H0, H+]
    @property
    def idx_minus(self) -> slice:
        return slice(0, self.mu)

    @property
    def idx_zero(self) -> slice:
        return slice(self.mu, self.mu + self.nu)

    @property
    def idx_plus(self) -> slice:
        return slice(self.mu + self.nu, len(self.eigenvalues))

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_plus(self) -> int:
        return self.dim - self.mu - self.nu

    @property
    def basis_H0(self) -> np.ndarray:
        return self.eigenvectors[:, self.idx_zero]

    @property
    def basis_Hminus(self) -> np.ndarray:
        return self.eigenvectors[:, self.idx_minus]

    @property
    def basis_Hplus(self) -> np.ndarray:
        return self.eigenvectors[:, self.idx_plus]

    @property
    def basis_complement(self) -> np.ndarray:
        """Basis of H- + H+ (minus block first)."""
        return np.hstack([self.basis_Hminus, self.basis_Hplus])

    @property
    def complement_eigenvalues(self) -> np.ndarray:
        lam = self.eigenvalues
        return np.concatenate([lam[self.idx_minus], lam[self.idx_plus]])

    def _projector(self, V: np.ndarray) -> np.ndarray:
        return V @ V.T @ self.h_inner

    @property
    def P0(self) -> np.ndarray:
        return self._projector(self.basis_H0)

    @property
    def Pminus(self) -> np.ndarray:
        return self._projector(self.basis_Hminus)

    @property
    def Pplus(self) -> np.ndarray:
        return self._projector(self.basis_Hplus)

    def coordinates(self, x: np.ndarray) -> np.ndarray:
        """Coefficients of ``x`` in the eigenbasis (H-orthonormal)."""
        return self.eigenvectors.T @ (self.h_inner @ x)

    def summary(self) -> dict:
        return {
            "nu": self.nu,
            "mu": self.mu,
            "a0": self.a0,
            "gap_vacuous": self.gap_vacuous,
            "null_tol": self.null_tol,
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }


def split(model: FunctionalModel, null_tol: float | None = None,
          tol: Tolerances = DEFAULT) -> SpectralSplitting:
    """Split H into kernel, negative and positive spectral subspaces of B(theta)."""
    n = model.dim
    M = np.asarray(model.h_inner, dtype=float)
    MB = M @ np.asarray(model.hessian(np.zeros(n)), dtype=float)
    MB = 0.5 * (MB + MB.T)
    lam, V = linalg.eigh(MB, M)
    scale = float(np.abs(lam).max()) if n else 0.0
    if null_tol is None:
        null_tol = max(tol.null_tol_rel * scale, tol.null_tol_abs)
    if not null_tol > 0:
        raise ValueError("null_tol must be positive")
    ambiguous = (np.abs(lam) > null_tol) & (np.abs(lam) < 10 * null_tol)
    if ambiguous.any():
        raise SplittingError(
            f"eigenvalue {lam[ambiguous][0]:.3e} lies in the ambiguous band "
            f"({null_tol:.1e}, {10 * null_tol:.1e}); the kernel cannot be certified, "
            "change null_tol")
    mu = int((lam < -null_tol).sum())
    nu = int((np.abs(lam) <= null_tol).sum())
    outside = np.abs(lam[np.abs(lam) > null_tol])
    if outside.size:
        a0, vacuous = 0.5 * float(outside.min()), False
    else:
        # no nonzero spectrum: the gap condition holds for any positive a0
        a0, vacuous = 1.0, True
    return SpectralSplitting(lam, V, M, float(null_tol), nu, mu, a0, vacuous)


def splitting_invariants(model: FunctionalModel, s: SpectralSplitting,
                         tol: Tolerances = DEFAULT) -> list[dict]:
    n = s.dim
    I = np.eye(n)
    M = s.h_inner
    P = [s.P0, s.Pminus, s.Pplus]
    B = np.asarray(model.hessian(np.zeros(n)), dtype=float)
    bnorm = max(np.linalg.norm(B, 2), 1e-300)
    lam, V = s.eigenvalues, s.eigenvectors

    sum_err = np.abs(sum(P) - I).max()
    idem = max(np.abs(p @ p - p).max() for p in P)
    selfadj = max(np.abs(M @ p - (M @ p).T).max() for p in P)
    resid = max((np.linalg.norm(B @ V[:, i] - lam[i] * V[:, i]) for i in range(n)), default=0.0)
    C = V.T @ M @ B @ V
    blocks = [s.idx_minus, s.idx_zero, s.idx_plus]
    cross = 0.0
    for i, bi in enumerate(blocks):
        for j, bj in enumerate(blocks):
            if i != j and C[bi, bj].size:
                cross = max(cross, np.abs(C[bi, bj]).max())
    lp = lam[s.idx_plus]
    lm = lam[s.idx_minus]
    gap_margin = min([(lp.min() - 2 * s.a0) if lp.size else np.inf,
                      (-2 * s.a0 - lm.max()) if lm.size else np.inf])
    gap_margin = 0.0 if not np.isfinite(gap_margin) else gap_margin
    gap_rel = -gap_margin / max(2 * s.a0, 1e-300)
    return [
        _entry("spectral", "projector_sum", sum_err, tol.projector * max(1.0, n)),
        _entry("spectral", "projector_idempotent", idem, tol.projector * max(1.0, n)),
        _entry("spectral", "projector_self_adjoint", selfadj,
               tol.projector * max(1.0, np.abs(M).max() * n)),
        _entry("spectral", "eigen_residual", resid / bnorm, tol.eigen_residual),
        _entry("spectral", "block_orthogonality", cross / bnorm, tol.eigen_residual),
        _entry("spectral", "gap_condition", gap_rel, 1e-12),
    ]


@dataclass
class ConditionCertificate:
    checked_points: np.ndarray
    radii: np.ndarray
    a1: float
    a1_values: np.ndarray
    minus_values: np.ndarray
    omega_values: np.ndarray
    passed: dict = field(default_factory=dict)
    point_pass: np.ndarray | None = None
    certified_radius: float = 0.0
    radius: float = 0.0

    def summary(self) -> dict:
        return {
            "radius": self.radius,
            "certified_radius": self.certified_radius,
            "a1": self.a1,
            "samples": int(len(self.radii)),
            "omega_max": float(self.omega_values.max(initial=0.0)),
            "pass": dict(self.passed),
        }


def ball_samples(dim: int, radius: float, samples: int, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points in the Euclidean ball of coefficient space.

    Radii are spread uniformly in [0, radius] (not by volume) so the
    certificate sees small and large radii alike.
    """
    if dim == 0:
        return np.zeros((samples, 0))
    from scipy.stats import norm

    m = int(np.ceil(np.log2(max(samples, 2))))
    sob = qmc.Sobol(d=dim + 1, scramble=True, seed=seed).random_base2(m)[:samples]
    sob = np.clip(sob, 1e-12, 1 - 1e-12)
    g = norm.ppf(sob[:, :dim])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * sob[:, dim:])


def certify_conditions(model: FunctionalModel, s: SpectralSplitting, radius: float,
                       samples: int = 64, seed: int = 0) -> ConditionCertificate:
    """Sample the local contraction conditions on the H-ball of ``radius``.

    At each point ``x``: ``plus_coercive``, the smallest eigenvalue of B(x)
    compressed to H+ is at least a0; ``minus_negative``, the largest
    eigenvalue on H- is at most -a0; ``omega_small``, ``omega(x)`` (the norm of
    ``B(x)-B(theta)`` restricted to H0+H-) is below a0, vacuous when H- is
    trivial.  ``finite_rank`` always holds in finite dimension.  Failures are
    recorded, not raised.
    """
    if samples < 10:
        raise ValueError("certify_conditions needs at least 10 samples")
    if radius > model.domain_radius * (1 + 1e-12):
        raise ValueError("radius exceeds the model's domain radius")
    coeffs = ball_samples(s.dim, radius, samples, seed)
    V = s.eigenvectors
    M = s.h_inner
    lam = s.eigenvalues
    zm = np.r_[np.arange(s.mu), s.mu + np.arange(s.nu)]
    ip, im = s.idx_plus, s.idx_minus

    def probe(c):
        x = V @ c
        C = V.T @ M @ model.hessian(x) @ V
        C = 0.5 * (C + C.T)
        a1 = np.linalg.eigvalsh(C[ip, ip]).min() if s.n_plus else np.inf
        mx = np.linalg.eigvalsh(C[im, im]).max() if s.mu else -np.inf
        D = C - np.diag(lam)
        om = np.linalg.norm(D[:, zm], 2) if zm.size else 0.0
        return a1, mx, om

    vals = np.array(pmap(probe, list(coeffs)), dtype=float).reshape(-1, 3)
    a1v, mxv, omv = vals[:, 0], vals[:, 1], vals[:, 2]
    radii = np.linalg.norm(coeffs, axis=1)
    ok2 = a1v >= s.a0
    ok4 = mxv <= -s.a0
    ok3 = (omv < s.a0) if s.mu else np.ones_like(ok2)
    ok = ok2 & ok3 & ok4
    certified = float(radii[~ok].min()) if (~ok).any() else float(radius)
    inside = radii < certified
    finite = a1v[inside & np.isfinite(a1v)]
    a1 = float(finite.min()) if finite.size else (
        float(lam[ip].min()) if s.n_plus else float("inf"))
    return ConditionCertificate(
        checked_points=coeffs @ V.T,
        radii=radii,
        a1=a1,
        a1_values=a1v,
        minus_values=mxv,
        omega_values=omv,
        passed={"finite_rank": True, "plus_coercive": bool(ok2.all()),
                "omega_small": bool(ok3.all()), "minus_negative": bool(ok4.all())},
        point_pass=ok,
        certified_radius=certified,
        radius=float(radius),
    )
