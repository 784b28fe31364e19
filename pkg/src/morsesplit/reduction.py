"""Reduction map, reduced functional and equivariance checks.

Points are handled in the H-orthonormal eigencoordinates of the splitting:
``z`` holds coefficients on the kernel basis, ``x`` coefficients on the
complement basis (negative block first).  In these coordinates
``B(theta)`` restricted to the complement is the diagonal of its nonzero
eigenvalues, so the contraction map is

    S(z, x) = -Lambda^{-1} V_c^T M A(V_0 z + V_c x) + x.
"""
from __future__ import annotations

import csv
import itertools
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .functional import FunctionalModel, _entry
from .parallel import pmap
from .spectral import SpectralSplitting, ball_samples
from .tolerances import DEFAULT, Tolerances


class ReductionError(RuntimeError):
    """The reduction map could not be constructed."""


class NonContractionError(ReductionError):
    """Fixed-point steps stopped shrinking; the radius is too large."""

    def __init__(self, z, ratios):
        self.z = np.asarray(z, dtype=float)
        self.ratios = list(ratios)
        super().__init__(
            f"S(z, .) is not contracting at z={np.round(self.z, 6).tolist()} "
            f"(last step ratios {np.round(self.ratios[-3:], 3).tolist()}); shrink r0")


@dataclass
class SolveInfo:
    x: np.ndarray
    iterations: int
    ratios: list
    residual: float


def _point(s: SpectralSplitting, z, x) -> np.ndarray:
    return s.basis_H0 @ z + s.basis_complement @ x


def complement_residual(model: FunctionalModel, s: SpectralSplitting, z, x) -> np.ndarray:
    """Coordinates of ``(I - P0) A(z + x)`` on the complement basis."""
    return s.basis_complement.T @ (model.h_inner @ model.gradient(_point(s, z, x)))


def contraction_map(model: FunctionalModel, s: SpectralSplitting, z, x) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(s.nu)
    x = np.asarray(x, dtype=float).reshape(s.dim - s.nu)
    lam = s.complement_eigenvalues
    if lam.size and np.abs(lam).min() <= s.null_tol:
        raise ReductionError("restricted Hessian block is singular; the splitting is broken")
    return x - complement_residual(model, s, z, x) / lam


def solve_h(model: FunctionalModel, s: SpectralSplitting, z, residual_tol: float | None = None,
            iterations_max: int | None = None, x0=None, mode: str = "fixed_point",
            tol: Tolerances = DEFAULT) -> SolveInfo:
    """Fixed-point iteration ``x <- S(z, x)`` from ``x0`` (default theta).

    Stops once both the step (X-norm) and the complement residual (H-norm)
    are below ``residual_tol``.  ``mode="newton"`` uses the implicit
    derivative of ``h`` instead; it is an accelerator, not the reference.
    """
    residual_tol = tol.residual_tol if residual_tol is None else residual_tol
    iterations_max = tol.iterations_max if iterations_max is None else iterations_max
    z = np.asarray(z, dtype=float).reshape(s.nu)
    m = s.dim - s.nu
    x = np.zeros(m) if x0 is None else np.asarray(x0, dtype=float).reshape(m).copy()
    if m == 0:
        return SolveInfo(x, 0, [], 0.0)
    Vc = s.basis_complement
    lam = s.complement_eigenvalues
    M = model.h_inner
    ratios: list[float] = []
    prev_step = None
    bad = 0
    for k in range(1, iterations_max + 1):
        r = complement_residual(model, s, z, x)
        res = float(np.linalg.norm(r))
        if mode == "newton":
            C = Vc.T @ M @ model.hessian(_point(s, z, x)) @ Vc
            dx = -np.linalg.solve(0.5 * (C + C.T), r)
        elif mode == "fixed_point":
            dx = -r / lam
        else:
            raise ValueError(f"unknown solver mode {mode!r}")
        step = model.x_norm(Vc @ dx)
        if res <= residual_tol and step <= residual_tol:
            return SolveInfo(x, k - 1, ratios, res)
        x = x + dx
        # ratios at round-off level carry no information
        if prev_step is not None and prev_step > 1e-13:
            ratio = step / prev_step
            ratios.append(ratio)
            bad = bad + 1 if ratio >= 1 else 0
            if bad >= 3:
                raise NonContractionError(z, ratios)
        prev_step = step
    res = float(np.linalg.norm(complement_residual(model, s, z, x)))
    if res <= residual_tol:
        return SolveInfo(x, iterations_max, ratios, res)
    raise ReductionError(
        f"fixed-point iteration did not converge in {iterations_max} steps at "
        f"z={np.round(z, 6).tolist()} (residual {res:.2e}); shrink r0 or raise iterations_max")


def h_derivative_at_theta(model: FunctionalModel, s: SpectralSplitting) -> np.ndarray:
    """Matrix of ``h'(theta)``, shape (n - nu, nu), from the implicit-function formula."""
    Vc, V0 = s.basis_complement, s.basis_H0
    B = model.hessian(np.zeros(s.dim))
    C = Vc.T @ model.h_inner @ B @ Vc
    rhs = Vc.T @ model.h_inner @ B @ V0
    if C.size == 0:
        return np.zeros((s.dim - s.nu, s.nu))
    return -np.linalg.solve(0.5 * (C + C.T), rhs)


def ball_grid(nu: int, radius: float, points_per_axis: int = 17) -> np.ndarray:
    """Regular grid points of [-radius, radius]^nu that lie in the closed ball."""
    if nu == 0:
        return np.zeros((1, 0))
    t = np.linspace(-radius, radius, points_per_axis)
    pts = np.array(list(itertools.product(t, repeat=nu)))
    return pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)]


@dataclass
class ReductionResult:
    model: FunctionalModel
    splitting: SpectralSplitting
    r0: float
    contraction_factor: float
    lipschitz_h: float
    lipschitz_h_H: float
    residual_tol: float
    iterations_max: int
    tol: Tolerances = DEFAULT
    mode: str = "fixed_point"
    attempts: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def solve(self, z) -> np.ndarray:
        """Complement coordinates of h(z); results are cached per point."""
        z = np.asarray(z, dtype=float).reshape(self.splitting.nu)
        key = z.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        x = solve_h(self.model, self.splitting, z, self.residual_tol,
                    self.iterations_max, mode=self.mode, tol=self.tol).x
        x.setflags(write=False)
        with self._lock:
            self._cache.setdefault(key, x)
        return self._cache[key]

    def h(self, z) -> np.ndarray:
        """h(z) as an ambient vector."""
        return self.splitting.basis_complement @ self.solve(z)

    def point(self, z) -> np.ndarray:
        """z + h(z) as an ambient vector."""
        z = np.asarray(z, dtype=float).reshape(self.splitting.nu)
        return self.splitting.basis_H0 @ z + self.h(z)

    def residual(self, z) -> float:
        return float(np.linalg.norm(
            complement_residual(self.model, self.splitting, z, self.solve(z))))

    def grid(self, points_per_axis: int = 17, radius: float | None = None) -> np.ndarray:
        return ball_grid(self.splitting.nu, self.r0 if radius is None else radius,
                         points_per_axis)

    def summary(self) -> dict:
        return {
            "r0": self.r0,
            "contraction_factor": self.contraction_factor,
            "lipschitz_h_X": self.lipschitz_h,
            "lipschitz_h_H": self.lipschitz_h_H,
            "residual_tol": self.residual_tol,
            "mode": self.mode,
            "r0_attempts": self.attempts,
        }


def _pair_contraction(model, s, zs, radius, rng, pairs_per_z=8) -> float:
    """Empirical Lipschitz constant of S(z, .) in the X-norm on the X-ball."""
    m = s.dim - s.nu
    if m == 0:
        return 0.0
    Vc = s.basis_complement
    worst = 0.0
    for z in zs:
        for _ in range(pairs_per_z):
            pts = []
            for _ in range(2):
                d = rng.standard_normal(m)
                d *= radius * rng.uniform() / max(model.x_norm(Vc @ d), 1e-300)
                pts.append(d)
            x1, x2 = pts
            den = model.x_norm(Vc @ (x1 - x2))
            if den <= 1e-14 * radius:
                continue
            num = model.x_norm(Vc @ (contraction_map(model, s, z, x1)
                                     - contraction_map(model, s, z, x2)))
            worst = max(worst, num / den)
    return worst


def _lipschitz(model, s, zs, xs, max_pairs=20000, seed=0):
    """Largest ratio ||h(z1)-h(z2)|| / ||z1-z2|| over grid pairs, X- and H-norms."""
    n = len(zs)
    if n < 2 or s.nu == 0:
        return 0.0, 0.0
    pairs = list(itertools.combinations(range(n), 2))
    if len(pairs) > max_pairs:
        rng = np.random.default_rng(seed)
        pairs = [pairs[i] for i in rng.choice(len(pairs), max_pairs, replace=False)]
    V0, Vc = s.basis_H0, s.basis_complement
    H0 = zs @ V0.T
    Hc = xs @ Vc.T
    lx = lh = 0.0
    for i, j in pairs:
        dz = H0[i] - H0[j]
        dh = Hc[i] - Hc[j]
        lx = max(lx, model.x_norm(dh) / model.x_norm(dz))
        lh = max(lh, np.linalg.norm(xs[i] - xs[j]) / np.linalg.norm(zs[i] - zs[j]))
    return lx, lh


def reduce(model: FunctionalModel, s: SpectralSplitting, r0: float | None = None,
           tol: Tolerances = DEFAULT, seed: int = 0, mode: str = "fixed_point",
           points_per_axis: int = 9) -> ReductionResult:
    """Find a certified radius r0 and return the reduction map on its ball.

    Starting at half the domain radius, the radius is halved until every
    probe point converges, the empirical contraction factor stays below
    1/2 and the X-Lipschitz constant of h stays below 2.
    """
    r = 0.5 * model.domain_radius if r0 is None else float(r0)
    rng = np.random.default_rng(seed)
    attempts = []
    while r >= tol.r0_floor:
        probe = ball_grid(s.nu, r, points_per_axis)
        if s.nu:
            probe = np.vstack([probe, ball_samples(s.nu, r, 16, seed)])
        try:
            infos = pmap(lambda z: solve_h(model, s, z, tol=tol, mode=mode), list(probe))
        except ReductionError as exc:
            attempts.append({"r": r, "failure": str(exc)})
            r *= 0.5
            continue
        xs = np.array([i.x for i in infos]).reshape(len(probe), s.dim - s.nu)
        ratios = [q for i in infos for q in i.ratios] if mode == "fixed_point" else []
        reach = max((np.linalg.norm(_point(s, z, x)) for z, x in zip(probe, xs)), default=0.0)
        xr = max((model.x_norm(s.basis_complement @ x) for x in xs), default=0.0)
        pair = _pair_contraction(model, s, probe[:: max(1, len(probe) // 6)],
                                 max(2 * xr, r), rng)
        factor = max([pair] + ratios)
        lx, lh = _lipschitz(model, s, probe, xs, seed=seed)
        ok = (factor < tol.contraction_bound and lx <= tol.lipschitz_bound
              and reach <= model.domain_radius)
        attempts.append({"r": r, "contraction_factor": factor, "lipschitz_h_X": lx,
                         "reach": reach, "accepted": bool(ok)})
        if ok:
            red = ReductionResult(model, s, r, factor, lx, lh, tol.residual_tol,
                                  tol.iterations_max, tol, mode, attempts)
            for z, x in zip(probe, xs):
                x.setflags(write=False)
                red._cache[np.asarray(z, dtype=float).tobytes()] = x
            return red
        r *= 0.5
    raise ReductionError(
        f"no radius above {tol.r0_floor:g} passes the contraction certificate; "
        "the problem may violate the gap condition near theta")


# ---------------------------------------------------------------------------
# reduced functional


@dataclass
class ReducedFunctional:
    base: ReductionResult
    hessian_at_theta_zero: bool = True

    @property
    def nu(self) -> int:
        return self.base.splitting.nu

    def value(self, z) -> float:
        return float(self.base.model.value(self.base.point(z)))

    def gradient(self, z) -> np.ndarray:
        """Gradient in kernel coordinates: ``V_0^T M A(z + h(z))``."""
        s = self.base.splitting
        A = self.base.model.gradient(self.base.point(z))
        return s.basis_H0.T @ (self.base.model.h_inner @ A)

    def gradient_ambient(self, z) -> np.ndarray:
        s = self.base.splitting
        return s.P0 @ self.base.model.gradient(self.base.point(z))

    def fd_gradient(self, z, step: float = 1e-6) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        g = np.empty(self.nu)
        for i in range(self.nu):
            e = np.zeros(self.nu)
            e[i] = step
            g[i] = (self.value(z + e) - self.value(z - e)) / (2 * step)
        return g

    def fd_hessian(self, z, step: float) -> np.ndarray:
        # differences of the gradient: value differences hit a roundoff floor of
        # about eps*|terms|/step^2, far above the quartic signal near theta
        z = np.asarray(z, dtype=float)
        n = self.nu
        H = np.zeros((n, n))
        for j, e in enumerate(np.eye(n) * step):
            H[:, j] = (self.gradient(z + e) - self.gradient(z - e)) / (2 * step)
        return 0.5 * (H + H.T)


def reduced_functional(model: FunctionalModel, s: SpectralSplitting,
                       red: ReductionResult) -> ReducedFunctional:
    if red.model is not model or red.splitting is not s:
        raise ValueError("reduction was built for a different model or splitting")
    return ReducedFunctional(red)


def gradient_check_points(nu: int, r0: float, count: int = 10, seed: int = 0) -> np.ndarray:
    """Sample points with r0/4 <= |z| <= 3 r0/4 (gradients there are not tiny)."""
    if nu == 0:
        return np.zeros((0, 0))
    pts = ball_samples(nu, 1.0, count, seed)
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    dirs = pts / np.maximum(norms, 1e-300)
    radii = r0 * (0.25 + 0.5 * norms)
    return dirs * radii


def reduction_invariants(lf: ReducedFunctional, seed: int = 0, points_per_axis: int = 17,
                         tol: Tolerances = DEFAULT) -> list[dict]:
    red = lf.base
    model, s = red.model, red.splitting
    entries = []
    grid = red.grid(points_per_axis)
    res = max(pmap(red.residual, list(grid)), default=0.0)
    entries.append(_entry("reduction", "complement_residual", res, 10 * tol.residual_tol))
    h0 = model.x_norm(red.h(np.zeros(s.nu)))
    entries.append(_entry("reduction", "h_theta_is_theta", h0, tol.residual_tol))
    entries.append(_entry("reduction", "contraction_factor", red.contraction_factor,
                          tol.contraction_bound))
    xs = np.array([red.solve(z) for z in grid]).reshape(len(grid), s.dim - s.nu)
    lx, lh = _lipschitz(model, s, grid, xs, seed=seed)
    entries.append(_entry("reduction", "lipschitz_h_X", lx, tol.lipschitz_bound))
    entries.append(_entry("reduction", "lipschitz_h_H", lh, tol.lipschitz_bound, hard=False))

    # uniqueness: restarts from random points of the complement ball
    rng = np.random.default_rng(seed)
    m = s.dim - s.nu
    spread = 0.0
    if m and s.nu:
        for z in gradient_check_points(s.nu, red.r0, 3, seed):
            ref = red.solve(z)
            scale = max(model.x_norm(s.basis_complement @ ref), red.r0 / 4)
            for _ in range(5):
                d = rng.standard_normal(m)
                d *= scale * rng.uniform() / model.x_norm(s.basis_complement @ d)
                x = solve_h(model, s, z, x0=ref + d, tol=tol).x
                spread = max(spread, float(np.linalg.norm(x - ref)))
    entries.append(_entry("reduction", "uniqueness", spread, tol.uniqueness))

    # tangency of h at theta
    if s.nu and m:
        step = min(1e-4, red.r0 / 4)
        slope = max(np.linalg.norm(red.solve(step * e) - red.solve(-step * e)) / (2 * step)
                    for e in np.eye(s.nu))
        entries.append(_entry("reduction", "h_derivative_fd", slope, 1e-3))
        entries.append(_entry("reduction", "h_derivative_formula",
                              float(np.abs(h_derivative_at_theta(model, s)).max(initial=0.0)),
                              1e-9))

    entries.extend(reduced_gradient_entries(lf, seed=seed, tol=tol))
    return entries


def reduced_gradient_entries(lf: ReducedFunctional, count: int = 10, seed: int = 0,
                             tol: Tolerances = DEFAULT) -> list[dict]:
    nu = lf.nu
    if nu == 0:
        return [_entry("reduction", "reduced_gradient_fd", 0.0, tol.reduced_gradient_rel),
                _entry("reduction", "reduced_hessian_theta", 0.0, 0.0)]
    worst = 0.0
    for z in gradient_check_points(nu, lf.base.r0, count, seed):
        g = lf.gradient(z)
        # balances truncation against cancellation in the value sum
        fd = lf.fd_gradient(z, 1e-4 * np.linalg.norm(z))
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300))
    s_h = tol.reduced_hessian_step
    hnorm = float(np.linalg.norm(lf.fd_hessian(np.zeros(nu), s_h), 2))
    g0 = float(np.linalg.norm(lf.gradient(np.zeros(nu))))
    return [
        _entry("reduction", "reduced_gradient_fd", worst, tol.reduced_gradient_rel),
        _entry("reduction", "reduced_gradient_theta", g0, tol.critical_point),
        _entry("reduction", "reduced_hessian_theta", hnorm, tol.reduced_hessian_factor * s_h),
    ]


def isolatedness_report(model: FunctionalModel, lf: ReducedFunctional, radius: float,
                        points_per_axis: int = 17, seed: int = 0) -> dict:
    """Compare zero-free-ness of the gradient and of the reduced gradient on grids."""
    nu = lf.nu
    if nu == 0:
        return {"conclusive": True, "full_isolated": True, "reduced_isolated": True}
    grid = ball_grid(nu, radius, points_per_axis)
    grid = grid[np.linalg.norm(grid, axis=1) > 1e-14]
    red_norms = np.array([np.linalg.norm(lf.gradient(z)) for z in grid])
    full = ball_samples(model.dim, radius, 64, seed) @ lf.base.splitting.eigenvectors.T
    full_norms = np.array([model.norm(model.gradient(x)) for x in full])
    floor = 1e-12
    return {
        "conclusive": bool(red_norms.min() > floor),
        "full_isolated": bool(full_norms.min() > floor),
        "reduced_isolated": bool(red_norms.min() > floor),
        "min_reduced_gradient": float(red_norms.min()),
        "min_full_gradient": float(full_norms.min()),
    }


# ---------------------------------------------------------------------------
# equivariance


def check_equivariance(modelA: FunctionalModel, modelB: FunctionalModel, J: np.ndarray,
                       redA: ReductionResult, redB: ReductionResult, samples: int = 8,
                       seed: int = 0, tol: Tolerances = DEFAULT) -> dict:
    """Check that the reduction commutes with the linear isometry ``J``.

    Preconditions (isometry, invariance of the value and equivariance of the
    gradient) are verified first; if any fails the result is classified as
    "not an admissible J" rather than as an equivariance failure.
    """
    J = np.asarray(J, dtype=float)
    n = modelA.dim
    report = {"admissible": True, "passed": True, "samples": []}
    if J.shape != (n, modelB.dim):
        return {**report, "admissible": False, "passed": False,
                "reason": "not an admissible J: shape mismatch"}
    rng = np.random.default_rng(seed)
    MA, MB = modelA.h_inner, modelB.h_inner
    iso = np.abs(J.T @ MB @ J - MA).max() / max(1.0, np.abs(MA).max())
    xs = [rng.standard_normal(n) * 0.3 * modelA.domain_radius / np.sqrt(n) for _ in range(6)]
    val = max(abs(modelB.value(J @ x) - modelA.value(x)) / max(1.0, abs(modelA.value(x)))
              for x in xs)
    grad = max(modelA.norm(np.linalg.solve(J.T @ MB @ J, J.T @ MB @ (modelB.gradient(J @ x)
                                                                    - J @ modelA.gradient(x))))
               if iso < 1e-6 else np.inf for x in xs)
    pre = {"isometry": float(iso), "value_invariance": float(val), "gradient_equivariance": float(grad)}
    report["preconditions"] = pre
    if iso > 1e-12 or val > 1e-12 or grad > 1e-10:
        failed = [k for k, v, t in (("isometry", iso, 1e-12), ("value_invariance", val, 1e-12),
                                    ("gradient_equivariance", grad, 1e-10)) if v > t]
        return {**report, "admissible": False, "passed": False,
                "reason": f"not an admissible J ({', '.join(failed)})"}

    sA, sB = redA.splitting, redB.splitting
    if sA.nu != sB.nu:
        return {**report, "admissible": False, "passed": False,
                "reason": "not an admissible J: kernel dimensions differ"}
    lfA, lfB = ReducedFunctional(redA), ReducedFunctional(redB)
    r = min(redA.r0, redB.r0)
    zs = gradient_check_points(sA.nu, r, samples, seed) if sA.nu else np.zeros((1, 0))
    T = sB.basis_H0.T @ MB @ J @ sA.basis_H0 if sA.nu else np.zeros((0, 0))
    worst_h = worst_v = 0.0
    for z in zs:
        zh = T @ z
        hA = redA.h(z)
        hB = redB.h(zh)
        dh = modelB.norm(hB - J @ hA)
        dv = abs(lfB.value(zh) - lfA.value(z))
        worst_h, worst_v = max(worst_h, dh), max(worst_v, dv)
        ok = dh <= tol.equivariance and dv <= tol.equivariance
        report["samples"].append({"z": [float(c) for c in z], "h_error": float(dh),
                                  "value_error": float(dv), "passed": bool(ok)})
    report["max_h_error"] = float(worst_h)
    report["max_value_error"] = float(worst_v)
    report["passed"] = all(p["passed"] for p in report["samples"])
    return report


# ---------------------------------------------------------------------------
# grid dump


def dump_grid_csv(lf: ReducedFunctional, path: str | Path, points_per_axis: int = 17) -> Path:
    """Write ``z``, ``h(z)`` (ambient) and ``L°(z)`` on a grid over the reduced ball."""
    red = lf.base
    s = red.splitting
    path = Path(path)
    grid = red.grid(points_per_axis)
    header = ([f"z{i}" for i in range(s.nu)] + [f"h{i}" for i in range(s.dim)]
              + ["reduced_value", "residual"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for z in grid:
            row = list(z) + list(red.h(z)) + [lf.value(z), red.residual(z)]
            w.writerow([f"{v:.17g}" for v in row])
    return path
