"""Functionals on finite-dimensional discretizations.

A :class:`FunctionalModel` bundles the value of a functional, its gradient
with respect to a (mass-matrix) inner product, the Hessian operator of that
gradient and a second, stronger norm.  Models are always translated so that
the critical point under study sits at the origin and has value zero.

Three problem kinds are supported:

``polynomial``
    Sum of monomials on R^n with the Euclidean inner product; the strong norm
    equals the inner-product norm.
``lagrangian_action``
    Periodic action ``sum_i dt * L(t_i, q_i, (q_{i+1} - q_i)/dt)`` of a
    scalar loop sampled on ``N`` grid points.
``elliptic_1d``
    ``1/2 u^T K u - sum_i w_i F(x_i, u_i)`` with homogeneous Dirichlet data,
    ``K`` the P1 stiffness matrix and lumped weights ``w_i = h``.

For the discretized kinds the inner product is the lumped mass matrix and the
strong norm is a scaled maximum of nodal values and difference quotients.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import sympy

from .tolerances import DEFAULT, Tolerances

KINDS = ("polynomial", "lagrangian_action", "elliptic_1d")

_PARAM_KEYS = {
    "polynomial": ({"terms"}, {"domain_radius"}),
    "lagrangian_action": ({"lagrangian", "period", "grid_size"}, {"domain_radius"}),
    "elliptic_1d": ({"grid_size"}, {"nonlinearity", "primitive", "length", "domain_radius"}),
}


class ModelError(ValueError):
    """Raised when a problem cannot be turned into a valid functional model."""


@dataclass(frozen=True)
class FunctionalModel:
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    h_inner: np.ndarray
    x_norm: Callable[[np.ndarray], float]
    domain_radius: float = 1.0
    name: str = "model"
    kind: str = "custom"
    metadata: dict = field(default_factory=dict)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.h_inner @ v))

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))

    def euclidean_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of ``value`` in the Euclidean sense (``M @ gradient``)."""
        return self.h_inner @ self.gradient(x)


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    parameters: dict
    critical_point: tuple
    name: str = "problem"

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": self.parameters,
            "critical_point": list(self.critical_point),
        }


# ---------------------------------------------------------------------------
# parsing


def parse_problem(doc: dict, name: str | None = None) -> ProblemSpec:
    """Validate a JSON problem document and return a :class:`ProblemSpec`.

    Unknown keys at any level are rejected.
    """
    if not isinstance(doc, dict):
        raise ModelError("problem document must be a JSON object")
    allowed = {"kind", "parameters", "critical_point", "name"}
    unknown = set(doc) - allowed
    if unknown:
        raise ModelError(f"unknown problem keys: {sorted(unknown)}")
    for key in ("kind", "parameters", "critical_point"):
        if key not in doc:
            raise ModelError(f"problem document is missing {key!r}")
    kind = doc["kind"]
    if kind not in KINDS:
        raise ModelError(f"unknown problem kind {kind!r}; expected one of {KINDS}")
    params = doc["parameters"]
    if not isinstance(params, dict):
        raise ModelError("parameters must be an object")
    required, optional = _PARAM_KEYS[kind]
    unknown = set(params) - required - optional
    if unknown:
        raise ModelError(f"unknown parameters for {kind}: {sorted(unknown)}")
    missing = required - set(params)
    if missing:
        raise ModelError(f"missing parameters for {kind}: {sorted(missing)}")
    if kind == "polynomial":
        for term in params["terms"]:
            extra = set(term) - {"coeffs", "powers"}
            if extra or not {"coeffs", "powers"} <= set(term):
                raise ModelError(f"malformed monomial term {term!r}")
    if kind == "elliptic_1d":
        given = {"nonlinearity", "primitive"} & set(params)
        if len(given) != 1:
            raise ModelError("elliptic_1d needs exactly one of 'nonlinearity' or 'primitive'")
    crit = doc["critical_point"]
    if not isinstance(crit, (list, tuple)) or not all(isinstance(c, (int, float)) for c in crit):
        raise ModelError("critical_point must be a list of numbers")
    return ProblemSpec(kind, dict(params), tuple(float(c) for c in crit),
                       name=doc.get("name", name or kind))


def load_problem(path: str | Path) -> ProblemSpec:
    with open(path) as fh:
        doc = json.load(fh)
    return parse_problem(doc, name=Path(path).stem)


# ---------------------------------------------------------------------------
# builders


def build_model(spec: ProblemSpec, tol: Tolerances = DEFAULT) -> FunctionalModel:
    """Build the translated, normalized functional model for ``spec``."""
    builders = {
        "polynomial": _build_polynomial,
        "lagrangian_action": _build_lagrangian,
        "elliptic_1d": _build_elliptic,
    }
    if spec.kind not in builders:
        raise ModelError(f"unknown problem kind {spec.kind!r}")
    theta = np.asarray(spec.critical_point, dtype=float)
    value, grad, hess, mass, xnorm, meta = builders[spec.kind](spec.parameters, theta)
    n = mass.shape[0]
    if theta.shape != (n,):
        raise ModelError(f"critical_point has length {theta.size}, expected {n}")

    f_theta = value(theta)

    def shifted_value(x):
        return value(np.asarray(x, dtype=float) + theta) - f_theta

    def shifted_gradient(x):
        return grad(np.asarray(x, dtype=float) + theta)

    def shifted_hessian(x):
        return hess(np.asarray(x, dtype=float) + theta)

    model = FunctionalModel(
        dim=n,
        value=shifted_value,
        gradient=shifted_gradient,
        hessian=shifted_hessian,
        h_inner=mass,
        x_norm=xnorm,
        domain_radius=float(spec.parameters.get("domain_radius", 1.0)),
        name=spec.name,
        kind=spec.kind,
        metadata={**meta, "value_at_critical_point": f_theta},
    )
    _check_symmetric(model, np.zeros(n), tol)
    g0 = model.gradient(np.zeros(n))
    gnorm = model.norm(g0)
    if gnorm > tol.critical_point:
        raise ModelError(
            f"critical_point is not critical: |gradient| = {gnorm:.3e} > {tol.critical_point:g}")
    return model


def custom_model(value, gradient, hessian, dim, h_inner=None, x_norm=None,
                 domain_radius=1.0, name="custom", tol: Tolerances = DEFAULT,
                 samples: int = 5, seed: int = 0) -> FunctionalModel:
    """Wrap user callables, rejecting Hessians that are not self-adjoint."""
    mass = np.eye(dim) if h_inner is None else np.asarray(h_inner, dtype=float)
    if not np.allclose(mass, mass.T) or np.linalg.eigvalsh(mass).min() <= 0:
        raise ModelError("h_inner must be symmetric positive definite")
    if x_norm is None:
        def x_norm(v, _m=mass):
            return math.sqrt(max(float(v @ _m @ v), 0.0))
    model = FunctionalModel(dim, value, gradient, hessian, mass, x_norm,
                            float(domain_radius), name=name, kind="custom")
    rng = np.random.default_rng(seed)
    for x in [np.zeros(dim)] + [_random_in_ball(rng, model, 0.5 * domain_radius)
                                for _ in range(samples)]:
        _check_symmetric(model, x, tol)
    return model


def _check_symmetric(model: FunctionalModel, x: np.ndarray, tol: Tolerances) -> None:
    B = np.asarray(model.hessian(x), dtype=float)
    if B.shape != (model.dim, model.dim):
        raise ModelError(f"hessian has shape {B.shape}, expected {(model.dim,) * 2}")
    MB = model.h_inner @ B
    scale = max(1.0, np.abs(MB).max())
    if np.abs(MB - MB.T).max() > tol.symmetry * scale:
        raise ModelError("hessian is not self-adjoint with respect to h_inner")


def _random_in_ball(rng, model: FunctionalModel, radius: float) -> np.ndarray:
    v = rng.standard_normal(model.dim)
    v /= model.norm(v)
    return v * radius * rng.uniform() ** (1.0 / model.dim)


def _discrete_xnorm(mass: np.ndarray, diff: Callable[[np.ndarray], np.ndarray]):
    # scale so that the H-norm is dominated: v^T M v <= sum|M_ij| * max|v|^2
    kappa = max(1.0, math.sqrt(np.abs(mass).sum()))

    def x_norm(v):
        v = np.asarray(v, dtype=float)
        if v.size == 0:
            return 0.0
        return kappa * max(np.abs(v).max(), np.abs(diff(v)).max())

    return x_norm


def _build_polynomial(params: dict, theta: np.ndarray):
    terms = params["terms"]
    if not terms:
        raise ModelError("polynomial needs at least one term")
    coeffs = np.array([float(t["coeffs"]) for t in terms])
    powers = np.array([list(t["powers"]) for t in terms], dtype=int)
    if powers.ndim != 2 or (powers < 0).any():
        raise ModelError("monomial powers must be non-negative integer lists of equal length")
    n = powers.shape[1]

    def monomials(x, P):
        # integer powers with 0**0 == 1
        return np.prod(np.where(P > 0, x[None, :] ** np.maximum(P, 0), 1.0), axis=1)

    def value(x):
        return float(coeffs @ monomials(x, powers))

    def gradient(x):
        g = np.zeros(n)
        for i in range(n):
            mask = powers[:, i] > 0
            if not mask.any():
                continue
            P = powers[mask].copy()
            c = coeffs[mask] * P[:, i]
            P[:, i] -= 1
            g[i] = c @ monomials(x, P)
        return g

    def hessian(x):
        H = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                P = powers.copy()
                c = coeffs * P[:, i]
                P[:, i] -= 1
                c = c * P[:, j]
                P[:, j] -= 1
                mask = (P >= 0).all(axis=1) & (c != 0)
                if mask.any():
                    H[i, j] = H[j, i] = c[mask] @ monomials(x, P[mask])
        return H

    mass = np.eye(n)

    def x_norm(v):
        return float(np.linalg.norm(v))

    return value, gradient, hessian, mass, x_norm, {"terms": terms}


def _lambdify(expr, symbols):
    fn = sympy.lambdify(symbols, expr, modules="numpy")

    def wrapped(*args):
        out = fn(*args)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*args).shape)

    return wrapped


def _sympify(text: str, names: tuple[str, ...]):
    syms = sympy.symbols(names, real=True)
    local = dict(zip(names, syms))
    try:
        expr = sympy.sympify(text, locals=local)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ModelError(f"cannot parse expression {text!r}: {exc}") from exc
    stray = expr.free_symbols - set(syms)
    if stray:
        raise ModelError(f"expression {text!r} uses unknown symbols {sorted(map(str, stray))}")
    return expr, syms


def periodic_difference(n: int, dt: float) -> np.ndarray:
    """Forward difference matrix on a periodic grid."""
    D = -np.eye(n) + np.roll(np.eye(n), 1, axis=1)
    return D / dt


def cyclic_shift(n: int, k: int = 1) -> np.ndarray:
    """Permutation matrix ``(J x)_i = x_{i-k}`` (time translation by ``k`` steps)."""
    return np.roll(np.eye(n), k, axis=0)


def _build_lagrangian(params: dict, theta: np.ndarray):
    N = int(params["grid_size"])
    tau = float(params["period"])
    if N < 4:
        raise ModelError(f"grid_size must be >= 4, got {N}")
    if not tau > 0:
        raise ModelError("period must be positive")
    expr, (t, q, v) = _sympify(str(params["lagrangian"]), ("t", "q", "v"))
    L = _lambdify(expr, (t, q, v))
    Lq = _lambdify(sympy.diff(expr, q), (t, q, v))
    Lv = _lambdify(sympy.diff(expr, v), (t, q, v))
    Lqq = _lambdify(sympy.diff(expr, q, 2), (t, q, v))
    Lqv = _lambdify(sympy.diff(expr, q, v), (t, q, v))
    Lvv = _lambdify(sympy.diff(expr, v, 2), (t, q, v))

    rng = np.random.default_rng(12345)
    ts = rng.uniform(0, tau, 16)
    qs = rng.uniform(-2, 2, 16)
    vs = rng.uniform(-2, 2, 16)
    a, b = L(ts, qs, vs), L(ts + tau, qs, vs)
    if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
        raise ModelError("Lagrangian is not periodic in t with the given period")

    dt = tau / N
    times = dt * np.arange(N)
    D = periodic_difference(N, dt)
    Dt = D.T.copy()

    def value(x):
        return float(dt * L(times, x, D @ x).sum())

    def gradient(x):
        # gradient for the inner product dt * I
        vel = D @ x
        return Lq(times, x, vel) + Dt @ Lv(times, x, vel)

    def hessian(x):
        vel = D @ x
        qq = Lqq(times, x, vel)
        qv = Lqv(times, x, vel)
        vv = Lvv(times, x, vel)
        B = np.diag(qq) + qv[:, None] * D + Dt * qv[None, :] + Dt @ (vv[:, None] * D)
        return 0.5 * (B + B.T)

    mass = dt * np.eye(N)
    meta = {"grid_size": N, "period": tau, "dt": dt, "lagrangian": str(expr),
            "autonomous": t not in expr.free_symbols}
    return value, gradient, hessian, mass, _discrete_xnorm(mass, lambda v: D @ v), meta


def _build_elliptic(params: dict, theta: np.ndarray):
    N = int(params["grid_size"])
    if N < 4:
        raise ModelError(f"grid_size must be >= 4, got {N}")
    length = float(params.get("length", 1.0))
    h = length / (N + 1)
    if "primitive" in params:
        F_expr, (xs, u) = _sympify(str(params["primitive"]), ("x", "u"))
    else:
        f_expr, (xs, u) = _sympify(str(params["nonlinearity"]), ("x", "u"))
        s = sympy.Dummy("s", real=True)
        F_expr = sympy.integrate(f_expr.subs(u, s), (s, 0, u))
    f_expr = sympy.diff(F_expr, u)
    F = _lambdify(F_expr, (xs, u))
    f = _lambdify(f_expr, (xs, u))
    fu = _lambdify(sympy.diff(f_expr, u), (xs, u))

    nodes = h * np.arange(1, N + 1)
    K = (2 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)) / h
    KM = K / h  # stiffness for the inner product h * I

    def value(x):
        return float(0.5 * x @ K @ x - h * F(nodes, x).sum())

    def gradient(x):
        return KM @ x - f(nodes, x)

    def hessian(x):
        return KM - np.diag(fu(nodes, x))

    def diff(v):
        padded = np.concatenate(([0.0], v, [0.0]))
        return np.diff(padded) / h

    mass = h * np.eye(N)
    meta = {"grid_size": N, "length": length, "h": h, "primitive": str(F_expr)}
    return value, gradient, hessian, mass, _discrete_xnorm(mass, diff), meta


# ---------------------------------------------------------------------------
# finite-difference oracles


def finite_difference_gradient(model: FunctionalModel, x: np.ndarray, step: float = 1e-5,
                               tol: Tolerances = DEFAULT) -> np.ndarray:
    """Central-difference gradient of ``model.value`` for the H inner product.

    Returns ``M^{-1}`` times the Euclidean difference gradient so that the
    result is directly comparable to ``model.gradient``.
    """
    x = np.asarray(x, dtype=float)
    if not step > 0:
        raise ValueError("step must be positive")
    scale = max(1.0, float(np.abs(x).max(initial=0.0)))
    if step / scale < tol.min_rel_step:
        raise ValueError(f"relative step {step / scale:.1e} underflows")
    g = np.empty(model.dim)
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = step
        g[i] = (model.value(x + e) - model.value(x - e)) / (2 * step)
    return np.linalg.solve(model.h_inner, g)


def finite_difference_hessian_action(model: FunctionalModel, x: np.ndarray, u: np.ndarray,
                                     step: float = 1e-5) -> np.ndarray:
    return (model.gradient(x + step * u) - model.gradient(x - step * u)) / (2 * step)


def model_invariants(model: FunctionalModel, samples: int = 20, seed: int = 0,
                     tol: Tolerances = DEFAULT, radius: float | None = None) -> list[dict]:
    """Sampled consistency checks: FD gradient/Hessian, self-adjointness, norm domination."""
    rng = np.random.default_rng(seed)
    radius = 0.5 * model.domain_radius if radius is None else radius
    worst = {"gradient": 0.0, "hessian": 0.0, "symmetry": 0.0, "domination": -np.inf}
    for _ in range(samples):
        x = _random_in_ball(rng, model, radius)
        g = model.gradient(x)
        g_fd = finite_difference_gradient(model, x, tol.fd_step, tol)
        gscale = max(model.norm(g), 1e-8)
        worst["gradient"] = max(worst["gradient"], model.norm(g - g_fd) / gscale)

        u = rng.standard_normal(model.dim)
        u /= model.norm(u)
        w = rng.standard_normal(model.dim)
        w /= model.norm(w)
        B = model.hessian(x)
        Bu = B @ u
        Bu_fd = finite_difference_hessian_action(model, x, u, tol.fd_step)
        bscale = max(model.norm(Bu), 1e-8)
        worst["hessian"] = max(worst["hessian"], model.norm(Bu - Bu_fd) / bscale)
        asym = abs(model.inner(B @ u, w) - model.inner(u, B @ w))
        worst["symmetry"] = max(worst["symmetry"], asym / max(1.0, np.abs(B).max()))
        worst["domination"] = max(worst["domination"], model.norm(w) - model.x_norm(w))
    return [
        _entry("functional_model", "fd_gradient", worst["gradient"], tol.fd_gradient_rel),
        _entry("functional_model", "fd_hessian", worst["hessian"], tol.fd_hessian_rel),
        _entry("functional_model", "hessian_self_adjoint", worst["symmetry"], tol.symmetry),
        _entry("functional_model", "norm_domination", worst["domination"], 0.0),
    ]


def _entry(module: str, name: str, measured: float, threshold: float,
           hard: bool = True, passed: bool | None = None) -> dict[str, Any]:
    if passed is None:
        passed = bool(measured <= threshold)
    return {"module": module, "name": name, "measured": float(measured),
            "threshold": float(threshold), "passed": bool(passed), "hard": hard}
