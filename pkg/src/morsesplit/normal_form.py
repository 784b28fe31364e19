"""Explicit Morse-Palais chart for the fiber function.

For a kernel point ``z`` the fiber function on the complement is

    F(z, u) = L(z + h(z) + u) - L(z + h(z)),

with ``u = x + y``, ``x`` in H+ and ``y`` in H-.  The chart is built in
three moves: maximize ``F(z, x + .)`` over the negative ball (``phi``),
rescale ``x`` so the maximum becomes ``|psi_1|^2``, and rescale ``y - phi``
so the drop from the maximum becomes ``|psi_2|^2``.  Inverting those two
one-dimensional rescalings gives the chart ``Phi`` with

    L(Phi(z, u+, u-)) = |u+|^2 - |u-|^2 + L°(z).

All vectors below are coordinates on the H-orthonormal eigenbasis, so
plain Euclidean norms are H-norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .functional import FunctionalModel, _entry
from .reduction import ReducedFunctional, ReductionResult, ball_grid
from .spectral import ConditionCertificate, SpectralSplitting, ball_samples, certify_conditions
from .tolerances import DEFAULT, Tolerances


class ChartError(RuntimeError):
    """The normal-form chart cannot be built or evaluated at this radius."""


class NonConcavityError(ChartError):
    """The fiber function is not concave along H- (shrink the radius)."""


@dataclass
class NormalFormChart:
    model: FunctionalModel
    splitting: SpectralSplitting
    reduction: ReductionResult
    delta: float
    eps1: float
    eps: float
    a1: float
    z_radius: float
    maximizer_tol: float = 1e-10
    invert_tol: float = 1e-10
    binding_z: list = field(default_factory=list)
    _base: dict = field(default_factory=dict, repr=False)
    _phi: dict = field(default_factory=dict, repr=False)

    @property
    def p_quadratic_coeff(self) -> float:
        return 0.5 * self.a1

    def p(self, t: float) -> float:
        return 0.5 * self.a1 * t * t

    @property
    def rho(self) -> float:
        """Radius of the chart domain in u+ and in u-."""
        return math.sqrt(self.p(self.eps) / 2)

    # -- fiber function -----------------------------------------------------

    def _base_point(self, z):
        z = np.asarray(z, dtype=float).reshape(self.splitting.nu)
        key = z.tobytes()
        hit = self._base.get(key)
        if hit is None:
            p = self.reduction.point(z)
            hit = (p, float(self.model.value(p)))
            self._base[key] = hit
        return hit

    def _ambient(self, x, y) -> np.ndarray:
        s = self.splitting
        return s.basis_Hplus @ x + s.basis_Hminus @ y

    def F(self, z, x, y) -> float:
        p, v = self._base_point(z)
        return float(self.model.value(p + self._ambient(x, y))) - v

    def grad_F(self, z, x, y):
        """Coordinates of the H-gradient of F on H+ and H-."""
        p, _ = self._base_point(z)
        s = self.splitting
        g = self.model.h_inner @ self.model.gradient(p + self._ambient(x, y))
        return s.basis_Hplus.T @ g, s.basis_Hminus.T @ g

    def _hess_minus(self, z, x, y) -> np.ndarray:
        p, _ = self._base_point(z)
        Vm = self.splitting.basis_Hminus
        C = Vm.T @ self.model.h_inner @ self.model.hessian(p + self._ambient(x, y)) @ Vm
        return 0.5 * (C + C.T)

    # -- chart maps ---------------------------------------------------------

    def phi(self, z, x) -> np.ndarray:
        mu = self.splitting.mu
        x = np.asarray(x, dtype=float)
        if mu == 0:
            return np.zeros(0)
        key = (np.asarray(z, dtype=float).tobytes(), x.tobytes())
        hit = self._phi.get(key)
        if hit is not None:
            return hit
        y = _maximize_concave(self, z, x)
        self._phi[key] = y
        return y

    def j(self, z, x) -> float:
        return self.F(z, x, self.phi(z, x))

    def psi(self, z, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ph = self.phi(z, x)
        jx = self.j(z, x)
        fxy = self.F(z, x, y)
        r1, r2 = jx, jx - fxy
        for name, r in (("j", r1), ("j - F", r2)):
            if r < -1e-12 * max(1.0, abs(jx)):
                raise ChartError(f"negative radicand {name} = {r:.3e}; maximizer failed")
        nx = np.linalg.norm(x)
        dy = y - ph
        ny = np.linalg.norm(dy)
        psi1 = math.sqrt(max(r1, 0.0)) * x / nx if nx > 0 else np.zeros_like(x)
        psi2 = math.sqrt(max(r2, 0.0)) * dy / ny if ny > 0 else np.zeros_like(y)
        return psi1, psi2

    def inverse(self, z, u_plus, u_minus):
        """Solve ``psi(z, x + y) = u_plus + u_minus`` along the constructive path."""
        up = np.asarray(u_plus, dtype=float)
        um = np.asarray(u_minus, dtype=float)
        a = float(np.linalg.norm(up))
        b = float(np.linalg.norm(um))
        if a > 0:
            xhat = up / a

            def g1(t):
                return math.sqrt(max(self.j(z, t * xhat), 0.0)) - a

            hi = 2 * self.eps
            if g1(hi) < 0:
                raise ChartError("radial bracket failed for u+; eps too large for this z")
            t = optimize.brentq(g1, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            x = t * xhat
        else:
            x = np.zeros_like(up)
        ph = self.phi(z, x)
        jx = self.j(z, x)
        if b > 0:
            w = um / b
            c = float(ph @ w)
            smax = -c + math.sqrt(max(c * c - ph @ ph + self.delta ** 2, 0.0))

            def g2(s):
                return (jx - self.F(z, x, ph + s * w)) - b * b

            if g2(smax) < 0:
                raise ChartError("segment bracket failed for u-; eps too large for this z")
            sv = optimize.brentq(g2, 0.0, smax, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            y = ph + sv * w
        else:
            y = ph.copy()
        res = self._inverse_residual(z, x, y, up, um)
        if res > self.invert_tol:
            x, y = self._polish(z, x, y, up, um)
        return x, y

    def _inverse_residual(self, z, x, y, up, um) -> float:
        p1, p2 = self.psi(z, x, y)
        return float(np.linalg.norm(np.concatenate([p1 - up, p2 - um])))

    def _polish(self, z, x, y, up, um):
        k = x.size

        def fun(v):
            p1, p2 = self.psi(z, v[:k], v[k:])
            return np.concatenate([p1 - up, p2 - um])

        sol = optimize.root(fun, np.concatenate([x, y]), method="hybr", tol=1e-14)
        v = sol.x
        res = self._inverse_residual(z, v[:k], v[k:], up, um)
        if res > self.invert_tol:
            raise ChartError(f"chart inverse residual {res:.2e} exceeds {self.invert_tol:g}")
        return v[:k], v[k:]

    def big_phi(self, z, u_plus, u_minus) -> np.ndarray:
        x, y = self.inverse(z, u_plus, u_minus)
        p, _ = self._base_point(z)
        return p + self._ambient(x, y)

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "eps1": self.eps1,
            "eps": self.eps,
            "a1": self.a1,
            "p_quadratic_coeff": self.p_quadratic_coeff,
            "chart_radius": self.rho,
            "z_radius": self.z_radius,
            "binding_z": self.binding_z,
        }


def _maximize_concave(chart: NormalFormChart, z, x) -> np.ndarray:
    """Newton-preconditioned projected ascent with Armijo backtracking."""
    mu = chart.splitting.mu
    delta = chart.delta
    y = np.zeros(mu)
    fy = chart.F(z, x, y)
    for _ in range(200):
        _, g = chart.grad_F(z, x, y)
        if np.linalg.norm(g) <= chart.maximizer_tol:
            return y
        H = chart._hess_minus(z, x, y)
        top = np.linalg.eigvalsh(H).max()
        if top >= 0:
            raise NonConcavityError(
                f"fiber function has curvature {top:.3e} >= 0 along H-; shrink the radius")
        d = -np.linalg.solve(H, g)
        slope = float(g @ d)
        t = 1.0
        while True:
            cand = y + t * d
            nc = np.linalg.norm(cand)
            if nc > delta:
                cand *= delta / nc
            fc = chart.F(z, x, cand)
            if fc >= fy + 1e-4 * t * slope or t < 1e-12:
                break
            # near the optimum value differences drown in round-off; fall back
            # to the gradient norm as merit function
            if np.linalg.norm(chart.grad_F(z, x, cand)[1]) < 0.5 * np.linalg.norm(g):
                break
            t *= 0.5
        if np.linalg.norm(cand - y) <= 1e-16 * max(1.0, np.linalg.norm(y)):
            break
        y, fy = cand, fc
    _, g = chart.grad_F(z, x, y)
    if np.linalg.norm(y) >= delta * (1 - 1e-12):
        raise ChartError("maximizer sits on the boundary of the H- ball; shrink eps1")
    if np.linalg.norm(g) > chart.maximizer_tol * 100:
        raise ChartError(f"maximizer did not converge (gradient {np.linalg.norm(g):.2e})")
    return y


# ---------------------------------------------------------------------------
# functional API


def maximizer_phi(chart: NormalFormChart, z, x_plus) -> np.ndarray:
    if np.linalg.norm(x_plus) >= chart.eps1:
        raise ValueError("x_plus must lie inside the eps1 ball")
    return chart.phi(z, x_plus)


def psi_forward(chart: NormalFormChart, z, x_plus, x_minus):
    return chart.psi(z, x_plus, x_minus)


def chart_inverse(chart: NormalFormChart, z, u_plus, u_minus):
    rho = chart.rho
    if np.linalg.norm(u_plus) >= rho or np.linalg.norm(u_minus) >= rho:
        raise ValueError(f"chart point outside the chart domain (radius {rho:.3e})")
    return chart.inverse(z, u_plus, u_minus)


def big_phi(chart: NormalFormChart, z, u_plus, u_minus) -> np.ndarray:
    chart_inverse(chart, z, u_plus, u_minus)
    return chart.big_phi(z, u_plus, u_minus)


def _directions(rng, dim: int, count: int) -> list[np.ndarray]:
    if dim == 0:
        return [np.zeros(0)]
    out = [e for e in np.eye(dim)[: min(dim, 3)]]
    out += [-e for e in out]
    for _ in range(count):
        v = rng.standard_normal(dim)
        out.append(v / np.linalg.norm(v))
    return out


def build_chart(model: FunctionalModel, s: SpectralSplitting, red: ReductionResult,
                cert: ConditionCertificate | None = None, tol: Tolerances = DEFAULT,
                seed: int = 0, delta: float | None = None, z_points: int = 5,
                directions: int = 6) -> NormalFormChart:
    """Pick the radii delta, eps1 and eps and return the chart.

    delta comes from the certified radius of the operational conditions
    (capped at 0.9 of the domain radius); eps1 is halved until the fiber
    maxima are interior; eps starts at eps1/4 and is halved until the
    boundary estimates that make both inverse brackets valid hold on the
    sampled kernel grid.
    """
    if cert is None:
        cert = certify_conditions(model, s, model.domain_radius, 64, seed)
    R = min(cert.certified_radius, 0.9 * model.domain_radius)
    z_radius = min(red.r0, R / 2)
    zs = ball_grid(s.nu, z_radius, z_points)
    reach = max(np.linalg.norm(red.point(z)) for z in zs)
    if delta is None:
        delta = (R - reach) / 1.5
    if not delta > 0:
        raise ChartError("no room for the chart: certified radius is smaller than |z + h(z)|")
    a1 = 0.9 * (cert.a1 if np.isfinite(cert.a1) else s.a0)
    chart = NormalFormChart(model, s, red, float(delta), float(delta / 2), float(delta / 8),
                            float(a1), float(z_radius), tol.maximizer_tol, tol.invert_tol)
    rng = np.random.default_rng(seed)
    dplus = _directions(rng, s.n_plus, directions)
    dminus = _directions(rng, s.mu, directions)
    floor = 1e-9 * max(delta, 1e-300)

    def interior_ok(radius):
        for z in zs:
            for d in dplus:
                try:
                    y = chart.phi(z, radius * d)
                except ChartError:
                    return False, z
                if np.linalg.norm(y) >= delta / 2:
                    return False, z
        return True, None

    while True:
        ok, _ = interior_ok(chart.eps1)
        if ok:
            break
        chart.eps1 /= 2
        if chart.eps1 < floor:
            raise ChartError("no eps1 with interior fiber maxima; shrink delta")
    chart.eps = chart.eps1 / 4
    binding = []
    while True:
        eps = chart.eps
        target = chart.p(eps) / 2
        bad_z = None
        ok, bad_z = interior_ok(2 * eps)
        if ok:
            for z in zs:
                for d in dplus:
                    if s.n_plus and chart.j(z, 2 * eps * d) <= target:
                        ok, bad_z = False, z
                        break
                    if s.mu:
                        for f in (0.0, 0.5, 1.0):
                            for w in dminus:
                                if chart.F(z, 2 * eps * f * d, delta * w) > -target:
                                    ok, bad_z = False, z
                                    break
                            if not ok:
                                break
                    if not ok:
                        break
                if not ok:
                    break
        if ok:
            break
        binding.append([float(c) for c in bad_z])
        chart.eps = eps / 2
        if chart.eps < floor:
            raise ChartError("no eps satisfies the boundary estimates; shrink delta")
    chart.binding_z = binding[-1:] if binding else []
    chart._phi.clear()
    return chart


# ---------------------------------------------------------------------------
# invariants


def sample_chart_points(chart: NormalFormChart, count: int = 100, seed: int = 0):
    s = chart.splitting
    rng = np.random.default_rng(seed)
    zs = ball_samples(s.nu, chart.z_radius, count, seed) if s.nu else np.zeros((count, 0))
    rho = 0.999 * chart.rho

    def ball(dim):
        if dim == 0:
            return np.zeros((count, 0))
        v = rng.standard_normal((count, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * (rho * rng.uniform(size=(count, 1)) ** (1.0 / dim))

    return zs, ball(s.n_plus), ball(s.mu)


def chart_invariants(chart: NormalFormChart, lf: ReducedFunctional, count: int = 100,
                     seed: int = 0, tol: Tolerances = DEFAULT) -> tuple[list[dict], dict]:
    """Ledger entries for the chart plus report-only measurements."""
    s = chart.splitting
    model = chart.model
    entries = []
    zs, ups, ums = sample_chart_points(chart, count, seed)

    # F(z, 0) = 0 and D2F(z, 0) = 0
    f0 = d0 = 0.0
    for z in zs[:10]:
        f0 = max(f0, abs(chart.F(z, np.zeros(s.n_plus), np.zeros(s.mu))))
        gp, gm = chart.grad_F(z, np.zeros(s.n_plus), np.zeros(s.mu))
        d0 = max(d0, float(np.linalg.norm(np.concatenate([gp, gm]))))
    entries.append(_entry("normal_form", "fiber_vanishes_at_theta", max(f0, d0), 1e-9))

    nf = rt = 0.0
    images = []
    for z, up, um in zip(zs, ups, ums):
        x, y = chart.inverse(z, up, um)
        p1, p2 = chart.psi(z, x, y)
        rt = max(rt, float(np.linalg.norm(np.concatenate([p1 - up, p2 - um]))))
        P = chart._base_point(z)[0] + chart._ambient(x, y)
        images.append(P)
        lhs = model.value(P)
        rhs = up @ up - um @ um + lf.value(z)
        nf = max(nf, abs(lhs - rhs))
    entries.append(_entry("normal_form", "normal_form_identity", nf, tol.normal_form))
    entries.append(_entry("normal_form", "round_trip", rt, chart.invert_tol))

    # Phi(z, 0) = z + h(z); u+ = 0 keeps the correction inside H-
    base = memb = 0.0
    for z, um in zip(zs[:10], ums[:10]):
        P0 = chart.big_phi(z, np.zeros(s.n_plus), np.zeros(s.mu))
        base = max(base, model.norm(P0 - lf.base.point(z)))
        x, _ = chart.inverse(z, np.zeros(s.n_plus), um)
        memb = max(memb, float(np.linalg.norm(x)))
    entries.append(_entry("normal_form", "phi_at_zero", base, 1e-12))
    entries.append(_entry("normal_form", "minus_membership", memb, 1e-9))

    # injectivity at sample resolution
    imgs = np.array(images)
    sep = np.inf
    pts = np.hstack([zs, ups, ums])
    for i in range(len(imgs)):
        d = np.linalg.norm(imgs[i + 1:] - imgs[i], axis=1)
        dp = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        mask = dp > 1e-8
        if mask.any():
            sep = min(sep, float(d[mask].min()))
    sep = 0.0 if not np.isfinite(sep) else sep
    entries.append(_entry("normal_form", "injectivity", -sep, -chart.invert_tol))

    # coercivity on H+ and the sign condition
    rng = np.random.default_rng(seed + 1)
    coer = sign = np.inf
    for z in zs[:10]:
        for _ in range(5):
            if s.n_plus:
                x = rng.standard_normal(s.n_plus)
                x *= chart.eps1 * rng.uniform(0.05, 1) / np.linalg.norm(x)
                gp, _ = chart.grad_F(z, x, np.zeros(s.mu))
                coer = min(coer, float(gp @ x) - chart.a1 * (x @ x) * (1 - 1e-6))
            x = rng.standard_normal(s.n_plus) * chart.eps / max(1, np.sqrt(s.n_plus))
            y = rng.standard_normal(s.mu) * chart.eps / max(1, np.sqrt(s.mu))
            if np.linalg.norm(np.concatenate([x, y])) > 0:
                gp, gm = chart.grad_F(z, x, y)
                sign = min(sign, float(gp @ x - gm @ y))
    coer = 0.0 if not np.isfinite(coer) else coer
    sign = 0.0 if not np.isfinite(sign) else sign
    entries.append(_entry("normal_form", "coercivity_margin", -coer, 0.0))
    entries.append(_entry("normal_form", "sign_condition", -sign, 0.0, passed=sign > 0 or
                          (s.n_plus + s.mu == 0)))

    # monotone deformation along u+
    mono = 0.0
    for z, up, um in list(zip(zs, ups, ums))[:5]:
        vals = [model.value(chart.big_phi(z, t * up, um)) for t in np.linspace(0, 1, 6)]
        mono = max(mono, max(a - b for a, b in zip(vals[:-1], vals[1:])))
    entries.append(_entry("normal_form", "deformation_monotone", mono, tol.normal_form))

    # X-continuity modulus of the restriction to H0 + H- (report only)
    modulus = 0.0
    for i in range(min(10, len(zs) - 1)):
        a = chart.big_phi(zs[i], np.zeros(s.n_plus), ums[i])
        b = chart.big_phi(zs[i + 1], np.zeros(s.n_plus), ums[i + 1])
        den = np.linalg.norm(np.concatenate([zs[i] - zs[i + 1], ums[i] - ums[i + 1]]))
        if den > 0:
            modulus = max(modulus, model.x_norm(a - b) / den)
    report = {"normal_form_max_residual": nf, "round_trip_max": rt,
              "x_continuity_modulus": modulus, "samples": int(count)}
    return entries, report


# ---------------------------------------------------------------------------
# behaviour estimates near theta


def _P_and_Q(s: SpectralSplitting, C: np.ndarray):
    """P(x) = P+B - P-B + P0 and Q(x) = 2P-B - P0 + P0B in eigencoordinates."""
    n = s.dim
    sel = [np.zeros(n) for _ in range(3)]
    sel[0][s.idx_minus] = 1
    sel[1][s.idx_zero] = 1
    sel[2][s.idx_plus] = 1
    Dm, D0, Dp = (np.diag(v) for v in sel)
    P = Dp @ C - Dm @ C + D0
    Q = 2 * Dm @ C - D0 + D0 @ C
    return P, Q


def verify_behavior_estimates(chart: NormalFormChart, s_radius: float | None = None,
                              cert: ConditionCertificate | None = None, samples: int = 40,
                              seed: int = 0) -> dict:
    """Sample the three boundary inequalities near theta and report margins.

    Constants follow the explicit recipe: ``a1' = (2 C2' + |Q(theta)| + 1)/2
    + 1/(3 a1)`` with ``a1`` capped by ``a0``, ``r = s sqrt(8 a1'/a1)``,
    ``eps = a1' s^2`` and ``hbar = a1 s^2 / 8``.  Nothing is asserted.
    """
    s = chart.splitting
    model = chart.model
    V, M = s.eigenvectors, s.h_inner
    if cert is None:
        cert = certify_conditions(model, s, chart.delta, 32, seed)
    Pvals = []
    for x in cert.checked_points[cert.radii <= cert.certified_radius]:
        C = V.T @ M @ model.hessian(x) @ V
        P, _ = _P_and_Q(s, 0.5 * (C + C.T))
        Pvals.append(np.linalg.eigvalsh(0.5 * (P + P.T)))
    Pvals = np.concatenate(Pvals) if Pvals else np.array([1.0])
    C1, C2 = float(Pvals.min()), float(Pvals.max())
    C0 = V.T @ M @ model.hessian(np.zeros(s.dim)) @ V
    _, Q0 = _P_and_Q(s, 0.5 * (C0 + C0.T))
    qnorm = float(np.linalg.norm(Q0, 2))
    a1 = min(chart.a1 / 0.9, s.a0)
    a1p = (2 * C2 + qnorm + 1) / 2 + 1 / (3 * a1)
    factor = math.sqrt(8 * a1p / a1)
    if s_radius is None:
        s_radius = 0.5 * chart.delta / factor
    r = s_radius * factor
    eps = a1p * s_radius ** 2
    hbar = a1 * s_radius ** 2 / 8
    report = {"C1": C1, "C2": C2, "Q_theta_norm": qnorm, "a1": a1, "a1_prime": a1p,
              "s": s_radius, "r": r, "eps": eps, "hbar": hbar,
              "within_domain": bool(r + s_radius <= chart.delta * 1.5)}
    rng = np.random.default_rng(seed)
    zs = ball_samples(s.nu, chart.z_radius, samples, seed) if s.nu else np.zeros((samples, 0))

    def unit(dim):
        v = rng.standard_normal(dim)
        return v / np.linalg.norm(v)

    m1 = m2 = m3 = np.inf
    for z in zs:
        if s.n_plus:
            x = s_radius * unit(s.n_plus)
            y = r * rng.uniform() * unit(s.mu) if s.mu else np.zeros(0)
            gp, _ = chart.grad_F(z, x, y)
            m1 = min(m1, float(gp @ x) - hbar)
        if s.mu:
            x = s_radius * rng.uniform() * unit(s.n_plus) if s.n_plus else np.zeros(0)
            w = unit(s.mu)
            y = r * w
            m3 = min(m3, -eps - chart.F(z, x, y))

            def level(t):
                return chart.F(z, x, t * w) + eps

            if level(0.0) > 0 and level(r) < 0:
                t = optimize.brentq(level, 0.0, r, xtol=1e-14)
                _, gm = chart.grad_F(z, x, t * w)
                m2 = min(m2, -float(gm @ (t * w)) - hbar)
    report["margin_i"] = None if not np.isfinite(m1) else float(m1)
    report["margin_ii"] = None if not np.isfinite(m2) else float(m2)
    report["margin_iii"] = None if not np.isfinite(m3) else float(m3)
    return report
