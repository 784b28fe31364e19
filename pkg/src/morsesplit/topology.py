"""Critical groups, Brouwer degree and classification of the critical point.

Critical groups are computed as relative cubical homology over the
rationals.  On a regular grid with the critical point at a vertex ``c``,
the sublevel complex ``X`` holds every cube whose corner values are all
``<= 0`` and the punctured complex ``A`` drops the cubes that contain
``c``.  The relative chains of ``(X, A)`` are exactly the cubes of ``X``
incident to ``c``, so only the ``3^d`` cubes around ``c`` are ever
assembled; the grid resolution sets the cell size.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy
from scipy import ndimage

from .functional import FunctionalModel, _entry
from .reduction import ReducedFunctional
from .tolerances import DEFAULT, Tolerances

CLASSIFICATIONS = ("local_minimum", "mountain_pass_type", "nondegenerate_index_mu", "general")


class TopologyError(RuntimeError):
    """Homology or degree could not be certified at the requested resolution."""


# ---------------------------------------------------------------------------
# cubical homology


def rational_rank(matrix) -> int:
    """Exact rank over the rationals of an integer matrix."""
    m = np.asarray(matrix, dtype=int)
    if m.size == 0:
        return 0
    return int(sympy.Matrix(m.tolist()).rank())


Cube = tuple  # (anchor tuple, directions tuple)


def _cube_vertices(cube: Cube):
    anchor, dirs = cube
    for bits in itertools.product((0, 1), repeat=len(dirs)):
        v = list(anchor)
        for b, d in zip(bits, dirs):
            v[d] += b
        yield tuple(v)


def _boundary(cube: Cube):
    """Faces with incidence signs: the usual cubical boundary."""
    anchor, dirs = cube
    for k, d in enumerate(dirs):
        rest = dirs[:k] + dirs[k + 1:]
        sign = (-1) ** k
        up = list(anchor)
        up[d] += 1
        yield (tuple(anchor), rest), -sign
        yield (tuple(up), rest), sign


def star_cubes(center: tuple) -> list[Cube]:
    """All cubes of the grid that contain the vertex ``center``."""
    d = len(center)
    out = []
    for k in range(d + 1):
        for dirs in itertools.combinations(range(d), k):
            for offs in itertools.product((-1, 0), repeat=k):
                a = list(center)
                for o, di in zip(offs, dirs):
                    a[di] += o
                out.append((tuple(a), dirs))
    return out


def relative_homology(cells: list[Cube], in_pair: Callable[[Cube], bool], dim: int) -> list[int]:
    """Ranks of relative homology for the chain complex spanned by ``cells``.

    ``cells`` must be the cubes of X not in A; ``in_pair`` tells whether a
    face is one of them (faces in A are quotiented out).
    """
    by_dim = {q: [c for c in cells if len(c[1]) == q] for q in range(dim + 1)}
    index = {q: {c: i for i, c in enumerate(by_dim[q])} for q in by_dim}
    ranks = {}
    for q in range(1, dim + 1):
        rows, cols = len(by_dim[q - 1]), len(by_dim[q])
        D = np.zeros((rows, cols), dtype=int)
        for j, c in enumerate(by_dim[q]):
            for face, sgn in _boundary(c):
                i = index[q - 1].get(face)
                if i is not None and in_pair(face):
                    D[i, j] += sgn
        ranks[q] = rational_rank(D)
    ranks[0] = ranks[dim + 1] = 0
    return [len(by_dim[q]) - ranks[q] - ranks[q + 1] for q in range(dim + 1)]


@dataclass
class SublevelComplex:
    dim: int
    radius: float
    resolution: int
    spacing: float
    level: float
    values: dict
    cells_in: list
    punctured: list

    @property
    def center(self) -> tuple:
        return (self.resolution // 2,) * self.dim

    def contains(self, cube: Cube) -> bool:
        return cube in self._members

    def __post_init__(self):
        self._members = set(self.cells_in)


def sublevel_complex(f: Callable[[np.ndarray], float], dim: int, radius: float,
                     resolution: int, level_tol: float = 1e-14) -> SublevelComplex:
    """Star of the critical vertex in the grid over ``[-a, a]^dim``, ``a = r/sqrt(dim)``."""
    if resolution < 2 or resolution % 2:
        raise ValueError("resolution must be an even integer >= 2")
    c = (resolution // 2,) * dim
    half = radius / math.sqrt(dim)
    spacing = half / (resolution // 2)
    values = {}
    for off in itertools.product((-1, 0, 1), repeat=dim):
        v = tuple(ci + o for ci, o in zip(c, off))
        values[v] = 0.0 if not any(off) else float(f(np.array(off, dtype=float) * spacing))
    scale = max((abs(v) for v in values.values()), default=0.0)
    level = level_tol * scale
    star = star_cubes(c)
    cells_in = [q for q in star if max(values[v] for v in _cube_vertices(q)) <= level]
    punctured = [q for q in cells_in if c not in set(_cube_vertices(q))]
    return SublevelComplex(dim, radius, resolution, spacing, level, values,
                           cells_in, punctured)


def local_homology(f: Callable[[np.ndarray], float], dim: int, radius: float,
                   resolution: int) -> list[int]:
    """Ranks of H_q(X, X minus star) for q = 0..dim at one resolution."""
    if dim == 0:
        return [1]
    cx = sublevel_complex(f, dim, radius, resolution)
    dropped = set(cx.punctured)
    rel = [q for q in cx.cells_in if q not in dropped]
    return relative_homology(rel, lambda q: cx.contains(q) and q not in dropped, dim)


def check_isolated(grad: Callable[[np.ndarray], np.ndarray], dim: int, radius: float,
                   resolution: int, floor: float = 1e-14) -> float:
    """Smallest gradient norm over grid vertices within two cells of theta."""
    spacing = radius / math.sqrt(dim) / (resolution // 2)
    worst = np.inf
    for off in itertools.product(range(-2, 3), repeat=dim):
        if any(off):
            worst = min(worst, float(np.linalg.norm(grad(np.array(off, dtype=float) * spacing))))
    if worst <= floor:
        raise TopologyError("theta is not isolated at grid scale: the gradient vanishes "
                            "at a nearby grid vertex; shrink r")
    return worst


def _stable_groups(f, grad, dim, radius, resolution):
    check_isolated(grad, dim, radius, resolution)
    g1 = local_homology(f, dim, radius, resolution)
    g2 = local_homology(f, dim, radius, 2 * resolution)
    if g1 != g2:
        raise TopologyError(f"homology not converged ({g1} at {resolution} vs {g2} at "
                            f"{2 * resolution}), refine grid")
    return g1


def critical_groups_reduced(lf: ReducedFunctional, r: float, resolution: int = 64) -> list[int]:
    nu = lf.nu
    if nu == 0:
        return [1]
    if nu > 3:
        raise TopologyError("kernel dimension above 3 is not supported")
    if r > lf.base.r0 * (1 + 1e-12):
        raise ValueError("r exceeds the reduction radius r0")
    return _stable_groups(lf.value, lf.gradient, nu, r, resolution)


def full_space_groups_oracle(model: FunctionalModel, r: float, resolution: int = 64) -> list[int]:
    """Critical groups of the full functional on an n-dimensional grid (n <= 3)."""
    if model.dim > 3:
        raise TopologyError("full-space oracle is limited to n <= 3")
    return _stable_groups(model.value, model.gradient, model.dim, r, resolution)


# ---------------------------------------------------------------------------
# degree


def brouwer_degree(grad: Callable[[np.ndarray], np.ndarray], nu: int, r: float,
                   resolution: int = 64, max_resolution: int = 4096,
                   tol: Tolerances = DEFAULT) -> int:
    """Brouwer degree of ``grad`` on the ball of radius ``r`` about the origin."""
    if nu == 0:
        return 1
    if nu == 1:
        a, b = float(grad(np.array([r]))[0]), float(grad(np.array([-r]))[0])
        if a == 0 or b == 0:
            raise TopologyError("r crosses a zero of the gradient")
        return int((np.sign(a) - np.sign(b)) // 2)
    if nu == 2:
        return _stable(lambda n: _winding(grad, r, n), resolution, max_resolution, tol)
    if nu == 3:
        return _stable(lambda n: _solid_angle(grad, r, n), resolution, max_resolution, tol)
    raise TopologyError("degree is implemented for dimension <= 3")


def _stable(compute, resolution, max_resolution, tol):
    n = resolution
    prev = None
    while n <= max_resolution:
        val = compute(n)
        if val is not None:
            deg = round(val)
            if abs(val - deg) > tol.degree_integer:
                raise TopologyError(f"degree sum {val:.4f} is not close to an integer")
            if prev is not None and prev == deg:
                return int(deg)
            prev = deg
        n *= 2
    raise TopologyError("degree did not stabilize under refinement; angle steps too large")


def _unit(g):
    nrm = np.linalg.norm(g)
    if nrm == 0:
        raise TopologyError("r crosses a zero of the gradient")
    return g / nrm


def _winding(grad, r, n):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ang = []
    for ti in t:
        g = _unit(np.asarray(grad(r * np.array([math.cos(ti), math.sin(ti)])), dtype=float))
        ang.append(math.atan2(g[1], g[0]))
    ang = np.array(ang)
    d = np.diff(np.append(ang, ang[0]))
    d = (d + np.pi) % (2 * np.pi) - np.pi
    if np.abs(d).max() >= np.pi / 2:
        return None
    return float(d.sum() / (2 * np.pi))


def _cube_sphere(n):
    """Outward-oriented triangles of the cube surface projected to the unit sphere."""
    t = np.linspace(-1, 1, n + 1)
    verts, index, tris = [], {}, []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(np.asarray(p, dtype=float) / np.linalg.norm(p))
        return index[key]

    for axis in range(3):
        for side in (-1.0, 1.0):
            u, v = [a for a in range(3) if a != axis]
            for i in range(n):
                for j in range(n):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.zeros(3)
                        p[axis] = side
                        p[u] = t[i + di]
                        p[v] = t[j + dj]
                        quad.append(vid(p))
                    a, b, c, d = quad
                    for tri in ((a, b, c), (a, c, d)):
                        P = [verts[k] for k in tri]
                        nrm = np.cross(P[1] - P[0], P[2] - P[0])
                        if nrm @ (P[0] + P[1] + P[2]) < 0:
                            tri = (tri[0], tri[2], tri[1])
                        tris.append(tri)
    return np.array(verts), tris


def _solid_angle(grad, r, n):
    verts, tris = _cube_sphere(max(1, n // 8))
    U = np.array([_unit(np.asarray(grad(r * v), dtype=float)) for v in verts])
    total = 0.0
    for i, j, k in tris:
        a, b, c = U[i], U[j], U[k]
        if min(a @ b, b @ c, c @ a) < 0:
            return None
        num = a @ np.cross(b, c)
        den = 1 + a @ b + b @ c + c @ a
        total += 2 * math.atan2(num, den)
    return float(total / (4 * np.pi))


# ---------------------------------------------------------------------------
# classification


def mountain_pass_components(lf: ReducedFunctional | None, nu: int, mu: int, r: float,
                             resolution: int = 32) -> int:
    """Number of components of {L < 0} near theta that reach the cells next to theta.

    Works in chart coordinates, where the functional is ``L°(z) - |u-|^2``
    after discarding the H+ directions (which only raise the value).
    Returns -1 for "nonempty and connected by dimension count" (mu >= 2).
    """
    if mu >= 2:
        return -1
    if nu == 0:
        return 2 if mu == 1 else 0
    res = resolution if nu + mu <= 3 else max(8, resolution // 2)
    res -= res % 2
    half = r / math.sqrt(nu)
    t = np.linspace(-half, half, res + 1)
    shape = (res + 1,) * nu
    vals = np.empty(shape)
    for idx in itertools.product(range(res + 1), repeat=nu):
        vals[idx] = lf.value(t[list(idx)]) if any(i != res // 2 for i in idx) else 0.0
    if mu == 1:
        u2 = (np.linspace(-half, half, res + 1)) ** 2
        g = vals[..., None] - u2.reshape((1,) * nu + (-1,))
    else:
        g = vals
    scale = np.abs(g).max()
    neg = g < -1e-14 * max(scale, 1e-300)
    labels, count = ndimage.label(neg)
    c = res // 2
    ring = labels[tuple(slice(c - 1, c + 2) for _ in range(g.ndim))]
    return int(len(set(ring[ring > 0].ravel().tolist())))


def classify(betti: list[int], mu: int, mp_components: int) -> str:
    if betti and betti[0] != 0:
        return "local_minimum"
    if mp_components >= 2:
        return "mountain_pass_type"
    if all(b == (1 if q == mu else 0) for q, b in enumerate(betti)):
        return "nondegenerate_index_mu"
    return "general"


@dataclass
class CriticalGroupReport:
    betti_reduced: list
    mu: int
    nu: int
    betti_shifted: list
    classification: str
    brouwer_degree_reduced: int | None = None
    poincare_hopf_lhs: int | None = None
    poincare_hopf_rhs: int | None = None
    resolutions_tested: list = field(default_factory=list)
    mountain_pass_components: int | None = None
    full_space_betti: list | None = None

    def to_json(self) -> dict:
        ph = None
        if self.poincare_hopf_lhs is not None:
            ph = {"lhs": self.poincare_hopf_lhs, "rhs": self.poincare_hopf_rhs,
                  "pass": self.poincare_hopf_lhs == self.poincare_hopf_rhs}
        return {"betti_reduced": list(self.betti_reduced), "mu": self.mu, "nu": self.nu,
                "betti": list(self.betti_shifted), "classification": self.classification,
                "degree": self.brouwer_degree_reduced, "poincare_hopf": ph,
                "resolutions_tested": list(self.resolutions_tested),
                "mountain_pass_components": self.mountain_pass_components,
                "full_space_betti": self.full_space_betti}


def shift(groups_reduced: list[int] | None, mu: int, nu: int | None = None,
          mp_components: int = 0) -> CriticalGroupReport:
    """Shift reduced groups by the Morse index and classify."""
    if groups_reduced is None or nu == 0:
        groups_reduced = [1]
        nu = 0
    nu = len(groups_reduced) - 1 if nu is None else nu
    betti = [0] * (mu + nu + 1)
    for q, b in enumerate(groups_reduced):
        betti[q + mu] = int(b)
    return CriticalGroupReport(list(groups_reduced), mu, nu, betti,
                               classify(betti, mu, mp_components),
                               mountain_pass_components=mp_components)


def euler_sum(betti) -> int:
    return int(sum((-1) ** q * b for q, b in enumerate(betti)))


def poincare_hopf_check(report: CriticalGroupReport, degree_reduced: int, mu: int) -> dict:
    """Three-way ledger: full sum, shifted reduced sum and signed degree."""
    lhs = euler_sum(report.betti_shifted)
    mid = (-1) ** mu * euler_sum(report.betti_reduced)
    rhs = (-1) ** mu * int(degree_reduced)
    report.brouwer_degree_reduced = int(degree_reduced)
    report.poincare_hopf_lhs = lhs
    report.poincare_hopf_rhs = rhs
    return {"lhs": lhs, "middle": mid, "rhs": rhs, "pass": lhs == mid == rhs}


def topology_invariants(report: CriticalGroupReport, lf: ReducedFunctional | None,
                        r: float, resolution: int, tol: Tolerances = DEFAULT) -> list[dict]:
    mu, nu = report.mu, report.nu
    betti = report.betti_shifted
    out = []
    outside = sum(b for q, b in enumerate(betti) if q < mu or q > mu + nu)
    out.append(_entry("topology", "range_property", outside, 0))
    ph_ok = report.poincare_hopf_lhs == report.poincare_hopf_rhs
    out.append(_entry("topology", "poincare_hopf",
                      abs((report.poincare_hopf_lhs or 0) - (report.poincare_hopf_rhs or 0)),
                      0, passed=ph_ok))
    if report.classification == "local_minimum":
        delta0 = all(b == (1 if q == 0 else 0) for q, b in enumerate(betti))
        out.append(_entry("topology", "minimum_pattern", 0 if delta0 else 1, 0))
    if mu == 0 and nu == 1:
        mp = report.classification == "mountain_pass_type"
        d1 = betti == [0, 1]
        out.append(_entry("topology", "mountain_pass_equivalence", 0 if mp == d1 else 1, 0))
    if nu == 1 and len(betti) > 1 and betti[1] != 0 and mu == 0:
        out.append(_entry("topology", "c1_pattern", 0 if betti == [0, 1] else 1, 0))
    if mu < len(betti) and betti[mu] != 0 and report.classification != "local_minimum":
        pattern = all(b == (1 if q == mu else 0) for q, b in enumerate(betti))
        out.append(_entry("topology", "index_mu_pattern", 0 if pattern else 1, 0,
                          hard=nu == 0))
    if lf is not None and nu >= 1:
        half = local_homology(lf.value, nu, r / 2, resolution)
        out.append(_entry("topology", "excision_stability",
                          0 if half == report.betti_reduced else 1, 0))
        if report.brouwer_degree_reduced is not None:
            d2 = brouwer_degree(lf.gradient, nu, r / 2, 64, tol=tol)
            out.append(_entry("topology", "degree_stability",
                              abs(d2 - report.brouwer_degree_reduced), 0))
        # strict local minimum on the grid iff C_0 != 0
        if mu == 0:
            spacing = r / math.sqrt(nu) / (resolution // 2)
            vals = [lf.value(np.array(off, dtype=float) * spacing)
                    for off in itertools.product(range(-2, 3), repeat=nu) if any(off)]
            strict_min = min(vals) > 0
            out.append(_entry("topology", "minimum_characterization",
                              0 if strict_min == (betti[0] != 0) else 1, 0))
    return out
