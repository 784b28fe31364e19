"""Built-in catalog of test problems.

Each entry carries the problem itself plus what an independent oracle says
about it (kernel dimension, Morse index, expected critical groups), so the
verification suite can compare the pipeline against known answers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .functional import ProblemSpec


@dataclass(frozen=True)
class CatalogEntry:
    spec: ProblemSpec
    nu: int
    mu: int
    groups: tuple
    classification: str
    note: str = ""
    symmetry: str | None = None
    extras: dict = field(default_factory=dict)


def _poly(name, terms, crit, radius=1.0):
    doc = {"terms": [{"coeffs": c, "powers": list(p)} for c, p in terms],
           "domain_radius": radius}
    return ProblemSpec("polynomial", doc, tuple(float(c) for c in crit), name=name)


def pendulum_spec(grid_size: int = 64, period: float = 2 * math.pi,
                  name: str = "pendulum") -> ProblemSpec:
    params = {"lagrangian": "0.5*v**2 - (1 - cos(q))", "period": period,
              "grid_size": grid_size, "domain_radius": 1.0}
    return ProblemSpec("lagrangian_action", params, (0.0,) * grid_size, name=name)


def resonant_pendulum_spec(grid_size: int = 32, period: float = 2 * math.pi,
                           name: str = "resonant_pendulum") -> ProblemSpec:
    """Pendulum whose linearization has the first Fourier pair in its kernel."""
    dt = period / grid_size
    w2 = (2 * math.sin(math.pi / grid_size) / dt) ** 2
    params = {"lagrangian": f"0.5*v**2 - {w2!r}*(1 - cos(q))", "period": period,
              "grid_size": grid_size, "domain_radius": 1.0}
    return ProblemSpec("lagrangian_action", params, (0.0,) * grid_size, name=name)


def first_dirichlet_eigenvalue(grid_size: int, length: float = 1.0) -> float:
    h = length / (grid_size + 1)
    return (2 * math.sin(math.pi * h / (2 * length)) / h) ** 2


def elliptic_spec(grid_size: int = 31, mode: int = 1, name: str = "elliptic_bifurcation") -> ProblemSpec:
    h = 1.0 / (grid_size + 1)
    lam = (2 * math.sin(math.pi * mode * h / 2) / h) ** 2
    params = {"nonlinearity": f"{lam!r}*u - u**3", "grid_size": grid_size,
              "domain_radius": 1.0}
    return ProblemSpec("elliptic_1d", params, (0.0,) * grid_size, name=name)


def catalog() -> dict[str, CatalogEntry]:
    entries = [
        CatalogEntry(_poly("saddle", [(1, (2, 0)), (-1, (0, 2))], (0, 0)),
                     0, 1, (0, 1), "mountain_pass_type"),
        CatalogEntry(_poly("quartic_min", [(1, (4, 0)), (1, (0, 2))], (0, 0)),
                     1, 0, (1, 0), "local_minimum"),
        CatalogEntry(_poly("quartic_saddle", [(1, (4, 0)), (-1, (0, 2))], (0, 0)),
                     1, 1, (0, 1, 0), "mountain_pass_type"),
        CatalogEntry(_poly("graph_coupled", [(0.5, (0, 2)), (1, (2, 1)), (1, (4, 0))], (0, 0)),
                     1, 0, (1, 0), "local_minimum",
                     note="h(z) = -z^2 and reduced value z^4/2 in closed form"),
        CatalogEntry(_poly("monkey_saddle", [(1, (3, 0, 0)), (-3, (1, 2, 0)), (1, (0, 0, 2))],
                           (0, 0, 0)),
                     2, 0, (0, 2, 0), "mountain_pass_type"),
        CatalogEntry(_poly("monkey_saddle_2d", [(1, (3, 0)), (-3, (1, 2))], (0, 0)),
                     2, 0, (0, 2, 0), "mountain_pass_type"),
        CatalogEntry(_poly("quartic_3d", [(1, (4, 0, 0)), (-1, (0, 2, 0)), (1, (0, 0, 2))],
                           (0, 0, 0)),
                     1, 1, (0, 1, 0), "mountain_pass_type"),
        CatalogEntry(_poly("symmetric_quartic", [(1, (4, 0, 0)), (1, (0, 2, 0)), (1, (0, 0, 2))],
                           (0, 0, 0)),
                     1, 0, (1, 0), "local_minimum", symmetry="swap_y_w"),
        CatalogEntry(_poly("double_well",
                           [(1, (4, 0)), (-4, (3, 0)), (4, (2, 0)),
                            (1, (0, 2)), (1, (0, 1)), (0.25, (0, 0))],
                           (1, -0.5)),
                     0, 1, (0, 1), "mountain_pass_type",
                     note="((x-1)^2-1)^2 + (y+1/2)^2 at the saddle between the wells"),
        CatalogEntry(_poly("degenerate_double_well", [(1, (6, 0)), (-1, (4, 0)), (1, (0, 2))],
                           (0, 0)),
                     1, 0, (0, 1), "mountain_pass_type",
                     note="degenerate maximum along the kernel, minimum across it"),
        CatalogEntry(pendulum_spec(), 0, 3, (0, 0, 0, 1), "nondegenerate_index_mu",
                     symmetry="cyclic_shift"),
        CatalogEntry(resonant_pendulum_spec(), 2, 1, (0, 1, 0, 0), "mountain_pass_type",
                     symmetry="cyclic_shift",
                     note="kernel spanned by the first Fourier pair"),
        CatalogEntry(elliptic_spec(), 1, 0, (1, 0), "local_minimum"),
    ]
    return {e.spec.name: e for e in entries}
