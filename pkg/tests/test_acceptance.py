"""Acceptance criteria, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line with the
measured worst case next to its threshold.
"""
import subprocess
import sys
import time

import numpy as np
import pytest
import sympy as sp

from morsesplit.catalog import catalog, elliptic_spec, resonant_pendulum_spec
from morsesplit.functional import build_model, cyclic_shift
from morsesplit.normal_form import build_chart, sample_chart_points
from morsesplit.pipeline import RunConfig, analyze
from morsesplit.reduction import (ReducedFunctional, check_equivariance, reduce,
                                  reduced_gradient_entries, reduction_invariants)
from morsesplit.spectral import certify_conditions, split
from morsesplit.topology import (brouwer_degree, critical_groups_reduced,
                                 full_space_groups_oracle, mountain_pass_components,
                                 poincare_hopf_check, shift)

CATALOG = catalog()
DEGENERATE = [n for n, e in CATALOG.items() if e.nu >= 1]
SMALL = [n for n, e in CATALOG.items() if e.nu >= 1 and len(e.spec.critical_point) <= 3]


def announce(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {detail}")


def pipeline(name):
    model = build_model(CATALOG[name].spec)
    s = split(model)
    red = reduce(model, s)
    return model, s, red, ReducedFunctional(red)


def groups(lf, s, r, res):
    reduced = critical_groups_reduced(lf, r, res) if s.nu else [1]
    rep = shift(reduced, s.mu, s.nu, mountain_pass_components(lf, s.nu, s.mu, r))
    return rep


def pad(a, n):
    return list(a) + [0] * (n - len(a))


def test_criterion_1_reduction_residual(capsys):
    worst, slowest = 0.0, 0.0
    for name in DEGENERATE:
        t = time.perf_counter()
        _, s, red, _ = pipeline(name)
        res = max(red.residual(z) for z in red.grid(17))
        slowest = max(slowest, time.perf_counter() - t)
        worst = max(worst, res)
    ok = worst <= 1e-10 and slowest < 5
    announce(capsys, 1, ok, f"max complement residual {worst:.2e} <= 1e-10, "
                            f"slowest {slowest:.2f}s < 5s over {len(DEGENERATE)} problems")
    assert ok


def test_criterion_2_contraction_certificate(capsys):
    kappa = lip = 0.0
    for name in DEGENERATE:
        _, _, red, lf = pipeline(name)
        entries = {e["name"]: e for e in reduction_invariants(lf, points_per_axis=17)}
        kappa = max(kappa, entries["contraction_factor"]["measured"])
        lip = max(lip, entries["lipschitz_h_X"]["measured"])
    ok = kappa < 0.5 + 1e-6 and lip <= 2 + 1e-6
    announce(capsys, 2, ok, f"contraction factor {kappa:.3e} < 0.5, "
                            f"X-Lipschitz of h {lip:.3e} <= 2")
    assert ok


def test_criterion_3_closed_form(capsys):
    x, y = sp.symbols("x y")
    f = y ** 2 / 2 + x ** 2 * y + x ** 4
    (hs,) = sp.solve(sp.diff(f, y), y)
    h_exact = sp.lambdify(x, hs)
    L_exact = sp.lambdify(x, sp.expand(f.subs(y, hs)))
    assert sp.simplify(hs + x ** 2) == 0 and sp.simplify(f.subs(y, hs) - x ** 4 / 2) == 0
    _, s, red, lf = pipeline("graph_coupled")
    sign = np.sign(s.basis_H0[0, 0])
    err_h = err_L = 0.0
    for z in np.linspace(-0.3, 0.3, 61):
        zc = np.array([sign * z])
        err_h = max(err_h, abs(red.point(zc)[1] - h_exact(z)))
        err_L = max(err_L, abs(lf.value(zc) - L_exact(z)))
    ok = max(err_h, err_L) <= 1e-9 and red.r0 >= 0.3
    announce(capsys, 3, ok, f"|h + z^2| {err_h:.2e}, |L0 - z^4/2| {err_L:.2e} <= 1e-9 "
                            f"on |z| <= 0.3 (r0 = {red.r0:g})")
    assert ok


def test_criterion_4_normal_form_identity(capsys):
    worst, slowest = 0.0, 0.0
    for name in CATALOG:
        t = time.perf_counter()
        model, s, red, lf = pipeline(name)
        cert = certify_conditions(model, s, model.domain_radius, 64, 0)
        chart = build_chart(model, s, red, cert)
        zs, ups, ums = sample_chart_points(chart, 100, seed=0)
        for z, up, um in zip(zs, ups, ums):
            val = model.value(chart.big_phi(z, up, um))
            worst = max(worst, abs(val - (up @ up - um @ um + lf.value(z))))
        slowest = max(slowest, time.perf_counter() - t)
    ok = worst <= 1e-8 and slowest < 30
    announce(capsys, 4, ok, f"max normal-form residual {worst:.2e} <= 1e-8 over 100 points "
                            f"x {len(CATALOG)} problems, slowest {slowest:.2f}s < 30s")
    assert ok


def test_criterion_5_shifting_theorem(capsys):
    required = {"quartic_min", "quartic_saddle", "graph_coupled", "monkey_saddle"}
    assert required <= set(SMALL)
    mismatches, slowest = [], 0.0
    for name in SMALL:
        t = time.perf_counter()
        model, s, red, lf = pipeline(name)
        for res in (64, 128):
            shifted = groups(lf, s, red.r0, res).betti_shifted
            full = full_space_groups_oracle(model, red.r0, res)
            width = max(len(full), len(shifted))
            if pad(full, width) != pad(shifted, width):
                mismatches.append((name, res, full, shifted))
        slowest = max(slowest, time.perf_counter() - t)
    ok = not mismatches and slowest < 60
    announce(capsys, 5, ok, f"full-space groups equal shifted reduced groups for {len(SMALL)} "
                            f"problems at resolutions 64 and 128, slowest {slowest:.2f}s < 60s"
                            + (f"; mismatches {mismatches}" if mismatches else ""))
    assert ok


def test_criterion_6_poincare_hopf(capsys):
    bad = []
    for name in CATALOG:
        _, s, red, lf = pipeline(name)
        rep = groups(lf, s, red.r0, 64)
        deg = brouwer_degree(lf.gradient, s.nu, red.r0) if s.nu else 1
        ph = poincare_hopf_check(rep, deg, s.mu)
        if not (ph["pass"] and isinstance(ph["lhs"], int) and isinstance(ph["rhs"], int)):
            bad.append((name, ph))
    ok = not bad
    announce(capsys, 6, ok, f"sum (-1)^q rank C_q = (-1)^mu deg exactly on {len(CATALOG)} "
                            f"problems" + (f"; failures {bad}" if bad else ""))
    assert ok


def test_criterion_7_classification(capsys):
    results = {}
    for name in ("quartic_min", "saddle", "degenerate_double_well", "double_well"):
        _, s, red, lf = pipeline(name)
        rep = groups(lf, s, red.r0, 64)
        results[name] = (s.nu, s.mu, rep.betti_shifted, rep.classification)
    ok = (results["quartic_min"][2:] == ([1, 0], "local_minimum")
          and results["saddle"][:3] == (0, 1, [0, 1])
          and results["degenerate_double_well"] == (1, 0, [0, 1], "mountain_pass_type")
          and results["double_well"][2:] == ([0, 1], "mountain_pass_type"))
    announce(capsys, 7, ok, "; ".join(f"{k}: nu={v[0]} mu={v[1]} C={v[2]} {v[3]}"
                                      for k, v in results.items()))
    assert ok


def test_criterion_8_equivariance(capsys):
    worst, checked = 0.0, 0
    for name in ("pendulum", "resonant_pendulum"):
        model, s, red, _ = pipeline(name)
        for k in (1, 2, 5):
            rep = check_equivariance(model, model, cyclic_shift(model.dim, k), red, red,
                                     samples=8)
            assert rep["admissible"], rep
            worst = max(worst, rep["max_h_error"], rep["max_value_error"])
            checked += 1
    ok = worst <= 1e-10
    announce(capsys, 8, ok, f"max |h(Jz) - J h(z)|, |L0(Jz) - L0(z)| = {worst:.2e} <= 1e-10 "
                            f"over {checked} cyclic shifts")
    assert ok


def test_criterion_9_gradient_formula(capsys):
    grad = hess = 0.0
    failures = []
    for name in DEGENERATE:
        _, _, _, lf = pipeline(name)
        for e in reduced_gradient_entries(lf, count=10):
            if e["name"] == "reduced_gradient_fd":
                grad = max(grad, e["measured"])
            if e["name"] == "reduced_hessian_theta":
                hess = max(hess, e["measured"] / e["threshold"])
            if not e["passed"]:
                failures.append((name, e["name"], e["measured"]))
    ok = not failures and grad <= 1e-5
    announce(capsys, 9, ok, f"max relative FD gradient error {grad:.2e} <= 1e-5; "
                            f"FD Hessian at theta uses {hess:.2e} of its 1e-4*step budget")
    assert ok


@pytest.mark.slow
def test_criterion_10_catalog_runtime(capsys):
    t = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "morsesplit.cli", "verify", "--catalog"],
                          capture_output=True, text=True)
    # the largest grids the budget covers
    large = [analyze(RunConfig(spec)) for spec in
             (elliptic_spec(199, name="elliptic_200"), resonant_pendulum_spec(200, name="resonant_200"))]
    elapsed = time.perf_counter() - t
    large_ok = all(r.passed for r in large)
    ok = proc.returncode == 0 and large_ok and elapsed < 600
    announce(capsys, 10, ok, f"verify --catalog exit {proc.returncode} "
                             f"({proc.stdout.strip().splitlines()[-1]}) plus n=200 elliptic and "
                             f"pendulum runs {'pass' if large_ok else 'FAIL'}, "
                             f"total {elapsed:.1f}s < 600s")
    assert ok, proc.stdout[-2000:] + proc.stderr[-2000:] + str([r.failures() for r in large])
