"""Run configuration, the analysis pipeline and the verification ledger."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .catalog import CatalogEntry, catalog
from .functional import (FunctionalModel, ModelError, ProblemSpec, _entry, build_model,
                         cyclic_shift, model_invariants, parse_problem)
from .normal_form import (ChartError, build_chart, chart_invariants, sample_chart_points,
                          verify_behavior_estimates)
from .reduction import (ReducedFunctional, ReductionError, check_equivariance, dump_grid_csv,
                        isolatedness_report, reduce, reduction_invariants)
from .spectral import SplittingError, certify_conditions, split, splitting_invariants
from .tolerances import DEFAULT, Tolerances
from .topology import (TopologyError, brouwer_degree, critical_groups_reduced,
                       full_space_groups_oracle, mountain_pass_components, poincare_hopf_check,
                       shift, topology_invariants)

REPORT_FILE = "report.json"
GRID_FILE = "reduction_grid.csv"
CHART_FILE = "chart_residuals.csv"
SUMMARY_FILE = "summary.txt"
TIMINGS_FILE = "timings.json"

_CONFIG_KEYS = {"problem", "catalog", "tolerances", "radii", "resolutions", "commands",
                "output_dir", "seed", "samples", "symmetry", "name"}
_RADII_KEYS = {"r0", "delta", "topology_r", "certificate"}
_SAMPLE_KEYS = {"model", "certificate", "chart", "reduced_gradient"}


class ConfigError(ValueError):
    """The run configuration is malformed."""


@dataclass
class RunConfig:
    problem: ProblemSpec
    tolerances: Tolerances = DEFAULT
    radii: dict = field(default_factory=dict)
    resolutions: list = field(default_factory=lambda: [64])
    commands: list = field(default_factory=lambda: ["analyze"])
    output_dir: str | None = None
    seed: int = 0
    samples: dict = field(default_factory=dict)
    symmetry: Any = None
    expected: CatalogEntry | None = None

    def sample(self, key: str, default: int) -> int:
        return int(self.samples.get(key, default))


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    expected = None
    if "catalog" in doc:
        if "problem" in doc:
            raise ConfigError("give either 'problem' or 'catalog', not both")
        cat = catalog()
        if doc["catalog"] not in cat:
            raise ConfigError(f"unknown catalog problem {doc['catalog']!r}; "
                              f"choose from {sorted(cat)}")
        expected = cat[doc["catalog"]]
        problem = expected.spec
    elif "problem" in doc:
        try:
            problem = parse_problem(doc["problem"], name=doc.get("name"))
        except ModelError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError("config needs a 'problem' or a 'catalog' entry")
    try:
        tol = DEFAULT.updated(doc.get("tolerances"))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad tolerances: {exc}") from exc
    radii = dict(doc.get("radii", {}))
    if set(radii) - _RADII_KEYS:
        raise ConfigError(f"unknown radii keys: {sorted(set(radii) - _RADII_KEYS)}")
    for k, v in radii.items():
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"radius {k!r} must be positive")
    res = doc.get("resolutions", [64])
    if not isinstance(res, list) or not res:
        raise ConfigError("resolutions must be a non-empty list")
    for r in res:
        if not isinstance(r, int) or r < 8:
            raise ConfigError(f"resolutions must be integers >= 8, got {r!r}")
        if r % 2:
            raise ConfigError(f"resolutions must be even so theta is a grid vertex, got {r}")
    samples = dict(doc.get("samples", {}))
    if set(samples) - _SAMPLE_KEYS:
        raise ConfigError(f"unknown samples keys: {sorted(set(samples) - _SAMPLE_KEYS)}")
    commands = doc.get("commands", ["analyze"])
    if set(commands) - {"analyze", "verify", "report"}:
        raise ConfigError(f"unknown commands {commands!r}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    symmetry = doc.get("symmetry", expected.symmetry if expected else None)
    return RunConfig(problem, tol, radii, list(res), list(commands), doc.get("output_dir"),
                     seed, samples, symmetry, expected)


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc)


def catalog_config(name: str, **overrides) -> RunConfig:
    return parse_config({"catalog": name, **overrides})


# ---------------------------------------------------------------------------
# report


@dataclass
class AnalysisReport:
    name: str
    model: dict = field(default_factory=dict)
    splitting: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)
    reduction: dict = field(default_factory=dict)
    chart: dict = field(default_factory=dict)
    behavior: dict = field(default_factory=dict)
    critical_groups: dict = field(default_factory=dict)
    equivariance: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.ledger if e["hard"]) and not self.errors

    def failures(self) -> list[dict]:
        return [e for e in self.ledger if e["hard"] and not e["passed"]]

    def to_json(self) -> dict:
        return _jsonable({
            "name": self.name, "passed": self.passed, "model": self.model,
            "splitting": self.splitting, "certificate": self.certificate,
            "reduction": self.reduction, "chart": self.chart, "behavior": self.behavior,
            "critical_groups": self.critical_groups, "equivariance": self.equivariance,
            "ledger": self.ledger, "errors": self.errors,
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


_HINTS = {
    "ModelError": "check the problem parameters and the critical point",
    "SplittingError": "adjust null_tol so the kernel is separated from the spectrum",
    "ReductionError": "shrink r0 or the domain radius",
    "NonContractionError": "shrink r0",
    "ChartError": "shrink the chart radius delta",
    "NonConcavityError": "shrink the chart radius delta",
    "TopologyError": "change topology_r or refine the resolution",
}


def _fail(report: AnalysisReport, module: str, exc: Exception) -> None:
    kind = type(exc).__name__
    report.errors.append({"module": module, "error": kind, "message": str(exc),
                          "hint": _HINTS.get(kind, "see message")})


def _symmetry_matrix(symmetry, n: int):
    if symmetry in (None, "none"):
        return None
    if symmetry == "cyclic_shift":
        return cyclic_shift(n, 1)
    if symmetry == "swap_y_w":
        return np.eye(n)[[0, 2, 1]] if n == 3 else None
    if isinstance(symmetry, dict) and "permutation" in symmetry:
        perm = list(symmetry["permutation"])
        if sorted(perm) != list(range(n)):
            raise ConfigError("symmetry permutation must be a permutation of 0..n-1")
        return np.eye(n)[perm]
    if isinstance(symmetry, dict) and "cyclic_shift" in symmetry:
        return cyclic_shift(n, int(symmetry["cyclic_shift"]))
    if isinstance(symmetry, dict) and "matrix" in symmetry:
        J = np.asarray(symmetry["matrix"], dtype=float)
        if J.shape != (n, n):
            raise ConfigError("symmetry matrix has the wrong shape")
        return J
    raise ConfigError(f"unknown symmetry {symmetry!r}")


def analyze(cfg: RunConfig, out_dir: str | Path | None = None) -> AnalysisReport:
    """Run the full pipeline and optionally write report, CSV grids and summary."""
    tol = cfg.tolerances
    seed = cfg.seed
    report = AnalysisReport(cfg.problem.name)
    clock = time.perf_counter

    t = clock()
    try:
        model = build_model(cfg.problem, tol)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    report.model = {"name": model.name, "kind": model.kind, "dim": model.dim,
                    "domain_radius": model.domain_radius,
                    **{k: v for k, v in model.metadata.items() if k != "terms"}}
    report.ledger += model_invariants(model, cfg.sample("model", 20), seed, tol)
    report.timings["model"] = clock() - t

    t = clock()
    try:
        s = split(model, tol=tol)
    except SplittingError as exc:
        _fail(report, "spectral", exc)
        return _finish(report, cfg, out_dir)
    report.splitting = s.summary()
    report.ledger += splitting_invariants(model, s, tol)
    cert_r = min(model.domain_radius, cfg.radii.get("certificate", model.domain_radius))
    cert = certify_conditions(model, s, cert_r, cfg.sample("certificate", 64), seed)
    report.certificate = cert.summary()
    report.timings["spectral"] = clock() - t

    t = clock()
    try:
        red = reduce(model, s, cfg.radii.get("r0"), tol, seed)
        lf = ReducedFunctional(red)
        report.reduction = red.summary()
        report.ledger += reduction_invariants(lf, seed=seed, tol=tol)
        report.reduction["isolatedness"] = isolatedness_report(model, lf, red.r0, seed=seed)
    except ReductionError as exc:
        _fail(report, "reduction", exc)
        return _finish(report, cfg, out_dir)
    report.timings["reduction"] = clock() - t

    t = clock()
    chart = None
    try:
        chart = build_chart(model, s, red, cert, tol, seed, cfg.radii.get("delta"))
        entries, chart_rep = chart_invariants(chart, lf, cfg.sample("chart", 100), seed, tol)
        report.ledger += entries
        report.chart = {**chart.summary(), **chart_rep}
        report.behavior = verify_behavior_estimates(chart, cert=cert, seed=seed)
    except ChartError as exc:
        _fail(report, "normal_form", exc)
    report.timings["normal_form"] = clock() - t

    t = clock()
    try:
        report.critical_groups = _topology(model, s, lf, red, cfg, report)
    except TopologyError as exc:
        _fail(report, "topology", exc)
    report.timings["topology"] = clock() - t

    t = clock()
    report.equivariance = _equivariance(model, red, cfg, report)
    report.timings["equivariance"] = clock() - t

    if cfg.expected is not None:
        _compare_expected(report, cfg.expected, s)
    return _finish(report, cfg, out_dir, lf=lf, chart=chart)


def _topology(model, s, lf, red, cfg, report) -> dict:
    res = cfg.resolutions[0]
    r = min(red.r0, cfg.radii.get("topology_r", red.r0))
    groups = critical_groups_reduced(lf, r, res) if s.nu else [1]
    mp = mountain_pass_components(lf, s.nu, s.mu, r)
    rep = shift(groups, s.mu, s.nu, mp)
    rep.resolutions_tested = [res, 2 * res] if s.nu else []
    deg = brouwer_degree(lf.gradient, s.nu, r) if s.nu else 1
    ph = poincare_hopf_check(rep, deg, s.mu)
    report.ledger += topology_invariants(rep, lf if s.nu else None, r, res, cfg.tolerances)
    if model.dim <= 3 and s.nu >= 1:
        full = full_space_groups_oracle(model, r, res)
        rep.full_space_betti = full
        width = max(len(full), len(rep.betti_shifted))
        a = list(full) + [0] * (width - len(full))
        b = list(rep.betti_shifted) + [0] * (width - len(rep.betti_shifted))
        report.ledger.append(_entry("topology", "shifting_equality",
                                    sum(abs(x - y) for x, y in zip(a, b)), 0))
    out = rep.to_json()
    out["poincare_hopf"] = ph
    out["radius"] = r
    return out


def _equivariance(model, red, cfg, report) -> list:
    results = []
    ident = check_equivariance(model, model, np.eye(model.dim), red, red, seed=cfg.seed,
                               tol=cfg.tolerances)
    results.append({"J": "identity", **ident})
    J = _symmetry_matrix(cfg.symmetry, model.dim)
    if J is not None:
        rep = check_equivariance(model, model, J, red, red, seed=cfg.seed, tol=cfg.tolerances)
        results.append({"J": cfg.symmetry if isinstance(cfg.symmetry, str) else "custom", **rep})
    for r in results:
        if r["admissible"]:
            report.ledger.append(_entry(
                "reduction", f"equivariance[{r['J']}]",
                max(r.get("max_h_error", 0.0), r.get("max_value_error", 0.0)),
                cfg.tolerances.equivariance, passed=r["passed"]))
    return results


def _compare_expected(report: AnalysisReport, exp: CatalogEntry, s) -> None:
    report.ledger.append(_entry("catalog", "nullity", abs(s.nu - exp.nu), 0))
    report.ledger.append(_entry("catalog", "morse_index", abs(s.mu - exp.mu), 0))
    cg = report.critical_groups
    if cg and exp.groups is not None:
        got = list(cg["betti"])
        want = list(exp.groups)
        width = max(len(got), len(want))
        got += [0] * (width - len(got))
        want += [0] * (width - len(want))
        report.ledger.append(_entry("catalog", "critical_groups",
                                    sum(abs(a - b) for a, b in zip(got, want)), 0))
    if cg:
        report.ledger.append(_entry("catalog", "classification",
                                    0 if cg["classification"] == exp.classification else 1, 0))


def _finish(report, cfg, out_dir, lf=None, chart=None) -> AnalysisReport:
    out_dir = out_dir or cfg.output_dir
    if out_dir is None:
        return report
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if lf is not None:
        dump_grid_csv(lf, out / GRID_FILE)
    if chart is not None and lf is not None:
        _dump_chart_csv(chart, lf, out / CHART_FILE, min(cfg.sample("chart", 100), 100), cfg.seed)
    with open(out / REPORT_FILE, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / TIMINGS_FILE, "w") as fh:
        json.dump(_jsonable(report.timings), fh, indent=2, sort_keys=True)
    write_summary(out)
    return report


def _dump_chart_csv(chart, lf, path: Path, count: int, seed: int) -> None:
    zs, ups, ums = sample_chart_points(chart, count, seed)
    s = chart.splitting
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"z{i}" for i in range(s.nu)] + ["u_plus_norm", "u_minus_norm",
                                                      "normal_form_residual"])
        for z, up, um in zip(zs, ups, ums):
            val = chart.model.value(chart.big_phi(z, up, um))
            res = abs(val - (up @ up - um @ um + lf.value(z)))
            w.writerow([f"{v:.17g}" for v in list(z) + [np.linalg.norm(up),
                                                         np.linalg.norm(um), res]])


# ---------------------------------------------------------------------------
# report command


def write_summary(out_dir: str | Path) -> Path:
    """Render the plain-text summary from a previous analyze run."""
    out = Path(out_dir)
    path = out / REPORT_FILE
    if not path.exists():
        raise FileNotFoundError(f"no {REPORT_FILE} in {out}; run analyze first")
    with open(path) as fh:
        rep = json.load(fh)
    sp = rep.get("splitting", {})
    cg = rep.get("critical_groups", {})
    lines = [
        f"problem: {rep['name']}",
        f"status: {'pass' if rep['passed'] else 'FAIL'}",
        f"dimension: {rep['model'].get('dim')}",
        f"nullity nu: {sp.get('nu')}",
        f"Morse index mu: {sp.get('mu')}",
        f"spectral gap a0: {sp.get('a0')}",
    ]
    if rep.get("reduction"):
        red = rep["reduction"]
        lines += [f"reduction radius r0: {red['r0']}",
                  f"contraction factor: {red['contraction_factor']}",
                  f"Lipschitz constant of h (X-norm): {red['lipschitz_h_X']}"]
    if rep.get("chart"):
        ch = rep["chart"]
        lines += [f"chart radius: {ch['chart_radius']}",
                  f"normal-form max residual: {ch['normal_form_max_residual']}"]
    if cg:
        betti = cg["betti"]
        groups = ", ".join(f"C_{q}={b}" for q, b in enumerate(betti))
        lines += [f"critical groups: {groups}",
                  f"reduced groups: {cg['betti_reduced']}",
                  f"classification: {cg['classification']}",
                  f"Brouwer degree (reduced): {cg['degree']}",
                  f"Poincare-Hopf: lhs={cg['poincare_hopf']['lhs']} "
                  f"rhs={cg['poincare_hopf']['rhs']} pass={cg['poincare_hopf']['pass']}"]
    failed = [e for e in rep["ledger"] if e["hard"] and not e["passed"]]
    lines.append(f"ledger: {len(rep['ledger'])} entries, {len(failed)} failed hard gates")
    for e in failed:
        lines.append(f"  FAIL {e['module']}.{e['name']}: {e['measured']:.3e} > {e['threshold']:.3e}")
    for e in rep.get("errors", []):
        lines.append(f"  ERROR {e['module']}: {e['message']} (hint: {e['hint']})")
    for name in (GRID_FILE, CHART_FILE):
        if (out / name).exists():
            lines.append(f"grid file: {name}")
    target = out / SUMMARY_FILE
    target.write_text("\n".join(lines) + "\n")
    return target


def format_ledger(report: AnalysisReport) -> list[str]:
    lines = []
    for e in report.ledger:
        tag = "PASS" if e["passed"] else ("FAIL" if e["hard"] else "note")
        lines.append(f"{tag} {report.name} {e['module']}.{e['name']} "
                     f"measured={e['measured']:.3e} threshold={e['threshold']:.3e}")
    for e in report.errors:
        lines.append(f"FAIL {report.name} {e['module']} {e['error']}: {e['message']} "
                     f"(hint: {e['hint']})")
    return lines


def verify_catalog(names: list[str] | None = None, out_dir: str | Path | None = None,
                   printer=print) -> tuple[bool, list[AnalysisReport]]:
    reports = []
    ok = True
    for name in names or list(catalog()):
        cfg = catalog_config(name)
        sub = None if out_dir is None else Path(out_dir) / name
        rep = analyze(cfg, sub)
        for line in format_ledger(rep):
            printer(line)
        printer(f"{'PASS' if rep.passed else 'FAIL'} {name}")
        ok = ok and rep.passed
        reports.append(rep)
    return ok, reports
