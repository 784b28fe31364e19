"""Splitting reduction, normal-form charts and critical groups near degenerate critical points."""
from .catalog import CatalogEntry, catalog
from .estimators import CriticalPointClassifier, MorsePalaisChart, SplittingReduction
from .functional import (FunctionalModel, ModelError, ProblemSpec, build_model, custom_model,
                         load_problem, parse_problem)
from .normal_form import (ChartError, NonConcavityError, NormalFormChart, big_phi, build_chart,
                          chart_inverse, maximizer_phi, psi_forward)
from .pipeline import AnalysisReport, ConfigError, RunConfig, analyze, load_config, parse_config
from .reduction import (NonContractionError, ReducedFunctional, ReductionError, ReductionResult,
                        reduce, solve_h)
from .spectral import SpectralSplitting, SplittingError, certify_conditions, split
from .tolerances import DEFAULT, Tolerances
from .topology import (CriticalGroupReport, TopologyError, brouwer_degree,
                       critical_groups_reduced, shift)

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport", "CatalogEntry", "ChartError", "ConfigError", "CriticalGroupReport",
    "CriticalPointClassifier", "DEFAULT", "FunctionalModel", "ModelError", "MorsePalaisChart",
    "NonConcavityError", "NonContractionError", "NormalFormChart", "ProblemSpec",
    "ReducedFunctional", "ReductionError", "ReductionResult", "RunConfig", "SpectralSplitting",
    "SplittingError", "SplittingReduction", "Tolerances", "TopologyError", "analyze",
    "big_phi", "brouwer_degree", "build_chart", "build_model", "catalog", "certify_conditions",
    "chart_inverse", "critical_groups_reduced", "custom_model", "load_config", "load_problem",
    "maximizer_phi", "parse_config", "parse_problem", "psi_forward", "reduce", "shift",
    "solve_h", "split",
]
