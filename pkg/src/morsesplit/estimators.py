"""Estimator-style wrappers around the pipeline stages.

The "training data" here is the functional itself, passed as the ``problem``
parameter, so ``fit`` ignores ``X`` and builds everything from ``problem``.
``transform`` then maps points through the fitted maps.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .normal_form import build_chart
from .reduction import ReducedFunctional, reduce
from .spectral import certify_conditions, split
from .tolerances import DEFAULT
from .topology import (brouwer_degree, critical_groups_reduced, mountain_pass_components,
                       poincare_hopf_check, shift)
from .validation import check_is_fitted, check_points, resolve_model


class SplittingReduction(TransformerMixin, BaseEstimator):
    """Spectral splitting plus the reduction map h on a ball of kernel coordinates.

    ``transform`` sends kernel coordinates z (n_samples, nu) to ambient points
    z + h(z); ``reduced_value`` evaluates the reduced functional.
    """

    def __init__(self, problem=None, r0=None, null_tol=None, mode="fixed_point", seed=0,
                 tolerances=None):
        self.problem = problem
        self.r0 = r0
        self.null_tol = null_tol
        self.mode = mode
        self.seed = seed
        self.tolerances = tolerances

    def _tol(self):
        return DEFAULT.updated(self.tolerances) if self.tolerances else DEFAULT

    def fit(self, X=None, y=None):
        tol = self._tol()
        self.model_ = resolve_model(self.problem, tol)
        self.splitting_ = split(self.model_, self.null_tol, tol)
        self.reduction_ = reduce(self.model_, self.splitting_, self.r0, tol, self.seed, self.mode)
        self.reduced_ = ReducedFunctional(self.reduction_)
        self.nu_ = self.splitting_.nu
        self.mu_ = self.splitting_.mu
        self.r0_ = self.reduction_.r0
        self.n_features_in_ = self.nu_
        return self

    def transform(self, X):
        check_is_fitted(self, "reduction_")
        Z = check_points(X, self.nu_, "z")
        return np.array([self.reduction_.point(z) for z in Z]).reshape(len(Z), self.model_.dim)

    def reduced_value(self, X) -> np.ndarray:
        check_is_fitted(self, "reduced_")
        Z = check_points(X, self.nu_, "z")
        return np.array([self.reduced_.value(z) for z in Z])

    def reduced_gradient(self, X) -> np.ndarray:
        check_is_fitted(self, "reduced_")
        Z = check_points(X, self.nu_, "z")
        return np.array([self.reduced_.gradient(z) for z in Z]).reshape(len(Z), self.nu_)


class MorsePalaisChart(TransformerMixin, BaseEstimator):
    """Normal-form chart: ambient points to (z, u+, u-) and back.

    ``transform`` returns rows ``[z, u+, u-]`` with widths (nu, n_plus, mu).
    """

    def __init__(self, problem=None, r0=None, delta=None, samples=64, seed=0, tolerances=None):
        self.problem = problem
        self.r0 = r0
        self.delta = delta
        self.samples = samples
        self.seed = seed
        self.tolerances = tolerances

    def fit(self, X=None, y=None):
        tol = DEFAULT.updated(self.tolerances) if self.tolerances else DEFAULT
        self.reduction_ = SplittingReduction(self.problem, self.r0, seed=self.seed,
                                             tolerances=self.tolerances).fit()
        model, s, red = (self.reduction_.model_, self.reduction_.splitting_,
                         self.reduction_.reduction_)
        cert = certify_conditions(model, s, model.domain_radius, self.samples, self.seed)
        self.chart_ = build_chart(model, s, red, cert, tol, self.seed, self.delta)
        self.chart_radius_ = self.chart_.rho
        self.z_radius_ = self.chart_.z_radius
        self.n_features_in_ = model.dim
        return self

    def _split_cols(self, U):
        s = self.chart_.splitting
        a, b = s.nu, s.nu + s.n_plus
        return U[:, :a], U[:, a:b], U[:, b:]

    def transform(self, X):
        check_is_fitted(self, "chart_")
        ch = self.chart_
        s = ch.splitting
        W = check_points(X, ch.model.dim)
        out = []
        for w in W:
            z = s.coordinates(w)[s.idx_zero]
            c = s.coordinates(w - ch.reduction.point(z))
            u1, u2 = ch.psi(z, c[s.idx_plus], c[s.idx_minus])
            out.append(np.concatenate([z, u1, u2]))
        return np.array(out).reshape(len(W), s.dim)

    def inverse_transform(self, U):
        check_is_fitted(self, "chart_")
        ch = self.chart_
        U = check_points(U, ch.splitting.dim, "U")
        Z, P, M = self._split_cols(U)
        return np.array([ch.big_phi(z, p, m) for z, p, m in zip(Z, P, M)])


class CriticalPointClassifier(BaseEstimator):
    """Critical groups, degree and classification of the critical point theta."""

    def __init__(self, problem=None, r0=None, radius=None, resolution=64, seed=0,
                 tolerances=None):
        self.problem = problem
        self.r0 = r0
        self.radius = radius
        self.resolution = resolution
        self.seed = seed
        self.tolerances = tolerances

    def fit(self, X=None, y=None):
        if self.resolution < 8 or self.resolution % 2:
            raise ValueError("resolution must be an even integer >= 8")
        sr = SplittingReduction(self.problem, self.r0, seed=self.seed,
                                tolerances=self.tolerances).fit()
        nu, mu = sr.nu_, sr.mu_
        r = min(sr.r0_, self.radius or sr.r0_)
        lf = sr.reduced_
        groups = critical_groups_reduced(lf, r, self.resolution) if nu else [1]
        mp = mountain_pass_components(lf, nu, mu, r)
        rep = shift(groups, mu, nu, mp)
        deg = brouwer_degree(lf.gradient, nu, r) if nu else 1
        self.poincare_hopf_ = poincare_hopf_check(rep, deg, mu)
        self.report_ = rep
        self.critical_groups_ = list(rep.betti_shifted)
        self.reduced_groups_ = list(rep.betti_reduced)
        self.degree_ = int(deg)
        self.classification_ = rep.classification
        self.nu_, self.mu_ = nu, mu
        return self

    def predict(self, X=None):
        """The classification label, repeated once per row of ``X`` if given."""
        check_is_fitted(self, "classification_")
        if X is None:
            return self.classification_
        return np.array([self.classification_] * len(np.atleast_1d(X)), dtype=object)
