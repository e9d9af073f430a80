"""scikit-learn style wrapper around the sheet fit.

``SheetEstimator`` is fitted on a system (not on a sample matrix) and then
predicts sheet values ``lambda(xi)`` on frequency arrays.  The other
operations keep their functional form; fit/predict does not describe them.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import InputError
from .symbol_core import HyperbolicSystem, builtin_system, fit_sheet, paraxial_form


class SheetEstimator(BaseEstimator):
    """Fit the characteristic sheet through ``(1, 0, ..., 0)``.

    Parameters mirror ``fit_sheet``.  After ``fit``: ``sheet_``, ``v_``,
    ``hessian_``, ``rank_class_`` and ``paraxial_``.
    """

    def __init__(self, cone_halfangle=0.5, stencil_radius=1e-3, n_rays=16):
        self.cone_halfangle = cone_halfangle
        self.stencil_radius = stencil_radius
        self.n_rays = n_rays

    def fit(self, system, y=None):
        if isinstance(system, str):
            system = builtin_system(system)
        if not isinstance(system, HyperbolicSystem):
            raise InputError("SheetEstimator.fit expects a HyperbolicSystem or a builtin name")
        sheet = fit_sheet(system, cone_halfangle=self.cone_halfangle,
                          stencil_radius=self.stencil_radius, n_rays=self.n_rays)
        self.sheet_ = sheet
        self.v_ = np.asarray(sheet.v)
        self.hessian_ = np.asarray(sheet.hessian)
        self.rank_class_ = sheet.rank_class
        self.paraxial_ = paraxial_form(sheet)
        self.n_features_in_ = system.d
        return self

    def _check(self, X):
        check_is_fitted(self, "sheet_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} frequency components, got {X.shape[1]}")
        return X

    def predict(self, X):
        """Sheet values ``lambda(xi)`` for rows of ``X``."""
        X = self._check(X)
        return self.sheet_.value(X)

    def transform(self, X):
        """Group velocities ``grad lambda(xi)`` for rows of ``X``."""
        X = self._check(X)
        return self.sheet_.gradient(X)

    def in_cone(self, X):
        X = self._check(X)
        return self.sheet_.in_cone(X)
