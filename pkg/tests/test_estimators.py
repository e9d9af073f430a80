import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hyperjump.errors import InputError
from hyperjump.estimators import SheetEstimator


def test_fit_predict_s1():
    est = SheetEstimator().fit("S1")
    eta = np.array([0.0, 0.1, -0.3])
    X = np.column_stack([np.ones(3), eta])
    assert np.allclose(est.predict(X), (1 - np.sqrt(1 + 4 * eta**2)) / 2, atol=1e-12)
    assert np.allclose(est.v_, 0) and est.hessian_[0, 0] == pytest.approx(-2, abs=1e-6)
    assert est.rank_class_ == est.sheet_.rank_class
    assert est.transform(X).shape == (3, 2)
    assert est.in_cone(np.array([[1.0, 0.0], [0.0, 1.0]])).tolist() == [True, False]


def test_homogeneity():
    est = SheetEstimator().fit("S1")
    X = np.array([[1.0, 0.2], [-2.0, 0.3]])
    assert np.allclose(est.predict(3 * X), 3 * est.predict(X))


def test_unfitted_and_bad_input():
    with pytest.raises(NotFittedError):
        SheetEstimator().predict(np.ones((1, 2)))
    with pytest.raises(InputError):
        SheetEstimator().fit(np.eye(2))
    est = SheetEstimator().fit("S2")
    with pytest.raises(InputError):
        est.predict(np.ones((2, 3)))


def test_params_and_clone():
    est = SheetEstimator(cone_halfangle=0.3)
    assert est.get_params()["cone_halfangle"] == 0.3
    c = clone(est)
    assert c.cone_halfangle == 0.3 and not hasattr(c, "sheet_")
    assert est.fit("S1").sheet_.cone_halfangle == 0.3
