import numpy as np
import pytest
from conftest import assert_intervals_close
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sackersell.estimators import DichotomyEstimator, SpectrumEstimator, UASEstimator
from sackersell.systems import NonlinearSystem, builtin


def test_spectrum_estimator_on_constant_matrix():
    est = SpectrumEstimator().fit(np.diag([-1.0, -2.0]))
    assert est.n_intervals_ == 2
    assert_intervals_close(est.intervals_, [(-2, -2), (-1, -1)], 0.05)
    (a, _), (_, b) = est.intervals_
    np.testing.assert_array_equal(est.predict([a, -1.5, b, 0.0]), [True, False, True, False])


def test_spectrum_estimator_on_samples():
    times = [0.0, 200.0]
    mats = [[[-1.0]], [[-1.0]]]
    est = SpectrumEstimator().fit((times, mats))
    assert_intervals_close(est.intervals_, [(-1, -1)], 0.05)


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        SpectrumEstimator().predict([0.0])


def test_params_and_clone():
    est = SpectrumEstimator(resolution=0.1)
    assert est.get_params()["resolution"] == 0.1
    c = clone(est.set_params(window=5.0))
    assert c.window == 5.0 and not hasattr(c, "intervals_")


@pytest.mark.parametrize("bad", [{"horizon": -1.0}, {"window": 50.0}, {"resolution": 0}])
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        SpectrumEstimator(**bad).fit(np.diag([-1.0]))


def test_non_square_input():
    with pytest.raises(ValueError):
        SpectrumEstimator().fit(np.zeros((2, 3)))


def test_dichotomy_estimator_gamma():
    est = DichotomyEstimator(gamma=2.0).fit(builtin("my1960"))
    assert est.verdict_ == "certified" and est.rank_ == 2


def test_dichotomy_estimator_explicit_projector():
    est = DichotomyEstimator(projector=np.eye(2)).fit(np.diag([-1.0, -2.0]))
    assert est.verdict_ == "certified"
    with pytest.raises(ValueError):
        DichotomyEstimator(projector=[[1.0, 1.0], [0.0, 0.5]]).fit(np.diag([-1.0, -2.0]))


def test_uas_estimator():
    est = UASEstimator(t0s=[0.0, 5.0]).fit(NonlinearSystem.from_strings(["-2*x1"]))
    assert est.passed_
    assert est.alpha_ == pytest.approx(2.0, abs=0.05)
    assert est.envelope([0.0])[0] == pytest.approx(est.K_)
