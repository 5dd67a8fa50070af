"""Estimator wrappers: sklearn parameter protocol, fit/predict, validation."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from scalelaw.errors import InsufficientData, InvalidInput
from scalelaw.estimators import ChinchillaLawEstimator, PowerLawEstimator


def power_xy(alpha=10.0, p=0.3, beta=1.5):
    n = np.geomspace(1e7, 1e10, 8)
    return n.reshape(-1, 1), alpha * n**-p + beta


def chinchilla_xy():
    ns = np.geomspace(1e7, 1e10, 6)
    ds = np.geomspace(1e8, 1e11, 8)
    nn, dd = np.meshgrid(ns, ds)
    X = np.column_stack([nn.ravel(), dd.ravel()])
    y = 1.7 + 400.0 * X[:, 0] ** -0.34 + 1200.0 * X[:, 1] ** -0.28
    return X, y


class TestPowerLawEstimator:
    def test_fit_predict(self):
        X, y = power_xy()
        est = PowerLawEstimator().fit(X, y)
        assert est.alpha_ == pytest.approx(10.0, rel=1e-3)
        assert est.p_ == pytest.approx(0.3, rel=1e-3)
        assert est.beta_ == pytest.approx(1.5, rel=1e-3)
        pred = est.predict(X)
        assert pred == pytest.approx(y, rel=1e-4)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            PowerLawEstimator().predict(np.array([[1e8]]))

    def test_get_set_params(self):
        est = PowerLawEstimator(huber_delta=0.02, seed=3)
        params = est.get_params()
        assert params["huber_delta"] == 0.02 and params["seed"] == 3
        est.set_params(residual_space="linear")
        assert est.residual_space == "linear"

    def test_clone_preserves_params(self):
        est = PowerLawEstimator(huber_delta=0.05, residual_space="linear")
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "fit_")

    def test_score_is_r2(self):
        X, y = power_xy()
        est = PowerLawEstimator().fit(X, y)
        assert est.score(X, y) > 0.999

    def test_one_dim_x_accepted(self):
        X, y = power_xy()
        est = PowerLawEstimator().fit(X.ravel(), y)
        assert est.n_features_in_ == 1

    def test_bad_inputs(self):
        X, y = power_xy()
        with pytest.raises(InvalidInput):
            PowerLawEstimator().fit(-X, y)
        with pytest.raises(InvalidInput):
            PowerLawEstimator().fit(X, y[:-1])
        with pytest.raises(InsufficientData):
            PowerLawEstimator().fit(X[:2], y[:2])

    def test_seed_changes_are_deterministic(self):
        X, y = power_xy()
        rng = np.random.default_rng(0)
        y = y * (1 + rng.normal(0, 0.01, size=y.size))
        a = PowerLawEstimator(seed=1).fit(X, y)
        b = PowerLawEstimator(seed=1).fit(X, y)
        assert a.fit_ == b.fit_


class TestChinchillaLawEstimator:
    def test_fit_predict(self):
        X, y = chinchilla_xy()
        est = ChinchillaLawEstimator().fit(X, y)
        assert est.E_ == pytest.approx(1.7, rel=1e-4)
        assert est.alpha_ == pytest.approx(0.34, rel=1e-4)
        assert est.beta_ == pytest.approx(0.28, rel=1e-4)
        assert est.predict(X) == pytest.approx(y, rel=1e-4)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ChinchillaLawEstimator().predict(np.array([[1e8, 1e9]]))

    def test_d_unit_param_round_trip(self):
        est = ChinchillaLawEstimator(d_unit="tokens")
        assert est.get_params()["d_unit"] == "tokens"
        X, y = chinchilla_xy()
        est.fit(X, y)
        assert est.fit_.d_unit == "tokens"

    def test_wrong_column_count(self):
        X, y = chinchilla_xy()
        with pytest.raises(InvalidInput):
            ChinchillaLawEstimator().fit(X[:, :1], y)

    def test_clone(self):
        est = ChinchillaLawEstimator(seed=9)
        assert clone(est).get_params()["seed"] == 9
