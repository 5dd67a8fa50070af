"""Scikit-learn-flavored estimator wrappers around the fitting core.

These exist so the laws compose with the wider ecosystem (get_params /
set_params, clone, pipelines). X carries the size coordinates (a single
column of N for the power law, two columns (N, D) for the bivariate law)
and y carries the observed losses.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import InvalidInput
from .fitting import ChinchillaFit, FitConfig, PowerLawFit, fit_chinchilla, fit_power_law
from .observations import Observation


def _validate_xy(X, y, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != n_cols:
        raise InvalidInput(f"X must have shape (n_samples, {n_cols}), got {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise InvalidInput(f"y must be 1-D with len(X) entries, got {y.shape}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise InvalidInput("X and y must be finite")
    if np.any(X <= 0) or np.any(y <= 0):
        raise InvalidInput("sizes and losses must be strictly positive")
    return X, y


class PowerLawEstimator(RegressorMixin, BaseEstimator):
    """L(N) = alpha * N^(-p) + beta fitted by multi-start Huber minimization.

    Parameters mirror FitConfig. After fit: `alpha_`, `p_`, `beta_`,
    `objective_`, `converged_`, and the full record in `fit_`.
    """

    def __init__(self, huber_delta: float = 0.01, residual_space: str = "log",
                 max_iterations: int = 500, gradient_tolerance: float = 1e-10, seed: int = 0):
        self.huber_delta = huber_delta
        self.residual_space = residual_space
        self.max_iterations = max_iterations
        self.gradient_tolerance = gradient_tolerance
        self.seed = seed

    def _config(self) -> FitConfig:
        return FitConfig(
            huber_delta=self.huber_delta,
            residual_space=self.residual_space,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            seed=self.seed,
        )

    def fit(self, X, y):
        X, y = _validate_xy(X, y, n_cols=1)
        obs = [Observation(model_name=f"x{i}", n=ni, d=1.0, loss=li) for i, (ni, li) in enumerate(zip(X[:, 0], y))]
        self.fit_: PowerLawFit = fit_power_law(obs, self._config())
        self.alpha_ = self.fit_.alpha
        self.p_ = self.fit_.p
        self.beta_ = self.fit_.beta
        self.objective_ = self.fit_.objective
        self.converged_ = self.fit_.converged
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        if not hasattr(self, "fit_"):
            raise NotFittedError("PowerLawEstimator is not fitted yet; call fit first")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return self.fit_.predict(X[:, 0])


class ChinchillaLawEstimator(RegressorMixin, BaseEstimator):
    """L(N, D) = E + a/N^alpha + b/D^beta over X = [N, D] columns.

    After fit: `E_`, `a_`, `alpha_`, `b_`, `beta_`, `objective_`,
    `converged_`, and the full record in `fit_`.
    """

    def __init__(self, huber_delta: float = 0.01, residual_space: str = "log",
                 max_iterations: int = 500, gradient_tolerance: float = 1e-10, seed: int = 0,
                 d_unit: str = "samples"):
        self.huber_delta = huber_delta
        self.residual_space = residual_space
        self.max_iterations = max_iterations
        self.gradient_tolerance = gradient_tolerance
        self.seed = seed
        self.d_unit = d_unit

    def _config(self) -> FitConfig:
        return FitConfig(
            huber_delta=self.huber_delta,
            residual_space=self.residual_space,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            seed=self.seed,
        )

    def fit(self, X, y):
        X, y = _validate_xy(X, y, n_cols=2)
        obs = [
            Observation(model_name=f"x{i}", n=ni, d=di, loss=li)
            for i, (ni, di, li) in enumerate(zip(X[:, 0], X[:, 1], y))
        ]
        self.fit_: ChinchillaFit = fit_chinchilla(obs, self._config(), d_unit=self.d_unit)
        self.E_ = self.fit_.e
        self.a_ = self.fit_.a
        self.alpha_ = self.fit_.alpha
        self.b_ = self.fit_.b
        self.beta_ = self.fit_.beta
        self.objective_ = self.fit_.objective
        self.converged_ = self.fit_.converged
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        if not hasattr(self, "fit_"):
            raise NotFittedError("ChinchillaLawEstimator is not fitted yet; call fit first")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise InvalidInput(f"X must have shape (n_samples, 2), got {X.shape}")
        return self.fit_.predict(X[:, 0], X[:, 1])
