"""Estimator-style front ends: configure in ``__init__``, compute in ``fit``.

Fitted quantities carry a trailing underscore; ``get_params`` /
``set_params`` and cloning follow the scikit-learn conventions.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_linear_system, check_nonlinear_system, check_positive, check_projector
from .dichotomy import DichotomyConfig, fit_certificate, has_dichotomy
from .nmyc import NMYCConfig, verify_uas
from .spectrum import SpectrumConfig, sacker_sell
from .systems import shift

__all__ = ["SpectrumEstimator", "DichotomyEstimator", "UASEstimator"]


class SpectrumEstimator(BaseEstimator):
    """Dichotomy spectrum of ``x' = A(t) x`` on ``[0, horizon]``.

    Parameters
    ----------
    horizon, window, resolution, step : float
        Horizon ``T``, averaging window ``H``, gamma resolution and QR step.
    gamma_range : tuple or None
        Extra range the scan must cover.

    Attributes
    ----------
    intervals_ : list of (float, float)
    estimate_ : SpectrumEstimate
    n_intervals_ : int
    """

    def __init__(self, horizon=100.0, window=10.0, resolution=0.05, step=0.05, gamma_range=None):
        self.horizon = horizon
        self.window = window
        self.resolution = resolution
        self.step = step
        self.gamma_range = gamma_range

    def _config(self) -> SpectrumConfig:
        for name in ("horizon", "window", "resolution", "step"):
            check_positive(name, getattr(self, name))
        if self.window > self.horizon / 5:
            raise ValueError("window must be at most horizon / 5")
        return SpectrumConfig(horizon=float(self.horizon), window=float(self.window), resolution=float(self.resolution), step=float(self.step))

    def fit(self, X, y=None):
        system = check_linear_system(X)
        self.estimate_ = sacker_sell(system, gamma_range=self.gamma_range, config=self._config())
        self.intervals_ = list(self.estimate_.intervals)
        self.n_intervals_ = len(self.intervals_)
        return self

    def predict(self, gammas):
        """``True`` where a shift lies in the estimated spectrum."""
        check_is_fitted(self, "intervals_")
        g = np.asarray(gammas, dtype=float)
        out = np.zeros(g.shape, dtype=bool)
        for a, b in self.intervals_:
            out |= (g >= a) & (g <= b)
        return out


class DichotomyEstimator(BaseEstimator):
    """Exponential dichotomy certificate of ``x' = [A(t) - gamma I] x``.

    With ``projector=None`` the projector is chosen automatically
    (identity, zero, then an estimate of the stable subspace).
    """

    def __init__(self, gamma=0.0, horizon=100.0, projector=None, n_pairs=500, step=0.05):
        self.gamma = gamma
        self.horizon = horizon
        self.projector = projector
        self.n_pairs = n_pairs
        self.step = step

    def fit(self, X, y=None):
        system = check_linear_system(X)
        check_positive("horizon", self.horizon)
        check_positive("step", self.step)
        if int(self.n_pairs) < 4:
            raise ValueError("n_pairs must be at least 4")
        cfg = DichotomyConfig(horizon=float(self.horizon), step=float(self.step), n_pairs=int(self.n_pairs))
        target = shift(system, self.gamma) if self.gamma else system
        if self.projector is None:
            _, cert = has_dichotomy(target, config=cfg)
        else:
            cert = fit_certificate(target, check_projector(self.projector, system.dim), config=cfg)
        self.certificate_ = cert
        self.verdict_ = cert.verdict
        self.projector_ = cert.projector
        self.rank_ = cert.rank
        self.K_ = cert.K
        self.alpha_ = cert.alpha
        return self


class UASEstimator(BaseEstimator):
    """Uniform exponential envelope ``|x(t)| <= K e^{-alpha (t - t0)} |x0|``."""

    def __init__(self, horizon=20.0, box=2.0, per_axis=5, t0s=None, seed=0):
        self.horizon = horizon
        self.box = box
        self.per_axis = per_axis
        self.t0s = t0s
        self.seed = seed

    def fit(self, X, y=None):
        system = check_nonlinear_system(X)
        check_positive("horizon", self.horizon)
        check_positive("box", self.box)
        kw = {"box": float(self.box), "uas_per_axis": int(self.per_axis), "seed": int(self.seed)}
        if self.t0s is not None:
            kw["uas_t0s"] = tuple(float(t) for t in self.t0s)
        cfg = NMYCConfig(**kw)
        self.report_ = verify_uas(system, horizon=float(self.horizon), config=cfg)
        self.K_ = self.report_.K
        self.alpha_ = self.report_.alpha
        self.passed_ = self.report_.passed
        return self

    def envelope(self, taus):
        """Fitted bound ``K e^{-alpha tau}`` at elapsed times ``taus``."""
        check_is_fitted(self, "K_")
        return self.K_ * np.exp(-self.alpha_ * np.asarray(taus, dtype=float))
