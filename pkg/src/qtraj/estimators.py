"""scikit-learn style wrappers around trajectory reconstruction and past-state smoothing.

The physics has no trainable parameters, so ``fit`` only validates the
settings and input shape; the useful work happens in ``transform`` and
``predict_proba``. Both estimators clone, pickle and grid-search like any
other sklearn estimator.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_outcomes, check_records, check_state, check_step
from .core import Axis, HermitianMatrix2, config_from_tau
from .past_state import projective_povm, smooth
from .trajectory import reconstruct_array


def _config(est, axis):
    return config_from_tau(est.tau, est.dt, est.eta_m, est.T2star, est.Omega, Axis.parse(axis))


class TrajectoryFilter(TransformerMixin, BaseEstimator):
    """Maps measurement records to conditioned Bloch vectors.

    ``output="final"`` gives one ``(x, y, z)`` row per record; ``"all"``
    gives the whole trajectory flattened to ``3 * (n_steps + 1)`` columns.
    """

    def __init__(
        self,
        tau=1.28e-6,
        dt=20e-9,
        eta_m=1.0,
        T2star=math.inf,
        Omega=0.0,
        axis="z",
        initial_state=(1.0, 0.0, 0.0),
        output="final",
    ):
        self.tau = tau
        self.dt = dt
        self.eta_m = eta_m
        self.T2star = T2star
        self.Omega = Omega
        self.axis = axis
        self.initial_state = initial_state
        self.output = output

    def fit(self, X, y=None):
        X = check_records(X)
        if self.output not in ("final", "all"):
            raise ValueError(f"output must be 'final' or 'all', got {self.output!r}")
        self.config_ = _config(self, self.axis)
        self.initial_state_ = check_state(self.initial_state)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_records(X)
        states = reconstruct_array(X, self.config_, self.initial_state_)
        if self.output == "final":
            return states[:, -1]
        return states.reshape(X.shape[0], -1)


class PastStateSmoother(ClassifierMixin, BaseEstimator):
    """Predicts the outcome of a hidden projective z measurement.

    The measurement happens after ``hidden_step`` record samples. With
    ``forward_only`` the prediction uses only the samples before it;
    otherwise the later samples enter through the effect matrix. Classes are
    ``[-1, 1]`` with ``+1`` meaning z = +1.
    """

    def __init__(
        self,
        tau=1.28e-6,
        dt=20e-9,
        eta_m=1.0,
        T2star=math.inf,
        Omega=0.0,
        initial_state=(1.0, 0.0, 0.0),
        hidden_step=0,
        forward_only=False,
    ):
        self.tau = tau
        self.dt = dt
        self.eta_m = eta_m
        self.T2star = T2star
        self.Omega = Omega
        self.initial_state = initial_state
        self.hidden_step = hidden_step
        self.forward_only = forward_only

    def fit(self, X, y=None):
        X = check_records(X)
        check_step(self.hidden_step, X.shape[1])
        if y is not None:
            check_outcomes(y, X.shape[0])
        self.config_ = _config(self, "z")
        self.rho0_ = HermitianMatrix2.from_bloch(check_state(self.initial_state))
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "config_")
        X = check_records(X)
        step = check_step(self.hidden_step, X.shape[1])
        res = smooth(X, self.config_, step, self.rho0_, projective_povm("z"))
        p = res["forward"] if self.forward_only else res["smoothed"]
        # povm order is (+z, -z); classes_ order is (-1, +1)
        return p[:, ::-1].copy()

    def predict(self, X):
        proba = self.predict_proba(X)
        return np.where(proba[:, 1] >= 0.5, 1, -1)
