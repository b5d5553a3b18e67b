"""Decision-weighted kernel sampler and surrogate risk.

Training pairs ``(x_i, W_i)`` are weighted by a Gaussian kernel in
decision space around the query; outcomes are resampled with those
weights and jittered with a Silverman-rule bandwidth.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import DomainError, as_generator
from .forest import silverman_bandwidth, systematic_resample
from .risk import spectral_risk


class DecisionKernelSampler(BaseEstimator):
    """Conditional sampler with isotropic Gaussian decision-space weights.

    Parameters
    ----------
    bandwidth : float, default=0.15
        Kernel bandwidth in decision units.
    bandwidth_scale : float, default=1.0
        Multiplier on the Silverman jitter bandwidth of the outcomes.
    random_state : int, Generator or None
        Only used when ``sample`` is called without its own stream.
    """

    def __init__(self, bandwidth=0.15, bandwidth_scale=1.0, random_state=None):
        self.bandwidth = bandwidth
        self.bandwidth_scale = bandwidth_scale
        self.random_state = random_state

    def fit(self, X, W):
        X = check_array(X)
        W = check_array(W)
        if X.shape[0] != W.shape[0]:
            raise DomainError("X and W must have the same number of rows")
        if self.bandwidth <= 0:
            raise DomainError("bandwidth must be positive")
        self.X_train_ = X
        self.W_train_ = W
        self.jitter_ = silverman_bandwidth(W, self.bandwidth_scale)
        return self

    def weights(self, x):
        check_is_fitted(self, "X_train_")
        d2 = np.sum((self.X_train_ - np.asarray(x, dtype=float)) ** 2, axis=1)
        # shift by the minimum so far-away queries do not underflow to all zeros
        logw = -0.5 * (d2 - d2.min()) / self.bandwidth**2
        w = np.exp(logw)
        return w / w.sum()

    def sample(self, x, n, random_state=None):
        rng = as_generator(self.random_state if random_state is None else random_state)
        idx = systematic_resample(self.weights(x), n, rng)
        return self.W_train_[idx] + self.jitter_ * rng.standard_normal((n, self.W_train_.shape[1]))


def kde_surrogate_risk(model, x, n, params, cost_fn, seed=None):
    """Kernel-surrogate spectral risk at ``x`` from ``n`` synthetic draws."""
    W = model.sample(x, n, random_state=seed)
    return spectral_risk(cost_fn(W, x), params)
