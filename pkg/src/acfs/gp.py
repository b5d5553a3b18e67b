"""Gaussian-process regression with a squared-exponential ARD kernel."""

import numpy as np
from scipy import linalg
from scipy.special import ndtr
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import DomainError, OptimizationError, as_generator
from .search import BoxBounds, bounded_quasi_newton

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def se_ard_kernel(A, B, signal_variance, lengthscales):
    d = (A[:, None, :] - B[None, :, :]) / lengthscales
    return signal_variance * np.exp(-0.5 * np.sum(d * d, axis=-1))


class SEARDGaussianProcess(BaseEstimator, RegressorMixin):
    """GP regressor with SE-ARD kernel and maximum-likelihood hyperparameters.

    Parameters
    ----------
    bounds : BoxBounds or None
        Inputs are rescaled to the unit box of ``bounds`` before fitting.
    normalize_y : bool, default=True
        Centre and scale targets before fitting.
    optimize : bool, default=True
        Maximise the log marginal likelihood (``n_restarts`` starts of the
        bounded quasi-Newton method on log-parameters). If False the
        hyperparameters below are used as given.
    signal_variance, lengthscales, noise_variance :
        Starting (or fixed) hyperparameters, in standardised units.
    noise_floor : float, default=1e-8
    n_restarts : int, default=5
    random_state : int, Generator or None
    """

    def __init__(self, bounds=None, normalize_y=True, optimize=True, signal_variance=1.0,
                 lengthscales=None, noise_variance=1e-4, noise_floor=1e-8, n_restarts=5,
                 random_state=None):
        self.bounds = bounds
        self.normalize_y = normalize_y
        self.optimize = optimize
        self.signal_variance = signal_variance
        self.lengthscales = lengthscales
        self.noise_variance = noise_variance
        self.noise_floor = noise_floor
        self.n_restarts = n_restarts
        self.random_state = random_state

    # scaling --------------------------------------------------------------

    def _scale_x(self, X):
        if self.bounds is None:
            return X
        width = np.where(self.bounds.width > 0, self.bounds.width, 1.0)
        return (X - self.bounds.lo) / width

    def _theta0(self, d):
        ls = np.full(d, 0.3) if self.lengthscales is None else np.broadcast_to(self.lengthscales, (d,))
        noise = max(self.noise_variance, self.noise_floor)
        return np.concatenate([[np.log(self.signal_variance)], np.log(ls), [np.log(noise)]])

    def _theta_bounds(self, d):
        lo = np.concatenate([[np.log(1e-3)], np.full(d, np.log(1e-2)), [np.log(self.noise_floor)]])
        hi = np.concatenate([[np.log(1e3)], np.full(d, np.log(1e2)), [np.log(1.0)]])
        return BoxBounds(lo, hi)

    # likelihood -----------------------------------------------------------

    def _factor(self, K):
        n = K.shape[0]
        for jitter in _JITTERS:
            try:
                return linalg.cho_factor(K + jitter * np.eye(n), lower=True), jitter
            except linalg.LinAlgError:
                continue
        raise OptimizationError("covariance factorisation failed after maximum jitter")

    def _nll_and_grad(self, theta, X, y):
        d = X.shape[1]
        s2 = np.exp(theta[0])
        ls = np.exp(theta[1:1 + d])
        noise = np.exp(theta[-1])
        diff2 = (X[:, None, :] - X[None, :, :]) ** 2
        Kf = s2 * np.exp(-0.5 * np.sum(diff2 / ls**2, axis=-1))
        n = X.shape[0]
        try:
            cf, _ = self._factor(Kf + noise * np.eye(n))
        except OptimizationError:
            return np.inf, np.zeros_like(theta)
        alpha = linalg.cho_solve(cf, y)
        nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(cf[0]))) + 0.5 * n * np.log(2 * np.pi)
        Kinv = linalg.cho_solve(cf, np.eye(n))
        Wm = np.outer(alpha, alpha) - Kinv
        grad = np.empty_like(theta)
        grad[0] = -0.5 * np.sum(Wm * Kf)
        for k in range(d):
            grad[1 + k] = -0.5 * np.sum(Wm * Kf * diff2[:, :, k] / ls[k] ** 2)
        grad[-1] = -0.5 * noise * np.trace(Wm)
        return nll, grad

    def log_marginal_likelihood(self, theta=None):
        check_is_fitted(self, "theta_")
        theta = self.theta_ if theta is None else np.asarray(theta, dtype=float)
        return -self._nll_and_grad(theta, self.X_fit_, self.y_fit_)[0]

    # fitting --------------------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if np.unique(X, axis=0).shape[0] < 2:
            raise DomainError("need at least two distinct inputs")
        Xs = self._scale_x(X)
        self.y_mean_ = float(y.mean()) if self.normalize_y else 0.0
        sd = float(y.std()) if self.normalize_y else 1.0
        self.y_scale_ = sd if sd > 0 else 1.0
        ys = (y - self.y_mean_) / self.y_scale_
        d = X.shape[1]
        theta = self._theta0(d)
        if self.optimize:
            box = self._theta_bounds(d)
            rng = as_generator(self.random_state)
            starts = [box.clip(theta)] + [box.lo + rng.random(theta.size) * box.width
                                          for _ in range(max(self.n_restarts, 1) - 1)]
            cache = {}

            def nll(t):
                key = t.tobytes()
                if key not in cache:
                    cache.clear()
                    cache[key] = self._nll_and_grad(t, Xs, ys)
                return cache[key][0]

            def grad(t):
                nll(t)
                return cache[t.tobytes()][1]

            best = None
            for t0 in starts:
                res = bounded_quasi_newton(nll, grad, t0, bounds=box, project=None, max_iter=100,
                                           gtol=1e-5, first_step=1.0)
                if np.isfinite(res.f) and (best is None or res.f < best.f):
                    best = res
            if best is None:
                raise OptimizationError("marginal likelihood optimisation failed")
            theta = best.x
        self.theta_ = theta
        self.X_fit_, self.y_fit_ = Xs, ys
        self._set_posterior()
        return self

    def update(self, X, y):
        """Condition on new data keeping the current hyperparameters."""
        check_is_fitted(self, "theta_")
        X, y = check_X_y(X, y, y_numeric=True)
        self.y_mean_ = float(y.mean()) if self.normalize_y else 0.0
        sd = float(y.std()) if self.normalize_y else 1.0
        self.y_scale_ = sd if sd > 0 else 1.0
        self.X_fit_ = self._scale_x(X)
        self.y_fit_ = (y - self.y_mean_) / self.y_scale_
        self._set_posterior()
        return self

    def _set_posterior(self):
        d = self.X_fit_.shape[1]
        self.signal_variance_ = float(np.exp(self.theta_[0]))
        self.lengthscales_ = np.exp(self.theta_[1:1 + d])
        self.noise_variance_ = float(np.exp(self.theta_[-1]))
        K = se_ard_kernel(self.X_fit_, self.X_fit_, self.signal_variance_, self.lengthscales_)
        K += self.noise_variance_ * np.eye(K.shape[0])
        self.cho_, self.jitter_ = self._factor(K)
        self.alpha_ = linalg.cho_solve(self.cho_, self.y_fit_)

    def predict(self, X, return_std=False):
        check_is_fitted(self, "alpha_")
        Xs = self._scale_x(check_array(X))
        Ks = se_ard_kernel(Xs, self.X_fit_, self.signal_variance_, self.lengthscales_)
        mean = Ks @ self.alpha_ * self.y_scale_ + self.y_mean_
        if not return_std:
            return mean
        v = linalg.solve_triangular(self.cho_[0], Ks.T, lower=True)
        var = np.maximum(self.signal_variance_ - np.sum(v * v, axis=0), 0.0)
        return mean, np.sqrt(var) * self.y_scale_


def gp_fit(X, y, seed=None, bounds=None, **kwargs):
    return SEARDGaussianProcess(bounds=bounds, random_state=seed, **kwargs).fit(X, y)


def expected_improvement(mean, std, best_observed):
    """Closed-form EI for minimisation; zero where ``std`` is zero."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    imp = best_observed - mean
    safe = np.where(std > 0, std, 1.0)
    z = imp / safe
    ei = imp * ndtr(z) + safe * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    return np.where(std > 0, np.maximum(ei, 0.0), 0.0)


def gp_expected_improvement(model, candidates, best_observed):
    mean, std = model.predict(np.atleast_2d(candidates), return_std=True)
    return expected_improvement(mean, std, best_observed)
