from abc import ABCMeta, abstractmethod

import numpy as np
from sklearn.base import BaseEstimator

from .demand_model import grad_mean_demand, mean_demand
from .linalg_kernel import std_normal_quantile


class BaseERM(BaseEstimator, metaclass=ABCMeta):
    """
    Base class for (regularized) empirical-risk minimizers of a demand model.

    Subclasses minimize sum_t rho(d_t, p_t, x_t; theta) + lam * ||theta||^2
    over rows of a design matrix and expose the solution as ``coef_``.
    """

    def __init__(self, lam=0.0):
        self.lam = lam

    def fit(self, features, demands, warm_start=None):
        """
        Fit the estimator on a design matrix.

        Parameters
        ----------
        features : array (n, d)
            Feature rows phi(p_t, x_t).
        demands : array (n,)
            Realized demands d_t.
        warm_start : array (d,), optional
            Starting point for iterative solvers.

        Returns
        -------
        self : object
        """
        features = np.atleast_2d(np.asarray(features, dtype=float))
        demands = np.asarray(demands, dtype=float).reshape(-1)
        if features.shape[0] != demands.size:
            raise ValueError(
                "Given {} feature rows but {} demands.".format(
                    features.shape[0], demands.size
                )
            )
        if self.lam < 0:
            raise ValueError("Ridge penalty lam must be non-negative. Given {}.".format(self.lam))
        self.coef_, self.n_iter_, self.converged_ = self._solve(features, demands, warm_start)
        self.grad_norm_ = float(np.linalg.norm(self.gradient(self.coef_, features, demands)))
        return self

    @abstractmethod
    def _solve(self, features, demands, warm_start):
        """
        Minimize the objective.

        Returns
        -------
        coef : array (d,)
        n_iter : int
        converged : bool
        """

    @abstractmethod
    def objective(self, theta, features, demands):
        """Regularized empirical risk at theta."""

    @abstractmethod
    def gradient(self, theta, features, demands):
        """Gradient of the regularized empirical risk at theta."""


class BaseGaussianEstimate(metaclass=ABCMeta):
    """
    Base class for an estimate theta_hat with an approximate Gaussian
    covariance, used for delta-method predictions of the demand function.

    Subclasses set ``spec``, ``center_theta`` (where predictions are
    evaluated), ``gradient_theta`` (where the demand gradient is taken) and
    ``covariance``.
    """

    method = None

    def predict(self, p, x):
        """Predicted demand f(p, x; center_theta)."""
        return mean_demand(self.spec, self.center_theta, p, x)

    def prediction_std(self, p, x):
        """sqrt(g^T cov g) with g the demand gradient at gradient_theta."""
        g = np.atleast_2d(grad_mean_demand(self.spec, self.gradient_theta, p, x))
        var = np.einsum("ij,jk,ik->i", g, self.covariance, g)
        scale = np.einsum("ij,ij->i", g, g) * np.abs(np.diag(self.covariance)).max()
        if np.any(var < -1e-10 * np.maximum(scale, 1e-300)):
            raise np.linalg.LinAlgError(
                "Covariance is not positive semidefinite along the query gradient."
            )
        std = np.sqrt(np.clip(var, 0.0, None))
        return std[0] if np.ndim(p) == 0 else std

    def interval(self, p, x, alpha):
        """Center and half-width of the two-sided (1 - alpha) interval."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1). Given {}.".format(alpha))
        z = std_normal_quantile(1.0 - alpha / 2.0)
        return self.predict(p, x), z * self.prediction_std(p, x)

    @abstractmethod
    def standardized_error(self, theta0):
        """Covariance-whitened estimation error for a known truth."""
