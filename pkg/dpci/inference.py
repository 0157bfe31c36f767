"""
Confidence intervals for the demand function.

The debiased estimate theta^d = theta^p + W (d - f_hat) is approximately
N(theta0, W D_hat W^T) even under adaptive data collection. Point-wise
intervals follow from the delta method; uniform bands from the
Monte-Carlo distribution of the sup over (p, x) of |<grad f, zeta>|. The
classical Wald construction from the MLE and the sample information is
provided as the baseline.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .base_classes import BaseGaussianEstimate
from .demand_model import (
    ModelSpec,
    design_matrix,
    grad_mean_demand,
    mean_demand,
    variance_fn,
)
from .estimator import fit_erm
from .linalg_kernel import mvn_sample, psd_factor, std_normal_quantile
from .whitening import WhiteningMatrix

__all__ = [
    "SingularInformationError",
    "DebiasedEstimate",
    "WaldFit",
    "ConfidenceBand",
    "NormalizedErrors",
    "debias",
    "pointwise_ci",
    "uniform_grid",
    "uniform_halfwidths",
    "uniform_ci",
    "wald_fit",
    "wald_ci",
    "wald_uniform_ci",
    "normalized_errors",
    "empirical_quantile",
    "decompose_error",
]

logger = logging.getLogger(__name__)

EIGEN_CLIP = 1e-12
CONDITION_LIMIT = 1e12
COVER_SLACK = 1e-10
MC_CHUNK = 250


class SingularInformationError(np.linalg.LinAlgError):
    """Raised when the sample information matrix cannot be inverted."""

    def __init__(self, condition_number: float):
        self.condition_number = condition_number
        super().__init__(
            "Sample information matrix is singular (condition number {:.3e}).".format(
                condition_number
            )
        )


@dataclass(eq=False)
class DebiasedEstimate(BaseGaussianEstimate):
    """
    Debiased estimate theta^d with its plug-in covariance.

    Attributes
    ----------
    theta_d : array (d,)
    theta_p : array (d,)
        Final pilot, where demand gradients are evaluated.
    whitening : WhiteningMatrix
    D_hat : array (T,)
        Plug-in variances nu(p_t, x_t; theta^p)^2.
    cov_hat : array (d, d)
        W D_hat W^T.
    residuals : array (T,)
        d_t - f(p_t, x_t; theta^p).
    cov_clipped : bool
        True when eigenvalues of cov_hat were below 1e-12.
    """

    theta_d: np.ndarray
    theta_p: np.ndarray
    whitening: WhiteningMatrix
    D_hat: np.ndarray
    cov_hat: np.ndarray
    residuals: np.ndarray
    spec: ModelSpec
    cov_clipped: bool = False

    method = "debiased"

    @property
    def center_theta(self):
        return self.theta_d

    @property
    def gradient_theta(self):
        return self.theta_p

    @property
    def covariance(self):
        return self.cov_hat

    def standardized_error(self, theta0):
        """(W D W^T)^(-1/2) (theta^d - theta0)."""
        return _inverse_sqrt(self.cov_hat) @ (self.theta_d - np.asarray(theta0, dtype=float))


@dataclass(eq=False)
class WaldFit(BaseGaussianEstimate):
    """
    Maximum-likelihood estimate with inverse sample-information covariance.

    Attributes
    ----------
    theta : array (d,)
    information : array (d, d)
        Sample Fisher information I_T(theta).
    cov : array (d, d)
        I_T(theta)^(-1).
    """

    theta: np.ndarray
    information: np.ndarray
    cov: np.ndarray
    spec: ModelSpec

    method = "wald"

    @property
    def center_theta(self):
        return self.theta

    @property
    def gradient_theta(self):
        return self.theta

    @property
    def covariance(self):
        return self.cov

    def standardized_error(self, theta0):
        """I_T(theta)^(1/2) (theta - theta0), taken as cov^(-1/2) (theta - theta0)."""
        return _inverse_sqrt(self.cov) @ (self.theta - np.asarray(theta0, dtype=float))


@dataclass(eq=False)
class ConfidenceBand:
    """
    Point-wise interval or uniform band for f(p, x; theta0).

    Point-wise bands carry scalar ``lower``/``upper`` at ``query``; uniform
    bands carry the ``center`` curve and the constant half-width
    ``half_width`` (s_alpha) over the grid they were calibrated on.
    """

    kind: str
    alpha: float
    lower: Optional[float] = None
    upper: Optional[float] = None
    query: Optional[Tuple[float, Tuple[float, ...]]] = None
    center: Optional[Callable] = field(default=None, repr=False)
    half_width: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1). Given {}.".format(self.alpha))
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError("Band lower end exceeds upper end.")

    @property
    def width(self) -> float:
        if self.kind == "uniform":
            return 2.0 * self.half_width
        return self.upper - self.lower

    def bounds(self, p, x):
        """Lower and upper band values at (p, x)."""
        if self.kind != "uniform":
            return self.lower, self.upper
        c = self.center(p, x)
        return c - self.half_width, c + self.half_width

    def contains(self, value, p=None, x=None) -> bool:
        """Whether ``value`` (the true demand at the query) lies in the band."""
        if self.kind == "uniform":
            lower, upper = self.bounds(p, x)
        else:
            lower, upper = self.lower, self.upper
        return bool(np.all(lower - COVER_SLACK <= value) and np.all(value <= upper + COVER_SLACK))

    def to_dict(self) -> dict:
        out = {"method": self.kind, "alpha": self.alpha, "metadata": self.metadata}
        if self.kind == "uniform":
            out["half_width"] = self.half_width
        else:
            out.update(lower=self.lower, upper=self.upper, center=0.5 * (self.lower + self.upper))
            if self.query is not None:
                out["query"] = {"p": self.query[0], "x": list(self.query[1])}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class NormalizedErrors:
    """Standardized estimation error vector and per-query prediction errors."""

    method: str
    estimation: np.ndarray
    prediction: np.ndarray


def _inverse_sqrt(m):
    eigval, eigvec = np.linalg.eigh(0.5 * (m + m.T))
    eigval = np.maximum(eigval, EIGEN_CLIP)
    return (eigvec / np.sqrt(eigval)) @ eigvec.T


def debias(theta_p, w: WhiteningMatrix, history, spec: ModelSpec) -> DebiasedEstimate:
    """
    Debiased estimate theta^d = theta^p + W (d - f_hat).

    Parameters
    ----------
    theta_p : array (d,)
        Final pilot estimate.
    w : WhiteningMatrix
    history : History
    spec : ModelSpec

    Returns
    -------
    estimate : DebiasedEstimate
    """
    theta_p = np.asarray(theta_p, dtype=float)
    d, T = w.W.shape
    if T != len(history) or d != theta_p.size:
        raise ValueError(
            "Whitening matrix of shape {} does not match {} periods and dimension {}.".format(
                w.W.shape, len(history), theta_p.size
            )
        )
    if T:
        f_hat = mean_demand(spec, theta_p, history.prices, history.contexts)
        D_hat = variance_fn(spec, theta_p, history.prices, history.contexts)
    else:
        f_hat, D_hat = np.zeros(0), np.zeros(0)
    residuals = history.demands - f_hat
    theta_d = theta_p + w.W @ residuals
    cov = (w.W * D_hat) @ w.W.T
    cov = 0.5 * (cov + cov.T)

    clipped = bool(np.linalg.eigvalsh(cov)[0] < EIGEN_CLIP)
    if clipped:
        logger.warning("Debiased covariance has eigenvalues below %.0e.", EIGEN_CLIP)
    return DebiasedEstimate(
        theta_d=theta_d,
        theta_p=theta_p,
        whitening=w,
        D_hat=D_hat,
        cov_hat=cov,
        residuals=residuals,
        spec=spec,
        cov_clipped=clipped,
    )


def _pointwise(estimate, p, x, alpha, kind):
    center, half = estimate.interval(p, x, alpha)
    center, half = float(center), float(half)
    query = (float(p), tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist()))
    return ConfidenceBand(
        kind=kind,
        alpha=alpha,
        lower=center - half,
        upper=center + half,
        query=query,
        metadata={"std": half / std_normal_quantile(1.0 - alpha / 2.0)},
    )


def pointwise_ci(est: DebiasedEstimate, p, x, alpha: float, spec: Optional[ModelSpec] = None) -> ConfidenceBand:
    """
    Point-wise (1 - alpha) interval f(p, x; theta^d) +/- z_{alpha/2} sigma_px.

    sigma_px = sqrt(g^T W D_hat W^T g) with g = grad f(p, x; theta^p).
    """
    if spec is not None:
        est = replace(est, spec=spec)
    return _pointwise(est, p, x, alpha, "pointwise")


def uniform_grid(
    spec: ModelSpec, price_points: int = 51, context_points: int = 101, context_bound: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rectangular grid over [p_min, p_max] x [-bound, bound]^k.

    Returns
    -------
    prices : array (n,)
    contexts : array (n, k)
    """
    axes = [np.linspace(spec.price_range[0], spec.price_range[1], price_points)]
    axes += [np.linspace(-context_bound, context_bound, context_points)] * spec.context_dim
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.reshape(-1) for m in mesh])
    return points[:, 0], points[:, 1:]


def _sup_statistics(gradient_theta, covariance, grid, spec, M, rng):
    """a(m) = max over the grid of |<grad f(p, x), zeta_m>|, zeta_m ~ N(0, cov)."""
    prices, contexts = grid
    if np.size(prices) == 0:
        raise ValueError("Uniform band grid is empty.")
    G = np.atleast_2d(grad_mean_demand(spec, gradient_theta, prices, contexts))
    zeta = mvn_sample(np.zeros(spec.dim), covariance, rng, size=M, fill=EIGEN_CLIP)
    sup = np.empty(M)
    for start in range(0, M, MC_CHUNK):
        block = zeta[start : start + MC_CHUNK] @ G.T
        sup[start : start + MC_CHUNK] = np.max(np.abs(block), axis=1)
    return sup


def uniform_halfwidths(
    estimate: BaseGaussianEstimate,
    alphas: Sequence[float],
    M: int,
    grid,
    rng: np.random.Generator,
) -> Dict[float, float]:
    """
    Monte-Carlo half-widths s_alpha for several levels from one set of draws.
    """
    if M < 1:
        raise ValueError("Number of Monte-Carlo draws M must be positive.")
    _, degenerate = psd_factor(estimate.covariance)
    if degenerate:
        warnings.warn(
            "Covariance is singular; sampling clips eigenvalues to {:.0e}.".format(EIGEN_CLIP)
        )
    sup = _sup_statistics(
        estimate.gradient_theta, estimate.covariance, grid, estimate.spec, M, rng
    )
    return {alpha: empirical_quantile(sup, 1.0 - alpha) for alpha in alphas}


def _uniform(estimate, alpha, M, grid, rng, kind):
    s_alpha = uniform_halfwidths(estimate, [alpha], M, grid, rng)[alpha]
    prices, contexts = grid
    return ConfidenceBand(
        kind=kind,
        alpha=alpha,
        center=estimate.predict,
        half_width=s_alpha,
        metadata={
            "M": int(M),
            "grid_points": int(np.size(prices)),
            "method": estimate.method,
        },
    )


def uniform_ci(
    est: DebiasedEstimate,
    alpha: float,
    M: int,
    grid,
    spec: Optional[ModelSpec],
    rng: np.random.Generator,
) -> ConfidenceBand:
    """
    Uniform (1 - alpha) band f(p, x; theta^d) +/- s_alpha.

    s_alpha is the empirical (1 - alpha) quantile of
    a(m) = max_{(p, x) in grid} |<grad f(p, x; theta^p), zeta_m>| over M
    draws zeta_m ~ N(0, W D_hat W^T).
    """
    if M < 100:
        raise ValueError("Uniform bands need at least M=100 Monte-Carlo draws.")
    if spec is not None:
        est = replace(est, spec=spec)
    return _uniform(est, alpha, M, grid, rng, "uniform")


def wald_fit(history, spec: ModelSpec) -> WaldFit:
    """
    Unregularized MLE and its inverse sample information.

    For the logistic family I_T = sum f(1 - f) phi phi^T; for the linear
    family I_T = sum phi phi^T / nu^2 and the covariance nu^2 (Phi^T Phi)^-1.

    Raises
    ------
    SingularInformationError
        If the information matrix has condition number above 1e12.
    """
    features = design_matrix(spec, history.prices, history.contexts)
    try:
        fit = fit_erm(spec.family, features, history.demands, lam=0.0)
    except np.linalg.LinAlgError as err:
        raise SingularInformationError(np.inf) from err
    if not fit.converged:
        raise SingularInformationError(np.inf)
    theta = fit.theta

    if spec.family.kind == "linear":
        gram = features.T @ features
        scale = spec.family.noise_std ** 2
    else:
        weight = spec.family.mean_slope(features @ theta)
        gram = (features * weight[:, None]).T @ features
        scale = 1.0
    condition = np.linalg.cond(gram)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularInformationError(condition)
    gram_inv = np.linalg.inv(gram)
    information = gram / scale if scale > 0 else np.full_like(gram, np.inf)
    return WaldFit(theta=theta, information=information, cov=scale * gram_inv, spec=spec)


def wald_ci(history, spec: ModelSpec, p, x, alpha: float, fit: Optional[WaldFit] = None) -> ConfidenceBand:
    """
    Wald interval f(p, x; theta_hat) +/- z_{alpha/2} sigma_px with
    sigma_px^2 = g^T I_T^-1 g, g = grad f(p, x; theta_hat).
    """
    fit = wald_fit(history, spec) if fit is None else fit
    return _pointwise(fit, p, x, alpha, "wald_pointwise")


def wald_uniform_ci(
    history, spec: ModelSpec, alpha: float, M: int, grid, rng, fit: Optional[WaldFit] = None
) -> ConfidenceBand:
    """Uniform band built like ``uniform_ci`` around the MLE with covariance I_T^-1."""
    fit = wald_fit(history, spec) if fit is None else fit
    return _uniform(fit, alpha, M, grid, rng, "uniform")


def normalized_errors(
    estimate: BaseGaussianEstimate, theta0, spec: Optional[ModelSpec], queries
) -> NormalizedErrors:
    """
    Standardized errors against a known truth.

    Estimation: (W D W^T)^(-1/2) (theta^d - theta0) for the debiased
    estimate, I_T^(1/2) (theta_hat - theta0) for the Wald fit. Prediction:
    [f(p, x; center) - f(p, x; theta0)] / sigma_px for every query.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if spec is not None:
        estimate = replace(estimate, spec=spec)
    spec = estimate.spec
    prediction = np.empty(len(queries))
    for i, (p, x) in enumerate(queries):
        diff = float(estimate.predict(p, x) - mean_demand(spec, theta0, p, x))
        std = float(estimate.prediction_std(p, x))
        if std > 0:
            prediction[i] = diff / std
        else:
            prediction[i] = 0.0 if abs(diff) <= COVER_SLACK else np.sign(diff) * np.inf
    estimation = estimate.standardized_error(theta0)
    return NormalizedErrors(estimate.method, estimation, prediction)


def empirical_quantile(values, q: float) -> float:
    """
    Upper empirical quantile: the ceil(q M)-th order statistic (1-based).
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("Empirical quantile of an empty sample.")
    if not 0 < q < 1:
        raise ValueError("Quantile level must lie in (0, 1). Given {}.".format(q))
    k = int(np.ceil(q * values.size - 1e-9))
    k = min(max(k, 1), values.size)
    return float(np.sort(values)[k - 1])


def decompose_error(est: DebiasedEstimate, history, spec: ModelSpec, theta0):
    """
    Split theta^d - theta0 into (I - W G)(theta^p - theta0), W xi and a remainder.

    G has rows grad f(p_t, x_t; theta^p) and xi_t = d_t - f(p_t, x_t; theta0).

    Returns
    -------
    linear_term, noise_term, remainder : arrays (d,)
    """
    theta0 = np.asarray(theta0, dtype=float)
    W = est.whitening.W
    G = np.atleast_2d(grad_mean_demand(spec, est.theta_p, history.prices, history.contexts))
    xi = history.demands - mean_demand(spec, theta0, history.prices, history.contexts)
    linear_term = (np.eye(W.shape[0]) - W @ G) @ (est.theta_p - theta0)
    noise_term = W @ xi
    remainder = (est.theta_d - theta0) - linear_term - noise_term
    return linear_term, noise_term, remainder
