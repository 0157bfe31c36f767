"""
Empirical-risk minimization for demand models.

Closed-form ridge least squares for the linear family, damped Newton for
the logistic maximum likelihood, and the sequential pilot estimates
theta_t^p fitted on data strictly before period t.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .base_classes import BaseERM
from .demand_model import DemandFamily, ModelSpec, design_matrix

__all__ = [
    "RankDeficiencyError",
    "ERMFit",
    "PilotSequence",
    "RidgeLeastSquares",
    "LogisticNewton",
    "default_ridge",
    "fit_least_squares",
    "fit_logistic_newton",
    "fit_erm",
    "pilot_sequence",
]

logger = logging.getLogger(__name__)

_LOGISTIC = DemandFamily("logistic")

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50
PILOT_RIDGE = 1e-4


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when an unregularized least-squares system is singular."""


@dataclass
class ERMFit:
    """Result of one ERM fit."""

    theta: np.ndarray
    grad_norm: float
    n_iter: int
    converged: bool


@dataclass
class PilotSequence:
    """
    Sequential pilot estimates.

    ``estimates[k]`` is the ERM on the first k observations, i.e. the pilot
    theta_{k+1}^p used in period k + 1. ``estimates[-1]`` is the final
    pilot theta^p fitted on the whole history.
    ``gated_count`` counts fits held back by the curvature gate and
    ``reused_count`` fits taken over from the pricing policy.
    """

    estimates: np.ndarray
    grad_norms: np.ndarray
    converged: np.ndarray
    fallback_count: int = 0
    gated_count: int = 0
    reused_count: int = 0

    def __len__(self):
        return self.estimates.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]

    def at(self, t: int) -> np.ndarray:
        """Pilot theta_t^p for 1-based period t."""
        return self.estimates[t - 1]


class RidgeLeastSquares(BaseERM):
    """
    Ridge least squares, minimizing sum (d_t - <phi_t, theta>)^2 + lam ||theta||^2.

    Parameters
    ----------
    lam : float, default=0.0
        Ridge penalty. With lam=0 a rank-deficient design raises
        RankDeficiencyError.
    """

    def _solve(self, features, demands, warm_start):
        n, d = features.shape
        if self.lam == 0 and (n == 0 or np.linalg.matrix_rank(features) < d):
            raise RankDeficiencyError(
                "Design of {} observations does not excite all {} parameters; "
                "use lam > 0.".format(n, d)
            )
        gram = features.T @ features + self.lam * np.eye(d)
        coef = linalg.solve(gram, features.T @ demands, assume_a="sym")
        return coef, 1, True

    def objective(self, theta, features, demands):
        resid = demands - features @ theta
        return float(resid @ resid + self.lam * theta @ theta)

    def gradient(self, theta, features, demands):
        resid = demands - features @ theta
        return -2.0 * features.T @ resid + 2.0 * self.lam * theta


class LogisticNewton(BaseERM):
    """
    Logistic maximum likelihood by damped Newton iteration.

    Minimizes sum [log(1 + exp(eta_t)) - d_t eta_t] + lam ||theta||^2 with
    eta_t = <phi_t, theta>.

    Parameters
    ----------
    lam : float, default=0.0
        Ridge penalty.
    tol : float, default=1e-8
        Gradient norm at which the iteration stops.
    max_iter : int, default=50
        Newton iteration cap; the best iterate is returned with
        ``converged_ = False`` when it is exhausted.
    max_halvings : int, default=30
        Step halvings allowed when a step increases the objective.
    radius : float, default=100.0
        Iterates escaping this l2 ball (diverging MLE) are projected back.
    """

    def __init__(self, lam=0.0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, max_halvings=30, radius=100.0):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.max_halvings = max_halvings
        self.radius = radius

    def _solve(self, features, demands, warm_start):
        if not np.all((demands == 0) | (demands == 1)):
            raise ValueError("Logistic MLE requires binary demands in {0, 1}.")
        d = features.shape[1]
        theta = np.zeros(d) if warm_start is None else np.array(warm_start, dtype=float)
        obj = self.objective(theta, features, demands)

        for n_iter in range(self.max_iter):
            grad = self.gradient(theta, features, demands)
            step = -np.linalg.lstsq(self.hessian(theta, features), grad, rcond=None)[0]
            # a vanishing gradient with a non-vanishing Newton step means the
            # data are separable along the step direction
            if np.linalg.norm(grad) < self.tol and np.linalg.norm(step) < 1e-6 * max(
                1.0, np.linalg.norm(theta)
            ):
                return theta, n_iter, True

            scale = 1.0
            slack = 1e-10 * (1.0 + abs(obj))
            for _ in range(self.max_halvings + 1):
                candidate = theta + scale * step
                cand_obj = self.objective(candidate, features, demands)
                if cand_obj <= obj + slack:
                    break
                scale *= 0.5
            else:
                logger.debug("Newton step halving exhausted at iteration %d.", n_iter)
                return theta, n_iter, False

            norm = np.linalg.norm(candidate)
            if norm > self.radius:
                candidate = candidate * (self.radius / norm)
                cand_obj = self.objective(candidate, features, demands)
            theta, obj = candidate, cand_obj

        return theta, self.max_iter, False

    def objective(self, theta, features, demands):
        index = features @ theta
        return float(np.sum(np.logaddexp(0.0, index) - demands * index) + self.lam * theta @ theta)

    def gradient(self, theta, features, demands):
        return features.T @ (_LOGISTIC.mean(features @ theta) - demands) + 2.0 * self.lam * theta

    def hessian(self, theta, features):
        weight = _LOGISTIC.mean_slope(features @ theta)
        return (features * weight[:, None]).T @ features + 2.0 * self.lam * np.eye(features.shape[1])


def default_ridge(family: DemandFamily) -> float:
    """Pilot ridge penalty: a separation guard for logistic, none for linear."""
    return PILOT_RIDGE if family.kind == "logistic" else 0.0


def _as_fit(model):
    return ERMFit(
        theta=model.coef_,
        grad_norm=model.grad_norm_,
        n_iter=model.n_iter_,
        converged=bool(model.converged_),
    )


def fit_least_squares(features, demands, lam: float = 0.0) -> ERMFit:
    """Solve (Phi^T Phi + lam I) theta = Phi^T d."""
    return _as_fit(RidgeLeastSquares(lam=lam).fit(features, demands))


def fit_logistic_newton(
    features,
    demands,
    lam: float = 0.0,
    warm_start: Optional[np.ndarray] = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> ERMFit:
    """Regularized logistic MLE by damped Newton."""
    model = LogisticNewton(lam=lam, tol=tol, max_iter=max_iter)
    return _as_fit(model.fit(features, demands, warm_start=warm_start))


def fit_erm(
    family: DemandFamily,
    features,
    demands,
    lam: float = 0.0,
    warm_start: Optional[np.ndarray] = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> ERMFit:
    """Dispatch the ERM to the solver matching the demand family."""
    if family.kind == "linear":
        return fit_least_squares(features, demands, lam)
    return fit_logistic_newton(features, demands, lam, warm_start, tol, max_iter)


def pilot_sequence(
    history,
    spec: ModelSpec,
    lam: Optional[float] = None,
    final_lam: float = 0.0,
    refit_every: int = 1,
    burn_in: int = 200,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    min_curvature: float = 0.0,
    reuse_policy_fits: bool = True,
) -> PilotSequence:
    """
    Pilot estimates theta_t^p for t = 1, ..., T + 1.

    theta_1^p is the zero vector; every later pilot is the ERM on the data
    strictly before period t, warm-started from the previous fit. The
    final pilot uses ``final_lam`` (no ridge by default), earlier pilots use
    ``lam``. Failed fits reuse the previous pilot and are counted.

    Parameters
    ----------
    history : History
        Observed prices, contexts and demands.
    spec : ModelSpec
        Demand model supplying the feature map and family.
    lam : float, optional
        Ridge penalty for t <= T. Defaults to 1e-4 for logistic and 0 for
        linear models.
    final_lam : float, default=0.0
        Ridge penalty of the final pilot theta_{T+1}^p.
    refit_every : int, default=1
        After ``burn_in`` periods, refit only every ``refit_every`` periods.
    burn_in : int, default=200
        Number of leading periods that are always refitted.
    min_curvature : float, default=0.0
        Smallest eigenvalue of the per-observation Hessian
        (1/k) sum_s f'(<phi_s, theta>) phi_s phi_s^T a fit on k observations
        needs to become a pilot. Rejected fits keep the previous pilot (zero
        until a fit is accepted) and are counted in ``gated_count``. The
        final pilot is never gated.
    reuse_policy_fits : bool, default=True
        Take the fits a simulated policy recorded in ``history.policy_fits``
        when they were made with the same ridge and solver settings, instead
        of refitting.

    Returns
    -------
    pilots : PilotSequence
    """
    if lam is None:
        lam = default_ridge(spec.family)
    if min_curvature < 0:
        raise ValueError("min_curvature must be non-negative. Given {}.".format(min_curvature))
    features = design_matrix(spec, history.prices, history.contexts)
    demands = np.asarray(history.demands, dtype=float)
    T, d = demands.size, spec.dim

    recorded = None
    if reuse_policy_fits and tol == NEWTON_TOL and max_iter == NEWTON_MAX_ITER:
        recorded = _recorded_fits(history, lam, T, d)

    estimates = np.zeros((T + 1, d))
    grad_norms = np.zeros(T + 1)
    converged = np.ones(T + 1, dtype=bool)
    fallback_count = gated_count = reused_count = 0
    current = np.zeros(d)

    for k in range(1, T + 1):
        final = k == T
        if not final and refit_every > 1 and k > burn_in and k % refit_every:
            estimates[k], grad_norms[k], converged[k] = (
                estimates[k - 1], grad_norms[k - 1], converged[k - 1]
            )
            continue
        if not final and recorded is not None and np.isfinite(recorded.grad_norms[k]):
            fit = ERMFit(recorded.thetas[k], float(recorded.grad_norms[k]), 0, True)
            reused_count += 1
        else:
            fit = _pilot_fit(
                spec, features[:k], demands[:k], final_lam if final else lam, lam, current, tol, max_iter
            )
        if fit is None:
            fallback_count += 1
            estimates[k], grad_norms[k], converged[k] = estimates[k - 1], np.nan, False
            continue
        current = fit.theta
        if not final and min_curvature > 0 and (
            _curvature(spec, features[:k], fit.theta) < min_curvature
        ):
            gated_count += 1
            estimates[k], grad_norms[k], converged[k] = estimates[k - 1], fit.grad_norm, True
            continue
        estimates[k], grad_norms[k], converged[k] = fit.theta, fit.grad_norm, fit.converged

    if fallback_count:
        logger.debug("Pilot sequence used %d fallbacks over %d periods.", fallback_count, T)
    if gated_count:
        logger.debug("Pilot curvature gate held %d of %d fits.", gated_count, T)
    return PilotSequence(estimates, grad_norms, converged, fallback_count, gated_count, reused_count)


def _recorded_fits(history, lam, T, d):
    fits = getattr(history, "policy_fits", None)
    if fits is None or fits.ridge != lam or fits.thetas.shape != (T, d):
        return None
    return fits


def _curvature(spec, features, theta):
    """Smallest eigenvalue of the mean Hessian of the unpenalized risk at theta."""
    weight = spec.family.mean_slope(features @ theta)
    hessian = (features * weight[:, None]).T @ features / features.shape[0]
    return float(np.linalg.eigvalsh(hessian)[0])


def _pilot_fit(spec, features, demands, lam, ridge, warm_start, tol, max_iter):
    """One pilot fit; retries with the ridge penalty, returns None on failure."""
    for penalty in dict.fromkeys([lam, ridge]):
        try:
            fit = fit_erm(spec.family, features, demands, penalty, warm_start, tol, max_iter)
        except np.linalg.LinAlgError as err:
            logger.debug("Pilot fit on %d observations failed: %s", demands.size, err)
            continue
        if fit.converged:
            return fit
    return None
