"""
Sequential whitening matrix for debiasing adaptively collected data.

Columns w_t of the d x T matrix W are built one period at a time from a
running residual matrix Z (initially the identity): w_t projects Z onto the
current demand gradient u_t = grad f(p_t, x_t; theta_t^p) and is clipped
to a norm budget: eta itself, or eta divided by the running gradient size.
Because theta_t^p is fitted on data before period t, w_t depends only on
earlier data and the current (p_t, x_t).
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .demand_model import ModelSpec, design_matrix, grad_mean_demand, variance_fn
from .linalg_kernel import operator_norm

__all__ = [
    "WhiteningMatrix",
    "WhiteningDiagnostics",
    "default_eta",
    "column_budgets",
    "whiten_gradients",
    "whiten",
    "whitening_diagnostics",
]

logger = logging.getLogger(__name__)

DEFAULT_UPSILON = 0.6
BUDGETS = ("absolute", "relative")


@dataclass(eq=False)
class WhiteningMatrix:
    """
    Whitening matrix W with its construction record.

    Attributes
    ----------
    W : array (d, T)
        Columns w_t.
    eta : float
        Base norm budget.
    Z_final : array (d, d)
        Residual I - sum_t w_t u_t^T after the last period.
    U_seq : array (T, d)
        Gradients u_t at the per-period pilots.
    diag_iwg_opnorm : float
        ||I - W U_seq||_op, equal to ||Z_final||_op.
    diag_cube_sum : float
        sum_t ||w_t||^3.
    diag_clip_count : int
        Number of columns normalized to the budget.
    diag_zero_count : int
        Number of periods with a zero gradient (zero column).
    frobenius_path : array (T + 1,)
        ||Z_t||_F along the construction.
    budgets : array (T,)
        Norm budget of each column; all equal to eta for the absolute rule.
    budget : string
        Budget rule, 'absolute' or 'relative'.
    """

    W: np.ndarray
    eta: float
    Z_final: np.ndarray
    U_seq: np.ndarray
    diag_iwg_opnorm: float
    diag_cube_sum: float
    diag_clip_count: int
    diag_zero_count: int
    frobenius_path: np.ndarray = field(repr=False)
    budgets: Optional[np.ndarray] = field(default=None, repr=False)
    budget: str = "absolute"

    def __post_init__(self):
        if self.budgets is None:
            self.budgets = np.full(self.W.shape[1], float(self.eta))

    @property
    def columns(self) -> np.ndarray:
        """Columns w_t as rows, shape (T, d)."""
        return self.W.T

    @property
    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.W, axis=0)

    def to_frame(self) -> pd.DataFrame:
        """Table with columns t, w1..wd, u1..ud."""
        d, T = self.W.shape
        frame = pd.DataFrame({"t": np.arange(1, T + 1)})
        for i in range(d):
            frame["w{}".format(i + 1)] = self.W[i]
        for i in range(d):
            frame["u{}".format(i + 1)] = self.U_seq[:, i]
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass
class WhiteningDiagnostics:
    """Checks of the conditions under which the debiased estimate is normal."""

    iwg_opnorm: float
    cube_sum: float
    cube_bound: float
    lambda_min_cov: float
    clip_fraction: float
    zero_gradient_count: int
    eta: float
    horizon: int
    bias_condition: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: (None if v is None else float(v)) for k, v in asdict(self).items()}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as f:
                f.write(text)
        return text


def default_eta(T: int, upsilon: float = DEFAULT_UPSILON) -> float:
    """Norm budget eta = T^(-upsilon), upsilon in (1/2, 1)."""
    if not 0.5 < upsilon < 1:
        raise ValueError("upsilon must lie in (1/2, 1). Given {}.".format(upsilon))
    return float(max(T, 1)) ** (-upsilon)


def column_budgets(U: np.ndarray, eta: float, budget: str = "absolute") -> np.ndarray:
    """
    Norm budget of every column w_t.

    ``"absolute"`` gives eta in every period. ``"relative"`` divides eta by
    the running root mean square of ||u_s|| over s <= t, so that rescaling
    all gradients by c rescales W by 1/c. Periods before the first nonzero
    gradient keep eta.

    Parameters
    ----------
    U : array (T, d)
    eta : float
    budget : {'absolute', 'relative'}, default='absolute'

    Returns
    -------
    budgets : array (T,)
    """
    if budget not in BUDGETS:
        raise ValueError(
            "Unknown budget {!r}; expected one of {}.".format(budget, ", ".join(BUDGETS))
        )
    U = np.atleast_2d(np.asarray(U, dtype=float))
    T = U.shape[0]
    if budget == "absolute" or T == 0:
        return np.full(T, float(eta))
    running = np.sqrt(np.cumsum(np.einsum("ij,ij->i", U, U)) / np.arange(1, T + 1))
    scaled = np.full(T, float(eta))
    np.divide(eta, running, out=scaled, where=running > 0)
    return scaled


def whiten_gradients(
    U: np.ndarray, eta: float, debug: bool = False, budget: str = "absolute"
) -> WhiteningMatrix:
    """
    Build W from a sequence of gradients.

    Parameters
    ----------
    U : array (T, d)
        Row t is the gradient u_t used in period t.
    eta : float
        Norm budget; a column reaching its budget is rescaled to it.
    debug : bool, default=False
        Assert at every step that ||Z||_F does not increase.
    budget : {'absolute', 'relative'}, default='absolute'
        How eta turns into per-column budgets, see ``column_budgets``.

    Returns
    -------
    whitening : WhiteningMatrix
    """
    if not eta > 0:
        raise ValueError("Norm budget eta must be positive. Given {}.".format(eta))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    T, d = U.shape
    budgets = column_budgets(U, eta, budget)
    Z = np.eye(d)
    W = np.zeros((d, T))
    frobenius = np.empty(T + 1)
    frobenius[0] = np.sqrt(d)
    clip_count = zero_count = 0

    for t in range(T):
        u = U[t]
        norm_u2 = float(u @ u)
        if norm_u2 == 0.0:
            zero_count += 1
            frobenius[t + 1] = frobenius[t]
            continue
        w = Z @ u / norm_u2
        norm_w = np.linalg.norm(w)
        if norm_w >= budgets[t]:
            w *= budgets[t] / norm_w
            clip_count += 1
        Z -= np.outer(w, u)
        W[:, t] = w
        frobenius[t + 1] = np.linalg.norm(Z)
        if debug:
            assert frobenius[t + 1] <= frobenius[t] * (1 + 1e-12) + 1e-12, (
                "||Z||_F increased at period {}".format(t + 1)
            )

    if zero_count:
        logger.debug("Whitening skipped %d zero-gradient periods.", zero_count)
    return WhiteningMatrix(
        W=W,
        eta=float(eta),
        Z_final=Z,
        U_seq=U,
        diag_iwg_opnorm=operator_norm(Z),
        diag_cube_sum=float(np.sum(np.linalg.norm(W, axis=0) ** 3)),
        diag_clip_count=clip_count,
        diag_zero_count=zero_count,
        frobenius_path=frobenius,
        budgets=budgets,
        budget=budget,
    )


def whiten(
    history,
    pilots,
    spec: ModelSpec,
    eta: float,
    debug: bool = False,
    budget: str = "absolute",
) -> WhiteningMatrix:
    """
    Whitening matrix for a history and its pilot sequence.

    Uses u_t = grad f(p_t, x_t; theta_t^p) with theta_t^p fitted on the
    data before period t.

    Parameters
    ----------
    history : History
    pilots : PilotSequence
        Must hold T + 1 estimates.
    spec : ModelSpec
    eta : float
        Norm budget, typically ``default_eta(T)``.
    budget : {'absolute', 'relative'}, default='absolute'
    """
    T = len(history)
    if len(pilots) != T + 1:
        raise ValueError(
            "Pilot sequence has {} estimates, expected {}.".format(len(pilots), T + 1)
        )
    if T == 0:
        return whiten_gradients(np.zeros((0, spec.dim)), eta, debug, budget)
    U = _per_period_gradients(history, pilots.estimates[:T], spec)
    return whiten_gradients(U, eta, debug, budget)


def _per_period_gradients(history, thetas, spec):
    # row t pairs (p_t, x_t) with its own pilot theta_t^p
    phi = design_matrix(spec, history.prices, history.contexts)
    index = np.einsum("ij,ij->i", phi, thetas)
    return spec.family.mean_slope(index)[:, None] * phi


def whitening_diagnostics(
    w: WhiteningMatrix,
    history,
    final_pilot: np.ndarray,
    spec: ModelSpec,
    theta0: Optional[np.ndarray] = None,
) -> WhiteningDiagnostics:
    """
    Diagnostics of a whitening matrix at the final pilot.

    Recomputes G with rows grad f(p_t, x_t; theta^p) and reports
    ||I - W G||_op, sum ||w_t||^3 with its bound (the sum of cubed column
    budgets, T eta^3 for the absolute rule), the smallest
    eigenvalue of W D_hat W^T and the clipped fraction. When the truth
    theta0 is known the bias condition
    max{||I-WG|| ||e||, ||e||^2} / min{1, sqrt(lambda_min)}, e = theta^p - theta0,
    is reported too.
    """
    d, T = w.W.shape
    if T:
        G = grad_mean_demand(spec, final_pilot, history.prices, history.contexts)
        D_hat = variance_fn(spec, final_pilot, history.prices, history.contexts)
    else:
        G, D_hat = np.zeros((0, d)), np.zeros(0)
    iwg = operator_norm(np.eye(d) - w.W @ G)
    cov = (w.W * D_hat) @ w.W.T
    lambda_min = float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[0])

    bias_condition = None
    if theta0 is not None:
        err = float(np.linalg.norm(np.asarray(final_pilot) - np.asarray(theta0)))
        scale = min(1.0, np.sqrt(max(lambda_min, 0.0)))
        bias_condition = max(iwg * err, err ** 2) / scale if scale > 0 else np.inf

    return WhiteningDiagnostics(
        iwg_opnorm=iwg,
        cube_sum=w.diag_cube_sum,
        cube_bound=float(np.sum(w.budgets ** 3)),
        lambda_min_cov=lambda_min,
        clip_fraction=w.diag_clip_count / T if T else 0.0,
        zero_gradient_count=w.diag_zero_count,
        eta=w.eta,
        horizon=T,
        bias_condition=bias_condition,
    )
