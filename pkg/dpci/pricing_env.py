"""
Contextual dynamic-pricing episodes.

A context process generates customer contexts, a pricing policy picks a
price from the past data, and the environment draws demand from the true
model. ``run_episode`` produces the History that inference works on.
"""

import io
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import linalg

from .demand_model import ModelSpec, design_matrix, feature, mean_demand, sample_demand
from .estimator import PILOT_RIDGE, fit_erm

__all__ = [
    "ContextProcess",
    "Policy",
    "History",
    "PolicyFits",
    "next_context",
    "price_grid",
    "epsilon_greedy_price",
    "exploit_price",
    "ucb_price",
    "run_episode",
]

logger = logging.getLogger(__name__)

CONTEXT_KINDS = ("demand_driven_walk", "iid_uniform")
POLICY_KINDS = ("epsilon_greedy", "ucb", "fixed_random")


@dataclass
class ContextProcess:
    """
    Context-generation process.

    Parameters
    ----------
    kind : string, default='demand_driven_walk'
        demand_driven_walk accumulates demand shocks z_{t+1} = z_t + d_t - f_t
        starting from z_1 = 0 and emits z clipped into the box;
        iid_uniform draws contexts uniformly from [-clip_bound, clip_bound]^k.
    dim : int, default=1
        Context dimension k.
    clip_bound : float, default=1.0
        Emitted contexts satisfy max |x_i| <= clip_bound.
    """

    kind: str = "demand_driven_walk"
    dim: int = 1
    clip_bound: float = 1.0
    state: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in CONTEXT_KINDS:
            raise ValueError(
                "Context process not recognised. Choose between: demand_driven_walk or iid_uniform."
            )
        if self.clip_bound <= 0:
            raise ValueError("clip_bound must be positive.")
        self.reset()

    def reset(self):
        self.state = np.zeros(self.dim)

    def emit(self) -> np.ndarray:
        """Context for the current walk state."""
        return self.state / np.maximum(1.0, np.abs(self.state) / self.clip_bound)

    def initial_context(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        self.reset()
        if self.kind == "iid_uniform":
            return rng.uniform(-self.clip_bound, self.clip_bound, self.dim)
        return self.emit()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "clip_bound": self.clip_bound}


def next_context(
    proc: ContextProcess, p: float, d: float, f_true: float, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """
    Advance the context process by one period.

    The walk adds the demand shock d - f_true to every coordinate of the
    state; the iid process ignores the arguments and draws a fresh context.
    """
    if proc.kind == "iid_uniform":
        if rng is None:
            raise ValueError("iid_uniform contexts need a random stream.")
        return rng.uniform(-proc.clip_bound, proc.clip_bound, proc.dim)
    proc.state = proc.state + (d - f_true)
    return proc.emit()


@dataclass(frozen=True)
class Policy:
    """
    Pricing policy.

    Parameters
    ----------
    kind : string, default='epsilon_greedy'
        epsilon_greedy, ucb or fixed_random (uniform prices throughout).
    epsilon : float, default=0.05
        Exploration probability of epsilon-greedy.
    ucb_scale : float, default=1.0
        Constant c of the elliptical bonus c sqrt(log t) ||phi||_{V^-1}.
    ucb_lambda : float, default=1.0
        Regularization of V_t = lam I + sum phi phi^T.
    price_grid_size : int, default=201
        Uniform grid on [p_min, p_max] over which prices are optimized.
    ridge : float, optional
        Ridge penalty of the policy's ERM, 1e-4 when not given.
    refit_every : int, default=1
        Refit cadence after ``burn_in`` periods; 1 refits every period.
    burn_in : int, default=200
        Periods that are always refitted.
    literal_max : bool, default=False
        Use p * max{1, f + CI} instead of the capped p * min{1, f + CI}.
    """

    kind: str = "epsilon_greedy"
    epsilon: float = 0.05
    ucb_scale: float = 1.0
    ucb_lambda: float = 1.0
    price_grid_size: int = 201
    ridge: Optional[float] = None
    refit_every: int = 1
    burn_in: int = 200
    literal_max: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(
                "Policy not recognised. Choose between: epsilon_greedy, ucb or fixed_random."
            )
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]. Given {}.".format(self.epsilon))
        if self.price_grid_size < 2:
            raise ValueError("price_grid_size must be at least 2.")
        if self.ucb_lambda <= 0:
            raise ValueError("ucb_lambda must be positive to keep V_t invertible.")
        if self.refit_every < 1:
            raise ValueError("refit_every must be at least 1.")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "ucb_scale": self.ucb_scale,
            "ucb_lambda": self.ucb_lambda,
            "price_grid_size": self.price_grid_size,
            "ridge": self.ridge,
            "refit_every": self.refit_every,
            "burn_in": self.burn_in,
            "literal_max": self.literal_max,
        }


@dataclass(eq=False)
class PolicyFits:
    """
    Estimates a pricing policy fitted during an episode.

    Row n of ``thetas`` is the converged ERM on the first n periods, with
    its gradient norm in ``grad_norms[n]``; rows without a fit hold NaN.
    """

    thetas: np.ndarray
    grad_norms: np.ndarray
    ridge: float

    @classmethod
    def empty(cls, T: int, d: int, ridge: float) -> "PolicyFits":
        return cls(np.full((T, d), np.nan), np.full(T, np.nan), float(ridge))

    def prefix(self, t: int) -> "PolicyFits":
        return PolicyFits(self.thetas[:t], self.grad_norms[:t], self.ridge)


@dataclass(eq=False)
class History:
    """
    Observed episode: prices p_t, contexts x_t and demands d_t, t = 1..T.

    Parameters
    ----------
    prices : array (T,)
    contexts : array (T, k)
    demands : array (T,)
    model_dim : int
        Parameter dimension d of the model that generated the data.
    fallback_count : int, default=0
        Number of policy refits that failed and kept the previous estimate.
    policy_fits : PolicyFits, optional
        Fits made by the simulating policy. Not part of the file formats.
    """

    prices: np.ndarray
    contexts: np.ndarray
    demands: np.ndarray
    model_dim: int
    fallback_count: int = 0
    policy_fits: Optional[PolicyFits] = field(default=None, repr=False)

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float).reshape(-1)
        T = self.prices.size
        contexts = np.asarray(self.contexts, dtype=float)
        if contexts.ndim != 2:
            contexts = contexts.reshape(T, -1) if T else np.zeros((0, 1))
        self.contexts = contexts
        self.demands = np.asarray(self.demands, dtype=float).reshape(-1)
        if self.demands.size != T or self.contexts.shape[0] != T:
            raise ValueError(
                "History sequences have unequal lengths: {} prices, {} contexts, {} demands.".format(
                    T, self.contexts.shape[0], self.demands.size
                )
            )

    def __len__(self):
        return self.prices.size

    @property
    def context_dim(self) -> int:
        return self.contexts.shape[1]

    def prefix(self, t: int) -> "History":
        """First t periods."""
        fits = None if self.policy_fits is None else self.policy_fits.prefix(t)
        return History(
            self.prices[:t], self.contexts[:t], self.demands[:t], self.model_dim, policy_fits=fits
        )

    def validate(self, spec: ModelSpec):
        """Check the history against the model's price range and demand support."""
        p_min, p_max = spec.price_range
        if np.any(self.prices < p_min) or np.any(self.prices > p_max):
            raise ValueError("History contains prices outside [{}, {}].".format(p_min, p_max))
        if spec.family.kind == "logistic" and not np.all(
            (self.demands == 0) | (self.demands == 1)
        ):
            raise ValueError("Logistic histories must have binary demands.")
        return self

    def to_frame(self) -> pd.DataFrame:
        """Table with columns t, p, x1..xk, d."""
        frame = pd.DataFrame({"t": np.arange(1, len(self) + 1), "p": self.prices})
        for i in range(self.context_dim):
            frame["x{}".format(i + 1)] = self.contexts[:, i]
        frame["d"] = self.demands
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, model_dim: int) -> "History":
        xcols = [c for c in frame.columns if c.startswith("x")]
        xcols.sort(key=lambda c: int(c[1:]))
        return cls(
            frame["p"].to_numpy(), frame[xcols].to_numpy(), frame["d"].to_numpy(), model_dim
        )

    @classmethod
    def from_csv(cls, path, model_dim: int) -> "History":
        return cls.from_frame(pd.read_csv(path), model_dim)

    def to_bytes(self) -> bytes:
        """Compact binary form (compressed npz)."""
        buffer = io.BytesIO()
        np.savez_compressed(
            buffer,
            prices=self.prices,
            contexts=self.contexts,
            demands=self.demands,
            meta=np.array([self.model_dim, self.fallback_count]),
        )
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "History":
        with np.load(io.BytesIO(blob)) as data:
            model_dim, fallback_count = (int(v) for v in data["meta"])
            return cls(data["prices"], data["contexts"], data["demands"], model_dim, fallback_count)


def price_grid(spec: ModelSpec, size: int = 201) -> np.ndarray:
    """Uniform price grid on [p_min, p_max]."""
    return np.linspace(spec.price_range[0], spec.price_range[1], size)


def exploit_price(theta_hat, x, spec: ModelSpec, grid_size: int = 201) -> float:
    """Grid maximizer of p f(p, x; theta_hat); ties go to the smaller price."""
    grid = price_grid(spec, grid_size)
    contexts = np.tile(np.asarray(x, dtype=float).reshape(1, -1), (grid.size, 1))
    revenue = grid * mean_demand(spec, theta_hat, grid, contexts)
    return float(grid[int(np.argmax(revenue))])


def epsilon_greedy_price(
    theta_hat, x, spec: ModelSpec, epsilon: float, rng: np.random.Generator, grid_size: int = 201
) -> float:
    """
    Epsilon-greedy price.

    With probability epsilon a uniform draw on [p_min, p_max], otherwise the
    revenue-maximizing grid price under theta_hat.
    """
    if rng.random() < epsilon:
        return float(rng.uniform(*spec.price_range))
    return exploit_price(theta_hat, x, spec, grid_size)


def ucb_price(
    theta_hat,
    V: np.ndarray,
    x,
    spec: ModelSpec,
    c: float,
    t: int,
    grid_size: int = 201,
    literal_max: bool = False,
) -> float:
    """
    Optimistic (LinUCB-style) price.

    Maximizes p * cap(f(p, x; theta_hat) + c sqrt(max(1, log t)) ||phi(p, x)||_{V^-1})
    over the price grid. The cap is min{1, .} for logistic demand and the
    identity for linear demand; ``literal_max`` uses max{1, .} instead.

    Parameters
    ----------
    theta_hat : array (d,)
        Current regularized estimate.
    V : array (d, d)
        Gram matrix lam I + sum of past phi phi^T.
    t : int
        Current period (1-based).
    """
    grid = price_grid(spec, grid_size)
    contexts = np.tile(np.asarray(x, dtype=float).reshape(1, -1), (grid.size, 1))
    phi = design_matrix(spec, grid, contexts)
    factor = linalg.cho_factor(V, lower=True)
    width = np.sqrt(np.einsum("ij,ij->i", phi, linalg.cho_solve(factor, phi.T).T))
    optimistic = mean_demand(spec, theta_hat, grid, contexts) + c * np.sqrt(
        max(1.0, np.log(t))
    ) * width
    if literal_max:
        optimistic = np.maximum(1.0, optimistic)
    elif spec.family.kind == "logistic":
        optimistic = np.minimum(1.0, optimistic)
    return float(grid[int(np.argmax(grid * optimistic))])


def run_episode(
    spec: ModelSpec, policy: Policy, proc: ContextProcess, T: int, seed: int
) -> History:
    """
    Simulate T selling periods.

    In each period the policy prices the current context using the ERM on
    all earlier periods, demand is drawn from the true model and the context
    process advances. Failed refits keep the previous estimate and are
    counted in ``History.fallback_count``.

    Parameters
    ----------
    spec : ModelSpec
        True demand model.
    policy : Policy
    proc : ContextProcess
        Reset at the start of the episode.
    T : int
        Number of periods, at least 1.
    seed : int
        Seed of the episode's random stream.

    Returns
    -------
    history : History
    """
    if T < 1:
        raise ValueError("Episode length T must be at least 1. Given {}.".format(T))
    if proc.dim != spec.context_dim:
        raise ValueError(
            "Context process has dimension {} but the model expects {}.".format(
                proc.dim, spec.context_dim
            )
        )
    rng = np.random.default_rng(seed)
    d = spec.dim
    ridge = PILOT_RIDGE if policy.ridge is None else policy.ridge

    prices = np.empty(T)
    contexts = np.empty((T, proc.dim))
    demands = np.empty(T)
    features = np.empty((T, d))
    theta_hat = np.zeros(d)
    fits = PolicyFits.empty(T, d, ridge)
    V = policy.ucb_lambda * np.eye(d)
    fallback_count = 0

    x = proc.initial_context(rng)
    for t in range(1, T + 1):
        n = t - 1
        refit = n > 0 and (policy.refit_every == 1 or n <= policy.burn_in or n % policy.refit_every == 0)
        if refit and policy.kind != "fixed_random":
            try:
                fit = fit_erm(spec.family, features[:n], demands[:n], ridge, warm_start=theta_hat)
                if fit.converged and np.all(np.isfinite(fit.theta)):
                    theta_hat = fit.theta
                    fits.thetas[n], fits.grad_norms[n] = fit.theta, fit.grad_norm
                else:
                    fallback_count += 1
            except np.linalg.LinAlgError as err:
                logger.debug("Policy refit failed in period %d: %s", t, err)
                fallback_count += 1

        if policy.kind == "epsilon_greedy":
            p = epsilon_greedy_price(theta_hat, x, spec, policy.epsilon, rng, policy.price_grid_size)
        elif policy.kind == "ucb":
            p = ucb_price(
                theta_hat, V, x, spec, policy.ucb_scale, t, policy.price_grid_size, policy.literal_max
            )
        else:
            p = float(rng.uniform(*spec.price_range))

        demand = sample_demand(spec, p, x, rng)
        f_true = float(mean_demand(spec, spec.theta0, p, x))
        phi = feature(spec.feature_map, p, x)

        prices[t - 1], contexts[t - 1], demands[t - 1], features[t - 1] = p, x, demand, phi
        V += np.outer(phi, phi)
        x = next_context(proc, p, demand, f_true, rng)

    if fallback_count:
        logger.warning("Episode kept a stale estimate in %d of %d periods.", fallback_count, T)
    return History(prices, contexts, demands, d, fallback_count, policy_fits=fits)
