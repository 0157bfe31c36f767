"""
Parametric demand models for contextual pricing.

A demand model is a feature map phi(p, x) into R^d, a family (linear or
logistic) giving the expected demand f(p, x; theta) as a function of the
index <phi, theta>, and the per-observation risk rho used by the ERM.
All functions accept a single (p, x) or arrays of prices and contexts.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import expit
from scipy.stats import truncnorm

__all__ = [
    "FeatureMap",
    "DemandFamily",
    "ModelSpec",
    "default_logistic_spec",
    "feature",
    "design_matrix",
    "mean_demand",
    "grad_mean_demand",
    "variance_fn",
    "sample_demand",
    "risk",
    "risk_grad",
    "risk_hess",
]

INDEX_CLAMP = 500.0
NOISE_TRUNCATION = 6.0
FEATURE_KINDS = ("affine_price_context", "concat", "custom_table")
FAMILY_KINDS = ("linear", "logistic")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """
    Feature map phi: (p, x) -> R^d.

    Parameters
    ----------
    kind : string, default='affine_price_context'
        affine_price_context gives (intercept + slope * p, x);
        concat gives (p, x); custom_table interpolates a user table
        multilinearly over a rectangular grid in (p, x).
    context_dim : int, default=1
        Dimension of the context vector x.
    intercept, slope : float, default=0.9, 0.1
        Coefficients of the first coordinate for affine_price_context.
    grids : tuple of arrays, optional
        Axes of the custom table, the price axis first then one axis per
        context coordinate.
    table : array, optional
        Table values of shape (*grid_shape, d).
    """

    kind: str = "affine_price_context"
    context_dim: int = 1
    intercept: float = 0.9
    slope: float = 0.1
    grids: Optional[Tuple[np.ndarray, ...]] = None
    table: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(
                "Feature map kind not recognised. Choose between: {}.".format(
                    ", ".join(FEATURE_KINDS)
                )
            )
        if self.context_dim < 0:
            raise ValueError("context_dim must be non-negative.")
        if self.kind == "custom_table":
            if self.grids is None or self.table is None:
                raise ValueError("custom_table feature maps need both grids and table.")
            grids = tuple(np.asarray(g, dtype=float) for g in self.grids)
            table = np.asarray(self.table, dtype=float)
            if len(grids) != 1 + self.context_dim:
                raise ValueError(
                    "custom_table needs {} grid axes, given {}.".format(
                        1 + self.context_dim, len(grids)
                    )
                )
            if table.shape[:-1] != tuple(g.size for g in grids):
                raise ValueError("Table shape does not match the grid axes.")
            object.__setattr__(self, "grids", grids)
            object.__setattr__(self, "table", table)

    @property
    def output_dim(self) -> int:
        if self.kind == "custom_table":
            return int(self.table.shape[-1])
        return 1 + self.context_dim

    @cached_property
    def _interpolator(self):
        return RegularGridInterpolator(self.grids, self.table, method="linear")

    def features(self, prices, contexts) -> np.ndarray:
        """
        Evaluate phi on n (price, context) pairs.

        Returns
        -------
        phi : array (n, d)
        """
        prices = np.atleast_1d(np.asarray(prices, dtype=float)).reshape(-1)
        contexts = _as_context_matrix(contexts, prices.size, self.context_dim)
        if self.kind == "affine_price_context":
            first = self.intercept + self.slope * prices
            return np.column_stack([first, contexts])
        if self.kind == "concat":
            return np.column_stack([prices, contexts])
        return self._interpolator(np.column_stack([prices, contexts]))

    def max_abs_output(self, price_range, n_samples=1000, clip_bound=1.0, seed=0):
        """
        Largest |phi| entry over random draws from the price range and the
        context box [-clip_bound, clip_bound]^k.
        """
        rng = np.random.default_rng(seed)
        prices = rng.uniform(price_range[0], price_range[1], n_samples)
        contexts = rng.uniform(-clip_bound, clip_bound, (n_samples, self.context_dim))
        if self.kind == "custom_table":
            lo = [g[0] for g in self.grids]
            hi = [g[-1] for g in self.grids]
            prices = np.clip(prices, lo[0], hi[0])
            contexts = np.clip(contexts, lo[1:], hi[1:])
        return float(np.max(np.abs(self.features(prices, contexts))))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "context_dim": self.context_dim}
        if self.kind == "affine_price_context":
            out.update(intercept=self.intercept, slope=self.slope)
        if self.kind == "custom_table":
            out.update(
                grids=[g.tolist() for g in self.grids], table=self.table.tolist()
            )
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMap":
        return cls(**data)


@dataclass(frozen=True)
class DemandFamily:
    """
    Demand family.

    Parameters
    ----------
    kind : string, default='logistic'
        linear (d = <phi, theta> + Gaussian noise) or logistic
        (Bernoulli demand with sigmoid mean).
    noise_std : float, default=0.0
        Standard deviation of the linear-model noise.
    truncate_noise : bool, default=False
        Truncate linear noise at +/- 6 noise_std.
    """

    kind: str = "logistic"
    noise_std: float = 0.0
    truncate_noise: bool = False

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(
                "Demand family not recognised. Choose between: linear or logistic."
            )
        if not np.isfinite(self.noise_std) or self.noise_std < 0:
            raise ValueError("noise_std must be finite and non-negative.")

    def mean(self, index):
        if self.kind == "linear":
            return np.asarray(index, dtype=float)
        return expit(np.clip(index, -INDEX_CLAMP, INDEX_CLAMP))

    def mean_slope(self, index):
        """Derivative of the mean with respect to the index."""
        if self.kind == "linear":
            return np.ones_like(np.asarray(index, dtype=float))
        index = np.clip(index, -INDEX_CLAMP, INDEX_CLAMP)
        return expit(index) * expit(-index)

    def variance(self, index):
        if self.kind == "linear":
            return np.full_like(np.asarray(index, dtype=float), self.noise_std ** 2)
        return self.mean_slope(index)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    Ground-truth contextual pricing model.

    Parameters
    ----------
    family : DemandFamily
    feature_map : FeatureMap
    theta0 : array (d,)
        True parameter.
    price_range : tuple, default=(0.0, 1.0)
        (p_min, p_max).
    """

    family: DemandFamily = field(default_factory=DemandFamily)
    feature_map: FeatureMap = field(default_factory=FeatureMap)
    theta0: np.ndarray = field(default_factory=lambda: np.array([-1.0, 1.0]))
    price_range: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float).reshape(-1)
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "price_range", tuple(float(v) for v in self.price_range))
        p_min, p_max = self.price_range
        if not p_min < p_max:
            raise ValueError(
                "price_range must satisfy p_min < p_max. Given {}.".format(self.price_range)
            )
        if not np.all(np.isfinite(theta0)):
            raise ValueError("theta0 must be finite.")
        if theta0.size != self.feature_map.output_dim:
            raise ValueError(
                "theta0 has length {} but the feature map outputs {} features.".format(
                    theta0.size, self.feature_map.output_dim
                )
            )

    @property
    def dim(self) -> int:
        return self.feature_map.output_dim

    @property
    def context_dim(self) -> int:
        return self.feature_map.context_dim

    def check_bounded(self, bound: float = 1e6) -> float:
        """Sample the feature map over the domain and check it stays bounded."""
        largest = self.feature_map.max_abs_output(self.price_range)
        if not np.isfinite(largest) or largest > bound:
            raise ValueError(
                "Feature map is unbounded on the price range (max |phi| = {}).".format(largest)
            )
        return largest

    def to_dict(self) -> dict:
        return {
            "family": self.family.kind,
            "noise_std": self.family.noise_std,
            "truncate_noise": self.family.truncate_noise,
            "theta0": self.theta0.tolist(),
            "feature": self.feature_map.to_dict(),
            "price_range": list(self.price_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        family = DemandFamily(
            kind=data.get("family", "logistic"),
            noise_std=float(data.get("noise_std", 0.0)),
            truncate_noise=bool(data.get("truncate_noise", False)),
        )
        feature_map = FeatureMap.from_dict(data.get("feature", {}))
        return cls(
            family=family,
            feature_map=feature_map,
            theta0=data.get("theta0", [-1.0, 1.0]),
            price_range=tuple(data.get("price_range", (0.0, 1.0))),
        )


def default_logistic_spec() -> ModelSpec:
    """Logistic model with phi(p, x) = (0.9 + 0.1 p, x) and theta0 = (-1, 1)."""
    return ModelSpec()


def _as_context_matrix(contexts, n, k):
    if k == 0:
        return np.zeros((n, 0))
    arr = np.asarray(contexts, dtype=float)
    if arr.size != n * k:
        raise ValueError(
            "Context has {} entries but {} points of dimension {} were expected.".format(
                arr.size, n, k
            )
        )
    return arr.reshape(n, k)


def _evaluate(spec, theta, p, x):
    single = np.ndim(p) == 0
    phi = spec.feature_map.features(p, x)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != phi.shape[1]:
        raise ValueError(
            "theta has length {} but features have dimension {}.".format(
                theta.size, phi.shape[1]
            )
        )
    return phi, phi @ theta, single


def _squeeze(value, single):
    return value[0] if single else value


def feature(fmap: FeatureMap, p, x) -> np.ndarray:
    """Feature vector phi(p, x) for a single price and context."""
    return fmap.features(p, x)[0]


def design_matrix(spec: ModelSpec, prices, contexts) -> np.ndarray:
    """Stack of feature rows phi(p_t, x_t), shape (n, d)."""
    return spec.feature_map.features(prices, contexts)


def mean_demand(spec: ModelSpec, theta, p, x):
    """Expected demand f(p, x; theta)."""
    _, index, single = _evaluate(spec, theta, p, x)
    return _squeeze(spec.family.mean(index), single)


def grad_mean_demand(spec: ModelSpec, theta, p, x) -> np.ndarray:
    """Gradient of f(p, x; theta) in theta, shape (d,) or (n, d)."""
    phi, index, single = _evaluate(spec, theta, p, x)
    grad = spec.family.mean_slope(index)[:, None] * phi
    return _squeeze(grad, single)


def variance_fn(spec: ModelSpec, theta, p, x):
    """Conditional demand variance nu(p, x; theta)^2 implied by the model."""
    _, index, single = _evaluate(spec, theta, p, x)
    return _squeeze(spec.family.variance(index), single)


def sample_demand(spec: ModelSpec, p, x, rng: np.random.Generator):
    """
    Draw realized demand at (p, x) under the true parameter theta0.

    Linear models add Gaussian noise (optionally truncated at six standard
    deviations); logistic models draw a Bernoulli purchase.
    """
    f = np.atleast_1d(mean_demand(spec, spec.theta0, p, x))
    family = spec.family
    if family.kind == "logistic":
        draws = (rng.random(f.shape) < f).astype(float)
    elif family.truncate_noise and family.noise_std > 0:
        noise = truncnorm.rvs(
            -NOISE_TRUNCATION, NOISE_TRUNCATION, size=f.shape, random_state=rng
        )
        draws = f + family.noise_std * noise
    else:
        draws = f + family.noise_std * rng.standard_normal(f.shape)
    return float(draws[0]) if np.ndim(p) == 0 else draws


def _check_demand(spec, d):
    d = np.asarray(d, dtype=float)
    if spec.family.kind == "logistic" and not np.all((d == 0) | (d == 1)):
        raise ValueError("Logistic risk requires binary demands in {0, 1}.")
    return d


def risk(spec: ModelSpec, theta, d, p, x):
    """
    Per-observation risk rho(d, p, x; theta).

    Squared error for the linear family, negative log-likelihood for the
    logistic family.
    """
    d = _check_demand(spec, d)
    _, index, single = _evaluate(spec, theta, p, x)
    if spec.family.kind == "linear":
        value = (d - index) ** 2
    else:
        index = np.clip(index, -INDEX_CLAMP, INDEX_CLAMP)
        value = np.logaddexp(0.0, index) - d * index
    return _squeeze(np.atleast_1d(value), single)


def risk_grad(spec: ModelSpec, theta, d, p, x) -> np.ndarray:
    """Gradient of the risk in theta, shape (d,) or (n, d)."""
    d = _check_demand(spec, d)
    phi, index, single = _evaluate(spec, theta, p, x)
    if spec.family.kind == "linear":
        weight = -2.0 * (d - index)
    else:
        weight = spec.family.mean(index) - d
    return _squeeze(np.atleast_1d(weight)[:, None] * phi, single)


def risk_hess(spec: ModelSpec, theta, d, p, x) -> np.ndarray:
    """Hessian of the risk in theta, shape (d, d) or (n, d, d)."""
    _check_demand(spec, d)
    phi, index, single = _evaluate(spec, theta, p, x)
    if spec.family.kind == "linear":
        weight = np.full(index.shape, 2.0)
    else:
        weight = spec.family.mean_slope(index)
    hess = weight[:, None, None] * phi[:, :, None] * phi[:, None, :]
    return _squeeze(hess, single)
