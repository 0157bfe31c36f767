"""
Small dense linear algebra and probability primitives.

Everything here is written for the fixed, small parameter dimension of a
demand model (d of 2 to 10). Functions are pure given their inputs and an
explicit ``numpy.random.Generator``.
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import ndtr

__all__ = [
    "FactorizationError",
    "std_normal_quantile",
    "operator_norm",
    "cholesky",
    "psd_factor",
    "mvn_sample",
]

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
EIGEN_FLOOR = 1e-12
RESIDUAL_TOL = 1e-9

# Rational approximation coefficients for the normal quantile, max
# relative error 1.15e-9 before refinement.
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_P_LOW = 0.02425


class FactorizationError(np.linalg.LinAlgError):
    """
    Raised when a Cholesky pivot falls below the pivot tolerance.

    Parameters
    ----------
    pivot_index : int
        Zero-based index of the failing pivot.
    pivot : float
        Value of the failing pivot.
    """

    def __init__(self, pivot_index: int, pivot: float):
        self.pivot_index = pivot_index
        self.pivot = pivot
        super().__init__(
            "Matrix is not positive definite: pivot {} equals {:.3e} "
            "(tolerance {:.0e}).".format(pivot_index, pivot, PIVOT_TOL)
        )


def _polyval(coefs, x):
    out = np.zeros_like(x)
    for c in coefs:
        out = out * x + c
    return out


def std_normal_quantile(prob: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Inverse of the standard normal CDF.

    A three-region rational approximation followed by one Newton step on
    the CDF, giving absolute error well below 1e-8 on (0, 1).

    Parameters
    ----------
    prob : float or array
        Probabilities strictly inside (0, 1).

    Returns
    -------
    z : float or ndarray
        Quantiles with Phi(z) = prob.
    """
    p = np.asarray(prob, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError(
            "Probability must lie strictly inside (0, 1). Given {}.".format(prob)
        )

    z = np.empty_like(p)
    lower = p < _P_LOW
    upper = p > 1.0 - _P_LOW
    central = ~(lower | upper)

    if np.any(lower):
        q = np.sqrt(-2.0 * np.log(p[lower]))
        z[lower] = _polyval(_C, q) / (_polyval(_D, q) * q + 1.0)
    if np.any(upper):
        q = np.sqrt(-2.0 * np.log1p(-p[upper]))
        z[upper] = -_polyval(_C, q) / (_polyval(_D, q) * q + 1.0)
    if np.any(central):
        q = p[central] - 0.5
        r = q * q
        z[central] = _polyval(_A, r) * q / (_polyval(_B, r) * r + 1.0)

    # Newton refinement on Phi(z) - p, using the tail that avoids cancellation
    density = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    residual = np.where(z > 0, (1.0 - p) - ndtr(-z), ndtr(z) - p)
    z = z - residual / density

    if np.ndim(prob) == 0:
        return float(z)
    return z


def operator_norm(m: np.ndarray, max_iter: int = 500, tol: float = 1e-12) -> float:
    """
    Largest singular value of a dense matrix by power iteration on m^T m.

    Parameters
    ----------
    m : array (r, c)
        Matrix with finite entries.
    max_iter : int, default=500
        Iteration cap.
    tol : float, default=1e-12
        Relative change of the Rayleigh quotient that stops the iteration,
        together with a residual ||m^T m v - rho v|| below 1e-9 rho. An
        iterate that never converges falls back to ``numpy.linalg.eigvalsh``.

    Returns
    -------
    norm : float
        Operator (spectral) norm of ``m``; zero for a zero matrix.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ValueError("Operator norm requires finite entries.")
    gram = m.T @ m
    n = gram.shape[0]
    if n == 0 or not np.any(gram):
        return 0.0

    start = np.full(n, 1.0 / np.sqrt(n))
    rayleigh, v = _power_iterate(gram, start, max_iter, tol)

    # max diagonal of a PSD matrix bounds its top eigenvalue from below;
    # falling short means the start vector missed the top eigenvector
    j = int(np.argmax(np.diag(gram)))
    if rayleigh < gram[j, j] * (1.0 - 1e-10):
        restart = np.zeros(n)
        restart[j] = 1.0
        other, w = _power_iterate(gram, restart, max_iter, tol)
        if other > rayleigh:
            rayleigh, v = other, w

    # quotient stalls before the iterate converges when the top gap is tight
    if np.linalg.norm(gram @ v - rayleigh * v) > RESIDUAL_TOL * rayleigh:
        logger.debug("Power iteration did not converge, using eigvalsh.")
        rayleigh = float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[-1])
    return float(np.sqrt(max(rayleigh, 0.0)))


def _power_iterate(gram, v, max_iter, tol):
    y = gram @ v
    rayleigh = float(v @ y)
    for _ in range(max_iter):
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0, v
        v = y / norm_y
        y = gram @ v
        updated = float(v @ y)
        stalled = abs(updated - rayleigh) <= tol * max(abs(updated), 1e-300)
        if stalled and np.linalg.norm(y - updated * v) <= RESIDUAL_TOL * updated:
            return updated, v
        rayleigh = updated
    return rayleigh, v


def cholesky(s: np.ndarray) -> np.ndarray:
    """
    Lower-triangular Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    s : array (d, d)
        Symmetric positive definite matrix.

    Returns
    -------
    L : array (d, d)
        Lower-triangular factor with L @ L.T == s.

    Raises
    ------
    FactorizationError
        If any pivot is not larger than 1e-12.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("Cholesky requires a square matrix. Given shape {}.".format(s.shape))
    d = s.shape[0]
    L = np.zeros_like(s)
    for j in range(d):
        pivot = s[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > PIVOT_TOL:
            raise FactorizationError(j, pivot)
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (s[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def psd_factor(
    cov: np.ndarray, floor: float = EIGEN_FLOOR, fill: float = 0.0
) -> Tuple[np.ndarray, bool]:
    """
    Square-root factor F of a covariance with F @ F.T == cov.

    Tries Cholesky first and falls back to a symmetric eigendecomposition
    with eigenvalues below ``floor`` replaced by ``fill``. The default fill
    of zero keeps a zero covariance exactly degenerate.

    Returns
    -------
    factor : array (d, d)
    degenerate : bool
        True when the eigenvalue fallback was used.
    """
    if fill < 0.0:
        raise ValueError("Eigenvalue fill must be non-negative. Given {}.".format(fill))
    cov = np.asarray(cov, dtype=float)
    try:
        return cholesky(cov), False
    except FactorizationError as err:
        logger.debug("Cholesky failed at pivot %d, clipping eigenvalues.", err.pivot_index)
    sym = 0.5 * (cov + cov.T)
    eigval, eigvec = np.linalg.eigh(sym)
    eigval = np.where(eigval < floor, fill, eigval)
    return eigvec * np.sqrt(eigval), True


def mvn_sample(
    mean: np.ndarray,
    cov: np.ndarray,
    rng: np.random.Generator,
    size: Optional[int] = None,
    allow_degenerate: bool = True,
    fill: float = 0.0,
) -> np.ndarray:
    """
    Draw from N(mean, cov) as mean + L z.

    Parameters
    ----------
    mean : array (d,)
    cov : array (d, d)
        Symmetric positive (semi)definite covariance.
    rng : numpy Generator
        Random stream; identical stream state gives identical output.
    size : int, optional
        Number of draws. ``None`` returns a single vector.
    allow_degenerate : bool, default=True
        Accept singular covariances through eigenvalue clipping. When
        False, Cholesky failures propagate.
    fill : float, default=0.0
        Value given to eigenvalues below the floor on the degenerate path.

    Returns
    -------
    draws : array (d,) or (size, d)
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ValueError(
            "Mean has dimension {} but covariance has shape {}.".format(mean.size, cov.shape)
        )
    if allow_degenerate:
        factor, _ = psd_factor(cov, fill=fill)
    else:
        factor = cholesky(cov)

    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, mean.size))
    draws = mean + z @ factor.T
    if size is None:
        return draws[0]
    return draws
