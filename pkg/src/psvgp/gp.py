"""Covariance functions, the exact GP oracle, and random field sampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Self

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from psvgp.errors import ConfigError, NumericalError

log = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

LOG_2PI = math.log(2.0 * math.pi)

# Jitter ladder, as multiples of the process variance.
JITTER_START = 1e-8
JITTER_MAX = 1e-2
JITTER_FACTOR = 10.0


def jitter_ladder() -> list[float]:
    """Relative jitter levels tried after a plain factorization fails.

    >>> jitter_ladder()[0], len(jitter_ladder())
    (1e-08, 7)
    """
    levels = []
    level = JITTER_START
    while level <= JITTER_MAX * (1 + 1e-9):
        levels.append(level)
        level *= JITTER_FACTOR
    return levels


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Squared-exponential hyperparameters and noise precision, on a log scale."""

    log_lengthscales: Array
    log_variance: float
    log_precision: float

    @classmethod
    def from_values(
        cls,
        lengthscales: npt.ArrayLike,
        variance: float,
        precision: float,
    ) -> Self:
        """Build from positive values."""
        ls = np.atleast_1d(np.asarray(lengthscales, dtype=np.float64))
        if ls.ndim != 1 or ls.size == 0:
            raise ConfigError("lengthscales must be a non-empty vector")
        if np.any(ls <= 0) or variance <= 0 or precision <= 0:
            raise ConfigError(
                "kernel parameters must be positive: "
                f"lengthscales={ls.tolist()}, variance={variance}, precision={precision}"
            )
        return cls(np.log(ls), math.log(variance), math.log(precision))

    @property
    def dims(self) -> int:
        return int(self.log_lengthscales.shape[0])

    @property
    def lengthscales(self) -> Array:
        return np.exp(self.log_lengthscales)

    @property
    def variance(self) -> float:
        return math.exp(self.log_variance)

    @property
    def precision(self) -> float:
        return math.exp(self.log_precision)

    @property
    def noise_variance(self) -> float:
        return math.exp(-self.log_precision)


def as_coords(points: npt.ArrayLike, dims: int, name: str = "coordinates") -> Array:
    """Coerce to an (n, dims) float array, raising ConfigError on mismatch."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and dims == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ConfigError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if arr.shape[1] != dims:
        raise ConfigError(
            f"{name} have {arr.shape[1]} dimensions but the kernel has {dims}"
        )
    return arr


def cov_matrix(x1: npt.ArrayLike, x2: npt.ArrayLike, kernel: KernelParams) -> Array:
    """Anisotropic squared-exponential covariance between two point sets."""
    a = as_coords(x1, kernel.dims, "X1")
    b = as_coords(x2, kernel.dims, "X2")
    ls = kernel.lengthscales
    sq = cdist(a / ls, b / ls, "sqeuclidean")
    return kernel.variance * np.exp(-0.5 * sq)


def jittered_cholesky(matrix: Array, variance: float, context: str = "") -> Array:
    """Lower Cholesky factor, adding diagonal jitter only when needed."""
    try:
        return np.asarray(cholesky(matrix, lower=True))
    except (LinAlgError, ValueError):
        pass

    eye = np.eye(matrix.shape[0])
    for level in jitter_ladder():
        try:
            factor = cholesky(matrix + level * variance * eye, lower=True)
        except (LinAlgError, ValueError):
            continue
        log.debug("cholesky needed jitter %.1e [%s]", level, context)
        return np.asarray(factor)
    raise NumericalError(
        f"cholesky failed with jitter up to {JITTER_MAX:g} x variance", context
    )


def _noisy_gram(x: Array, kernel: KernelParams) -> Array:
    gram = cov_matrix(x, x, kernel)
    gram[np.diag_indices_from(gram)] += kernel.noise_variance
    return gram


def exact_posterior(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    kernel: KernelParams,
    xs: npt.ArrayLike,
    *,
    include_noise: bool = True,
    context: str = "exact_posterior",
) -> tuple[Array, Array]:
    """Posterior mean and covariance at `xs` given noisy observations.

    With `include_noise` the covariance is for new noisy observations, so a
    point far from the data recovers the prior `variance + 1/precision`.
    """
    xa = as_coords(x, kernel.dims, "X")
    ya = np.asarray(y, dtype=np.float64).ravel()
    if ya.shape[0] != xa.shape[0]:
        raise ConfigError(f"got {xa.shape[0]} inputs but {ya.shape[0]} responses")
    xsa = as_coords(xs, kernel.dims, "Xs")

    chol = jittered_cholesky(_noisy_gram(xa, kernel), kernel.variance, context)
    cross = cov_matrix(xa, xsa, kernel)
    mean = cross.T @ cho_solve((chol, True), ya)
    half = solve_triangular(chol, cross, lower=True)
    cov = cov_matrix(xsa, xsa, kernel) - half.T @ half
    if include_noise:
        cov[np.diag_indices_from(cov)] += kernel.noise_variance
    return mean, cov


def log_marginal(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    kernel: KernelParams,
    *,
    context: str = "log_marginal",
) -> float:
    """Log density of `y` under N(0, K + I/precision)."""
    xa = as_coords(x, kernel.dims, "X")
    ya = np.asarray(y, dtype=np.float64).ravel()
    if ya.shape[0] != xa.shape[0]:
        raise ConfigError(f"got {xa.shape[0]} inputs but {ya.shape[0]} responses")

    chol = jittered_cholesky(_noisy_gram(xa, kernel), kernel.variance, context)
    white = solve_triangular(chol, ya, lower=True)
    n = ya.shape[0]
    return float(
        -0.5 * white @ white - np.sum(np.log(np.diag(chol))) - 0.5 * n * LOG_2PI
    )


def sample_grf(grid: npt.ArrayLike, kernel: KernelParams, seed: int) -> Array:
    """One draw from N(0, K(grid, grid) + I/precision)."""
    points = as_coords(grid, kernel.dims, "grid")
    chol = jittered_cholesky(_noisy_gram(points, kernel), kernel.variance, "sample_grf")
    rng = np.random.default_rng(seed)
    return chol @ rng.standard_normal(points.shape[0])
