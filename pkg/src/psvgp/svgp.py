"""Sparse variational GP local model.

A `VariationalState` holds one local model's parameters. The per-observation
ELBO term is evaluated in numpy for values and in torch (float64) for
gradients; both follow the same formula:

    l(x_i, y_i) = log N(y_i | k_i' Kmm^-1 m, 1/beta)
                  - 0.5 (beta * ktilde_i + tr(S Lambda_i))
                  - KL(q(u) || p(u)) / n_total
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cache
from pathlib import Path
from typing import Any, Protocol, Self

import numpy as np
import numpy.typing as npt
import torch
from scipy.linalg import cho_solve, solve_triangular

from psvgp.errors import ConfigError, DataError, NumericalError
from psvgp.gp import (
    LOG_2PI,
    Array,
    KernelParams,
    as_coords,
    cov_matrix,
    jitter_ladder,
    jittered_cholesky,
)

log = logging.getLogger(__name__)

GradientVector = Array

STATE_FORMAT = "psvgp.state"
STATE_VERSION = 1

MIN_LENGTHSCALE = 1e-3
INIT_LENGTHSCALE_FRACTION = 0.3
INIT_CHOL_SCALE = 0.5
INIT_SIGNAL_TO_NOISE = 100.0


class Observations(Protocol):
    """Anything carrying coordinates and responses (e.g. a partition)."""

    @property
    def coords(self) -> Array: ...  # pragma: no cover

    @property
    def responses(self) -> Array: ...  # pragma: no cover


def parameter_count(m: int, d: int) -> int:
    """Length of the unconstrained parameter vector.

    >>> parameter_count(3, 2)
    21
    """
    return m + m * (m + 1) // 2 + m * d + d + 2


def parameter_blocks(m: int, d: int) -> dict[str, slice]:
    """Named slices of the unconstrained parameter vector, in storage order."""
    sizes = [
        ("mean", m),
        ("chol", m * (m + 1) // 2),
        ("inducing", m * d),
        ("log_lengthscales", d),
        ("log_variance", 1),
        ("log_precision", 1),
    ]
    blocks: dict[str, slice] = {}
    start = 0
    for name, size in sizes:
        blocks[name] = slice(start, start + size)
        start += size
    return blocks


@cache
def _tril(m: int) -> tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]:
    rows, cols = np.tril_indices(m)
    return rows, cols


def pack_chol(chol: npt.ArrayLike) -> Array:
    """Pack a lower-triangular factor with positive diagonal (log diagonal)."""
    factor = np.asarray(chol, dtype=np.float64)
    m = factor.shape[0]
    if factor.shape != (m, m):
        raise ConfigError(f"cholesky factor must be square, got {factor.shape}")
    diag = np.diag(factor)
    if np.any(diag <= 0):
        raise ConfigError("cholesky factor must have a positive diagonal")
    raw = factor.copy()
    raw[np.diag_indices(m)] = np.log(diag)
    rows, cols = _tril(m)
    return raw[rows, cols]


def unpack_chol(packed: Array, m: int) -> Array:
    """Inverse of `pack_chol`."""
    rows, cols = _tril(m)
    factor = np.zeros((m, m))
    factor[rows, cols] = packed
    factor[np.diag_indices(m)] = np.exp(np.diag(factor))
    return factor


@dataclass(frozen=True, eq=False)
class VariationalState:
    """One local model: q(u) = N(mean, chol chol') at `inducing`, plus kernel."""

    inducing: Array
    mean: Array
    chol_packed: Array
    kernel: KernelParams

    def __post_init__(self) -> None:
        m, d = self.inducing.shape
        if m < 1:
            raise ConfigError("need at least one inducing point")
        if d != self.kernel.dims:
            raise ConfigError(
                f"inducing inputs have {d} dimensions but the kernel has "
                f"{self.kernel.dims}"
            )
        if self.mean.shape != (m,) or self.chol_packed.shape != (m * (m + 1) // 2,):
            raise ConfigError("variational parameters do not match inducing count")

    @classmethod
    def from_parts(
        cls,
        inducing: npt.ArrayLike,
        mean: npt.ArrayLike,
        chol: npt.ArrayLike,
        kernel: KernelParams,
    ) -> Self:
        """Build from a full lower-triangular factor of S."""
        z = np.asarray(inducing, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        return cls(
            inducing=z,
            mean=np.asarray(mean, dtype=np.float64).ravel(),
            chol_packed=pack_chol(chol),
            kernel=kernel,
        )

    @classmethod
    def from_vector(cls, vector: npt.ArrayLike, m: int, d: int) -> Self:
        """Build from the flat unconstrained parameterization."""
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (parameter_count(m, d),):
            raise ConfigError(
                f"parameter vector has shape {vec.shape}, "
                f"expected ({parameter_count(m, d)},)"
            )
        blocks = parameter_blocks(m, d)
        kernel = KernelParams(
            log_lengthscales=vec[blocks["log_lengthscales"]].copy(),
            log_variance=float(vec[blocks["log_variance"]][0]),
            log_precision=float(vec[blocks["log_precision"]][0]),
        )
        return cls(
            inducing=vec[blocks["inducing"]].reshape(m, d).copy(),
            mean=vec[blocks["mean"]].copy(),
            chol_packed=vec[blocks["chol"]].copy(),
            kernel=kernel,
        )

    @property
    def m(self) -> int:
        return int(self.inducing.shape[0])

    @property
    def d(self) -> int:
        return int(self.inducing.shape[1])

    @property
    def chol(self) -> Array:
        return unpack_chol(self.chol_packed, self.m)

    @property
    def log_diag(self) -> Array:
        rows, cols = _tril(self.m)
        return self.chol_packed[rows == cols]

    @property
    def covariance(self) -> Array:
        factor = self.chol
        return factor @ factor.T

    def to_vector(self) -> GradientVector:
        """Flatten to the unconstrained parameterization."""
        return np.concatenate(
            [
                self.mean,
                self.chol_packed,
                self.inducing.ravel(),
                self.kernel.log_lengthscales,
                [self.kernel.log_variance, self.kernel.log_precision],
            ]
        )

    def with_vector(self, vector: npt.ArrayLike) -> VariationalState:
        """Return a new state with the given unconstrained parameters."""
        return VariationalState.from_vector(vector, self.m, self.d)

    def to_dict(self) -> dict[str, Any]:
        """Convert to a self-describing dictionary for JSON serialization."""
        return {
            "format": STATE_FORMAT,
            "version": STATE_VERSION,
            "m": self.m,
            "d": self.d,
            "inducing": _array_record(self.inducing),
            "mean": _array_record(self.mean),
            "chol_packed": _array_record(self.chol_packed),
            "log_lengthscales": _array_record(self.kernel.log_lengthscales),
            "log_variance": self.kernel.log_variance,
            "log_precision": self.kernel.log_precision,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        """Create from dictionary."""
        if data.get("format") != STATE_FORMAT:
            raise DataError(f"not a {STATE_FORMAT} record: {data.get('format')!r}")
        if data.get("version") != STATE_VERSION:
            raise DataError(f"unsupported state version: {data.get('version')!r}")
        kernel = KernelParams(
            log_lengthscales=_array_from(data["log_lengthscales"]),
            log_variance=float(data["log_variance"]),
            log_precision=float(data["log_precision"]),
        )
        return cls(
            inducing=_array_from(data["inducing"]),
            mean=_array_from(data["mean"]),
            chol_packed=_array_from(data["chol_packed"]),
            kernel=kernel,
        )

    def save(self, path: Path) -> None:
        """Save state to JSON file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Path) -> Self:
        """Load state from JSON file."""
        return cls.from_dict(json.loads(path.read_text()))


def _array_record(arr: Array) -> dict[str, Any]:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_from(record: dict[str, Any]) -> Array:
    return np.asarray(record["data"], dtype=np.float64).reshape(record["shape"])


def model_path(directory: Path, partition_id: int) -> Path:
    """Checkpoint file for one partition's model."""
    return directory / f"partition-{partition_id:05d}.json"


def save_models(directory: Path, models: Mapping[int, VariationalState]) -> None:
    """Write one checkpoint per partition."""
    directory.mkdir(parents=True, exist_ok=True)
    for pid, state in sorted(models.items()):
        record = {"partition": pid, **state.to_dict()}
        model_path(directory, pid).write_text(json.dumps(record, indent=2))


def load_models(directory: Path) -> dict[int, VariationalState]:
    """Read every checkpoint written by `save_models`."""
    if not directory.is_dir():
        raise DataError(f"model directory not found: {directory}")
    models: dict[int, VariationalState] = {}
    for path in sorted(directory.glob("partition-*.json")):
        record = json.loads(path.read_text())
        models[int(record["partition"])] = VariationalState.from_dict(record)
    return models


# ---------------------------------------------------------------------------
# values (numpy)


@dataclass(frozen=True)
class ElboWorkspace:
    """Quantities shared by the ELBO terms of a batch of observations."""

    kmm: Array
    kmm_chol: Array
    cross: Array  # rows are k_i
    proj: Array  # rows are Kmm^-1 k_i
    ktilde: Array
    precision: float

    @classmethod
    def build(
        cls, coords: npt.ArrayLike, state: VariationalState, context: str = "elbo"
    ) -> Self:
        x = as_coords(coords, state.d)
        kmm = cov_matrix(state.inducing, state.inducing, state.kernel)
        lk = jittered_cholesky(kmm, state.kernel.variance, context)
        cross = cov_matrix(x, state.inducing, state.kernel)
        half = solve_triangular(lk, cross.T, lower=True)
        proj = cho_solve((lk, True), cross.T).T
        ktilde = state.kernel.variance - np.sum(half**2, axis=0)
        return cls(kmm, lk, cross, proj, ktilde, state.kernel.precision)


def kl_divergence(state: VariationalState, kmm_chol: Array | None = None) -> float:
    """KL(N(mean, S) || N(0, Kmm)) in closed form."""
    if kmm_chol is None:
        kmm = cov_matrix(state.inducing, state.inducing, state.kernel)
        kmm_chol = jittered_cholesky(kmm, state.kernel.variance, "kl")
    a = solve_triangular(kmm_chol, state.chol, lower=True)
    b = solve_triangular(kmm_chol, state.mean, lower=True)
    return float(
        0.5
        * (
            np.sum(a**2)
            + b @ b
            - state.m
            + 2.0 * np.sum(np.log(np.diag(kmm_chol)))
            - 2.0 * np.sum(state.log_diag)
        )
    )


def elbo_terms(
    coords: npt.ArrayLike,
    responses: npt.ArrayLike,
    state: VariationalState,
    n_total: float,
) -> Array:
    """ELBO term for each observation, with KL amortized over `n_total`."""
    if n_total <= 0:
        raise ConfigError(f"n_total must be positive, got {n_total}")
    y = np.asarray(responses, dtype=np.float64).ravel()
    ws = ElboWorkspace.build(coords, state)
    if y.shape[0] != ws.cross.shape[0]:
        raise ConfigError(f"got {ws.cross.shape[0]} inputs but {y.shape[0]} responses")

    beta = state.kernel.precision
    mu = ws.proj @ state.mean
    trace = beta * np.sum((ws.proj @ state.chol) ** 2, axis=1)
    loglik = -0.5 * LOG_2PI + 0.5 * state.kernel.log_precision - 0.5 * beta * (y - mu) ** 2
    kl = kl_divergence(state, ws.kmm_chol)
    return loglik - 0.5 * (beta * ws.ktilde + trace) - kl / n_total


def elbo_term(
    x: npt.ArrayLike, y: float, state: VariationalState, n_total: float
) -> float:
    """ELBO term for a single observation."""
    point = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(elbo_terms(point, [y], state, n_total)[0])


def _weights(parts: Sequence[Observations], weights: Sequence[float] | None) -> list[float]:
    w = [1.0] * len(parts) if weights is None else [float(v) for v in weights]
    if len(w) != len(parts):
        raise ConfigError(f"got {len(w)} weights for {len(parts)} partitions")
    if any(v < 0 for v in w) or not any(v > 0 for v in w):
        raise ConfigError(f"weights must be non-negative with one positive: {w}")
    return w


def weighted_count(parts: Sequence[Observations], weights: Sequence[float]) -> float:
    """Sum of weight times observation count."""
    return float(sum(w * len(p.responses) for p, w in zip(parts, weights)))


def elbo(
    parts: Sequence[Observations],
    state: VariationalState,
    weights: Sequence[float] | None = None,
) -> float:
    """Weighted ELBO over partitions; the KL term is counted exactly once."""
    w = _weights(parts, weights)
    n_total = weighted_count(parts, w)
    total = 0.0
    for part, weight in zip(parts, w):
        if weight == 0 or len(part.responses) == 0:
            continue
        terms = elbo_terms(part.coords, part.responses, state, n_total)
        total += weight * float(np.sum(terms))
    return total


# ---------------------------------------------------------------------------
# gradients (torch)


def _torch_cov(a: torch.Tensor, b: torch.Tensor, ls: torch.Tensor, var: torch.Tensor) -> torch.Tensor:
    diff = (a[:, None, :] - b[None, :, :]) / ls
    return var * torch.exp(-0.5 * (diff**2).sum(-1))


def _torch_cholesky(matrix: torch.Tensor, variance: torch.Tensor, context: str) -> torch.Tensor:
    factor, info = torch.linalg.cholesky_ex(matrix)
    if int(info) == 0:
        return factor
    eye = torch.eye(matrix.shape[0], dtype=matrix.dtype)
    for level in jitter_ladder():
        factor, info = torch.linalg.cholesky_ex(matrix + level * variance * eye)
        if int(info) == 0:
            log.debug("cholesky needed jitter %.1e [%s]", level, context)
            return factor
    raise NumericalError("cholesky failed during gradient evaluation", context)


def _torch_terms(
    theta: torch.Tensor,
    coords: torch.Tensor,
    responses: torch.Tensor,
    m: int,
    d: int,
    n_total: float,
) -> torch.Tensor:
    blocks = parameter_blocks(m, d)
    rows, cols = _tril(m)
    mean = theta[blocks["mean"]]
    raw = torch.zeros((m, m), dtype=theta.dtype).index_put(
        (torch.as_tensor(rows), torch.as_tensor(cols)), theta[blocks["chol"]]
    )
    log_diag = torch.diagonal(raw)
    chol = torch.tril(raw, -1) + torch.diag(torch.exp(log_diag))
    inducing = theta[blocks["inducing"]].reshape(m, d)
    ls = torch.exp(theta[blocks["log_lengthscales"]])
    var = torch.exp(theta[blocks["log_variance"]][0])
    log_prec = theta[blocks["log_precision"]][0]
    beta = torch.exp(log_prec)

    kmm = _torch_cov(inducing, inducing, ls, var)
    lk = _torch_cholesky(kmm, var, "elbo_grad")
    cross = _torch_cov(coords, inducing, ls, var)
    half = torch.linalg.solve_triangular(lk, cross.T, upper=False)
    proj = torch.linalg.solve_triangular(lk.T, half, upper=True)

    mu = proj.T @ mean
    ktilde = var - (half**2).sum(0)
    trace = beta * ((chol.T @ proj) ** 2).sum(0)
    loglik = -0.5 * LOG_2PI + 0.5 * log_prec - 0.5 * beta * (responses - mu) ** 2

    a = torch.linalg.solve_triangular(lk, chol, upper=False)
    b = torch.linalg.solve_triangular(lk, mean[:, None], upper=False)
    kl = 0.5 * (
        (a**2).sum()
        + (b**2).sum()
        - m
        + 2.0 * torch.log(torch.diagonal(lk)).sum()
        - 2.0 * log_diag.sum()
    )
    return loglik - 0.5 * (beta * ktilde + trace) - kl / n_total


def elbo_value_and_grad(
    coords: npt.ArrayLike,
    responses: npt.ArrayLike,
    state: VariationalState,
    scale: float,
    n_total: float,
) -> tuple[float, GradientVector]:
    """Scaled sum of ELBO terms over a batch and its gradient."""
    if n_total <= 0:
        raise ConfigError(f"n_total must be positive, got {n_total}")
    x = np.asarray(coords, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError("gradient batch must be non-empty")
    x = as_coords(x, state.d, "batch")
    if y.shape[0] != x.shape[0]:
        raise ConfigError(f"got {x.shape[0]} inputs but {y.shape[0]} responses")

    theta = torch.tensor(state.to_vector(), dtype=torch.float64, requires_grad=True)
    total = _torch_terms(
        theta,
        torch.tensor(x, dtype=torch.float64),
        torch.tensor(y, dtype=torch.float64),
        state.m,
        state.d,
        n_total,
    ).sum()
    total.backward()
    assert theta.grad is not None
    grad = theta.grad.detach().numpy().copy()
    return scale * float(total.detach()), scale * grad


def elbo_grad(
    coords: npt.ArrayLike,
    responses: npt.ArrayLike,
    state: VariationalState,
    scale: float,
    n_total: float,
) -> GradientVector:
    """`scale` times the gradient of the summed ELBO terms over a batch."""
    return elbo_value_and_grad(coords, responses, state, scale, n_total)[1]


def weighted_elbo_grad(
    parts: Sequence[Observations],
    state: VariationalState,
    weights: Sequence[float] | None = None,
) -> GradientVector:
    """Gradient of `elbo(parts, state, weights)`."""
    w = _weights(parts, weights)
    n_total = weighted_count(parts, w)
    grad = np.zeros(parameter_count(state.m, state.d))
    for part, weight in zip(parts, w):
        if weight == 0 or len(part.responses) == 0:
            continue
        grad += weight * elbo_grad(part.coords, part.responses, state, 1.0, n_total)
    return grad


# ---------------------------------------------------------------------------
# prediction and special states


def predict(
    state: VariationalState,
    xs: npt.ArrayLike,
    *,
    include_noise: bool = False,
) -> tuple[Array, Array]:
    """Predictive mean and variance of the latent function (or of new data)."""
    points = as_coords(xs, state.d, "Xs")
    kmm = cov_matrix(state.inducing, state.inducing, state.kernel)
    lk = jittered_cholesky(kmm, state.kernel.variance, "predict")
    cross = cov_matrix(state.inducing, points, state.kernel)
    half = solve_triangular(lk, cross, lower=True)
    proj = cho_solve((lk, True), cross)

    mean = proj.T @ state.mean
    var = (
        state.kernel.variance
        - np.sum(half**2, axis=0)
        + np.sum((state.chol.T @ proj) ** 2, axis=0)
    )
    var = np.maximum(var, 0.0)
    if include_noise:
        var = var + state.kernel.noise_variance
    return mean, var


def optimal_variational(
    state: VariationalState, coords: npt.ArrayLike, responses: npt.ArrayLike
) -> VariationalState:
    """Closed-form maximizer of the full ELBO over (mean, S).

    With Sigma = Kmm + beta Kmn Knm: S = Kmm Sigma^-1 Kmm and
    mean = beta Kmm Sigma^-1 Kmn y. Inducing inputs and kernel are unchanged.
    """
    x = as_coords(coords, state.d)
    y = np.asarray(responses, dtype=np.float64).ravel()
    beta = state.kernel.precision
    variance = state.kernel.variance
    kmm = cov_matrix(state.inducing, state.inducing, state.kernel)
    knm = cov_matrix(x, state.inducing, state.kernel)
    sigma = kmm + beta * knm.T @ knm
    ls = jittered_cholesky(sigma, variance, "optimal_variational")

    mean = beta * kmm @ cho_solve((ls, True), knm.T @ y)
    half = solve_triangular(ls, kmm, lower=True)
    cov = half.T @ half
    chol = jittered_cholesky(0.5 * (cov + cov.T), variance, "optimal_variational")
    return VariationalState.from_parts(state.inducing, mean, chol, state.kernel)


def initial_state(
    coords: npt.ArrayLike,
    responses: npt.ArrayLike,
    m: int,
    rng: np.random.Generator,
    context: str = "init",
) -> VariationalState:
    """Data-driven starting point for one partition's model."""
    x = np.asarray(coords, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64).ravel()
    if m < 1:
        raise ConfigError(f"need at least one inducing point, got m={m}")
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError(f"cannot initialize a model without data [{context}]")
    n, _ = x.shape

    span = np.ptp(x, axis=0)
    lengthscales = np.maximum(INIT_LENGTHSCALE_FRACTION * span, MIN_LENGTHSCALE)
    if n >= m:
        inducing = x[rng.choice(n, size=m, replace=False)].copy()
    else:
        picks = rng.integers(0, n, size=m)
        noise = rng.normal(scale=0.1 * lengthscales, size=(m, x.shape[1]))
        inducing = x[picks] + noise

    variance = float(np.var(y, ddof=1)) if n >= 2 else 0.0
    if not math.isfinite(variance) or variance < 1e-12:
        variance = 1.0
    kernel = KernelParams.from_values(
        lengthscales, variance, INIT_SIGNAL_TO_NOISE / variance
    )
    kmm = cov_matrix(inducing, inducing, kernel)
    chol = INIT_CHOL_SCALE * jittered_cholesky(kmm, variance, context)
    return VariationalState.from_parts(inducing, np.zeros(m), chol, kernel)
