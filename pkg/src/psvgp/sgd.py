"""Neighbor-sampling stochastic gradient training of local models.

Each partition j trains on mini-batches drawn from itself or from one of its
neighbors k, picked with probability proportional to n_j (self) or
delta * n_k (neighbor). Scaling the batch gradient by n_eff / |I| makes it an
unbiased estimate of the gradient of the ELBO with weight 1 on j's data and
weight delta on each neighbor's data.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Self

import numpy as np
import numpy.typing as npt

from psvgp.config import TrainRun
from psvgp.errors import ConfigError
from psvgp.gp import Array
from psvgp.partition import NeighborGraph, PartitionData
from psvgp.svgp import (
    GradientVector,
    VariationalState,
    elbo_grad,
    elbo_value_and_grad,
    initial_state,
)

log = logging.getLogger(__name__)

IndexArray = npt.NDArray[np.int64]


@dataclass(frozen=True)
class SamplerConfig:
    """Neighbor-sampling knobs for one run."""

    delta: float
    batch_size: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must be in [0, 1], got {self.delta}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @classmethod
    def from_run(cls, run: TrainRun) -> Self:
        return cls(delta=run.delta, batch_size=run.batch, seed=run.seed)


@dataclass(frozen=True)
class AdamConfig:
    """Adam hyperparameters."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def from_run(cls, run: TrainRun) -> Self:
        return cls(lr=run.lr, beta1=run.beta1, beta2=run.beta2, eps=run.eps)


@dataclass(frozen=True, eq=False)
class AdamState:
    """Moment estimates and step counter."""

    first: Array
    second: Array
    step: int
    config: AdamConfig

    @classmethod
    def zeros(cls, size: int, config: AdamConfig | None = None) -> Self:
        return cls(np.zeros(size), np.zeros(size), 0, config or AdamConfig())


@dataclass(frozen=True, eq=False)
class Draw:
    """A sampled source partition and row indices within it."""

    source: int
    indices: IndexArray


def effective_count(j: int, graph: NeighborGraph, delta: float) -> float:
    """n_j + delta * (sum of neighbor counts)."""
    return graph.count(j) + delta * sum(graph.count(k) for k in graph.neighbors(j))


def delta_weights(j: int, graph: NeighborGraph, delta: float) -> dict[int, float]:
    """Objective weights: 1 on j, delta on each neighbor."""
    return {j: 1.0, **{k: delta for k in graph.neighbors(j)}}


def source_probs(j: int, graph: NeighborGraph, delta: float) -> dict[int, float]:
    """Probability of drawing the next batch from j or each neighbor.

    Keys are j followed by its neighbors in ascending order. The last
    positive entry absorbs rounding so the values sum to one.
    """
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must be in [0, 1], got {delta}")
    n_j = graph.count(j)
    if n_j <= 0:
        raise ConfigError(f"partition {j} has no observations to train on")

    n_eff = effective_count(j, graph, delta)
    probs = {j: n_j / n_eff}
    for k in graph.neighbors(j):
        probs[k] = delta * graph.count(k) / n_eff

    positive = [k for k, p in probs.items() if p > 0]
    last = positive[-1]
    rest = sum(p for k, p in probs.items() if k != last)
    probs[last] = max(0.0, 1.0 - rest)
    return probs


def sample_source(probs: Mapping[int, float], rng: np.random.Generator) -> int:
    """Draw a source partition; a certain outcome consumes no randomness."""
    candidates = [k for k, p in probs.items() if p > 0]
    if len(candidates) == 1:
        return candidates[0]
    keys = np.fromiter(probs.keys(), dtype=np.int64)
    weights = np.fromiter(probs.values(), dtype=np.float64)
    return int(rng.choice(keys, p=weights))


def sample_minibatch(n_k: int, batch_size: int, rng: np.random.Generator) -> IndexArray:
    """min(batch_size, n_k) distinct row indices, uniform over subsets.

    A batch covering the whole partition consumes no randomness.

    >>> sample_minibatch(3, 5, np.random.default_rng(0)).tolist()
    [0, 1, 2]
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be at least 1, got {batch_size}")
    if n_k < 1:
        raise ConfigError(f"cannot draw a batch from an empty partition (n={n_k})")
    if batch_size >= n_k:
        return np.arange(n_k, dtype=np.int64)
    return rng.choice(n_k, size=batch_size, replace=False).astype(np.int64)


def stochastic_grad(
    j: int,
    source: int,
    indices: npt.ArrayLike,
    models: Mapping[int, VariationalState],
    data: Mapping[int, PartitionData],
    delta: float,
    graph: NeighborGraph,
) -> GradientVector:
    """(n_eff / |I|) times the summed term gradients of j's model on the batch."""
    idx = np.asarray(indices, dtype=np.int64)
    n_eff = effective_count(j, graph, delta)
    part = data[source]
    return elbo_grad(
        part.coords[idx], part.responses[idx], models[j], n_eff / len(idx), n_eff
    )


def adam_step(
    params: Array, grad: GradientVector, state: AdamState
) -> tuple[Array, AdamState]:
    """One bias-corrected Adam ascent step; non-finite gradients are skipped."""
    if not np.all(np.isfinite(grad)):
        log.warning("skipping Adam step %d: non-finite gradient", state.step + 1)
        return params, state

    cfg = state.config
    step = state.step + 1
    first = cfg.beta1 * state.first + (1.0 - cfg.beta1) * grad
    second = cfg.beta2 * state.second + (1.0 - cfg.beta2) * grad**2
    first_hat = first / (1.0 - cfg.beta1**step)
    second_hat = second / (1.0 - cfg.beta2**step)
    updated = params + cfg.lr * first_hat / (np.sqrt(second_hat) + cfg.eps)
    return updated, AdamState(first, second, step, cfg)


def partition_rng(master_seed: int, partition_id: int) -> np.random.Generator:
    """Independent random stream for one partition.

    >>> int(partition_rng(5, 3).integers(1 << 30)) == int(np.random.default_rng(6).integers(1 << 30))
    True
    """
    return np.random.default_rng(master_seed ^ partition_id)


class PartitionTrainer:
    """Sampler, optimizer, and current state for one partition."""

    def __init__(self, partition: PartitionData, graph: NeighborGraph, run: TrainRun) -> None:
        sampler = SamplerConfig.from_run(run)
        self.id = partition.id
        self.partition = partition
        self.batch_size = sampler.batch_size
        self.probs = source_probs(partition.id, graph, sampler.delta)
        self.counts = {k: graph.count(k) for k in self.probs}
        self.n_eff = effective_count(partition.id, graph, sampler.delta)
        self.rng = partition_rng(sampler.seed, partition.id)
        self.state = initial_state(
            partition.coords, partition.responses, run.m, self.rng, f"partition {partition.id}"
        )
        self.adam = AdamState.zeros(self.state.to_vector().shape[0], AdamConfig.from_run(run))
        self.iteration = 0
        self.trace_every = run.trace_every
        self.trace: list[tuple[int, float]] = []

    def draw(self) -> Draw:
        """Pick the source partition and rows for the next step."""
        source = sample_source(self.probs, self.rng)
        return Draw(source, sample_minibatch(self.counts[source], self.batch_size, self.rng))

    def step(self, coords: Array, responses: Array) -> float:
        """Take one Adam step on a batch; returns the ELBO estimate."""
        value, grad = elbo_value_and_grad(
            coords, responses, self.state, self.n_eff / len(responses), self.n_eff
        )
        vector, self.adam = adam_step(self.state.to_vector(), grad, self.adam)
        self.state = self.state.with_vector(vector)
        self.iteration += 1
        if self.trace_every and self.iteration % self.trace_every == 0:
            self.trace.append((self.iteration, value))
            log.debug("partition %d iteration %d elbo %.6g", self.id, self.iteration, value)
        return value


def trainable(partitions: Sequence[PartitionData]) -> list[PartitionData]:
    """Partitions with at least one observation."""
    return [p for p in partitions if p.n > 0]


def train_sequential(
    partitions: Sequence[PartitionData], graph: NeighborGraph, run: TrainRun
) -> dict[int, VariationalState]:
    """Train every partition in a single loop, slicing all batches from memory."""
    data = {p.id: p for p in partitions}
    trainers = [PartitionTrainer(p, graph, run) for p in trainable(partitions)]
    for _ in range(run.iterations):
        for trainer in trainers:
            draw = trainer.draw()
            source = data[draw.source]
            trainer.step(source.coords[draw.indices], source.responses[draw.indices])
    return {t.id: t.state for t in trainers}


def train_independent(
    partitions: Sequence[PartitionData], run: TrainRun
) -> dict[int, VariationalState]:
    """Independent local models: plain minibatch SVGP on each partition's own data."""
    adam = AdamConfig.from_run(run)
    models: dict[int, VariationalState] = {}
    for part in trainable(partitions):
        rng = partition_rng(run.seed, part.id)
        state = initial_state(part.coords, part.responses, run.m, rng, f"partition {part.id}")
        opt = AdamState.zeros(state.to_vector().shape[0], adam)
        n = float(part.n)
        for _ in range(run.iterations):
            idx = sample_minibatch(part.n, run.batch, rng)
            _, grad = elbo_value_and_grad(
                part.coords[idx], part.responses[idx], state, n / len(idx), n
            )
            vector, opt = adam_step(state.to_vector(), grad, opt)
            state = state.with_vector(vector)
        models[part.id] = state
    return models
