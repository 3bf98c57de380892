"""Placement quality: per-node mean utilization, the stability (variance)
metric, migration distance, normalization and the weighted fitness.

Scalar functions operate on snapshots and placements; the ``population_*``
variants evaluate a whole (P, k) array of chromosomes at once and are what
the genetic optimizer calls in its inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import RESOURCES, ClusterSnapshot, Placement, ResourceKind
from .errors import EmptyInput, InvalidConfig, LengthMismatch, UnknownNode


class AlphaConvention(str, Enum):
    """Which term alpha weights.

    ``formula`` gives ``alpha * S_n + (1 - alpha) * d_n``; ``prose`` swaps
    the weights so that alpha = 1 only minimizes migrations.
    """

    FORMULA = "formula"
    PROSE = "prose"


DEFAULT_ALPHA = 0.85


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = DEFAULT_ALPHA
    convention: AlphaConvention = AlphaConvention.FORMULA

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfig(f"alpha must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, "convention", AlphaConvention(self.convention))

    @property
    def stability_weight(self) -> float:
        if self.convention is AlphaConvention.FORMULA:
            return self.alpha
        return 1.0 - self.alpha

    @property
    def migration_weight(self) -> float:
        return 1.0 - self.stability_weight


@dataclass(frozen=True)
class FitnessBreakdown:
    stability_raw: float
    migration_count: int
    stability_norm: float
    migration_norm: float
    fitness: float


@dataclass(frozen=True)
class ObjectiveScale:
    """Fixed normalization used for one optimization run.

    Stability is divided by ``stability_max`` (clipped to 1) and the
    migration count by ``migration_max``. Both lower bounds are zero, the
    smallest value either quantity can take.
    """

    stability_max: float
    migration_max: int

    def normalize_stability(self, s):
        if self.stability_max <= 0:
            return np.zeros_like(np.asarray(s, dtype=float))
        return np.minimum(np.asarray(s, dtype=float) / self.stability_max, 1.0)

    def normalize_migrations(self, d):
        if self.migration_max <= 0:
            return np.zeros_like(np.asarray(d, dtype=float))
        return np.asarray(d, dtype=float) / self.migration_max


def node_means(utilization: np.ndarray, positions: np.ndarray, n_nodes: int) -> np.ndarray:
    """Mean container utilization per node and resource.

    ``utilization`` is (k, R); ``positions`` is (k,) or (P, k) of node
    positions in ``[0, n_nodes)``. Returns (N, R) or (P, N, R). Nodes that
    host nothing get 0.
    """
    positions = np.asarray(positions, dtype=np.int64)
    single = positions.ndim == 1
    pop = positions[None, :] if single else positions
    n_pop, k = pop.shape
    n_res = utilization.shape[1]
    flat = (pop + (np.arange(n_pop, dtype=np.int64)[:, None] * n_nodes)).ravel()
    counts = np.bincount(flat, minlength=n_pop * n_nodes).astype(float)
    sums = np.empty((n_pop * n_nodes, n_res))
    for r in range(n_res):
        w = np.broadcast_to(utilization[:, r], (n_pop, k)).ravel()
        sums[:, r] = np.bincount(flat, weights=w, minlength=n_pop * n_nodes)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts[:, None] > 0, sums / counts[:, None], 0.0)
    means = means.reshape(n_pop, n_nodes, n_res)
    return means[0] if single else means


def stability_of_means(means: np.ndarray) -> np.ndarray | float:
    """Sum over resources of squared deviations from the across-node mean."""
    centred = means - means.mean(axis=-2, keepdims=True)
    return (centred**2).sum(axis=(-2, -1))


def population_stability(utilization: np.ndarray, population: np.ndarray, n_nodes: int) -> np.ndarray:
    return stability_of_means(node_means(utilization, np.atleast_2d(population), n_nodes))


def population_distance(population: np.ndarray, incumbent: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(population) != np.asarray(incumbent)[None, :]).sum(axis=1)


def _positions(snapshot: ClusterSnapshot, placement: Placement) -> np.ndarray:
    if len(placement) != len(snapshot.containers):
        raise LengthMismatch(
            f"placement has {len(placement)} genes for {len(snapshot.containers)} containers"
        )
    return snapshot.node_positions(placement)


def mean_node_utilization(
    snapshot: ClusterSnapshot, placement: Placement, resource: ResourceKind, node: int
) -> float:
    if node not in snapshot.node_ids:
        raise UnknownNode(f"node {node} not in snapshot")
    positions = _positions(snapshot, placement)
    means = node_means(snapshot.utilization, positions, len(snapshot.nodes))
    return float(means[snapshot.node_ids.index(node), RESOURCES.index(ResourceKind(resource))])


def stability(snapshot: ClusterSnapshot, placement: Placement | None = None) -> float:
    placement = snapshot.placement if placement is None else placement
    positions = _positions(snapshot, placement)
    return float(stability_of_means(node_means(snapshot.utilization, positions, len(snapshot.nodes))))


def migration_distance(x: Sequence[int], y: Sequence[int]) -> int:
    """Number of positions at which two placements disagree."""
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    return sum(1 for a, b in zip(x, y) if a != b)


def normalize_population(values: Sequence[float]) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant input maps to all zeros."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyInput("cannot normalize an empty sequence")
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def fitness(stability_norm, migration_norm, weights: ObjectiveWeights):
    """Weighted fitness; lower is better. Accepts scalars or arrays."""
    return weights.stability_weight * stability_norm + weights.migration_weight * migration_norm


def evaluate(
    snapshot: ClusterSnapshot,
    placement: Placement,
    weights: ObjectiveWeights,
    scale: ObjectiveScale,
) -> FitnessBreakdown:
    s = stability(snapshot, placement)
    d = migration_distance(placement, snapshot.placement)
    s_n = float(scale.normalize_stability(s))
    d_n = float(scale.normalize_migrations(d))
    return FitnessBreakdown(
        stability_raw=s,
        migration_count=d,
        stability_norm=s_n,
        migration_norm=d_n,
        fitness=float(fitness(s_n, d_n, weights)),
    )
