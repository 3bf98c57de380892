"""Genetic search over container-to-node placements.

A chromosome holds one gene per container: the position of its host node
in the snapshot's node list. Each generation is evaluated, the best
``elitism_count`` chromosomes are copied forward, and the remainder of the
next generation is bred by tournament selection, single-point crossover
and per-gene mutation. The incumbent placement is always part of the
initial population, so "move nothing" is always a candidate.

Normalization uses one :class:`~cbalancer.objective.ObjectiveScale` for the
whole run: stability is divided by the largest value seen in the initial
population and migration counts by the number of containers. A fixed scale
keeps fitness values comparable across generations, which is what makes
elitism monotone and "best ever" well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .core import ClusterSnapshot, ContainerProfile, NodeSpec, Placement, ResourceVector, build_snapshot
from .errors import EmptyCluster, InvalidConfig, LengthMismatch
from .objective import (
    AlphaConvention,
    FitnessBreakdown,
    ObjectiveScale,
    ObjectiveWeights,
    evaluate,
    fitness,
    population_distance,
    population_stability,
)
from .validation import check_assignment, check_count, check_probability, check_utilization


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 200
    generations: int = 300
    crossover_prob: float = 0.9
    mutation_prob: float = 0.02
    elitism_count: int = 4
    tournament_size: int = 3
    seed: int = 0
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)

    def __post_init__(self):
        check_count(self.population_size, "population_size", 2)
        check_count(self.generations, "generations", 1)
        check_count(self.elitism_count, "elitism_count", 0)
        check_count(self.tournament_size, "tournament_size", 1)
        check_count(self.seed, "seed", 0)
        check_probability(self.crossover_prob, "crossover_prob")
        check_probability(self.mutation_prob, "mutation_prob")
        if self.elitism_count >= self.population_size:
            raise InvalidConfig("elitism_count must be smaller than population_size")


@dataclass(frozen=True)
class OptimizationResult:
    best: Placement
    best_breakdown: FitnessBreakdown
    history: tuple[float, ...]
    migrations: tuple[tuple[str, int, int], ...]
    scale: ObjectiveScale


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_population(k: int, n_nodes: int, size: int, seed=None) -> np.ndarray:
    """``size`` chromosomes of length ``k`` with genes uniform on [0, n_nodes)."""
    check_count(k, "k", 0)
    check_count(n_nodes, "n_nodes", 1)
    check_count(size, "size", 2)
    return _rng(seed).integers(0, n_nodes, size=(size, k), dtype=np.int64)


def crossover(a, b, rng=None, cut: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Single-point crossover; the cut is uniform on [1, k-1] unless given."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise LengthMismatch(f"parents differ in length: {a.shape} vs {b.shape}")
    k = a.shape[0]
    if k < 2:
        return a.copy(), b.copy()
    if cut is None:
        cut = int(_rng(rng).integers(1, k))
    elif not 1 <= cut <= k - 1:
        raise ValueError(f"cut must lie in [1, {k - 1}]")
    return np.concatenate([a[:cut], b[cut:]]), np.concatenate([b[:cut], a[cut:]])


def mutate(p, n_nodes: int, mutation_prob: float, rng=None) -> np.ndarray:
    """Reassign each gene to a uniform random node with ``mutation_prob``."""
    p = np.asarray(p, dtype=np.int64)
    rng = _rng(rng)
    hit = rng.random(p.shape) < mutation_prob
    fresh = rng.integers(0, n_nodes, size=p.shape, dtype=np.int64)
    return np.where(hit, fresh, p)


def _rank_order(f: np.ndarray, d: np.ndarray, pop: np.ndarray) -> np.ndarray:
    # Primary key fitness, then fewer migrations, then lexicographic genes.
    keys = tuple(pop[:, j] for j in range(pop.shape[1] - 1, -1, -1)) + (d, f)
    return np.lexsort(keys)


class _Evaluator:
    def __init__(self, utilization, incumbent, n_nodes, weights, scale):
        self.utilization = utilization
        self.incumbent = incumbent
        self.n_nodes = n_nodes
        self.weights = weights
        self.scale = scale

    def __call__(self, pop):
        s = population_stability(self.utilization, pop, self.n_nodes)
        d = population_distance(pop, self.incumbent)
        f = fitness(self.scale.normalize_stability(s), self.scale.normalize_migrations(d), self.weights)
        return f, d


def _breed(pop, rank, n_children, n_nodes, config, rng):
    size, k = pop.shape
    n_pairs = (n_children + 1) // 2
    entrants = rng.integers(0, size, size=(2 * n_pairs, config.tournament_size))
    winners = entrants[np.arange(2 * n_pairs), np.argmin(rank[entrants], axis=1)]
    a = pop[winners[:n_pairs]]
    b = pop[winners[n_pairs:]]
    do_cx = rng.random(n_pairs) < config.crossover_prob
    if k >= 2:
        cuts = rng.integers(1, k, size=n_pairs)
        left = np.arange(k)[None, :] < cuts[:, None]
        swap = do_cx[:, None] & ~left
        c1 = np.where(swap, b, a)
        c2 = np.where(swap, a, b)
    else:
        c1, c2 = a.copy(), b.copy()
    children = np.vstack([c1, c2])[:n_children]
    return mutate(children, n_nodes, config.mutation_prob, rng)


def optimize(snapshot: ClusterSnapshot, config: GaConfig | None = None) -> OptimizationResult:
    """Search for the placement with the lowest fitness.

    Deterministic for a given snapshot and ``config.seed``.
    """
    config = GaConfig() if config is None else config
    if not snapshot.nodes:
        raise EmptyCluster("snapshot has no nodes")
    k = len(snapshot.containers)
    n_nodes = len(snapshot.nodes)
    node_ids = np.asarray(snapshot.node_ids, dtype=np.int64)
    incumbent = snapshot.node_positions()
    weights = config.weights

    if k == 0:
        scale = ObjectiveScale(0.0, 0)
        best = Placement(())
        return OptimizationResult(
            best=best,
            best_breakdown=evaluate(snapshot, best, weights, scale),
            history=(0.0,) * config.generations,
            migrations=(),
            scale=scale,
        )

    rng = np.random.default_rng(config.seed)
    utilization = snapshot.utilization
    pop = random_population(k, n_nodes, config.population_size, rng)
    pop[0] = incumbent
    scale = ObjectiveScale(float(population_stability(utilization, pop, n_nodes).max()), k)
    evaluate_pop = _Evaluator(utilization, incumbent, n_nodes, weights, scale)

    history = []
    best_key = None
    best_genes = None
    for gen in range(config.generations):
        f, d = evaluate_pop(pop)
        order = _rank_order(f, d, pop)
        top = order[0]
        history.append(float(f[top]))
        key = (float(f[top]), int(d[top]), tuple(pop[top].tolist()))
        if best_key is None or key < best_key:
            best_key, best_genes = key, pop[top].copy()
        if gen == config.generations - 1:
            break
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        elites = pop[order[: config.elitism_count]]
        children = _breed(pop, rank, config.population_size - config.elitism_count, n_nodes, config, rng)
        pop = np.vstack([elites, children])

    best = Placement(tuple(int(node_ids[g]) for g in best_genes))
    moves = tuple(
        (profile.container_id, old, new)
        for profile, old, new in zip(snapshot.containers, snapshot.placement, best)
        if old != new
    )
    return OptimizationResult(
        best=best,
        best_breakdown=evaluate(snapshot, best, weights, scale),
        history=tuple(history),
        migrations=moves,
        scale=scale,
    )


def snapshot_from_arrays(utilization, assignment, n_nodes: int, tick: int = 0) -> ClusterSnapshot:
    """Wrap a utilization matrix and host assignment as a snapshot.

    Containers are named ``c0000``, ``c0001``, ... so their order matches
    the rows of ``utilization``.
    """
    X = check_utilization(utilization)
    y = check_assignment(assignment, X.shape[0], n_nodes)
    width = max(4, len(str(max(len(X) - 1, 0))))
    profiles = [
        ContainerProfile(f"c{i:0{width}d}", ((tick, ResourceVector.from_array(row)),), int(host))
        for i, (row, host) in enumerate(zip(X, y))
    ]
    nodes = [NodeSpec(n) for n in range(n_nodes)]
    return build_snapshot(profiles, nodes, tick)


class PlacementOptimizer(ClusterMixin, BaseEstimator):
    """Estimator facade over :func:`optimize`.

    Containers play the role of samples and nodes the role of cluster
    labels: ``fit(X, y)`` takes the (k, 5) utilization matrix and the
    current host of every container, and ``labels_`` holds the chosen
    placement.

    Parameters
    ----------
    n_nodes : int, default=None
        Cluster size. ``None`` infers ``max(y) + 1``.
    alpha : float, default=0.85
    alpha_convention : {"formula", "prose"}, default="formula"
    population_size, generations, crossover_prob, mutation_prob,
    elitism_count, tournament_size :
        Genetic algorithm settings, see :class:`GaConfig`.
    random_state : int, default=0
    """

    def __init__(
        self,
        n_nodes=None,
        alpha=0.85,
        alpha_convention="formula",
        population_size=200,
        generations=300,
        crossover_prob=0.9,
        mutation_prob=0.02,
        elitism_count=4,
        tournament_size=3,
        random_state=0,
    ):
        self.n_nodes = n_nodes
        self.alpha = alpha
        self.alpha_convention = alpha_convention
        self.population_size = population_size
        self.generations = generations
        self.crossover_prob = crossover_prob
        self.mutation_prob = mutation_prob
        self.elitism_count = elitism_count
        self.tournament_size = tournament_size
        self.random_state = random_state

    def _config(self) -> GaConfig:
        return GaConfig(
            population_size=self.population_size,
            generations=self.generations,
            crossover_prob=self.crossover_prob,
            mutation_prob=self.mutation_prob,
            elitism_count=self.elitism_count,
            tournament_size=self.tournament_size,
            seed=self.random_state,
            weights=ObjectiveWeights(self.alpha, AlphaConvention(self.alpha_convention)),
        )

    def fit(self, X, y=None):
        X = check_utilization(X)
        if y is None:
            y = np.zeros(X.shape[0], dtype=np.int64)
        y = np.asarray(y)
        n_nodes = self.n_nodes
        if n_nodes is None:
            n_nodes = int(y.max()) + 1 if len(y) else 1
        check_count(n_nodes, "n_nodes", 1)
        snapshot = snapshot_from_arrays(X, y, n_nodes)
        result = optimize(snapshot, self._config())
        self.n_features_in_ = X.shape[1]
        self.result_ = result
        self.labels_ = result.best.as_array()
        self.fitness_ = result.best_breakdown.fitness
        self.stability_ = result.best_breakdown.stability_raw
        self.n_migrations_ = result.best_breakdown.migration_count
        self.history_ = np.asarray(result.history)
        return self

    def migrations(self) -> list[tuple[int, int, int]]:
        """(row index, current node, chosen node) for every moved container."""
        check_is_fitted(self, "labels_")
        return [(int(cid[1:]), src, dst) for cid, src, dst in self.result_.migrations]

