import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import oracles
from cbalancer.errors import EmptyCluster, InvalidConfig, LengthMismatch, UnknownNode
from cbalancer.ga import (
    GaConfig,
    PlacementOptimizer,
    crossover,
    mutate,
    optimize,
    random_population,
    snapshot_from_arrays,
)
from cbalancer.core import ClusterSnapshot, NodeSpec, build_snapshot
from cbalancer.objective import ObjectiveWeights, migration_distance, stability


class TestRandomPopulation:
    def test_single_node_is_all_zero(self):
        assert not random_population(8, 1, 50, seed=1).any()

    def test_seeded_is_reproducible(self):
        np.testing.assert_array_equal(random_population(10, 14, 200, seed=5), random_population(10, 14, 200, seed=5))

    def test_range_and_shape(self):
        pop = random_population(10, 14, 200, seed=2)
        assert pop.shape == (200, 10)
        assert pop.min() >= 0 and pop.max() < 14


class TestCrossover:
    def test_identical_parents(self):
        a = np.array([1, 2, 0, 1])
        c1, c2 = crossover(a, a.copy(), np.random.default_rng(0))
        np.testing.assert_array_equal(c1, a)
        np.testing.assert_array_equal(c2, a)

    def test_explicit_cut(self):
        c1, c2 = crossover(np.zeros(4, int), np.ones(4, int), cut=2)
        assert c1.tolist() == [0, 0, 1, 1]
        assert c2.tolist() == [1, 1, 0, 0]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            crossover(np.zeros(3, int), np.zeros(4, int), np.random.default_rng(0))

    @given(st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_positional_provenance(self, k, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.integers(0, 5, k), rng.integers(5, 10, k)
        c1, c2 = crossover(a, b, rng)
        for i in range(k):
            assert c1[i] in (a[i], b[i]) and c2[i] in (a[i], b[i])
            assert {c1[i], c2[i]} == {a[i], b[i]}


class TestMutate:
    def test_zero_probability(self):
        p = np.array([0, 1, 2, 3])
        np.testing.assert_array_equal(mutate(p, 4, 0.0, np.random.default_rng(0)), p)

    def test_single_node(self):
        p = np.zeros(6, int)
        np.testing.assert_array_equal(mutate(p, 1, 1.0, np.random.default_rng(0)), p)

    def test_does_not_modify_input(self):
        p = np.zeros(6, int)
        mutate(p, 3, 1.0, np.random.default_rng(0))
        assert not p.any()

    def test_change_rate(self):
        rng = np.random.default_rng(42)
        prob, n_nodes, trials = 0.3, 4, 100_000
        changed = (mutate(np.zeros(trials, int), n_nodes, prob, rng) != 0).sum()
        expected = prob * (1 - 1 / n_nodes)
        sigma = np.sqrt(trials * expected * (1 - expected))
        assert abs(changed - trials * expected) <= 3 * sigma


class TestGaConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"population_size": 1}, {"generations": 0}, {"crossover_prob": 1.5}, {"mutation_prob": -0.1},
         {"elitism_count": 200}, {"tournament_size": 0}],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvalidConfig):
            GaConfig(**kwargs)

    def test_defaults(self):
        c = GaConfig()
        assert (c.population_size, c.generations, c.crossover_prob, c.mutation_prob) == (200, 300, 0.9, 0.02)


class TestOptimize:
    def test_no_containers(self):
        snap = build_snapshot([], [NodeSpec(0), NodeSpec(1)], tick=0)
        result = optimize(snap, GaConfig(generations=5))
        assert len(result.best) == 0 and result.migrations == ()

    def test_no_nodes(self):
        with pytest.raises(EmptyCluster):
            optimize(ClusterSnapshot(tick=0, nodes=(), containers=()))

    def test_balanced_incumbent_is_kept_at_alpha_one(self):
        util = np.zeros((4, 5))
        util[:, 0] = [0.2, 0.6, 0.2, 0.6]
        snap = snapshot_from_arrays(util, [0, 0, 1, 1], 2)
        result = optimize(snap, GaConfig(population_size=40, generations=30, weights=ObjectiveWeights(1.0)))
        assert stability(snap) == 0.0
        assert result.migrations == ()

    def test_zero_stability_weight_never_moves(self):
        rng = np.random.default_rng(1)
        snap = snapshot_from_arrays(rng.random((8, 5)), rng.integers(0, 3, 8), 3)
        result = optimize(snap, GaConfig(population_size=30, generations=20, weights=ObjectiveWeights(0.0)))
        assert result.best == snap.placement

    def test_history_length_and_monotone(self):
        rng = np.random.default_rng(2)
        snap = snapshot_from_arrays(rng.random((10, 5)), rng.integers(0, 4, 10), 4)
        result = optimize(snap, GaConfig(population_size=30, generations=25, seed=3))
        assert len(result.history) == 25
        assert all(b <= a for a, b in zip(result.history, result.history[1:]))
        assert result.best_breakdown.fitness == result.history[-1]

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        snap = snapshot_from_arrays(rng.random((9, 5)), rng.integers(0, 3, 9), 3)
        cfg = GaConfig(population_size=30, generations=20, seed=9)
        assert optimize(snap, cfg) == optimize(snap, cfg)

    def test_migrations_are_the_placement_diff(self):
        rng = np.random.default_rng(5)
        snap = snapshot_from_arrays(rng.random((9, 5)), rng.integers(0, 3, 9), 3)
        result = optimize(snap, GaConfig(population_size=40, generations=40))
        assert len(result.migrations) == migration_distance(result.best, snap.placement)
        for cid, src, dst in result.migrations:
            i = [p.container_id for p in snap.containers].index(cid)
            assert snap.placement[i] == src and result.best[i] == dst

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_exhaustive_minimum(self, seed):
        rng = np.random.default_rng(100 + seed)
        util = rng.random((5, 5))
        hosts = rng.integers(0, 3, 5)
        snap = snapshot_from_arrays(util, hosts, 3)
        result = optimize(snap, GaConfig(seed=seed))
        expected = oracles.brute_force_minimum(
            util.tolist(), hosts.tolist(), [0, 1, 2], 0.85, result.scale.stability_max, result.scale.migration_max
        )
        assert result.best_breakdown.fitness == pytest.approx(expected, abs=1e-12)


class TestPlacementOptimizer:
    def test_sklearn_params_and_clone(self):
        est = PlacementOptimizer(n_nodes=3, alpha=0.5, generations=10)
        assert est.get_params()["alpha"] == 0.5
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        est.set_params(alpha=0.9)
        assert est.alpha == 0.9

    def test_fit_sets_labels(self):
        rng = np.random.default_rng(0)
        X, y = rng.random((7, 5)), rng.integers(0, 3, 7)
        est = PlacementOptimizer(n_nodes=3, population_size=30, generations=20).fit(X, y)
        assert est.labels_.shape == (7,)
        assert est.n_migrations_ == int((est.labels_ != y).sum())
        assert len(est.history_) == 20
        assert est.n_features_in_ == 5
        assert [i for i, _, _ in est.migrations()] == [i for i in range(7) if est.labels_[i] != y[i]]

    def test_fit_predict_matches_labels(self):
        rng = np.random.default_rng(1)
        X, y = rng.random((6, 5)), rng.integers(0, 2, 6)
        est = PlacementOptimizer(n_nodes=2, population_size=20, generations=10)
        np.testing.assert_array_equal(est.fit_predict(X, y), est.labels_)

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            PlacementOptimizer().migrations()

    @pytest.mark.parametrize("X", [np.ones((3, 4)), -np.ones((3, 5)), np.full((3, 5), np.nan)])
    def test_rejects_bad_input(self, X):
        with pytest.raises(ValueError):
            PlacementOptimizer(n_nodes=2, generations=2).fit(X, [0, 1, 0])

    def test_rejects_host_outside_cluster(self):
        with pytest.raises(UnknownNode):
            PlacementOptimizer(n_nodes=2, generations=2).fit(np.ones((2, 5)), [0, 5])
