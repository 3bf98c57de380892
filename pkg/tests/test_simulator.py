from collections import Counter

import pytest

from cbalancer.core import ContainerSpec, NodeSpec, ResourceVector
from cbalancer.errors import ContainerVanished, InvalidConfig, SameNode, UnknownContainer
from cbalancer.registry import ImageSpec
from cbalancer.simulator import Phase, World

IMAGES = {"img": ImageSpec("img", (("base", 50_000_000), ("app", 10_000_000)))}


def spec(cid, cpu=0.2, base=100.0, duration=120, arrival=0, **kw):
    return ContainerSpec(cid, "img", ResourceVector(cpu=cpu), 8 << 20, base, duration, arrival, **kw)


def world(specs, n_nodes=2, **kw):
    return World([NodeSpec(i) for i in range(n_nodes)], specs, images=IMAGES, **kw)


def run_to_end(w, limit=1000):
    reports = []
    for t in range(limit):
        reports.append(w.step(t))
        if w.finished():
            break
    return reports


class TestTicks:
    def test_empty_cluster(self):
        report = world([]).step(0)
        assert report.containers == ()
        assert all(sum(u) == 0 for u in report.node_utilization)

    def test_retired_at_duration(self):
        w = world([spec("a")])
        reports = run_to_end(w)
        assert [r.tick for r in reports if r.containers][-1] == 119
        assert w.containers["a"].finished_tick == 119
        assert w.step(120).containers == ()

    def test_sole_container_total_work(self):
        w = world([spec("a", base=37.5)])
        run_to_end(w)
        assert w.containers["a"].work == pytest.approx(37.5 * 120)

    def test_late_arrival(self):
        w = world([spec("a", arrival=3)])
        assert w.step(2).containers == ()
        assert len(w.step(3).containers) == 1

    def test_spread_balances_counts(self):
        w = world([spec(f"c{i}", cpu=0.05) for i in range(11)], n_nodes=4, seed=3)
        w.step(0)
        counts = Counter(w.placement().values())
        assert max(counts.values()) - min(counts.values()) <= 1

    def test_samples_on_profiling_cadence(self):
        w = world([spec("a")], profiling_interval=5)
        for t in range(12):
            w.step(t)
        assert [t for t, _ in w.containers["a"].samples] == [0, 5, 10]

    def test_stability_reported_over_nodes(self):
        w = world([spec("a", cpu=0.2), spec("b", cpu=0.4)], n_nodes=2)
        report = w.step(0)
        assert report.stability == pytest.approx(0.02)

    def test_contention_reduces_throughput(self):
        w = world([spec("a", cpu=0.8), spec("b", cpu=0.8)], n_nodes=1)
        report = w.step(0)
        assert all(c.throughput == pytest.approx(100 * 0.625 / 1.06) for c in report.containers)

    def test_cbalancer_needs_baseline_initial_placement(self):
        with pytest.raises(InvalidConfig):
            world([], strategy="cbalancer")

    def test_dense_node_ids_required(self):
        with pytest.raises(InvalidConfig):
            World([NodeSpec(0), NodeSpec(2)], [])


class TestMigration:
    def test_container_lands_on_target(self):
        w = world([spec("a")])
        w.step(0)
        src = w.containers["a"].host
        record = w.migrate("a", 1 - src, tick=1)
        assert w.containers["a"].phase is Phase.MIGRATING
        for t in range(1, 1 + record.downtime_ticks):
            assert "a" in w.step(t).migrating
        w.step(1 + record.downtime_ticks)
        assert w.placement() == {"a": 1 - src}

    def test_same_node(self):
        w = world([spec("a")])
        w.step(0)
        with pytest.raises(SameNode):
            w.migrate("a", w.containers["a"].host)

    def test_unknown(self):
        with pytest.raises(UnknownContainer):
            world([]).migrate("ghost", 1)

    def test_finished_container_leaves_state_untouched(self):
        w = world([spec("a", duration=2)])
        run_to_end(w)
        before = (w.containers["a"].phase, w.containers["a"].work, list(w.migration_log))
        with pytest.raises(ContainerVanished):
            w.migrate("a", 1)
        assert (w.containers["a"].phase, w.containers["a"].work, list(w.migration_log)) == before

    def test_apply_stale_record_is_rejected_without_side_effects(self):
        w = world([spec("a")])
        w.step(0)
        src = w.containers["a"].host
        record = w.plan("a", 1 - src)
        w.migrate("a", 1 - src, tick=1)
        registry_before = w.registry.total_bytes
        with pytest.raises(ContainerVanished):
            w.apply_migration(record, 2)
        assert w.registry.total_bytes == registry_before
        assert len(w.migration_log) == 1

    def test_work_is_conserved_up_to_downtime(self):
        base, horizon = 80.0, 60
        plain, moved = world([spec("a", base=base)]), world([spec("a", base=base)])
        plain.step(0)
        moved.step(0)
        for t in range(1, 10):
            plain.step(t)
            moved.step(t)
        record = moved.migrate("a", 1 - moved.containers["a"].host, tick=10)
        for t in range(10, horizon):
            plain.step(t)
            moved.step(t)
        lost = plain.containers["a"].work - moved.containers["a"].work
        assert lost == pytest.approx(base * record.downtime_ticks, abs=1e-9)
        run_to_end(plain)
        for t in range(horizon, 1000):
            moved.step(t)
            if moved.finished():
                break
        assert moved.containers["a"].work == pytest.approx(plain.containers["a"].work, abs=1e-9)

    def test_approach_two_pushes_and_caches_layers(self):
        w = world([spec("a"), spec("b")], n_nodes=3)
        w.step(0)
        empty = next(n for n in range(3) if n not in w.placement().values())
        first = w.migrate("a", empty, tick=1)
        assert w.registry.total_bytes > 0
        init = first.manifest.init.size_bytes
        second = w.plan("b", empty)
        assert second.bytes_fs_transferred == 2 * init
