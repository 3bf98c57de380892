import json

import pytest

from cbalancer import control
from cbalancer.control import (
    Bus,
    ContainerStat,
    Manager,
    MigrationCommand,
    StatsMessage,
    Worker,
    check_topic,
    min_invoke_ticks,
)
from cbalancer.core import ContainerSpec, NodeSpec, Placement, ResourceVector
from cbalancer.errors import InvalidConfig, MalformedTopic
from cbalancer.ga import GaConfig, OptimizationResult
from cbalancer.objective import FitnessBreakdown, ObjectiveScale, ObjectiveWeights
from cbalancer.registry import ImageSpec
from cbalancer.simulator import Phase, World

IMAGES = {"img": ImageSpec("img", (("base", 40_000_000), ("app", 10_000_000)))}
SMALL_GA = GaConfig(population_size=30, generations=20)


def spec(cid, cpu=0.2, duration=100):
    return ContainerSpec(cid, "img", ResourceVector(cpu=cpu), 8 << 20, 100.0, duration)


def make_world(n_containers=2, n_nodes=3, **kw):
    specs = [spec(f"c{i}") for i in range(n_containers)]
    return World([NodeSpec(i) for i in range(n_nodes)], specs, images=IMAGES, **kw)


def stat(cid, cpu):
    v = ResourceVector(cpu=cpu)
    return ContainerStat(cid, "img", v, v)


class TestTopics:
    @pytest.mark.parametrize("name", ["M0", "L12", "M3"])
    def test_valid(self, name):
        check_topic(name)

    @pytest.mark.parametrize("name", ["X1", "M", "M01", "m1", "M-1", "L1 ", 7])
    def test_malformed(self, name):
        with pytest.raises(MalformedTopic):
            check_topic(name)


class TestBus:
    def test_fifo(self):
        bus = Bus()
        sub = bus.subscribe("M3")
        bus.publish("M3", "a")
        bus.publish("M3", "b")
        assert sub.poll() == ["a", "b"]
        assert sub.poll() == []

    def test_topic_isolation(self):
        bus = Bus()
        sub = bus.subscribe("L2")
        bus.publish("M2", "stats")
        assert sub.poll() == []

    def test_fan_out(self):
        bus = Bus()
        a, b = bus.subscribe("M1"), bus.subscribe("M1")
        bus.publish("M1", 1)
        assert a.poll() == b.poll() == [1]

    def test_publish_to_malformed(self):
        with pytest.raises(MalformedTopic):
            Bus().publish("Q1", "x")

    def test_dump_log_is_json_lines(self):
        bus = Bus()
        bus.publish("L0", MigrationCommand("c0", 0, 1), tick=4)
        line = json.loads(bus.dump_log())
        assert line == {"topic": "L0", "tick": 4, "payload": {"container_id": "c0", "host_node": 0, "target_node": 1}}


class TestWorker:
    def test_stats_cadence(self):
        w = make_world(1, 1)
        bus = Bus()
        worker = Worker(0, bus, w, profiling_interval=5)
        sub = bus.subscribe("M0")
        for t in range(20):
            w.step(t)
            worker.publish_stats(t)
        messages = sub.poll()
        assert [m.tick for m in messages] == [0, 5, 10, 15]
        assert all(len(m.containers) == 1 for m in messages)

    def test_routes_command_to_host(self):
        w = make_world(1, 3)
        bus = Bus()
        w.step(0)
        host = w.containers["c0"].host
        target = (host + 1) % 3
        worker = Worker(host, bus, w)
        bus.publish(f"L{host}", MigrationCommand("c0", host, target))
        worker.handle_commands(1)
        assert w.containers["c0"].phase is Phase.MIGRATING
        assert w.containers["c0"].target == target

    def test_command_for_departed_container(self):
        w = make_world(1, 2)
        bus = Bus()
        for t in range(100):
            w.step(t)
        assert w.containers["c0"].phase is Phase.DONE
        worker = Worker(0, bus, w)
        bus.publish("L0", MigrationCommand("c0", 0, 1))
        worker.handle_commands(101)
        assert w.migration_log == [] and w.containers["c0"].phase is Phase.DONE
        assert len(worker.ignored) == 1

    def test_host_equals_target(self):
        with pytest.raises(InvalidConfig):
            MigrationCommand("c", 1, 1)


def fed_manager(stats_by_node, tick=5, **kw):
    bus = Bus()
    nodes = [NodeSpec(i) for i in range(len(stats_by_node))]
    manager = Manager(bus, nodes, kw.pop("ga_config", SMALL_GA), **kw)
    for node, stats in enumerate(stats_by_node):
        bus.publish(f"M{node}", StatsMessage(node, tick, tuple(stats)), tick)
    return bus, manager


class TestManager:
    def test_incumbent_means_no_commands(self):
        bus, manager = fed_manager([[stat("a", 0.3)], [stat("b", 0.3)]],
                                   ga_config=GaConfig(population_size=20, generations=10, weights=ObjectiveWeights(1.0)))
        assert manager.run_round(5) == []
        assert not any(t.startswith("L") for t in bus.topics())

    def test_commands_follow_placement_diff(self, monkeypatch):
        stats = [[stat(f"x{i}", 0.1) for i in range(0, 6, 2)], [stat(f"x{i}", 0.1) for i in range(1, 6, 2)]]
        bus, manager = fed_manager(stats)
        manager.consume()
        snap = manager.snapshot(5)
        best = list(snap.placement)
        best[2], best[5] = 1 - best[2], 1 - best[5]

        def fake_optimize(snapshot, config):
            moves = tuple(
                (p.container_id, a, b)
                for p, a, b in zip(snapshot.containers, snapshot.placement, best)
                if a != b
            )
            return OptimizationResult(Placement(best), FitnessBreakdown(0, 2, 0, 0, 0), (0.0,), moves, ObjectiveScale(1, 6))

        monkeypatch.setattr(control, "optimize", fake_optimize)
        commands = manager.run_round(5)
        assert [c.container_id for c in commands] == ["x2", "x5"]
        assert [c.host_node for c in commands] == [snap.placement[2], snap.placement[5]]
        for c in commands:
            assert bus.subscribe(f"L{c.host_node}").poll().count(c) == 1

    def test_invoke_interval_shorter_than_migration(self):
        w = make_world(2, 2)
        needed = min_invoke_ticks(w)
        assert needed >= 2
        with pytest.raises(InvalidConfig):
            Manager(Bus(), [NodeSpec(0), NodeSpec(1)], SMALL_GA, invoke_every=needed - 1, min_invoke_ticks=needed)
        Manager(Bus(), [NodeSpec(0), NodeSpec(1)], SMALL_GA, invoke_every=needed, min_invoke_ticks=needed)

    def test_stale_stats_skip_the_round(self):
        _, manager = fed_manager([[stat("a", 0.3)], [stat("b", 0.1)]], tick=0, start_tick=50, invoke_every=60)
        assert manager.on_tick(50) == []
        assert manager.skipped_rounds == 1

    def test_round_schedule(self):
        manager = Manager(Bus(), [NodeSpec(0)], SMALL_GA, invoke_every=60, profiling_interval=5)
        assert [t for t in range(200) if manager.is_round(t)] == [5, 65, 125, 185]

    def test_in_flight_containers_left_out(self):
        bus, manager = fed_manager([[stat("a", 0.3), stat("b", 0.3)], []])
        manager.consume()
        manager.in_flight["a"] = 5
        assert [p.container_id for p in manager.snapshot(5).containers] == ["b"]
        bus.publish("M1", StatsMessage(1, 10, (stat("a", 0.3),)), 10)
        manager.consume()
        assert "a" not in manager.in_flight

    def test_closed_loop_reduces_imbalance(self):
        heavy = [ContainerSpec(f"h{i}", "img", ResourceVector(cpu=0.45, memory=0.4), 8 << 20, 100.0, 200) for i in range(2)]
        light = [ContainerSpec(f"l{i}", "img", ResourceVector(cpu=0.05), 8 << 20, 100.0, 200) for i in range(2)]
        w = World([NodeSpec(0), NodeSpec(1)], heavy + light, images=IMAGES, strategy="binpack")
        bus = Bus()
        workers = [Worker(n, bus, w) for n in (0, 1)]
        manager = Manager(bus, [NodeSpec(0), NodeSpec(1)], GaConfig(population_size=40, generations=30), 60)
        first = None
        for t in range(40):
            w.begin_tick(t)
            manager.on_tick(t)
            for worker in workers:
                worker.handle_commands(t)
            report = w.advance(t)
            first = report.stability if first is None else first
            for worker in workers:
                worker.publish_stats(t)
        assert manager.commands_issued > 0
        assert report.stability < first
