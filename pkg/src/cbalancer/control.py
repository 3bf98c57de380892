"""Manager/worker rebalancing loop over an in-process topic bus.

Worker ``x`` publishes container statistics on ``M<x>`` and consumes
migration commands from ``L<x>``; the manager is the only party that reads
``M*`` and writes ``L*``, so workers never talk to each other.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, is_dataclass, replace
from typing import Any, Callable, Iterator

from .core import ContainerProfile, NodeSpec, ResourceVector, build_snapshot
from .errors import CBalancerError, InvalidConfig, MalformedTopic, StaleSnapshot
from .ga import GaConfig, OptimizationResult, optimize
from .migration import plan_migration
from .registry import RegistryState, commit
from .simulator import Phase, World

log = logging.getLogger(__name__)

TOPIC_RE = re.compile(r"^([ML])(0|[1-9][0-9]*)$")


def check_topic(name: str) -> tuple[str, int]:
    m = TOPIC_RE.match(name) if isinstance(name, str) else None
    if m is None:
        raise MalformedTopic(f"topic must look like M<x> or L<x>, got {name!r}")
    return m.group(1), int(m.group(2))


def stats_topic(node_id: int) -> str:
    return f"M{node_id}"


def command_topic(node_id: int) -> str:
    return f"L{node_id}"


@dataclass(frozen=True)
class ContainerStat:
    container_id: str
    image_ref: str
    allocated: ResourceVector
    utilization: ResourceVector


@dataclass(frozen=True)
class StatsMessage:
    node_id: int
    tick: int
    containers: tuple[ContainerStat, ...]


@dataclass(frozen=True)
class MigrationCommand:
    container_id: str
    host_node: int
    target_node: int

    def __post_init__(self):
        if self.host_node == self.target_node:
            raise InvalidConfig(f"{self.container_id}: host and target are both {self.host_node}")


def _jsonable(payload: Any) -> Any:
    if isinstance(payload, ResourceVector):
        return payload.as_dict()
    if is_dataclass(payload):
        return {k: _jsonable(getattr(payload, k)) for k in payload.__dataclass_fields__}
    if isinstance(payload, (list, tuple)):
        return [_jsonable(p) for p in payload]
    return payload


class Subscription:
    """Cursor over one topic's log; every message is seen once, in order."""

    def __init__(self, bus: Bus, topic: str):
        self.bus = bus
        self.topic = topic
        self.offset = 0

    def poll(self) -> list:
        messages = self.bus._topics.get(self.topic, [])
        fresh = [payload for _, payload in messages[self.offset :]]
        self.offset = len(messages)
        return fresh

    def __iter__(self) -> Iterator:
        return iter(self.poll())


class Bus:
    """Durable per-topic FIFO logs with independent subscriber cursors."""

    def __init__(self):
        self._topics: dict[str, list[tuple[int, Any]]] = {}
        self.records: list[tuple[str, int, Any]] = []

    def publish(self, topic: str, message: Any, tick: int = 0) -> None:
        check_topic(topic)
        self._topics.setdefault(topic, []).append((tick, message))
        self.records.append((topic, tick, message))

    def subscribe(self, topic: str) -> Subscription:
        check_topic(topic)
        return Subscription(self, topic)

    def topics(self) -> list[str]:
        return sorted(self._topics)

    def dump_log(self) -> str:
        """JSON lines of ``{"topic", "tick", "payload"}`` in publish order."""
        return "".join(
            json.dumps({"topic": t, "tick": tick, "payload": _jsonable(p)}, sort_keys=True) + "\n"
            for t, tick, p in self.records
        )


class Worker:
    """Stats producer plus result consumer for one node."""

    def __init__(self, node_id: int, bus: Bus, world: World, profiling_interval: int = 5):
        if profiling_interval < 1:
            raise InvalidConfig("profiling_interval must be >= 1")
        self.node_id = node_id
        self.bus = bus
        self.world = world
        self.profiling_interval = profiling_interval
        self.commands = bus.subscribe(command_topic(node_id))
        self.ignored: list[MigrationCommand] = []
        self.executed: list = []

    def publish_stats(self, tick: int) -> StatsMessage | None:
        if tick % self.profiling_interval:
            return None
        stats = []
        for c in self.world.running_on(self.node_id):
            if not c.samples:
                continue
            stats.append(ContainerStat(c.spec.container_id, c.spec.image_ref, c.spec.demand, c.samples[-1][1]))
        message = StatsMessage(self.node_id, tick, tuple(sorted(stats, key=lambda s: s.container_id)))
        self.bus.publish(stats_topic(self.node_id), message, tick)
        return message

    def handle_commands(self, tick: int) -> None:
        for command in self.commands.poll():
            c = self.world.containers.get(command.container_id)
            if c is None or c.phase is not Phase.RUNNING or c.host != self.node_id:
                log.info("node %d ignoring stale command %s", self.node_id, command)
                self.ignored.append(command)
                continue
            try:
                self.executed.append(self.world.migrate(command.container_id, command.target_node, tick))
            except CBalancerError as exc:
                log.info("node %d could not migrate %s: %s", self.node_id, command.container_id, exc)
                self.ignored.append(command)


class Manager:
    """Stats consumer, optimizer and result producer.

    Rounds run at ``start_tick + j * invoke_every``. Each round assembles a
    snapshot from the latest stats of every node heard from within two
    profiling intervals, optimizes it, and publishes one command per moved
    container to that container's current host.
    """

    def __init__(
        self,
        bus: Bus,
        nodes: list[NodeSpec],
        ga_config: GaConfig = GaConfig(),
        invoke_every: int = 60,
        *,
        profiling_interval: int = 5,
        start_tick: int | None = None,
        min_invoke_ticks: int = 1,
        seed_for_round: Callable[[int], int] | None = None,
    ):
        if invoke_every < 1:
            raise InvalidConfig("invoke_every must be >= 1")
        if invoke_every < min_invoke_ticks:
            raise InvalidConfig(
                f"invoke_every={invoke_every} ticks is shorter than the {min_invoke_ticks}-tick migration time"
            )
        self.bus = bus
        self.nodes = {n.node_id: n for n in nodes}
        self.ga_config = ga_config
        self.invoke_every = invoke_every
        self.profiling_interval = profiling_interval
        self.start_tick = profiling_interval if start_tick is None else start_tick
        self.seed_for_round = seed_for_round
        self.subscriptions = [bus.subscribe(stats_topic(n)) for n in sorted(self.nodes)]
        self.latest: dict[int, StatsMessage] = {}
        self.in_flight: dict[str, int] = {}
        self.rounds: list[OptimizationResult] = []
        self.skipped_rounds = 0
        self.commands_issued = 0
        self._round_index = 0

    def is_round(self, tick: int) -> bool:
        return tick >= self.start_tick and (tick - self.start_tick) % self.invoke_every == 0

    def consume(self) -> None:
        for sub in self.subscriptions:
            for message in sub.poll():
                self.latest[message.node_id] = message
                for stat in message.containers:
                    issued = self.in_flight.get(stat.container_id)
                    if issued is not None and message.tick > issued + 1:
                        del self.in_flight[stat.container_id]

    def snapshot(self, tick: int):
        window = 2 * self.profiling_interval
        fresh = {nid: m for nid, m in self.latest.items() if tick - m.tick <= window}
        if not fresh:
            raise StaleSnapshot(f"no stats within {window} ticks of tick {tick}")
        profiles = [
            ContainerProfile(stat.container_id, ((m.tick, stat.utilization),), nid)
            for nid, m in fresh.items()
            for stat in m.containers
            if stat.container_id not in self.in_flight
        ]
        nodes = [self.nodes[nid] for nid in sorted(fresh)]
        return build_snapshot(profiles, nodes, tick)

    def run_round(self, tick: int) -> list[MigrationCommand]:
        self.consume()
        snap = self.snapshot(tick)
        config = self.ga_config
        if self.seed_for_round is not None:
            config = replace(config, seed=self.seed_for_round(self._round_index))
        self._round_index += 1
        result = optimize(snap, config)
        self.rounds.append(result)
        commands = [MigrationCommand(cid, src, dst) for cid, src, dst in result.migrations]
        for command in commands:
            self.bus.publish(command_topic(command.host_node), command, tick)
            self.in_flight[command.container_id] = tick
        self.commands_issued += len(commands)
        return commands

    def on_tick(self, tick: int) -> list[MigrationCommand]:
        if not self.is_round(tick):
            self.consume()
            return []
        try:
            return self.run_round(tick)
        except StaleSnapshot as exc:
            log.info("skipping optimizer round at tick %d: %s", tick, exc)
            self.skipped_rounds += 1
            return []


def min_invoke_ticks(world: World) -> int:
    """Ticks needed for the slowest container class to migrate, worst case.

    Assumes an empty registry and an empty target cache.
    """
    worst = 0.0
    seen = set()
    for c in world.containers.values():
        spec = c.spec
        key = (spec.workload_class, spec.image_ref, spec.memory_footprint_bytes)
        if key in seen or spec.image_ref not in world.images:
            continue
        seen.add(key)
        written = spec.fs_write_bytes_per_tick * spec.duration_ticks
        manifest = commit(world.manifest(spec.image_ref), spec.container_id, written, running=False)
        record = plan_migration(
            spec, 0, 1, world.approach,
            manifest=manifest,
            registry=RegistryState(),
            link_bandwidth=world.link_bandwidth,
            checkpoint=world.checkpoint,
            fs=world.fs,
            cost_table=world.cost_tables.get(spec.image_ref),
        )
        worst = max(worst, record.total_time)
    return max(1, math.ceil(worst))

